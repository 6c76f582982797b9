use delayou::characteristic::{
    discrete_stability_check, distributed_stability_check, example52_threshold,
    fractional_stability_check, remark51_real_roots, Verdict,
};
use delayou::{Beta, DelayKernel, DelayOperator, ModeSystem};
use serde::Serialize;

/// One closed-form criterion evaluated against a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub criterion: &'static str,
    pub applies: bool,
    /// `stable`, `unstable` or `inconclusive` when the criterion applies.
    pub verdict: Option<&'static str>,
    pub margin: Option<f64>,
    pub detail: String,
}

impl CriterionReport {
    fn skip(criterion: &'static str, why: &str) -> Self {
        Self {
            criterion,
            applies: false,
            verdict: None,
            margin: None,
            detail: why.to_string(),
        }
    }

    fn sufficient(v: Verdict) -> Self {
        Self {
            criterion: v.criterion,
            applies: true,
            verdict: Some(if v.holds { "stable" } else { "inconclusive" }),
            margin: Some(v.margin),
            detail: v.detail,
        }
    }
}

/// Which delay terms are present and how they act on the modes.
struct Shape {
    discrete: bool,
    distributed: bool,
    a1_is_a: bool,
    a2_is_a: bool,
}

fn shape(system: &ModeSystem, k: &DelayKernel) -> Shape {
    let modes = system.modes();
    Shape {
        discrete: k.alpha() != 0.0 && modes.iter().any(|m| m.m1 != 0.0),
        distributed: k.has_distributed() && modes.iter().any(|m| m.m2 != 0.0),
        a1_is_a: modes.iter().all(|m| m.m1 == m.mu),
        a2_is_a: modes.iter().all(|m| m.m2 == m.mu),
    }
}

/// Evaluates every built-in criterion, marking the ones whose hypotheses fail.
pub fn criteria(system: &ModeSystem, k: &DelayKernel) -> Vec<CriterionReport> {
    let s = shape(system, k);
    let lambda1 = system.modes()[0].mu;
    let distributed_only = !s.discrete && s.distributed && s.a2_is_a;
    let discrete_only = s.discrete && !s.distributed;
    let mut out = Vec::new();

    out.push(if distributed_only {
        let k0 = DelayKernel::new(k.r(), 0.0, k.beta().clone()).expect("kernel already validated");
        match distributed_stability_check(&k0, lambda1.abs()) {
            Ok(v) => CriterionReport::sufficient(v),
            Err(e) => CriterionReport::skip("distributed_l1", &e.to_string()),
        }
    } else {
        CriterionReport::skip("distributed_l1", "needs only a distributed delay acting through A")
    });

    out.push(match (distributed_only, k.beta()) {
        (true, Beta::Exponential { a, b }) => match example52_threshold(*b, k.r()) {
            Ok(t) => CriterionReport {
                criterion: "exponential_kernel",
                applies: true,
                verdict: Some(if a.abs() < t { "stable" } else { "inconclusive" }),
                margin: Some(t - a.abs()),
                detail: format!("|a| = {}, threshold = {t:.6}", a.abs()),
            },
            Err(e) => CriterionReport::skip("exponential_kernel", &e.to_string()),
        },
        _ => CriterionReport::skip("exponential_kernel", "needs an exponential kernel acting through A"),
    });

    out.push(if discrete_only && s.a1_is_a {
        CriterionReport::sufficient(discrete_stability_check(k.alpha()))
    } else {
        CriterionReport::skip("discrete_alpha", "needs only a discrete delay acting through A")
    });

    out.push(match system.a1() {
        DelayOperator::Fractional { delta } if discrete_only => {
            match fractional_stability_check(k.alpha(), delta, lambda1) {
                Ok(v) => CriterionReport::sufficient(v),
                Err(e) => CriterionReport::skip("fractional", &e.to_string()),
            }
        }
        _ => CriterionReport::skip("fractional", "needs only a discrete delay through (-A)^delta"),
    });

    out.push(match (distributed_only, k.beta()) {
        (true, Beta::Constant(b0)) if *b0 < 0.0 => match remark51_real_roots(*b0, k.r()) {
            Ok(roots) => match roots.get(1) {
                Some(&x) => CriterionReport {
                    criterion: "positive_real_root",
                    applies: true,
                    verdict: Some("unstable"),
                    margin: Some(x),
                    detail: format!("n(x) = 0 at x = {x:.12}"),
                },
                None => CriterionReport {
                    criterion: "positive_real_root",
                    applies: true,
                    verdict: Some("inconclusive"),
                    margin: None,
                    detail: format!("-beta0 r = {} <= 1", -b0 * k.r()),
                },
            },
            Err(e) => CriterionReport::skip("positive_real_root", &e.to_string()),
        },
        _ => CriterionReport::skip("positive_real_root", "needs a negative constant kernel acting through A"),
    });
    out
}

/// True when neither delay term reaches any mode.
pub fn delay_free(system: &ModeSystem, k: &DelayKernel) -> bool {
    let s = shape(system, k);
    !s.discrete && !s.distributed
}

#[cfg(test)]
mod tests {
    use super::*;

    fn find<'a>(c: &'a [CriterionReport], name: &str) -> &'a CriterionReport {
        c.iter().find(|c| c.criterion == name).unwrap()
    }

    #[test]
    fn unstable_constant_kernel() {
        let sys = ModeSystem::dirichlet(1.0, DelayOperator::None, DelayOperator::Laplacian, &[1.0]).unwrap();
        let k = DelayKernel::new(1.0, 0.0, Beta::Constant(-1.5)).unwrap();
        let c = criteria(&sys, &k);
        assert_eq!(find(&c, "distributed_l1").verdict, Some("inconclusive"));
        assert_eq!(find(&c, "positive_real_root").verdict, Some("unstable"));
        assert!(!find(&c, "discrete_alpha").applies);
    }

    #[test]
    fn fractional_applies() {
        let sys = ModeSystem::dirichlet(
            1.0,
            DelayOperator::Fractional { delta: 0.5 },
            DelayOperator::None,
            &[1.0, 0.0],
        )
        .unwrap();
        let k = DelayKernel::new(1.0, 1.0, Beta::Zero).unwrap();
        let c = criteria(&sys, &k);
        assert_eq!(find(&c, "fractional").verdict, Some("stable"));
        assert!(!find(&c, "discrete_alpha").applies);
        assert!(!delay_free(&sys, &k));
    }
}
