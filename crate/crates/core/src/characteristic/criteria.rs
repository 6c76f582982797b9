use serde::Serialize;

use crate::error::{invalid, Result};
use crate::kernel::DelayKernel;

/// Outcome of a closed-form sufficient stability criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub criterion: &'static str,
    pub holds: bool,
    /// Distance to the criterion boundary (positive when it holds).
    pub margin: f64,
    pub detail: String,
}

/// Distributed delay only: stable when `||beta||_1 < 1` and `σ(A) ⊂ (-∞, -c0]`.
pub fn distributed_stability_check(k: &DelayKernel, c0: f64) -> Result<Verdict> {
    if k.alpha() != 0.0 {
        return Err(invalid(
            "alpha",
            "the distributed-delay criterion needs alpha = 0",
        ));
    }
    if !(c0 > 0.0) {
        return Err(invalid("c0", format!("must be positive, got {c0}")));
    }
    let l1 = k.beta_l1_norm();
    Ok(Verdict {
        criterion: "distributed_l1",
        holds: l1 < 1.0,
        margin: 1.0 - l1,
        detail: format!("||beta||_1 = {l1:.6}, c0 = {c0}"),
    })
}

/// Real roots of `x + beta0 (1 - e^{-r x}) = 0`, in increasing order.
///
/// Zero is always a root; when `-beta0 r > 1` there is a second, positive
/// root beyond the minimiser `ln(-beta0 r)/r`.
pub fn remark51_real_roots(beta0: f64, r: f64) -> Result<Vec<f64>> {
    if !(beta0 < 0.0) {
        return Err(invalid("beta0", format!("must be negative, got {beta0}")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid("r", format!("must be positive, got {r}")));
    }
    let s = -beta0 * r;
    if s <= 1.0 {
        return Ok(vec![0.0]);
    }
    let f = |x: f64| x + beta0 * (1.0 - (-r * x).exp());
    let (mut lo, mut hi) = (s.ln() / r, -beta0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(vec![0.0, 0.5 * (lo + hi)])
}

/// Largest `|a|` for which `beta(θ) = a e^{bθ}` is covered by the
/// distributed criterion through the bound `|a| max e^{bθ} r < 1`.
pub fn example52_threshold(b: f64, r: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid("r", format!("must be positive, got {r}")));
    }
    Ok(if b <= 0.0 { (r * b).exp() / r } else { 1.0 / r })
}

/// Discrete delay with `A1 = A`: stable when `|alpha| < 1`.
pub fn discrete_stability_check(alpha: f64) -> Verdict {
    Verdict {
        criterion: "discrete_alpha",
        holds: alpha.abs() < 1.0,
        margin: 1.0 - alpha.abs(),
        detail: format!("|alpha| = {}", alpha.abs()),
    }
}

/// Fractional delay operator `(-A)^delta`: stable when
/// `2|alpha| < |lambda1|^{1-delta}`.
pub fn fractional_stability_check(alpha: f64, delta: f64, lambda1: f64) -> Result<Verdict> {
    if !(0.0..1.0).contains(&delta) {
        return Err(invalid("delta", format!("must lie in [0, 1), got {delta}")));
    }
    if !(lambda1 < 0.0) {
        return Err(invalid("lambda1", format!("must be negative, got {lambda1}")));
    }
    let bound = lambda1.abs().powf(1.0 - delta);
    Ok(Verdict {
        criterion: "fractional",
        holds: 2.0 * alpha.abs() < bound,
        margin: bound - 2.0 * alpha.abs(),
        detail: format!("2|alpha| = {}, |lambda1|^(1-delta) = {bound:.6}", 2.0 * alpha.abs()),
    })
}
