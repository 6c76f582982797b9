use std::f64::consts::PI;

use delayou::characteristic::{
    count_roots_in_rect, discrete_stability_check, distributed_stability_check, find_roots,
    remark51_real_roots, resolvent_norm_sup, AbscissaSource, ResolventGrid, ROOT_RESIDUAL_TOL,
};
use delayou::{
    spectral_abscissa, AbscissaOptions, Beta, CharProblem, DelayKernel, DelayOperator, ModeEntry,
    ModeSystem, Rect,
};
use proptest::prelude::*;

fn dirichlet(k: usize, a1: DelayOperator, a2: DelayOperator) -> ModeSystem {
    ModeSystem::dirichlet(1.0, a1, a2, &vec![1.0; k]).unwrap()
}

#[test]
fn single_neutral_root_in_small_rect() {
    let k = DelayKernel::new(1.0, 1.0, Beta::Zero).unwrap();
    let r = Rect::new(-0.1, 0.1, 2.0, 4.0).unwrap();
    assert_eq!(count_roots_in_rect(&CharProblem::gamma0(&k), r, 64).unwrap(), 1);
}

#[test]
fn negative_constant_kernel_is_unstable() {
    let k = DelayKernel::new(1.0, 0.0, Beta::Constant(-1.5)).unwrap();
    assert!(!distributed_stability_check(&k, PI * PI).unwrap().holds);
    let sys = dirichlet(10, DelayOperator::None, DelayOperator::Laplacian);
    let sa = spectral_abscissa(&sys, &k, &AbscissaOptions::default()).unwrap();
    let x = remark51_real_roots(-1.5, 1.0).unwrap()[1];
    assert!(sa.value > 0.0);
    assert_eq!(sa.source, AbscissaSource::Gamma0);
    assert!((sa.value - x).abs() < 1e-9, "{} vs {x}", sa.value);
    // modes resolved right of the window edge have real roots in (0, x+) that approach x+ as |mu| grows
    let roots: Vec<f64> = sa.per_mode.iter().flatten().map(|r| r.re).collect();
    assert!(!roots.is_empty());
    assert!(roots.iter().all(|&v| v > 0.0 && v < x));
    assert!(roots.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn discrete_half_is_stable() {
    let k = DelayKernel::new(1.0, 0.5, Beta::Zero).unwrap();
    assert!(discrete_stability_check(0.5).holds);
    let sys = dirichlet(10, DelayOperator::Laplacian, DelayOperator::None);
    let sa = spectral_abscissa(&sys, &k, &AbscissaOptions::default()).unwrap();
    assert!(sa.value < 0.0);
    assert!(sa.value >= 0.5f64.ln());
    for (m, r) in sys.modes().iter().zip(&sa.per_mode) {
        let r = r.unwrap();
        let p = CharProblem::mode(&k, m);
        assert!(p.value(r.lambda()).norm() <= ROOT_RESIDUAL_TOL * (1.0 + r.lambda().norm()));
    }
}

#[test]
fn root_lists_are_conjugate_closed_with_small_residuals() {
    let k = DelayKernel::new(0.7, 0.4, Beta::Exponential { a: -0.6, b: 0.5 }).unwrap();
    let m = ModeEntry::new(-5.0, -5.0, -5.0, 1.0);
    let p = CharProblem::mode(&k, &m);
    let rep = find_roots(&p, Rect::new(-6.0, 2.0, -40.0, 40.0).unwrap(), None).unwrap();
    assert!(rep.roots.len() >= 4);
    assert_eq!(rep.roots.iter().map(|r| r.multiplicity).sum::<usize>(), rep.count);
    for r in &rep.roots {
        let z = r.lambda();
        assert!(p.value(z).norm() <= ROOT_RESIDUAL_TOL * (1.0 + z.norm()));
        assert!(rep
            .roots
            .iter()
            .any(|o| (o.lambda() - z.conj()).norm() < 1e-8 * (1.0 + z.norm())));
    }
}

#[test]
fn sharpness_of_l1_condition() {
    for r in [0.5, 1.0, 2.0] {
        let beta0 = -1.5 / r;
        let k = DelayKernel::new(r, 0.0, Beta::Constant(beta0)).unwrap();
        let sys = dirichlet(3, DelayOperator::None, DelayOperator::Laplacian);
        let sa = spectral_abscissa(&sys, &k, &AbscissaOptions::default()).unwrap();
        let roots = remark51_real_roots(beta0, r).unwrap();
        assert!(sa.value > 0.0);
        assert!(roots.len() == 2 && roots[1] > 0.0);
    }
}

#[test]
fn resolvent_sup_grows_as_margin_shrinks() {
    let sys = dirichlet(4, DelayOperator::Laplacian, DelayOperator::None);
    let mut last = 0.0;
    for margin in [0.5, 0.25, 0.1, 0.05] {
        let k = DelayKernel::new(1.0, 1.0 - margin, Beta::Zero).unwrap();
        let rep = resolvent_norm_sup(&sys, &k, &ResolventGrid::for_system(&sys, &k)).unwrap();
        assert!(rep.sup.is_finite() && rep.flagged.is_empty());
        assert!(rep.sup > last, "margin {margin}: {} <= {last}", rep.sup);
        last = rep.sup;
    }
}

#[test]
fn fractional_delay_gain_bound() {
    let (alpha, delta) = (1.0, 0.5);
    let sys = dirichlet(20, DelayOperator::Fractional { delta }, DelayOperator::None);
    let k = DelayKernel::new(1.0, alpha, Beta::Zero).unwrap();
    let rep = resolvent_norm_sup(&sys, &k, &ResolventGrid::for_system(&sys, &k)).unwrap();
    let bound = 2.0 * alpha / (PI * PI).powf(1.0 - delta);
    assert!(rep.delay_gain_sup <= bound + 1e-8);
    assert!(rep.sup.is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn l1_small_distributed_kernels_are_stable(
        which in 0..2usize,
        c in -0.99..0.99f64,
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        r in 0.2..2.0f64,
    ) {
        let beta = if which == 0 { Beta::Constant(c / r) } else { Beta::Exponential { a, b } };
        let k = DelayKernel::new(r, 0.0, beta).unwrap();
        prop_assume!(k.beta_l1_norm() < 0.99);
        let sys = dirichlet(4, DelayOperator::None, DelayOperator::Laplacian);
        let sa = spectral_abscissa(&sys, &k, &AbscissaOptions::default()).unwrap();
        prop_assert!(sa.value < 0.0, "abscissa {} for {:?}", sa.value, k);
    }

    #[test]
    fn discrete_delays_below_one_are_stable(alpha in -0.98..0.98f64, r in 0.1..2.0f64) {
        let k = DelayKernel::new(r, alpha, Beta::Zero).unwrap();
        let sys = dirichlet(4, DelayOperator::Laplacian, DelayOperator::None);
        let sa = spectral_abscissa(&sys, &k, &AbscissaOptions { imag_cap: 300.0, ..Default::default() }).unwrap();
        prop_assert!(sa.value < 0.0, "abscissa {} for alpha {alpha}, r {r}", sa.value);
    }

    #[test]
    fn winding_counts_add_over_splits(
        x0 in -8.0..-1.0f64, w in 2.0..9.0f64, h in 2.0..30.0f64, frac in 0.2..0.8f64,
    ) {
        let k = DelayKernel::new(1.0, 0.6, Beta::Constant(0.3)).unwrap();
        let m = ModeEntry::new(-4.0, -4.0, -4.0, 1.0);
        let p = CharProblem::mode(&k, &m);
        let rect = Rect::new(x0, x0 + w, -h * 0.93, h).unwrap();
        let Ok(total) = count_roots_in_rect(&p, rect, 64) else { return Ok(()) };
        let x = x0 + frac * w;
        let left = Rect::new(x0, x, rect.im_min, rect.im_max).unwrap();
        let right = Rect::new(x, x0 + w, rect.im_min, rect.im_max).unwrap();
        if let (Ok(a), Ok(b)) = (count_roots_in_rect(&p, left, 64), count_roots_in_rect(&p, right, 64)) {
            prop_assert_eq!(a + b, total);
        }
    }
}
