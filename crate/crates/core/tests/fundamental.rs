use delayou::fundamental::{
    fit_decay, history_response, resolvent_apply, resolvent_round_trip, solve_fundamental,
    solve_with_history, structure_apply, verify_integral_form, FundamentalTable,
};
use delayou::{
    spectral_abscissa, AbscissaOptions, Beta, Complex64, DelayKernel, DelayOperator, ModeEntry,
    ModeSystem, Segment,
};
use proptest::prelude::*;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn variation_of_constants_matches_direct_solve() {
    let k = DelayKernel::new(1.0, 0.5, Beta::Exponential { a: 0.8, b: -1.0 }).unwrap();
    let m = ModeEntry::new(-3.0, -3.0, -3.0, 1.0);
    let dt = 0.005;
    let phi1 = Segment::from_fn(1.0, dt, |t| (2.0 * t).cos() + t).unwrap();
    let phi0 = 0.7;
    let direct = solve_with_history(&m, &k, phi0, &phi1, 5.0, dt).unwrap();
    let g = solve_fundamental(&m, &k, 5.0, dt).unwrap();
    let s = structure_apply(&k, &m, &phi1).unwrap();
    let resp = history_response(&g, &s);
    let voc: Vec<f64> = g.iter().zip(&resp).map(|(gv, rv)| gv * phi0 + rv).collect();
    let err = max_diff(&direct, &voc);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn direct_solve_converges_at_fourth_order_for_discrete_delay() {
    let k = DelayKernel::new(1.0, -0.6, Beta::Zero).unwrap();
    let m = ModeEntry::new(-2.0, -2.0, 0.0, 1.0);
    let reference = {
        let phi1 = Segment::from_fn(1.0, 1.0 / 1600.0, |t| (3.0 * t).sin()).unwrap();
        solve_with_history(&m, &k, 0.0, &phi1, 4.0, 1.0 / 1600.0).unwrap()
    };
    let errs: Vec<f64> = [50usize, 100]
        .iter()
        .map(|&q| {
            let dt = 1.0 / q as f64;
            let phi1 = Segment::from_fn(1.0, dt, |t| (3.0 * t).sin()).unwrap();
            let y = solve_with_history(&m, &k, 0.0, &phi1, 4.0, dt).unwrap();
            let stride = 1600 / q;
            y.iter()
                .enumerate()
                .map(|(i, v)| (v - reference[i * stride]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(errs[0] / errs[1] > 10.0, "{errs:?}");
}

#[test]
fn decay_rate_is_consistent_with_abscissa() {
    let k = DelayKernel::new(1.0, 0.5, Beta::Zero).unwrap();
    let sys = ModeSystem::dirichlet(1.0, DelayOperator::Laplacian, DelayOperator::None, &[1.0, 1.0]).unwrap();
    let sa = spectral_abscissa(&sys, &k, &AbscissaOptions::default()).unwrap();
    let table = FundamentalTable::compute(&sys, &k, 40.0, 0.01).unwrap();
    for (row, root) in table.rows.iter().zip(&sa.per_mode) {
        let fit = fit_decay(row, table.dt, 20.0, 40.0).unwrap();
        let rate = -root.unwrap().re;
        assert!((fit.rate - rate).abs() < 0.1 * rate, "{} vs {rate}", fit.rate);
    }
}

#[test]
fn integral_form_residual_small_for_tabulated_kernel() {
    let dt = 0.01;
    let vals: Vec<f64> = (0..=100).map(|i| 0.3 * (i as f64 * dt).sin()).collect();
    let k = DelayKernel::new(1.0, 0.2, Beta::Tabulated(vals)).unwrap();
    let m = ModeEntry::new(-4.0, -4.0, -4.0, 1.0);
    let g = solve_fundamental(&m, &k, 5.0, dt).unwrap();
    assert!(verify_integral_form(&g, &m, &k, dt).unwrap() < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn resolvent_round_trip_holds(
        re in 0.2..3.0f64, im in -8.0..8.0f64,
        alpha in -0.9..0.9f64, a in -1.0..1.0f64, b in -1.0..1.0f64,
        c0 in -1.0..1.0f64, c1 in -2.0..2.0f64, w in 0.5..4.0f64,
    ) {
        let k = DelayKernel::new(1.0, alpha, Beta::Exponential { a, b }).unwrap();
        let m = ModeEntry::new(-2.0, -2.0, -2.0, 1.0);
        let lam = Complex64::new(re, im);
        let psi1 = Segment::from_fn(1.0, 1e-3, |t| Complex64::new(c1 * (w * t).sin(), c0 * t)).unwrap();
        let psi0 = Complex64::new(c0, c1);
        let phi = resolvent_apply(lam, &m, &k, psi0, &psi1).unwrap();
        let (e0, e1) = resolvent_round_trip(lam, &m, &k, &phi, psi0, &psi1).unwrap();
        prop_assert!(e0 < 1e-10 && e1 < 1e-6, "{e0} {e1}");
    }

    #[test]
    fn fundamental_solution_starts_at_one(mu in -50.0..-0.1f64, alpha in -1.0..1.0f64) {
        let k = DelayKernel::new(0.5, alpha, Beta::Constant(0.2)).unwrap();
        let g = solve_fundamental(&ModeEntry::new(mu, mu, mu, 1.0), &k, 1.0, 0.01).unwrap();
        prop_assert_eq!(g[0], 1.0);
        prop_assert!(g.iter().all(|v| v.is_finite()));
    }
}
