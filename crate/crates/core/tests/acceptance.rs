//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.

use std::f64::consts::PI;
use std::time::Instant;

use delayou::characteristic::{
    distributed_stability_check, remark51_real_roots, resolvent_norm_sup, ResolventGrid,
};
use delayou::fundamental::{resolvent_apply, resolvent_round_trip};
use delayou::kernel::segment_energy_bound_check;
use delayou::sde::{
    mc_covariance, pathwise_voc_check, simulate_ensemble, simulate_path, stationarity_test,
    CovPair, Init, SimConfig, VocConfig,
};
use delayou::stationary::{covariance, covariance_ode_residual, LagGrid};
use delayou::{
    spectral_abscissa, AbscissaOptions, Beta, Complex64, DelayKernel, DelayOperator,
    FundamentalTable, ModeEntry, ModeSystem, Segment,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(name: &str, ok: bool, detail: String) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

fn single(mode: ModeEntry) -> ModeSystem {
    ModeSystem::from_entries(vec![mode], 1.0).unwrap()
}

#[test]
fn ou_baseline() {
    let start = Instant::now();
    let sys = single(ModeEntry::plain(-1.0, 1.0));
    let k = DelayKernel::none(1.0).unwrap();
    let table = FundamentalTable::compute(&sys, &k, 30.0, 1e-3).unwrap();
    let cov = covariance(&table, &[1.0], &LagGrid::new(0.0, 3.0, 1e-3).unwrap(), None).unwrap();
    let quad_err = cov
        .lags
        .iter()
        .enumerate()
        .map(|(l, t)| (cov.at(l, 0, 0) - 0.5 * (-t).exp()).abs())
        .fold(0.0, f64::max);

    let mut cfg = SimConfig::new(5e-3, 3.0, 20_000, 2024).stationary();
    cfg.record_stride = 100;
    let ens = simulate_ensemble(&sys, &k, &cfg).unwrap();
    let lags = [0.0, 0.5, 1.0, 2.0];
    let pairs: Vec<CovPair> = lags.iter().map(|&s| CovPair::new(0, 0, 0.5, 0.5 + s)).collect();
    let est = mc_covariance(&ens, &pairs).unwrap();
    let worst_z = lags
        .iter()
        .zip(&est)
        .map(|(s, e)| ((e.value - 0.5 * (-s).exp()) / e.se).abs())
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    report(
        "ou_baseline",
        quad_err <= 1e-6 && worst_z < 3.0 && secs < 60.0,
        format!("quadrature error {quad_err:.2e}, worst MC |z| {worst_z:.2}, {secs:.1}s"),
    );
}

fn random_l1_kernel(rng: &mut ChaCha8Rng) -> DelayKernel {
    let r = rng.random_range(0.2..2.0);
    let target = rng.random_range(0.05..0.95);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let beta = match rng.random_range(0..3) {
        0 => Beta::Constant(sign * target / r),
        1 => {
            let b: f64 = rng.random_range(-3.0..3.0);
            // ∫_{-r}^0 e^{bθ} dθ = (1 - e^{-br}) / b
            let mass = if b.abs() < 1e-12 { r } else { -(-b * r).exp_m1() / b };
            Beta::Exponential { a: sign * target / mass, b }
        }
        _ => {
            let n = 41;
            let h = r / (n - 1) as f64;
            let w: f64 = rng.random_range(0.5..4.0);
            let raw: Vec<f64> = (0..n).map(|i| (w * i as f64 * h).sin() + 0.3).collect();
            let l1 = DelayKernel::new(r, 0.0, Beta::Tabulated(raw.clone())).unwrap().beta_l1_norm();
            Beta::Tabulated(raw.iter().map(|v| v * target / l1).collect())
        }
    };
    DelayKernel::new(r, 0.0, beta).unwrap()
}

#[test]
fn distributed_l1_criterion_implies_negative_abscissa() {
    let start = Instant::now();
    let sys = ModeSystem::dirichlet(1.0, DelayOperator::None, DelayOperator::Laplacian, &[1.0; 10]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = f64::NEG_INFINITY;
    let mut failures = 0;
    for _ in 0..100 {
        let k = random_l1_kernel(&mut rng);
        let v = distributed_stability_check(&k, PI * PI).unwrap();
        assert!(v.holds && v.margin >= 0.05 - 1e-12);
        let sa = spectral_abscissa(&sys, &k, &AbscissaOptions::default()).unwrap();
        if !(sa.value < 0.0) {
            failures += 1;
        }
        worst = worst.max(sa.value);
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "distributed_l1_criterion_implies_negative_abscissa",
        failures == 0 && secs < 120.0,
        format!("100 kernels, largest abscissa {worst:.4}, {failures} nonnegative, {secs:.1}s"),
    );
}

#[test]
fn l1_criterion_is_sharp() {
    let (beta0, r) = (-1.5, 1.0);
    let x = remark51_real_roots(beta0, r).unwrap()[1];
    // independent bisection on [ln 1.5, 1.5]
    let f = |x: f64| x + beta0 * (1.0 - (-r * x).exp());
    let (mut lo, mut hi) = (1.5f64.ln(), 1.5);
    while hi - lo > 1e-12 {
        let m = 0.5 * (lo + hi);
        if f(m) < 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    let root_ok = x > 1.5f64.ln() && (x - 0.5 * (lo + hi)).abs() <= 1e-10;

    let sys = ModeSystem::dirichlet(1.0, DelayOperator::None, DelayOperator::Laplacian, &[1.0]).unwrap();
    let k = DelayKernel::new(r, 0.0, Beta::Constant(beta0)).unwrap();
    let mut cfg = SimConfig::new(0.01, 10.0 * r, 2000, 7);
    cfg.record_stride = 50;
    let ens = simulate_ensemble(&sys, &k, &cfg).unwrap();
    let m2 = ens.second_moment_profile(0);
    let monotone = m2.windows(2).skip(1).all(|w| w[1].value > w[0].value);
    report(
        "l1_criterion_is_sharp",
        root_ok && monotone,
        format!(
            "positive root {x:.12} > ln 1.5, second moment {:.3e} -> {:.3e} monotone {monotone}",
            m2[1].value,
            m2.last().unwrap().value
        ),
    );
}

#[test]
fn discrete_delay_criterion() {
    let sys = ModeSystem::dirichlet(1.0, DelayOperator::Laplacian, DelayOperator::None, &[1.0; 10]).unwrap();
    let mut values = Vec::new();
    for alpha in [-0.9, -0.5, 0.0, 0.5, 0.9] {
        let k = DelayKernel::new(1.0, alpha, Beta::Zero).unwrap();
        values.push(spectral_abscissa(&sys, &k, &AbscissaOptions::default()).unwrap().value);
    }
    let k = DelayKernel::new(1.0, 1.05, Beta::Zero).unwrap();
    let sa = spectral_abscissa(&sys, &k, &AbscissaOptions::default()).unwrap();
    let unstable_mode = sa.per_mode.iter().flatten().map(|r| r.re).fold(f64::NEG_INFINITY, f64::max);
    let ok = values.iter().all(|v| *v < 0.0) && unstable_mode >= 0.0;
    report(
        "discrete_delay_criterion",
        ok,
        format!("abscissae {values:.4?}; alpha 1.05 rightmost mode root Re = {unstable_mode:.5}"),
    );
}

#[test]
fn fractional_delay_gain_bound() {
    let sys = ModeSystem::dirichlet(
        1.0,
        DelayOperator::Fractional { delta: 0.5 },
        DelayOperator::None,
        &[1.0; 20],
    )
    .unwrap();
    let k = DelayKernel::new(1.0, 1.0, Beta::Zero).unwrap();
    let rep = resolvent_norm_sup(&sys, &k, &ResolventGrid::for_system(&sys, &k)).unwrap();
    let bound = 2.0 / PI;
    report(
        "fractional_delay_gain_bound",
        rep.delay_gain_sup <= bound + 1e-8 && rep.sup.is_finite(),
        format!(
            "gain sup {:.10} <= {bound:.10}, resolvent sup {:.4}",
            rep.delay_gain_sup, rep.sup
        ),
    );
}

#[test]
fn stationary_covariance_ode() {
    let sys = ModeSystem::dirichlet(1.0, DelayOperator::Laplacian, DelayOperator::None, &[1.0]).unwrap();
    let k = DelayKernel::new(0.1, 0.5, Beta::Zero).unwrap();
    let run = |dt: f64| {
        let table = FundamentalTable::compute(&sys, &k, 8.0, dt).unwrap();
        let cov = covariance(&table, &[1.0], &LagGrid::new(-0.1, 1.0, dt).unwrap(), None).unwrap();
        (covariance_ode_residual(&cov, &sys, &k).unwrap(), cov.max_tail_bound())
    };
    let (res, tail) = run(1e-3);
    let (res_half, _) = run(5e-4);
    let ratio = res / res_half;
    report(
        "stationary_covariance_ode",
        res <= 1e-4 && tail < 1e-6 && (3.0..5.0).contains(&ratio),
        format!("residual {res:.3e}, tail {tail:.1e}, halving ratio {ratio:.2}"),
    );
}

#[test]
fn variation_of_constants_pathwise() {
    let sys = single(ModeEntry::new(-1.0, -1.0, 0.0, 1.0));
    let k = DelayKernel::new(1.0, 0.5, Beta::Zero).unwrap();
    let cfg = VocConfig::ladder(1.0, 4.0, 100, 9);
    let noisy = pathwise_voc_check(&sys, &k, &cfg).unwrap();
    let quiet = pathwise_voc_check(&sys, &k, &VocConfig { noise_scale: 0.0, ..cfg }).unwrap();
    report(
        "variation_of_constants_pathwise",
        noisy.slope >= 0.9 && quiet.slope >= 1.9,
        format!(
            "stochastic slope {:.3} (errors {:?}), deterministic slope {:.3}",
            noisy.slope, noisy.errors, quiet.slope
        ),
    );
}

#[test]
fn stationarity_of_stationary_start() {
    let sys = single(ModeEntry::new(-1.0, -1.0, 0.0, 1.0));
    let k = DelayKernel::new(1.0, 0.5, Beta::Zero).unwrap();
    let mut cfg = SimConfig::new(0.01, 4.0, 20_000, 77).stationary();
    cfg.record_stride = 10;
    let ens = simulate_ensemble(&sys, &k, &cfg).unwrap();
    let base = [
        CovPair::new(0, 0, 0.0, 0.0),
        CovPair::new(0, 0, 0.5, 0.5),
        CovPair::new(0, 0, 0.5, 1.0),
        CovPair::new(0, 0, 0.0, 1.0),
    ];
    let mut worst: f64 = 0.0;
    for s in [0.0, 0.5, 1.0, 2.0] {
        for z in stationarity_test(&ens, &base, s).unwrap() {
            worst = worst.max(z.abs());
        }
    }

    let mut cold = cfg.clone();
    cold.init = Init::Zero;
    let ens = simulate_ensemble(&sys, &k, &cold).unwrap();
    let z_cold = stationarity_test(&ens, &[CovPair::new(0, 0, 0.1, 0.1)], 1.0).unwrap()[0];
    report(
        "stationarity_of_stationary_start",
        worst < 3.0 && z_cold.abs() > 3.0,
        format!("stationary start max |z| {worst:.2}, cold start |z| {:.1}", z_cold.abs()),
    );
}

#[test]
fn resolvent_round_trip_accuracy() {
    let sys = ModeSystem::dirichlet(1.0, DelayOperator::Laplacian, DelayOperator::Laplacian, &[1.0]).unwrap();
    let k = DelayKernel::new(1.0, 0.4, Beta::Exponential { a: 0.5, b: -1.0 }).unwrap();
    let sigma = spectral_abscissa(&sys, &k, &AbscissaOptions::default()).unwrap().value;
    let mode = sys.modes()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let lam = Complex64::new(sigma + rng.random_range(0.5..3.0), rng.random_range(-10.0..10.0));
        let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let w: f64 = rng.random_range(0.5..4.0);
        let psi1 = Segment::from_fn(1.0, 1e-3, |t| {
            Complex64::new(c[0] * (w * t).sin() + c[1], c[2] * (w * t).cos() + c[3] * t)
        })
        .unwrap();
        let psi0 = Complex64::new(c[1], c[2]);
        let phi = resolvent_apply(lam, &mode, &k, psi0, &psi1).unwrap();
        let (e0, e1) = resolvent_round_trip(lam, &mode, &k, &phi, psi0, &psi1).unwrap();
        worst = worst.max(e0).max(e1);
    }
    report(
        "resolvent_round_trip_accuracy",
        worst <= 1e-6,
        format!("abscissa {sigma:.4}, max round-trip error {worst:.2e} over 20 samples"),
    );
}

#[test]
fn delay_energy_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut violations = 0;
    let mut tightest: f64 = 0.0;
    for p in 0..100 {
        let r = rng.random_range(0.2..1.5);
        let alpha = rng.random_range(-1.5..1.5);
        let beta = if rng.random_bool(0.5) {
            Beta::Constant(rng.random_range(-2.0..2.0))
        } else {
            Beta::Exponential { a: rng.random_range(-2.0..2.0), b: rng.random_range(-3.0..3.0) }
        };
        let k = DelayKernel::new(r, alpha, beta).unwrap();
        let mu = -rng.random_range(0.5..5.0);
        let mode = ModeEntry::new(mu, rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 1.0);
        let sys = single(mode);
        let dt = r / 50.0;
        let mut cfg = SimConfig::new(dt, 5.0 * r, 1, 1234);
        let amp = rng.random_range(-1.0..1.0);
        let phi1 = Segment::from_fn(r, dt, |t| amp * (3.0 * t).cos()).unwrap();
        cfg.init = Init::Explicit { phi0: vec![phi1.newest()], phi1: vec![phi1] };
        let Ok(path) = simulate_path(&sys, &k, &cfg, p) else {
            continue;
        };
        let b = segment_energy_bound_check(&k, mode.m1, mode.m2, &path.y[0], dt).unwrap();
        if !b.holds(0.0) {
            violations += 1;
        }
        if b.rhs > 0.0 {
            tightest = tightest.max(b.lhs / b.rhs);
        }
    }
    report(
        "delay_energy_bound",
        violations == 0,
        format!("{violations} violations in 100 paths, largest lhs/rhs {tightest:.3}"),
    );
}
