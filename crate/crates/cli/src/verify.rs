//! End-to-end cross-check: criteria, roots, fundamental solutions,
//! stationary covariance and Monte Carlo, collected in one JSON report.

use delayou::characteristic::{resolvent_norm_sup, ResolventGrid};
use delayou::fundamental::{fit_decay, verify_integral_form};
use delayou::sde::{mc_covariance, simulate_ensemble, stationarity_test, CovPair, SimConfig};
use delayou::stationary::{covariance_ode_residual, CovarianceTable, LagGrid};
use delayou::{
    spectral_abscissa, AbscissaOptions, DelayKernel, FundamentalTable, ModeSystem,
    SpectralAbscissa,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::scenario::Scenario;
use crate::stability::{criteria, delay_free};
use crate::tables::{mode_rate, stationary_covariance};

/// Modes carried through the fundamental and covariance stages.
const CHECK_MODES: usize = 3;
const Z_LIMIT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value <= limit`.
    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
        }
    }

    /// Passes when `value < limit`.
    fn below(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            passed: value < limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stage {
    pub name: &'static str,
    pub status: Status,
    pub reason: Option<String>,
    pub checks: Vec<Check>,
    pub data: Value,
}

impl Stage {
    fn done(name: &'static str, checks: Vec<Check>, data: Value) -> Self {
        let status = if checks.iter().all(|c| c.passed) {
            Status::Pass
        } else {
            Status::Fail
        };
        Self {
            name,
            status,
            reason: None,
            checks,
            data,
        }
    }

    fn failed(name: &'static str, reason: String) -> Self {
        Self {
            name,
            status: Status::Fail,
            reason: Some(reason),
            checks: Vec::new(),
            data: Value::Null,
        }
    }

    fn skipped(name: &'static str, reason: &str) -> Self {
        Self {
            name,
            status: Status::Skipped,
            reason: Some(format!("skipped: {reason}")),
            checks: Vec::new(),
            data: Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    /// `stable` or `unstable` from the spectral abscissa; `unknown` if it failed.
    pub stability: &'static str,
    pub passed: bool,
    pub stages: Vec<Stage>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Largest step `r / n` not above `dt` with `rate * step <= target`,
/// optionally with `n` even.
fn resolved_step(r: f64, dt: f64, rate: f64, target: f64, even: bool) -> f64 {
    let mut n = ((r / dt).round() as usize).max((r * rate / target).ceil() as usize).max(1);
    if even && n % 2 == 1 {
        n += 1;
    }
    r / n as f64
}

/// Runs every stage; a stage that fails or cannot run makes its dependants skip.
pub fn run_verify(s: &Scenario) -> Report {
    let system = s.system();
    let k = &s.kernel;
    let mut stages = Vec::new();

    let crit = criteria(system, k);
    stages.push(Stage::done("criteria", Vec::new(), json!({ "criteria": crit })));

    let sa = spectral_abscissa(system, k, &AbscissaOptions::default());
    let (spectrum, sa) = match sa {
        Ok(sa) => (spectrum_stage(system, k, &sa, &crit), Some(sa)),
        Err(e) => (Stage::failed("spectrum", e.to_string()), None),
    };
    stages.push(spectrum);
    let stability = match &sa {
        Some(sa) if sa.is_stable() => "stable",
        Some(_) => "unstable",
        None => "unknown",
    };

    let keep: Vec<usize> = (0..system.modes().len().min(CHECK_MODES)).collect();
    let sub = system.select(&keep);
    let r = k.r();
    let rate = sub.modes().iter().map(|m| mode_rate(m, k)).fold(0.0, f64::max);
    let dt = resolved_step(r, s.run.dt, rate, 0.05, true);

    let mut cov = None;
    match &sa {
        None => {
            stages.push(Stage::skipped("fundamental", "spectrum stage failed"));
            stages.push(Stage::skipped("covariance", "spectrum stage failed"));
            stages.push(Stage::skipped("monte_carlo", "spectrum stage failed"));
        }
        Some(sa) if !sa.is_stable() => {
            stages.push(match fundamental_stage(&sub, k, dt, s.run.t_end, None) {
                Ok(st) => st,
                Err(e) => Stage::failed("fundamental", e.to_string()),
            });
            let why = format!("no stationary solution; spectral abscissa {:.6} >= 0", sa.value);
            stages.push(Stage::skipped("covariance", &why));
            stages.push(Stage::skipped("monte_carlo", &why));
        }
        Some(_) => {
            let lags = LagGrid::new(-r, r, dt).expect("positive step");
            match stationary_covariance(&sub, k, dt, &lags, None) {
                Ok(c) => {
                    stages.push(match fundamental_stage(&sub, k, dt, c.t_trunc, Some(&c)) {
                        Ok(st) => st,
                        Err(e) => Stage::failed("fundamental", e.to_string()),
                    });
                    stages.push(match covariance_stage(&sub, k, &c) {
                        Ok(st) => st,
                        Err(e) => Stage::failed("covariance", e.to_string()),
                    });
                    cov = Some(c);
                }
                Err(e) => {
                    stages.push(Stage::failed("fundamental", e.to_string()));
                    stages.push(Stage::skipped("covariance", "fundamental stage failed"));
                }
            }
            stages.push(match &cov {
                Some(c) if stages.iter().all(|st| st.status != Status::Fail) => {
                    match mc_stage(s, &sub, c) {
                        Ok(st) => st,
                        Err(e) => Stage::failed("monte_carlo", e.to_string()),
                    }
                }
                _ => Stage::skipped("monte_carlo", "an earlier stage failed"),
            });
        }
    }

    Report {
        scenario: s.name.clone(),
        seed: s.run.seed,
        stability,
        passed: stages.iter().all(|st| st.status != Status::Fail),
        stages,
    }
}

fn spectrum_stage(
    system: &ModeSystem,
    k: &DelayKernel,
    sa: &SpectralAbscissa,
    crit: &[crate::stability::CriterionReport],
) -> Stage {
    let mut checks = Vec::new();
    let worst = sa
        .per_mode
        .iter()
        .flatten()
        .chain(sa.gamma0.iter())
        .map(|r| r.residual / (1.0 + r.lambda().norm()))
        .fold(0.0, f64::max);
    checks.push(Check::at_most("root_relative_residual", worst, 1e-9));
    for c in crit.iter().filter(|c| c.applies) {
        match (c.verdict, c.margin) {
            (Some("stable"), _) => {
                checks.push(Check::below(format!("{}_implies_negative_abscissa", c.criterion), sa.value, 0.0))
            }
            (Some("unstable"), Some(x)) => checks.push(Check {
                name: format!("{}_below_abscissa", c.criterion),
                value: x,
                limit: sa.value,
                passed: x <= sa.value + 1e-8 * (1.0 + x.abs()),
            }),
            _ => {}
        }
    }
    let mut data = json!({
        "abscissa": sa.value,
        "source": sa.source,
        "upper_bound_only": sa.upper_bound_only,
        "truncated_modes": sa.truncated_modes,
        "unresolved_modes": sa.unresolved_modes,
    });
    if sa.is_stable() {
        match resolvent_norm_sup(system, k, &ResolventGrid::for_system(system, k)) {
            Ok(rep) => {
                checks.push(Check::below("resolvent_sup", rep.sup, f64::INFINITY));
                data["resolvent_sup"] = json!(rep.sup);
                data["delay_gain_sup"] = json!(rep.delay_gain_sup);
            }
            Err(e) => return Stage::failed("spectrum", e.to_string()),
        }
    }
    Stage::done("spectrum", checks, data)
}

fn fundamental_stage(
    sub: &ModeSystem,
    k: &DelayKernel,
    dt: f64,
    horizon: f64,
    cov: Option<&CovarianceTable>,
) -> delayou::Result<Stage> {
    let horizon = (horizon / dt).ceil() * dt;
    let table = FundamentalTable::compute(sub, k, horizon.max(k.r()), dt)?;
    let mut checks = Vec::new();
    let g0 = table.rows.iter().map(|row| (row[0] - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("initial_value_error", g0, 1e-14));

    let mut worst = 0.0f64;
    for (m, row) in sub.modes().iter().zip(&table.rows) {
        let scale = row.iter().fold(1.0f64, |a, g| a.max(g.abs()));
        worst = worst.max(verify_integral_form(row, m, k, dt)? / scale);
    }
    checks.push(Check::at_most("integral_form_relative_residual", worst, 1e-3));

    let mut data = json!({ "dt": dt, "horizon": table.horizon(), "modes": sub.modes().len() });
    if cov.is_some() {
        let m = sub.modes()[0];
        let single = ModeSystem::from_entries(vec![m], sub.domain_length())?;
        let own = spectral_abscissa(&single, k, &AbscissaOptions::default())?.per_mode[0];
        let fit = own.and_then(|root| {
            let rate = -root.re;
            let t = table.horizon().min(40.0 / rate);
            fit_decay(&table.rows[0], dt, 0.5 * t, t).map(|f| (rate, f))
        });
        if let Some((rate, fit)) = fit {
            let rel = (fit.rate - rate).abs() / rate;
            checks.push(Check::at_most("first_mode_decay_rate_relative_error", rel, 0.1));
            data["first_mode_decay_rate"] = json!(rate);
            data["first_mode_fitted_rate"] = json!(fit.rate);
        }
    }
    Ok(Stage::done("fundamental", checks, data))
}

fn covariance_stage(sub: &ModeSystem, k: &DelayKernel, cov: &CovarianceTable) -> delayou::Result<Stage> {
    let mut checks = Vec::new();
    let kmax = cov.values.iter().flatten().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let rate = sub.modes().iter().map(|m| mode_rate(m, k)).fold(0.0, f64::max);
    let residual = covariance_ode_residual(cov, sub, k)?;
    let rel = if kmax > 0.0 { residual / (rate * kmax) } else { residual };
    checks.push(Check::at_most("ode_relative_residual", rel, 1e-3));
    checks.push(Check::at_most("tail_bound", cov.max_tail_bound(), 1e-6));

    let zero = cov.lag_index(0.0).expect("lag grid contains zero");
    let n = cov.modes;
    let mut asym = 0.0f64;
    let mut min_var = f64::INFINITY;
    for a in 0..n {
        min_var = min_var.min(cov.at(zero, a, a));
        for b in 0..n {
            asym = asym.max((cov.at(zero, a, b) - cov.at(zero, b, a)).abs());
        }
    }
    checks.push(Check::at_most("symmetry_at_zero", asym, 1e-12 * kmax.max(1e-300)));
    checks.push(Check::at_most("negative_variance", -min_var, 0.0));

    let variances: Vec<f64> = (0..n).map(|a| cov.at(zero, a, a)).collect();
    let mut data = json!({
        "lag_step": cov.lag_step,
        "t_trunc": cov.t_trunc,
        "variances": variances,
        "ode_residual": residual,
    });
    if delay_free(sub, k) {
        let modes = sub.modes();
        let mut err = 0.0f64;
        for (l, &t) in cov.lags.iter().enumerate().filter(|(_, t)| **t >= 0.0) {
            for (a, ma) in modes.iter().enumerate() {
                for (b, mb) in modes.iter().enumerate() {
                    let exact = ma.f * mb.f * (ma.mu * t).exp() / (-ma.mu - mb.mu);
                    err = err.max((cov.at(l, a, b) - exact).abs());
                }
            }
        }
        checks.push(Check::at_most("analytic_ou_error", err, 1e-6));
        let analytic: Vec<f64> = modes.iter().map(|m| m.f * m.f / (2.0 * m.mu.abs())).collect();
        data["analytic_variances"] = json!(analytic);
    }
    Ok(Stage::done("covariance", checks, data))
}

fn mc_stage(s: &Scenario, sub: &ModeSystem, cov: &CovarianceTable) -> delayou::Result<Stage> {
    let k = &s.kernel;
    let r = k.r();
    let first = sub.select(&[0]);
    let rate = mode_rate(&first.modes()[0], k);
    let dt = resolved_step(r, s.run.dt, rate, 0.02, true);
    let mut cfg = SimConfig::new(dt, 2.0 * r, s.run.paths, s.run.seed).stationary();
    cfg.burn_in = s.run.burn_in;
    let ens = simulate_ensemble(&first, k, &cfg)?;

    let lags = [0.0, 0.5 * r, r];
    let pairs: Vec<CovPair> = lags.iter().map(|&t| CovPair::new(0, 0, 0.0, t)).collect();
    let est = mc_covariance(&ens, &pairs)?;
    let mut checks = Vec::new();
    let mut reference = Vec::new();
    for (&t, e) in lags.iter().zip(&est) {
        let i = cov.lag_index(t).expect("lag on the covariance grid");
        let exact = cov.at(i, 0, 0);
        reference.push(exact);
        checks.push(Check::below(format!("mc_covariance_z_lag_{t}"), ((e.value - exact) / e.se).abs(), Z_LIMIT));
    }
    let base = [CovPair::new(0, 0, 0.0, 0.0), CovPair::new(0, 0, 0.0, 0.5 * r)];
    for shift in [0.5 * r, r] {
        for (p, z) in base.iter().zip(stationarity_test(&ens, &base, shift)?) {
            checks.push(Check::below(
                format!("stationarity_z_lag_{}_shift_{shift}", p.t2 - p.t),
                z.abs(),
                Z_LIMIT,
            ));
        }
    }
    for t in [0.0, r, 2.0 * r] {
        let m = ens.mean(0, ens.record_index(t)?);
        checks.push(Check::below(format!("mean_z_t_{t}"), (m.value / m.se).abs(), Z_LIMIT));
    }
    let data = json!({
        "mode": first.modes()[0].eig_index,
        "dt": dt,
        "paths": ens.n_paths(),
        "valid_paths": ens.valid_paths(),
        "lags": lags,
        "mc": est,
        "quadrature": reference,
    });
    Ok(Stage::done("monte_carlo", checks, data))
}
