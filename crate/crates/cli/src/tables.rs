//! Numeric tables behind the `roots`, `fundamental`, `covariance` and
//! `simulate` subcommands, with their CSV row types.

use std::path::Path;

use anyhow::Context;
use delayou::characteristic::find_roots;
use delayou::sde::{default_burn_in, simulate_ensemble, SimConfig};
use delayou::stationary::{covariance, CovarianceTable, LagGrid};
use delayou::{
    gamma_classify, CharProblem, DelayKernel, Error, FundamentalTable, ModeSystem, Rect,
};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootRow {
    pub mode_index: usize,
    pub re: f64,
    pub im: f64,
    pub residual: f64,
    pub gamma_label: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FundamentalRow {
    pub t: f64,
    pub mode_index: usize,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceRow {
    pub k: usize,
    pub j: usize,
    pub t: f64,
    #[serde(rename = "K")]
    pub value: f64,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsRow {
    pub t: f64,
    pub mode_index: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub second_moment: f64,
    pub second_moment_se: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// `|mu| + |alpha m1| + |m2| ||beta||_1`, which bounds the real part of
/// every root of the mode.
pub fn mode_rate(m: &delayou::ModeEntry, k: &DelayKernel) -> f64 {
    m.mu.abs() + (k.alpha() * m.m1).abs() + m.m2.abs() * k.beta_l1_norm()
}

/// Every characteristic root of every mode in `[lo, hi] x [-im_cap, im_cap]`.
pub fn root_rows(system: &ModeSystem, k: &DelayKernel, window: (f64, f64), im_cap: f64) -> delayou::Result<Vec<RootRow>> {
    let spectrum = system.eigenvalues();
    let mut rows = Vec::new();
    for m in system.modes() {
        let p = CharProblem::mode(k, m);
        let mut found = None;
        for attempt in 0..8 {
            let nudge = 1.3e-4 * attempt as f64;
            let rect = Rect::new(
                window.0 - nudge * (1.0 + window.0.abs()),
                window.1 + nudge * (1.0 + window.1.abs()),
                -im_cap * (1.0 + nudge),
                im_cap,
            )?;
            match find_roots(&p, rect, None) {
                Ok(rep) => {
                    found = Some(rep);
                    break;
                }
                Err(Error::ContourTooClose { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        let rep = found.ok_or(Error::ContourTooClose { min_abs: 0.0 })?;
        for r in rep.roots {
            rows.push(RootRow {
                mode_index: m.eig_index,
                re: r.re,
                im: r.im,
                residual: r.residual,
                gamma_label: gamma_classify(k, r.lambda(), &spectrum).as_str(),
            });
        }
    }
    Ok(rows)
}

pub fn fundamental_rows(table: &FundamentalTable, system: &ModeSystem) -> Vec<FundamentalRow> {
    let mut rows = Vec::new();
    for (m, row) in system.modes().iter().zip(&table.rows) {
        for (i, g) in row.iter().enumerate() {
            rows.push(FundamentalRow {
                t: table.time(i),
                mode_index: m.eig_index,
                g: *g,
            });
        }
    }
    rows
}

/// Stationary covariance on `lags`; the integrals are cut at
/// `max |lag| + t_trunc`, with `t_trunc` twice the default burn-in unless given.
pub fn stationary_covariance(
    system: &ModeSystem,
    k: &DelayKernel,
    dt: f64,
    lags: &LagGrid,
    t_trunc: Option<f64>,
) -> delayou::Result<CovarianceTable> {
    let t_trunc = match t_trunc {
        Some(t) => t,
        None => 2.0 * default_burn_in(system, k, dt)?,
    };
    let reach = lags.from.abs().max(lags.to.abs());
    let horizon = ((reach + t_trunc) / dt).ceil() * dt;
    let table = FundamentalTable::compute(system, k, horizon, dt)?;
    let f: Vec<f64> = system.modes().iter().map(|m| m.f).collect();
    covariance(&table, &f, lags, Some(horizon))
}

pub fn covariance_rows(cov: &CovarianceTable, system: &ModeSystem) -> Vec<CovarianceRow> {
    let modes = system.modes();
    let mut rows = Vec::new();
    for (a, mk) in modes.iter().enumerate() {
        for (b, mj) in modes.iter().enumerate() {
            for (l, t) in cov.lags.iter().enumerate() {
                rows.push(CovarianceRow {
                    k: mk.eig_index,
                    j: mj.eig_index,
                    t: *t,
                    value: cov.values[l][a][b],
                    tail_bound: cov.tail_bound[l][a][b],
                });
            }
        }
    }
    rows
}

/// Ensemble mean and second moment per mode on the recorded grid;
/// also returns the number of paths that stayed finite.
pub fn simulate_rows(system: &ModeSystem, k: &DelayKernel, cfg: &SimConfig) -> delayou::Result<(Vec<StatsRow>, usize)> {
    let ens = simulate_ensemble(system, k, cfg)?;
    let mut rows = Vec::new();
    for (kk, m) in system.modes().iter().enumerate() {
        let second = ens.second_moment_profile(kk);
        for (i, sm) in second.iter().enumerate() {
            let mean = ens.mean(kk, i);
            rows.push(StatsRow {
                t: ens.time(i),
                mode_index: m.eig_index,
                mean: mean.value,
                mean_se: mean.se,
                second_moment: sm.value,
                second_moment_se: sm.se,
            });
        }
    }
    Ok((rows, ens.valid_paths()))
}
