//! Stationary covariance of the mode processes
//!
//! `K_kj(t) = f_k f_j ∫_0^∞ g_k(s + t) g_j(s) ds`, with `g = 0` on negative times.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fundamental::{fit_decay, DecayFit, FundamentalTable};
use crate::kernel::DelayKernel;
use crate::modes::ModeSystem;

/// Uniform lag grid `from, from + step, ..., to`, all multiples of the
/// fundamental table step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagGrid {
    pub from: f64,
    pub to: f64,
    pub step: f64,
}

impl LagGrid {
    pub fn new(from: f64, to: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(invalid("lags", format!("step must be positive, got {step}")));
        }
        if !(from.is_finite() && to.is_finite() && to >= from) {
            return Err(invalid("lags", format!("need from <= to, got {from}..{to}")));
        }
        Ok(Self { from, to, step })
    }

    /// Parses `from:step:to`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(invalid("lags", format!("expected from:step:to, got {spec:?}")));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| invalid("lags", format!("not a number: {s:?}")))
        };
        Self::new(num(parts[0])?, num(parts[2])?, num(parts[1])?)
    }

    pub fn len(&self) -> usize {
        ((self.to - self.from) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lag(&self, i: usize) -> f64 {
        self.from + i as f64 * self.step
    }
}

fn multiple_of(x: f64, dt: f64, what: &str) -> Result<i64> {
    let n = (x / dt).round();
    if (n * dt - x).abs() > 1e-9 * dt.max(x.abs()) {
        return Err(Error::GridMismatch(format!(
            "{what} {x} is not a multiple of the table step {dt}"
        )));
    }
    Ok(n as i64)
}

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceTable {
    pub lags: Vec<f64>,
    pub lag_step: f64,
    pub modes: usize,
    /// `values[l][k][j] = K_kj(lags[l])`.
    pub values: Vec<Vec<Vec<f64>>>,
    /// Bound on the truncation error of each entry.
    pub tail_bound: Vec<Vec<Vec<f64>>>,
    /// Horizon the lag integrals were cut at.
    pub t_trunc: f64,
}

impl CovarianceTable {
    pub fn at(&self, lag_index: usize, k: usize, j: usize) -> f64 {
        self.values[lag_index][k][j]
    }

    pub fn lag_index(&self, t: f64) -> Option<usize> {
        let x = (t - self.lags[0]) / self.lag_step;
        let i = x.round();
        ((x - i).abs() < 1e-6 && i >= 0.0 && (i as usize) < self.lags.len()).then_some(i as usize)
    }

    /// `K(t)` by linear interpolation between lag nodes.
    pub fn interpolate(&self, t: f64) -> Result<Vec<Vec<f64>>> {
        let (lo, hi) = (self.lags[0], *self.lags.last().unwrap());
        if !(t >= lo - 1e-12 && t <= hi + 1e-12) {
            return Err(Error::LagOutOfRange(t));
        }
        if let Some(i) = self.lag_index(t) {
            return Ok(self.values[i].clone());
        }
        let x = (t - lo) / self.lag_step;
        let i = (x.floor() as usize).min(self.lags.len() - 2);
        let s = x - i as f64;
        Ok((0..self.modes)
            .map(|k| {
                (0..self.modes)
                    .map(|j| (1.0 - s) * self.values[i][k][j] + s * self.values[i + 1][k][j])
                    .collect()
            })
            .collect())
    }

    pub fn max_tail_bound(&self) -> f64 {
        self.tail_bound
            .iter()
            .flatten()
            .flatten()
            .fold(0.0, |a, &b| a.max(b))
    }
}

/// Stationary covariance on a lag grid from tabulated fundamental solutions.
///
/// The lag integrals run to `t_trunc` (the table horizon by default) with
/// the trapezoid rule; each entry carries a Cauchy-Schwarz bound on the
/// neglected tail from exponential envelopes fitted to the second half of
/// each table row.
pub fn covariance(
    table: &FundamentalTable,
    f: &[f64],
    lags: &LagGrid,
    t_trunc: Option<f64>,
) -> Result<CovarianceTable> {
    let n_modes = table.rows.len();
    if f.len() != n_modes {
        return Err(invalid(
            "f",
            format!("{} forcing coefficients for {n_modes} modes", f.len()),
        ));
    }
    let dt = table.dt;
    let steps = multiple_of(lags.step, dt, "lag step")?;
    if steps <= 0 {
        return Err(invalid("lags", "step must be at least the table step"));
    }
    let start = multiple_of(lags.from, dt, "first lag")?;
    let n_lags = lags.len();
    let max_lag = (start + steps * (n_lags as i64 - 1)).unsigned_abs() as usize;

    let horizon = t_trunc.unwrap_or(table.horizon());
    let n_int = (horizon / dt + 1e-9).floor() as usize;
    if n_int > table.steps() {
        return Err(invalid("T_trunc", format!("{horizon} beyond the table horizon {}", table.horizon())));
    }
    if max_lag >= n_int {
        return Err(invalid("lags", "largest |lag| must stay below the truncation horizon"));
    }

    let t_end = n_int as f64 * dt;
    let fits: Vec<DecayFit> = table
        .rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            fit_decay(&row[..=n_int], dt, 0.5 * t_end, t_end).ok_or_else(|| {
                Error::Unstable(format!("fundamental solution of mode {k} does not decay"))
            })
        })
        .collect::<Result<_>>()?;

    let lag_values: Vec<f64> = (0..n_lags).map(|l| (start + steps * l as i64) as f64 * dt).collect();
    let (values, tails): (Vec<_>, Vec<_>) = (0..n_lags)
        .into_par_iter()
        .map(|l| {
            let m = start + steps * l as i64;
            // K_kj(m dt) = f_k f_j Σ_i w_i g_k(i + m) g_j(i), i from max(0, -m) while i + m and i stay <= n_int
            let (i0, i1) = if m >= 0 {
                (0usize, n_int - m as usize)
            } else {
                ((-m) as usize, n_int)
            };
            let mut vals = vec![vec![0.0; n_modes]; n_modes];
            let mut tail = vec![vec![0.0; n_modes]; n_modes];
            for k in 0..n_modes {
                let gk = &table.rows[k];
                for j in 0..n_modes {
                    let gj = &table.rows[j];
                    let prod = |i: usize| gk[(i as i64 + m) as usize] * gj[i];
                    let mut acc = 0.0;
                    for i in i0..=i1 {
                        let w = if i == i0 || i == i1 { 0.5 } else { 1.0 };
                        acc += w * prod(i);
                    }
                    // endpoint correction from exact right derivatives; the far end is negligible
                    let (a0, b0) = ((i0 as i64 + m) as usize, i0);
                    let slope = table.slopes[k][a0] * gj[b0] + gk[a0] * table.slopes[j][b0];
                    acc += dt * slope / 12.0;
                    let ff = f[k] * f[j];
                    vals[k][j] = ff * dt * acc;
                    let u = i1 as f64 * dt;
                    let tk = fits[k].square_tail(u + m as f64 * dt);
                    let tj = fits[j].square_tail(u);
                    tail[k][j] = ff.abs() * (tk * tj).sqrt();
                }
            }
            (vals, tail)
        })
        .unzip();

    Ok(CovarianceTable {
        lags: lag_values,
        lag_step: steps as f64 * dt,
        modes: n_modes,
        values,
        tail_bound: tails,
        t_trunc: t_end,
    })
}

/// Row-wise residual of `d/dt K(t) = A K(t)` for `t > 0`, where `A` is the
/// mode delay operator acting on the first index:
/// `K_kj' = mu_k K_kj + alpha m1_k K_kj(t-r) + m2_k ∫ beta(θ) K_kj(t+θ) dθ`.
///
/// Derivatives are central differences on the lag grid; lags whose stencil
/// straddles a breakpoint `t = n r` are skipped. Returns the maximum
/// absolute residual.
pub fn covariance_ode_residual(
    cov: &CovarianceTable,
    system: &ModeSystem,
    k: &DelayKernel,
) -> Result<f64> {
    let h = cov.lag_step;
    let q = k.cells_for_step(h)?;
    if cov.lags[0] > -k.r() + 1e-9 * k.r() {
        return Err(invalid(
            "lags",
            format!("residual needs lags down to -r = {}, grid starts at {}", -k.r(), cov.lags[0]),
        ));
    }
    if system.modes().len() != cov.modes {
        return Err(invalid("modes", "covariance table and system disagree on the mode count"));
    }
    let w = k.quadrature_weights(h)?;
    let r = k.r();
    let mut worst: f64 = 0.0;
    for l in 1..cov.lags.len() - 1 {
        let t = cov.lags[l];
        if t <= 0.0 || l < q {
            continue;
        }
        let phase = t / r;
        if (phase - phase.round()).abs() * r < 1.5 * h {
            continue;
        }
        for (kk, mode) in system.modes().iter().enumerate() {
            let a = k.alpha() * mode.m1;
            for j in 0..cov.modes {
                let d = (cov.at(l + 1, kk, j) - cov.at(l - 1, kk, j)) / (2.0 * h);
                let mut rhs = mode.mu * cov.at(l, kk, j) + a * cov.at(l - q, kk, j);
                if k.has_distributed() && mode.m2 != 0.0 {
                    let dist: f64 = (0..=q).map(|i| w[i] * cov.at(l - q + i, kk, j)).sum();
                    rhs += mode.m2 * dist;
                }
                worst = worst.max((d - rhs).abs());
            }
        }
    }
    Ok(worst)
}

/// `E[u(t, x) u(0, x2)] = Σ_kj e_k(x) e_j(x2) K_kj(t)` for the truncated field.
pub fn field_covariance(cov: &CovarianceTable, system: &ModeSystem, x: f64, x2: f64, t: f64) -> Result<f64> {
    let kt = cov.interpolate(t)?;
    let ex: Vec<f64> = (0..cov.modes).map(|i| system.eigenfunction(i, x)).collect();
    let ex2: Vec<f64> = (0..cov.modes).map(|i| system.eigenfunction(i, x2)).collect();
    let mut s = 0.0;
    for k in 0..cov.modes {
        for j in 0..cov.modes {
            s += ex[k] * ex2[j] * kt[k][j];
        }
    }
    Ok(s)
}
