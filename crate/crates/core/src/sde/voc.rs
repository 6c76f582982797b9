use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{drifts, em_run, path_rng};
use crate::error::{invalid, Result};
use crate::fundamental::{history_response, solve_with_history, structure_apply, FundamentalTable};
use crate::kernel::{DelayKernel, Segment};
use crate::modes::ModeSystem;

/// Halving ladder for the pathwise variation-of-constants comparison.
#[derive(Debug, Clone)]
pub struct VocConfig {
    /// Steps, each an integer multiple of the smallest.
    pub dts: Vec<f64>,
    pub t_end: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Initial history `phi1_k(θ)` per mode; `phi0_k = history(k, 0)`.
    pub history: fn(usize, f64) -> f64,
    /// Scales every forcing coefficient; `0` leaves the deterministic check.
    pub noise_scale: f64,
}

impl VocConfig {
    pub fn ladder(r: f64, t_end: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            dts: [50.0, 100.0, 200.0, 400.0].iter().map(|n| r / n).collect(),
            t_end,
            n_paths,
            seed,
            history: |k, theta| (1.0 + theta).cos() / (k + 1) as f64,
            noise_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VocReport {
    pub dts: Vec<f64>,
    /// `max_t` of the RMS over paths of the full discrepancy.
    pub errors: Vec<f64>,
    /// Direct history solve against `G phi0 + ∫ G(t+θ) S phi1(θ) dθ`.
    pub deterministic: Vec<f64>,
    /// Zero-start Euler-Maruyama against `Σ_j g(t - s_j) f ΔB_j`.
    pub stochastic: Vec<f64>,
    pub slope: f64,
    pub deterministic_slope: f64,
    pub stochastic_slope: f64,
}

fn loglog_slope(dts: &[f64], errs: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = dts
        .iter()
        .zip(errs)
        .filter(|(_, e)| **e > 0.0)
        .map(|(d, e)| (d.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Pathwise check of the variation-of-constants formula
/// `y(t) = G(t) phi0 + ∫ G(t+θ) (S phi1)(θ) dθ + ∫_0^t G(t-s) f dB(s)`
/// on a ladder of steps sharing one Brownian path per sample.
///
/// The simulated side is split by linearity into a direct solve of the
/// history problem and a zero-start Euler-Maruyama run; the formula side
/// uses the tabulated fundamental solutions with the same increments.
pub fn pathwise_voc_check(system: &ModeSystem, k: &DelayKernel, cfg: &VocConfig) -> Result<VocReport> {
    if cfg.dts.len() < 2 {
        return Err(invalid("dts", "need at least two steps for a slope"));
    }
    if cfg.n_paths == 0 {
        return Err(invalid("n_paths", "need at least one path"));
    }
    let fine = cfg.dts.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratios = cfg
        .dts
        .iter()
        .map(|d| {
            let m = (d / fine).round();
            if (m * fine - d).abs() > 1e-9 * d {
                Err(invalid("dts", format!("{d} is not a multiple of {fine}")))
            } else {
                Ok(m as usize)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let coarse = cfg.dts.iter().cloned().fold(0.0, f64::max);
    let n_coarse = (cfg.t_end / coarse - 1e-9).ceil() as usize;
    let n_fine = n_coarse * (coarse / fine).round() as usize;
    let t_end = n_coarse as f64 * coarse;

    let scaled = ModeSystem::from_entries(
        system
            .modes()
            .iter()
            .map(|m| crate::modes::ModeEntry { f: m.f * cfg.noise_scale, ..*m })
            .collect(),
        system.domain_length(),
    )?;
    let n_modes = scaled.modes().len();

    let mut errors = Vec::new();
    let mut deterministic = Vec::new();
    let mut stochastic = Vec::new();
    for (&dt, &ratio) in cfg.dts.iter().zip(&ratios) {
        let probe = super::SimConfig::new(dt, t_end, 1, cfg.seed);
        let q = probe.validate(&scaled, k)?;
        let n = (t_end / dt).round() as usize;
        let table = FundamentalTable::compute(&scaled, k, t_end, dt)?;

        let mut det = vec![vec![0.0; n + 1]; n_modes];
        for (kk, mode) in scaled.modes().iter().enumerate() {
            let phi1 = Segment::from_fn(k.r(), dt, |t| (cfg.history)(kk, t))?;
            let phi0 = (cfg.history)(kk, 0.0);
            let direct = solve_with_history(mode, k, phi0, &phi1, t_end, dt)?;
            let s = structure_apply(k, mode, &phi1)?;
            let resp = history_response(&table.rows[kk], &s);
            for i in 0..=n {
                det[kk][i] = direct[i] - (table.rows[kk][i] * phi0 + resp[i]);
            }
        }

        let d = drifts(&scaled, k);
        let w = k.quadrature_weights(dt)?;
        let sd = fine.sqrt();
        let per_path: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.n_paths)
            .into_par_iter()
            .map(|p| {
                let mut rng = path_rng(cfg.seed, p);
                let fine_db: Vec<f64> = (0..n_fine).map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect();
                let db: Vec<f64> = fine_db.chunks(ratio).map(|c| c.iter().sum()).collect();
                let mut y = vec![vec![0.0; q + 1]; n_modes];
                em_run(&d, &w, q, dt, &mut y, n, |i| db[i]);
                let mut tot = vec![0.0; n + 1];
                let mut sto = vec![0.0; n + 1];
                for (kk, mode) in scaled.modes().iter().enumerate() {
                    let g = &table.rows[kk];
                    for i in 0..=n {
                        let conv: f64 = (0..i).map(|j| g[i - j] * db[j]).sum::<f64>() * mode.f;
                        let es = y[kk][q + i] - conv;
                        let e = es + det[kk][i];
                        tot[i] += e * e;
                        sto[i] += es * es;
                    }
                }
                (tot, sto)
            })
            .collect();
        let mut tot = vec![0.0; n + 1];
        let mut sto = vec![0.0; n + 1];
        for (a, b) in &per_path {
            for i in 0..=n {
                tot[i] += a[i];
                sto[i] += b[i];
            }
        }
        let np = cfg.n_paths as f64;
        errors.push(tot.iter().map(|v| (v / np).sqrt()).fold(0.0, f64::max));
        stochastic.push(sto.iter().map(|v| (v / np).sqrt()).fold(0.0, f64::max));
        deterministic.push(
            (0..=n)
                .map(|i| det.iter().map(|row| row[i] * row[i]).sum::<f64>().sqrt())
                .fold(0.0, f64::max),
        );
    }
    Ok(VocReport {
        slope: loglog_slope(&cfg.dts, &errors),
        deterministic_slope: loglog_slope(&cfg.dts, &deterministic),
        stochastic_slope: loglog_slope(&cfg.dts, &stochastic),
        dts: cfg.dts.clone(),
        errors,
        deterministic,
        stochastic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let dts = [0.1, 0.05, 0.025];
        let errs: Vec<f64> = dts.iter().map(|d| 3.0 * d * d).collect();
        assert!((loglog_slope(&dts, &errs) - 2.0).abs() < 1e-12);
        assert!(loglog_slope(&dts, &[0.0, 0.0, 0.0]).is_nan());
    }
}
