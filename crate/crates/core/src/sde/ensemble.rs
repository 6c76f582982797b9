use rayon::prelude::*;
use serde::Serialize;

use super::{simulate_resolved, SimConfig};
use crate::error::{invalid, Error, Result};
use crate::kernel::DelayKernel;
use crate::modes::ModeSystem;

/// Ensemble of paths recorded on `t = i * record_dt`, `i = 0..records`.
#[derive(Debug, Clone, Serialize)]
pub struct PathEnsemble {
    pub dt: f64,
    pub record_dt: f64,
    pub modes: usize,
    pub records: usize,
    /// `values[p][k * records + i]`.
    values: Vec<Vec<f64>>,
    pub truncated: Vec<bool>,
    pub increments: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// `Cov(y_k(t), y_j(t2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovPair {
    pub k: usize,
    pub j: usize,
    pub t: f64,
    pub t2: f64,
}

impl CovPair {
    pub fn new(k: usize, j: usize, t: f64, t2: f64) -> Self {
        Self { k, j, t, t2 }
    }

    pub fn shifted(&self, s: f64) -> Self {
        Self { t: self.t + s, t2: self.t2 + s, ..*self }
    }
}

/// Simulates `cfg.n_paths` paths in parallel; path `p` uses stream `p` of
/// the master seed, so the ensemble does not depend on the thread count.
pub fn simulate_ensemble(system: &ModeSystem, k: &DelayKernel, cfg: &SimConfig) -> Result<PathEnsemble> {
    let cfg = cfg.resolved(system, k)?;
    cfg.validate(system, k)?;
    let stride = cfg.record_stride;
    let records = cfg.steps() / stride + 1;
    let modes = system.modes().len();
    let paths = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let path = simulate_resolved(system, k, &cfg, p)?;
            let mut v = Vec::with_capacity(modes * records);
            for yk in &path.y {
                for i in 0..records {
                    v.push(yk.get(path.q + i * stride).copied().unwrap_or(f64::NAN));
                }
            }
            Ok((v, path.truncated_at.is_some(), path.increments))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::with_capacity(paths.len());
    let mut truncated = Vec::with_capacity(paths.len());
    let mut increments = Vec::with_capacity(paths.len());
    for (v, t, inc) in paths {
        values.push(v);
        truncated.push(t);
        increments.push(inc);
    }
    Ok(PathEnsemble {
        dt: cfg.dt,
        record_dt: cfg.dt * stride as f64,
        modes,
        records,
        values,
        truncated,
        increments,
    })
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.values.len()
    }

    /// Paths that stayed finite over the whole horizon.
    pub fn valid_paths(&self) -> usize {
        self.truncated.iter().filter(|t| !**t).count()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.record_dt
    }

    pub fn record_index(&self, t: f64) -> Result<usize> {
        let x = t / self.record_dt;
        let i = x.round();
        if !(i >= 0.0 && (i as usize) < self.records && (x - i).abs() < 1e-6) {
            return Err(Error::LagOutOfRange(t));
        }
        Ok(i as usize)
    }

    pub fn value(&self, path: usize, k: usize, rec: usize) -> f64 {
        self.values[path][k * self.records + rec]
    }

    fn column(&self, k: usize, rec: usize) -> Vec<f64> {
        (0..self.n_paths())
            .filter(|&p| !self.truncated[p])
            .map(|p| self.value(p, k, rec))
            .collect()
    }

    pub fn mean(&self, k: usize, rec: usize) -> Estimate {
        let x = self.column(k, rec);
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        Estimate { value: m, se: (var / n).sqrt() }
    }

    /// `E[y_k(t)^2]` at every record with its standard error.
    pub fn second_moment_profile(&self, k: usize) -> Vec<Estimate> {
        (0..self.records)
            .map(|i| {
                let x = self.column(k, i);
                let n = x.len() as f64;
                let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
                let m = sq.iter().sum::<f64>() / n;
                let var = sq.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
                Estimate { value: m, se: (var / n).sqrt() }
            })
            .collect()
    }
}

/// Sample covariance with a delete-one jackknife standard error.
fn jackknife_cov(x: &[f64], y: &[f64]) -> Estimate {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let full = sxy / n - (sx / n) * (sy / n);
    let m = n - 1.0;
    let loo: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| (sxy - a * b) / m - ((sx - a) / m) * ((sy - b) / m))
        .collect();
    let mean = loo.iter().sum::<f64>() / n;
    let var = (n - 1.0) / n * loo.iter().map(|c| (c - mean).powi(2)).sum::<f64>();
    Estimate { value: full, se: var.sqrt() }
}

/// Empirical cross-mode covariances across paths.
pub fn mc_covariance(ens: &PathEnsemble, pairs: &[CovPair]) -> Result<Vec<Estimate>> {
    let n = ens.valid_paths();
    if n < 30 {
        return Err(Error::TooFewPaths(n));
    }
    pairs
        .iter()
        .map(|p| {
            if p.k >= ens.modes || p.j >= ens.modes {
                return Err(invalid("pairs", format!("mode index out of range in {p:?}")));
            }
            let (a, b) = (ens.record_index(p.t)?, ens.record_index(p.t2)?);
            Ok(jackknife_cov(&ens.column(p.k, a), &ens.column(p.j, b)))
        })
        .collect()
}

/// `z = (C(t, t2) - C(t + s, t2 + s)) / sqrt(se_1^2 + se_2^2)` for each pair.
pub fn stationarity_test(ens: &PathEnsemble, base_pairs: &[CovPair], shift: f64) -> Result<Vec<f64>> {
    let base = mc_covariance(ens, base_pairs)?;
    let moved: Vec<CovPair> = base_pairs.iter().map(|p| p.shifted(shift)).collect();
    let later = mc_covariance(ens, &moved)?;
    Ok(base
        .iter()
        .zip(&later)
        .map(|(a, b)| {
            let d = a.value - b.value;
            if d == 0.0 {
                0.0
            } else {
                d / (a.se * a.se + b.se * b.se).sqrt()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::ModeEntry;

    #[test]
    fn jackknife_matches_oracle() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        let y: Vec<f64> = (0..50).map(|i| ((i * 13 % 7) as f64).cos() + x[i]).collect();
        let est = jackknife_cov(&x, &y);
        let cov = |xs: &[f64], ys: &[f64]| {
            let n = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            xs.iter().zip(ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n
        };
        assert!((est.value - cov(&x, &y)).abs() < 1e-12);
        let loo: Vec<f64> = (0..50)
            .map(|i| {
                let xs: Vec<f64> = x.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
                let ys: Vec<f64> = y.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
                cov(&xs, &ys)
            })
            .collect();
        let m = loo.iter().sum::<f64>() / 50.0;
        let se = (49.0 / 50.0 * loo.iter().map(|c| (c - m).powi(2)).sum::<f64>()).sqrt();
        assert!((est.se - se).abs() < 1e-12);
    }

    #[test]
    fn too_few_paths() {
        let s = ModeSystem::from_entries(vec![ModeEntry::plain(-1.0, 1.0)], 1.0).unwrap();
        let k = DelayKernel::none(1.0).unwrap();
        let ens = simulate_ensemble(&s, &k, &SimConfig::new(0.01, 1.0, 10, 1)).unwrap();
        assert!(matches!(
            mc_covariance(&ens, &[CovPair::new(0, 0, 0.5, 0.5)]),
            Err(Error::TooFewPaths(10))
        ));
    }

    #[test]
    fn zero_shift_gives_zero() {
        let s = ModeSystem::from_entries(vec![ModeEntry::plain(-1.0, 1.0)], 1.0).unwrap();
        let k = DelayKernel::none(1.0).unwrap();
        let ens = simulate_ensemble(&s, &k, &SimConfig::new(0.01, 1.0, 40, 1)).unwrap();
        let z = stationarity_test(&ens, &[CovPair::new(0, 0, 0.5, 0.7)], 0.0).unwrap();
        assert_eq!(z, vec![0.0]);
    }
}
