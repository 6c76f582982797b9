//! Euler-Maruyama simulation of the mode system driven by one scalar
//! Brownian motion
//!
//! ```text
//! dy_k = [mu_k y_k + alpha m1_k y_k(t - r) + m2_k ∫ beta(θ) y_k(t + θ) dθ] dt + f_k dB
//! ```

mod ensemble;
mod voc;

pub use ensemble::{
    mc_covariance, simulate_ensemble, stationarity_test, CovPair, Estimate, PathEnsemble,
};
pub use voc::{pathwise_voc_check, VocConfig, VocReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::characteristic::{spectral_abscissa, AbscissaOptions};
use crate::error::{invalid, Error, Result};
use crate::fundamental::FundamentalTable;
use crate::kernel::{grid_cells, DelayKernel, Segment};
use crate::modes::ModeSystem;

/// Initial data of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Zero,
    /// Per-mode `phi0` and history segments on the simulation grid.
    Explicit { phi0: Vec<f64>, phi1: Vec<Segment> },
    /// Terminal segment of a zero-started run of length `burn_in`.
    Stationary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Burn-in length for [`Init::Stationary`]; derived from the decay of
    /// the fundamental solutions when `None`.
    pub burn_in: Option<f64>,
    pub init: Init,
    /// Ensembles keep every `record_stride`-th grid value.
    pub record_stride: usize,
    pub keep_increments: bool,
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            dt,
            t_end,
            n_paths,
            seed,
            burn_in: None,
            init: Init::Zero,
            record_stride: 1,
            keep_increments: false,
        }
    }

    pub fn stationary(mut self) -> Self {
        self.init = Init::Stationary;
        self
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil() as usize
    }

    /// Checks the grid and the explicit stability limit of the scheme.
    pub fn validate(&self, system: &ModeSystem, k: &DelayKernel) -> Result<usize> {
        let q = grid_cells(k.r(), self.dt)?;
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(invalid("T", format!("horizon must be positive, got {}", self.t_end)));
        }
        if self.n_paths == 0 {
            return Err(invalid("n_paths", "need at least one path"));
        }
        if self.record_stride == 0 {
            return Err(invalid("record_stride", "must be at least 1"));
        }
        let rate = system
            .modes()
            .iter()
            .map(|m| m.mu.abs() + (k.alpha() * m.m1).abs() + m.m2.abs() * k.beta_l1_norm())
            .fold(0.0, f64::max);
        if rate * self.dt > 1.0 {
            return Err(invalid(
                "dt",
                format!(
                    "Euler-Maruyama needs dt * max_k(|mu_k| + |alpha m1_k| + |m2_k| ||beta||_1) <= 1, got {:.3}",
                    rate * self.dt
                ),
            ));
        }
        if let Some(b) = self.burn_in {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(invalid("burn_in", format!("must be nonnegative, got {b}")));
            }
        }
        if let Init::Explicit { phi0, phi1 } = &self.init {
            let n = system.modes().len();
            if phi0.len() != n || phi1.len() != n {
                return Err(invalid("init", format!("need initial data for all {n} modes")));
            }
            if phi1.iter().any(|s| s.len() != q + 1) {
                return Err(Error::GridMismatch("history segments must sit on the simulation grid".into()));
            }
        }
        Ok(q)
    }

    /// Copy with the burn-in filled in when a stationary start needs it.
    pub fn resolved(&self, system: &ModeSystem, k: &DelayKernel) -> Result<Self> {
        let mut out = self.clone();
        if matches!(self.init, Init::Stationary) && self.burn_in.is_none() {
            out.burn_in = Some(default_burn_in(system, k, self.dt)?);
        }
        Ok(out)
    }
}

/// `T_b` with `M e^{-ν T_b} < 1e-4`, where `ν` is 0.9 times the decay rate
/// from the spectral abscissa and `M = max |g_k(t)| e^{ν t}` over a long table.
pub fn default_burn_in(system: &ModeSystem, k: &DelayKernel, dt: f64) -> Result<f64> {
    let sa = spectral_abscissa(system, k, &AbscissaOptions::default())?;
    if !(sa.value < 0.0) {
        return Err(Error::Unstable(format!(
            "no stationary solution; spectral abscissa {:.6} >= 0",
            sa.value
        )));
    }
    let nu = -0.9 * sa.value;
    let horizon = (10.0 * k.r()).max(30.0 / nu);
    let table = FundamentalTable::compute(system, k, horizon, dt)?;
    let m = table
        .rows
        .iter()
        .flat_map(|row| row.iter().enumerate().map(|(i, g)| g.abs() * (nu * i as f64 * dt).exp()))
        .fold(1.0, f64::max);
    let steps = ((1e4 * m).ln() / nu / dt).ceil();
    Ok(steps * dt)
}

/// One simulated path on the grid `t_i = -r + i dt`.
#[derive(Debug, Clone, Serialize)]
pub struct Path {
    pub dt: f64,
    /// Index of `t = 0`.
    pub q: usize,
    /// `y[k][i]` for mode `k`.
    pub y: Vec<Vec<f64>>,
    /// Brownian increments over `[t_i, t_i + dt]`, `t_i >= 0`, when kept.
    pub increments: Option<Vec<f64>>,
    /// First step whose state was not finite; the trajectory stops there.
    pub truncated_at: Option<usize>,
}

impl Path {
    pub fn time(&self, i: usize) -> f64 {
        (i as f64 - self.q as f64) * self.dt
    }
}

pub(crate) fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Deterministic part of the drift at grid index `n` (the current state is `y[n + q]`).
pub(crate) struct Drift {
    mu: f64,
    a: f64,
    c: f64,
    f: f64,
}

pub(crate) fn drifts(system: &ModeSystem, k: &DelayKernel) -> Vec<Drift> {
    system
        .modes()
        .iter()
        .map(|m| Drift {
            mu: m.mu,
            a: k.alpha() * m.m1,
            c: if k.has_distributed() { m.m2 } else { 0.0 },
            f: m.f,
        })
        .collect()
}

/// Euler-Maruyama from explicit buffers: `y[k][..=q]` holds the history,
/// `noise(n)` supplies `ΔB_n`. Returns the first non-finite step, if any.
pub(crate) fn em_run(
    d: &[Drift],
    w: &[f64],
    q: usize,
    dt: f64,
    y: &mut [Vec<f64>],
    steps: usize,
    mut noise: impl FnMut(usize) -> f64,
) -> Option<usize> {
    for n in 0..steps {
        let db = noise(n);
        let mut finite = true;
        for (dk, yk) in d.iter().zip(y.iter_mut()) {
            let cur = yk[n + q];
            let mut drift = dk.mu * cur + dk.a * yk[n];
            if dk.c != 0.0 {
                let window = &yk[n..=n + q];
                drift += dk.c * window.iter().zip(w).map(|(v, wi)| v * wi).sum::<f64>();
            }
            let next = cur + dt * drift + dk.f * db;
            finite &= next.is_finite();
            yk.push(next);
        }
        if !finite {
            return Some(n + 1);
        }
    }
    None
}

fn simulate_resolved(
    system: &ModeSystem,
    k: &DelayKernel,
    cfg: &SimConfig,
    path: usize,
) -> Result<Path> {
    let q = cfg.validate(system, k)?;
    let d = drifts(system, k);
    let w = k.quadrature_weights(cfg.dt)?;
    let n = cfg.steps();
    let n_modes = d.len();
    let mut rng = path_rng(cfg.seed, path);
    let sd = cfg.dt.sqrt();
    let mut draw = move || -> f64 { sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng) };

    let mut y: Vec<Vec<f64>> = match &cfg.init {
        Init::Zero => vec![vec![0.0; q + 1]; n_modes],
        Init::Explicit { phi0, phi1 } => phi1
            .iter()
            .zip(phi0)
            .map(|(s, &p0)| {
                let mut v = s.values().to_vec();
                v[q] = p0;
                v
            })
            .collect(),
        Init::Stationary => {
            let burn = cfg
                .burn_in
                .ok_or_else(|| invalid("burn_in", "stationary start needs a resolved burn-in"))?;
            let nb = (burn / cfg.dt).round() as usize;
            let mut pre = vec![vec![0.0; q + 1]; n_modes];
            if let Some(at) = em_run(&d, &w, q, cfg.dt, &mut pre, nb, |_| draw()) {
                return Ok(Path {
                    dt: cfg.dt,
                    q,
                    y: pre,
                    increments: None,
                    truncated_at: Some(at),
                });
            }
            pre.into_iter().map(|v| v[v.len() - q - 1..].to_vec()).collect()
        }
    };
    for v in &mut y {
        v.reserve(n);
    }
    let mut kept = cfg.keep_increments.then(|| Vec::with_capacity(n));
    let truncated_at = em_run(&d, &w, q, cfg.dt, &mut y, n, |_| {
        let db = draw();
        if let Some(v) = kept.as_mut() {
            v.push(db);
        }
        db
    });
    Ok(Path {
        dt: cfg.dt,
        q,
        y,
        increments: kept,
        truncated_at,
    })
}

/// Simulates path number `path` of the ensemble described by `cfg`; the
/// Brownian increments depend only on `(cfg.seed, path)`.
pub fn simulate_path(system: &ModeSystem, k: &DelayKernel, cfg: &SimConfig, path: usize) -> Result<Path> {
    simulate_resolved(system, k, &cfg.resolved(system, k)?, path)
}

/// Initial data drawn from (an approximation of) the stationary law: the
/// terminal `(phi0, phi1)` of a zero-started run of length `T_b`.
pub fn stationary_start(
    system: &ModeSystem,
    k: &DelayKernel,
    cfg: &SimConfig,
    path: usize,
) -> Result<(Vec<f64>, Vec<Segment>)> {
    let mut c = cfg.clone();
    c.init = Init::Stationary;
    c.t_end = cfg.dt;
    let c = c.resolved(system, k)?;
    let q = c.validate(system, k)?;
    let p = simulate_resolved(system, k, &c, path)?;
    if let Some(at) = p.truncated_at {
        return Err(Error::Unstable(format!("burn-in diverged at step {at}")));
    }
    let phi1 = p
        .y
        .iter()
        .map(|v| Segment::new(v[..=q].to_vec(), c.dt, k.r()))
        .collect::<Result<Vec<_>>>()?;
    let phi0 = phi1.iter().map(|s| s.newest()).collect();
    Ok((phi0, phi1))
}
