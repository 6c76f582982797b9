//! Finite spectral truncations of the evolution equation.
//!
//! The generator `A` is diagonalised as the Dirichlet Laplacian on `[0, L]`
//! and the two delay operators act as functions of `A`, so every quantity
//! reduces to a family of scalar delay equations, one per eigenmode.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel::{trapezoid, DelayKernel};

/// How a delay operator acts on eigenmode `k` with eigenvalue `mu_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DelayOperator {
    /// The operator is absent.
    None,
    /// The operator equals `A`: multiplier `mu_k`.
    Laplacian,
    /// The operator is `(-A)^delta`: multiplier `|mu_k|^delta`.
    Fractional { delta: f64 },
}

impl DelayOperator {
    pub fn multiplier(&self, mu: f64) -> Result<f64> {
        match *self {
            DelayOperator::None => Ok(0.0),
            DelayOperator::Laplacian => Ok(mu),
            DelayOperator::Fractional { delta } => fractional_multiplier(mu, delta),
        }
    }
}

/// One scalar delay mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeEntry {
    pub mu: f64,
    pub m1: f64,
    pub m2: f64,
    pub f: f64,
    pub eig_index: usize,
}

impl ModeEntry {
    pub fn new(mu: f64, m1: f64, m2: f64, f: f64) -> Self {
        Self {
            mu,
            m1,
            m2,
            f,
            eig_index: 1,
        }
    }

    /// Mode with no delay coupling.
    pub fn plain(mu: f64, f: f64) -> Self {
        Self::new(mu, 0.0, 0.0, f)
    }
}

/// Dirichlet eigenpair on `[0, L]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletMode {
    pub k: usize,
    pub mu: f64,
    pub length: f64,
}

impl DirichletMode {
    /// `e_k(x) = sqrt(2/L) sin(k π x / L)`.
    pub fn eigenfunction(&self, x: f64) -> f64 {
        (2.0 / self.length).sqrt() * (self.k as f64 * PI * x / self.length).sin()
    }
}

/// `μ_k = -(kπ/L)^2`, `k = 1..=K`.
pub fn dirichlet_modes(length: f64, count: usize) -> Result<Vec<DirichletMode>> {
    if !(length.is_finite() && length > 0.0) {
        return Err(invalid("L", "domain length must be positive"));
    }
    if count == 0 {
        return Err(invalid("K", "need at least one mode"));
    }
    Ok((1..=count)
        .map(|k| DirichletMode {
            k,
            mu: -(k as f64 * PI / length).powi(2),
            length,
        })
        .collect())
}

/// `|mu|^delta` for `mu < 0`, `delta ∈ [0, 1)`.
pub fn fractional_multiplier(mu: f64, delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(invalid("delta", format!("must lie in [0, 1), got {delta}")));
    }
    if !(mu < 0.0) {
        return Err(invalid("mu", format!("eigenvalue must be negative, got {mu}")));
    }
    Ok(mu.abs().powf(delta))
}

/// Projection of a forcing profile onto the eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingProjection {
    pub coefficients: Vec<f64>,
    /// `∫ f^2`, trapezoid on the same grid.
    pub l2_norm_sq: f64,
    /// `∫ f^2 - Σ f_k^2`; nonnegative up to quadrature error (Bessel).
    pub parseval_defect: f64,
}

/// `f_k = ∫_0^L f(x) e_k(x) dx` by trapezoid for samples on a uniform grid over `[0, L]`.
pub fn project_forcing(samples: &[f64], modes: &[DirichletMode]) -> Result<ForcingProjection> {
    if samples.len() < 2 {
        return Err(invalid("forcing", "spatial grid needs at least 2 points"));
    }
    let Some(first) = modes.first() else {
        return Err(invalid("modes", "no modes to project on"));
    };
    let length = first.length;
    let h = length / (samples.len() - 1) as f64;
    let mut buf = vec![0.0; samples.len()];
    let coefficients: Vec<f64> = modes
        .iter()
        .map(|m| {
            for (i, (b, f)) in buf.iter_mut().zip(samples).enumerate() {
                *b = f * m.eigenfunction(i as f64 * h);
            }
            trapezoid(&buf, h)
        })
        .collect();
    let sq: Vec<f64> = samples.iter().map(|f| f * f).collect();
    let l2_norm_sq = trapezoid(&sq, h);
    let parseval_defect = l2_norm_sq - coefficients.iter().map(|c| c * c).sum::<f64>();
    Ok(ForcingProjection {
        coefficients,
        l2_norm_sq,
        parseval_defect,
    })
}

/// Finite truncation: per-mode multipliers and forcing coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSystem {
    modes: Vec<ModeEntry>,
    domain_length: f64,
    /// Operator descriptors when built from the Dirichlet model.
    a1: DelayOperator,
    a2: DelayOperator,
    /// `||f||^2` when known, for the truncation tail estimate.
    forcing_l2_sq: Option<f64>,
}

impl ModeSystem {
    /// Dirichlet Laplacian on `[0, L]` truncated to `forcing.len()` modes.
    pub fn dirichlet(
        length: f64,
        a1: DelayOperator,
        a2: DelayOperator,
        forcing: &[f64],
    ) -> Result<Self> {
        let eig = dirichlet_modes(length, forcing.len())?;
        let modes = eig
            .iter()
            .zip(forcing)
            .map(|(e, &f)| {
                Ok(ModeEntry {
                    mu: e.mu,
                    m1: a1.multiplier(e.mu)?,
                    m2: a2.multiplier(e.mu)?,
                    f,
                    eig_index: e.k,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            modes,
            domain_length: length,
            a1,
            a2,
            forcing_l2_sq: None,
        })
    }

    /// Explicit mode list for operators other than the built-in Laplacian.
    pub fn from_entries(modes: Vec<ModeEntry>, domain_length: f64) -> Result<Self> {
        if modes.is_empty() {
            return Err(invalid("modes", "need at least one mode"));
        }
        for w in modes.windows(2) {
            if !(w[1].mu < w[0].mu) {
                return Err(invalid("modes", "eigenvalues must be strictly decreasing"));
            }
        }
        if modes.iter().any(|m| !(m.mu < 0.0)) {
            return Err(invalid("modes", "eigenvalues must be negative"));
        }
        if modes
            .iter()
            .any(|m| !(m.mu.is_finite() && m.m1.is_finite() && m.m2.is_finite() && m.f.is_finite()))
        {
            return Err(invalid("modes", "entries must be finite"));
        }
        let modes = modes
            .into_iter()
            .enumerate()
            .map(|(i, m)| ModeEntry { eig_index: i + 1, ..m })
            .collect();
        Ok(Self {
            modes,
            domain_length,
            a1: DelayOperator::None,
            a2: DelayOperator::None,
            forcing_l2_sq: None,
        })
    }

    pub fn with_forcing_norm(mut self, l2_sq: f64) -> Self {
        self.forcing_l2_sq = Some(l2_sq);
        self
    }

    pub fn modes(&self) -> &[ModeEntry] {
        &self.modes
    }

    pub fn truncation(&self) -> usize {
        self.modes.len()
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    pub fn a1(&self) -> DelayOperator {
        self.a1
    }

    pub fn a2(&self) -> DelayOperator {
        self.a2
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.mu).collect()
    }

    /// Sub-system keeping only the listed mode positions.
    pub fn select(&self, keep: &[usize]) -> Self {
        Self {
            modes: keep.iter().map(|&i| self.modes[i]).collect(),
            ..self.clone()
        }
    }

    /// Eigenfunction of mode at position `i`, Dirichlet profile on `[0, L]`.
    pub fn eigenfunction(&self, i: usize, x: f64) -> f64 {
        DirichletMode {
            k: self.modes[i].eig_index,
            mu: self.modes[i].mu,
            length: self.domain_length,
        }
        .eigenfunction(x)
    }

    /// True when every delay operator acts as `A` itself (or is switched off),
    /// so the characteristic operator factors as `λ - n(λ) A`.
    pub fn is_proportional(&self, k: &DelayKernel) -> bool {
        self.modes.iter().all(|m| {
            (k.alpha() == 0.0 || m.m1 == m.mu) && (!k.has_distributed() || m.m2 == m.mu)
        })
    }

    /// Conservative stationary-variance tail `Σ_{k>K} f_k^2 / (2|μ_k|(1-ρ))`,
    /// using `|μ_k| >= |μ_{K+1}|` and `Σ_{k>K} f_k^2 = ||f||^2 - Σ_{k<=K} f_k^2`.
    /// `None` when the forcing norm is unknown or the contraction margin is gone.
    pub fn truncation_tail_bound(&self, k: &DelayKernel) -> Option<f64> {
        let l2 = self.forcing_l2_sq?;
        let next = self.modes.len() + 1;
        let mu_next = -(next as f64 * PI / self.domain_length).powi(2);
        let m1 = self.a1.multiplier(mu_next).ok()?;
        let m2 = self.a2.multiplier(mu_next).ok()?;
        // the ratio (|α m1| + |m2| ||β||) / |μ| is nonincreasing in |μ| for the built-in operators
        let rho = ((k.alpha() * m1).abs() + m2.abs() * k.beta_l1_norm()) / mu_next.abs();
        if rho >= 1.0 {
            return None;
        }
        let captured: f64 = self.modes.iter().map(|m| m.f * m.f).sum();
        let tail = (l2 - captured).max(0.0);
        Some(tail / (2.0 * mu_next.abs() * (1.0 - rho)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dirichlet_eigenvalues() {
        let m = dirichlet_modes(1.0, 2).unwrap();
        assert_abs_diff_eq!(m[0].mu, -PI * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(m[1].mu, -4.0 * PI * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(m[0].eigenfunction(0.25), 2f64.sqrt() * (PI / 4.0).sin(), epsilon = 1e-15);
        let m = dirichlet_modes(2.0, 1).unwrap();
        assert_abs_diff_eq!(m[0].mu, -PI * PI / 4.0, epsilon = 1e-12);
        assert!(dirichlet_modes(0.0, 1).is_err());
        assert!(dirichlet_modes(1.0, 0).is_err());
    }

    #[test]
    fn orthonormality() {
        let modes = dirichlet_modes(1.0, 6).unwrap();
        let n = 10_000;
        let h = 1.0 / n as f64;
        for a in &modes {
            for b in &modes {
                let v: Vec<f64> = (0..=n)
                    .map(|i| a.eigenfunction(i as f64 * h) * b.eigenfunction(i as f64 * h))
                    .collect();
                let expected = if a.k == b.k { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(trapezoid(&v, h), expected, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn weyl_asymptotics() {
        let modes = dirichlet_modes(1.7, 200).unwrap();
        for m in &modes {
            assert_abs_diff_eq!(m.mu / (m.k * m.k) as f64, -(PI / 1.7).powi(2), epsilon = 1e-12);
        }
    }

    #[test]
    fn projection_examples() {
        let modes = dirichlet_modes(1.0, 5).unwrap();
        let n = 20_000;
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();

        let first: Vec<f64> = grid.iter().map(|&x| modes[0].eigenfunction(x)).collect();
        let p = project_forcing(&first, &modes).unwrap();
        assert_abs_diff_eq!(p.coefficients[0], 1.0, epsilon = 1e-8);
        for c in &p.coefficients[1..] {
            assert_abs_diff_eq!(*c, 0.0, epsilon = 1e-8);
        }

        let zero = vec![0.0; n + 1];
        let p = project_forcing(&zero, &modes).unwrap();
        assert!(p.coefficients.iter().all(|&c| c == 0.0));

        let ones = vec![1.0; n + 1];
        let p = project_forcing(&ones, &modes).unwrap();
        for (m, c) in modes.iter().zip(&p.coefficients) {
            let kpi = m.k as f64 * PI;
            let exact = 2f64.sqrt() * (1.0 - kpi.cos()) / kpi;
            assert_abs_diff_eq!(*c, exact, epsilon = 1e-8);
        }
        assert!(p.parseval_defect >= -1e-8);

        assert!(project_forcing(&[], &modes).is_err());
    }

    #[test]
    fn fractional_multiplier_examples() {
        assert_abs_diff_eq!(fractional_multiplier(-PI * PI, 0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(fractional_multiplier(-PI * PI, 0.5).unwrap(), PI, epsilon = 1e-14);
        assert_abs_diff_eq!(fractional_multiplier(-4.0, 0.25).unwrap(), 2f64.sqrt(), epsilon = 1e-14);
        assert!(fractional_multiplier(-1.0, 1.0).is_err());
        assert!(fractional_multiplier(-1.0, -0.1).is_err());
        assert!(fractional_multiplier(1.0, 0.5).is_err());
    }

    #[test]
    fn system_multipliers() {
        let s = ModeSystem::dirichlet(
            1.0,
            DelayOperator::Fractional { delta: 0.5 },
            DelayOperator::Laplacian,
            &[1.0, 0.0, 0.0],
        )
        .unwrap();
        for m in s.modes() {
            assert_abs_diff_eq!(m.m1, m.mu.abs().sqrt(), epsilon = 1e-12);
            assert_eq!(m.m2, m.mu);
        }
        assert!(s.modes().windows(2).all(|w| w[1].mu < w[0].mu));
        assert!(ModeSystem::from_entries(vec![ModeEntry::plain(-1.0, 1.0), ModeEntry::plain(-0.5, 1.0)], 1.0).is_err());
        assert!(ModeSystem::from_entries(vec![ModeEntry::plain(1.0, 1.0)], 1.0).is_err());
    }

    #[test]
    fn tail_bound_shrinks_with_truncation() {
        let k = DelayKernel::new(1.0, 0.5, crate::kernel::Beta::Zero).unwrap();
        let n = 20_000;
        let ones = vec![1.0; n + 1];
        let mut last = f64::INFINITY;
        for count in [2, 8, 32] {
            let eig = dirichlet_modes(1.0, count).unwrap();
            let p = project_forcing(&ones, &eig).unwrap();
            let s = ModeSystem::dirichlet(1.0, DelayOperator::Laplacian, DelayOperator::None, &p.coefficients)
                .unwrap()
                .with_forcing_norm(p.l2_norm_sq);
            let t = s.truncation_tail_bound(&k).unwrap();
            assert!(t < last);
            last = t;
        }
    }

    proptest::proptest! {
        #[test]
        fn fractional_powers_multiply(mu in -1e4..-1e-3f64, delta in 0.0..0.999f64) {
            let a = fractional_multiplier(mu, delta).unwrap();
            let b = mu.abs().powf(1.0 - delta);
            proptest::prop_assert!((a * b - mu.abs()).abs() <= 1e-12 * mu.abs());
        }
    }
}
