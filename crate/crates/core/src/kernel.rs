//! The delay measure: one discrete atom at `-r` plus an absolutely continuous
//! part with density `beta` on `[-r, 0]`.
//!
//! At mode level the delay functional acting on a history segment `phi` is
//!
//! ```text
//! F phi = alpha * m1 * phi(-r) + m2 * ∫_{-r}^0 beta(θ) phi(θ) dθ
//! ```
//!
//! where `m1`, `m2` are the multipliers of the two delay operators on the
//! mode. `beta` is stored exactly as it appears in the drift.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Scalar types a history segment can carry.
pub trait Scalar:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync
{
    fn norm_sqr(self) -> f64;
}

impl Scalar for f64 {
    fn norm_sqr(self) -> f64 {
        self * self
    }
}

impl Scalar for Complex64 {
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
}

/// Density of the distributed delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Beta {
    Zero,
    Constant(f64),
    /// `beta(θ) = a * exp(b θ)`.
    Exponential { a: f64, b: f64 },
    /// Values on a uniform grid covering `[-r, 0]`, first entry at `-r`.
    Tabulated(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayKernel {
    r: f64,
    alpha: f64,
    beta: Beta,
}

impl DelayKernel {
    pub fn new(r: f64, alpha: f64, beta: Beta) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(invalid("r", format!("delay horizon must be positive, got {r}")));
        }
        if !alpha.is_finite() {
            return Err(invalid("alpha", "must be finite"));
        }
        match &beta {
            Beta::Zero => {}
            Beta::Constant(c) if !c.is_finite() => {
                return Err(invalid("beta", "constant must be finite"))
            }
            Beta::Exponential { a, b } if !(a.is_finite() && b.is_finite()) => {
                return Err(invalid("beta", "exponential parameters must be finite"))
            }
            Beta::Tabulated(v) => {
                if v.len() < 2 {
                    return Err(invalid("beta", "tabulated kernel needs at least 2 points"));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(invalid("beta", "tabulated values must be finite"));
                }
            }
            _ => {}
        }
        Ok(Self { r, alpha, beta })
    }

    /// Kernel without any delay (`alpha = 0`, `beta = 0`).
    pub fn none(r: f64) -> Result<Self> {
        Self::new(r, 0.0, Beta::Zero)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> &Beta {
        &self.beta
    }

    pub fn has_distributed(&self) -> bool {
        !matches!(self.beta, Beta::Zero)
            && !matches!(self.beta, Beta::Constant(c) if c == 0.0)
            && !matches!(self.beta, Beta::Exponential { a, .. } if a == 0.0)
    }

    /// `beta(θ)` for `θ ∈ [-r, 0]`; tabulated kernels are interpolated linearly.
    pub fn beta_at(&self, theta: f64) -> f64 {
        match &self.beta {
            Beta::Zero => 0.0,
            Beta::Constant(c) => *c,
            Beta::Exponential { a, b } => a * (b * theta).exp(),
            Beta::Tabulated(v) => {
                let n = v.len() - 1;
                let x = ((theta + self.r) / self.r * n as f64).clamp(0.0, n as f64);
                let i = (x.floor() as usize).min(n - 1);
                let w = x - i as f64;
                v[i] * (1.0 - w) + v[i + 1] * w
            }
        }
    }

    /// `∫_{-r}^0 |beta|`.
    pub fn beta_l1_norm(&self) -> f64 {
        let r = self.r;
        match &self.beta {
            Beta::Zero => 0.0,
            Beta::Constant(c) => c.abs() * r,
            Beta::Exponential { a, b } => a.abs() * r * phi1(b * r),
            Beta::Tabulated(v) => {
                let h = r / (v.len() - 1) as f64;
                trapezoid_abs_piecewise_linear(v, h)
            }
        }
    }

    /// `∫_{-r}^0 beta` (signed).
    pub fn beta_integral(&self) -> f64 {
        match &self.beta {
            Beta::Zero => 0.0,
            Beta::Constant(c) => c * self.r,
            Beta::Exponential { a, b } => a * self.r * phi1(b * self.r),
            Beta::Tabulated(v) => {
                let h = self.r / (v.len() - 1) as f64;
                trapezoid(v, h)
            }
        }
    }

    /// Total variation of the delay measure over `[-r, 0]`: `|alpha| + ||beta||_1`.
    pub fn total_variation(&self) -> f64 {
        self.alpha.abs() + self.beta_l1_norm()
    }

    /// `1 + alpha + ∫beta`, the value of the characteristic function at zero.
    pub fn n_at_zero(&self) -> f64 {
        1.0 + self.alpha + self.beta_integral()
    }

    /// Bound on `|beta(0)| + |beta(-r)| e^{-x r} + Var(beta) max(1, e^{-x r})`,
    /// which controls `|λ| |∫ beta e^{λθ}|` on `Re λ >= x` via integration by parts.
    pub(crate) fn beta_parts_bound(&self, x: f64) -> f64 {
        let grow = (-x * self.r).exp();
        let end = self.beta_at(0.0).abs() + self.beta_at(-self.r).abs() * grow;
        let var = match &self.beta {
            Beta::Zero | Beta::Constant(_) => 0.0,
            Beta::Exponential { a, b } => (a * (1.0 - (-b * self.r).exp())).abs(),
            Beta::Tabulated(v) => v.windows(2).map(|w| (w[1] - w[0]).abs()).sum(),
        };
        end + var * grow.max(1.0)
    }

    /// Upper bound on `∫_{-r}^0 |beta(θ)| e^{xθ} dθ` (exact for closed-form kernels).
    pub(crate) fn beta_abs_weighted(&self, x: f64) -> f64 {
        let r = self.r;
        match &self.beta {
            Beta::Zero => 0.0,
            Beta::Constant(c) => c.abs() * r * phi1(x * r),
            Beta::Exponential { a, b } => a.abs() * r * phi1((x + b) * r),
            Beta::Tabulated(v) => {
                let h = r / (v.len() - 1) as f64;
                v.windows(2)
                    .enumerate()
                    .map(|(i, w)| {
                        let t0 = -r + i as f64 * h;
                        let e = (x * t0).exp().max((x * (t0 + h)).exp());
                        h * w[0].abs().max(w[1].abs()) * e
                    })
                    .sum()
            }
        }
    }

    /// `∫_{-r}^0 beta(θ) e^{λθ} dθ`, closed form where available.
    pub fn beta_transform(&self, lambda: Complex64) -> Complex64 {
        let r = self.r;
        match &self.beta {
            Beta::Zero => Complex64::new(0.0, 0.0),
            Beta::Constant(c) => phi1_c(lambda * r) * (c * r),
            Beta::Exponential { a, b } => phi1_c((lambda + b) * r) * (a * r),
            Beta::Tabulated(v) => {
                let h = r / (v.len() - 1) as f64;
                tab_sum(v, h, lambda, |_, w| w)
            }
        }
    }

    /// `∫_{-r}^0 θ beta(θ) e^{λθ} dθ`, the derivative of [`Self::beta_transform`].
    pub fn beta_transform_deriv(&self, lambda: Complex64) -> Complex64 {
        let r = self.r;
        match &self.beta {
            Beta::Zero => Complex64::new(0.0, 0.0),
            Beta::Constant(c) => psi_c(lambda * r) * (-c * r * r),
            Beta::Exponential { a, b } => psi_c((lambda + b) * r) * (-a * r * r),
            Beta::Tabulated(v) => {
                let h = r / (v.len() - 1) as f64;
                tab_sum(v, h, lambda, |theta, w| w * theta)
            }
        }
    }

    /// Number of grid cells `q` with `q * step = r`.
    pub fn cells_for_step(&self, step: f64) -> Result<usize> {
        grid_cells(self.r, step)
    }

    /// Trapezoid weights `w_i` with `∫ beta φ ≈ Σ w_i φ(θ_i)` on the grid
    /// `θ_i = -r + i*step`. Tabulated kernels are interpolated to the grid.
    pub fn quadrature_weights(&self, step: f64) -> Result<Vec<f64>> {
        let q = self.cells_for_step(step)?;
        Ok(self.weights_on(q, step))
    }

    /// Like [`Self::quadrature_weights`] but a tabulated kernel must sit on
    /// exactly the segment grid.
    pub fn segment_weights(&self, n_points: usize, step: f64) -> Result<Vec<f64>> {
        if let Beta::Tabulated(v) = &self.beta {
            if v.len() != n_points {
                return Err(Error::GridMismatch(format!(
                    "kernel tabulated on {} points, segment has {}",
                    v.len(),
                    n_points
                )));
            }
        }
        let q = self.cells_for_step(step)?;
        if q + 1 != n_points {
            return Err(Error::GridMismatch(format!(
                "segment with {n_points} points and step {step} does not span r = {}",
                self.r
            )));
        }
        Ok(self.weights_on(q, step))
    }

    fn weights_on(&self, q: usize, step: f64) -> Vec<f64> {
        (0..=q)
            .map(|i| {
                let theta = -self.r + i as f64 * step;
                let end = if i == 0 || i == q { 0.5 } else { 1.0 };
                end * step * self.beta_at(theta)
            })
            .collect()
    }
}

/// A history segment sampled on the uniform grid `θ_i = -r + i*step`, `i = 0..=q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment<T = f64> {
    values: Vec<T>,
    step: f64,
}

impl<T: Scalar> Segment<T> {
    pub fn new(values: Vec<T>, step: f64, r: f64) -> Result<Self> {
        let q = grid_cells(r, step)?;
        if values.len() != q + 1 {
            return Err(Error::GridMismatch(format!(
                "{} samples at step {step} do not span r = {r}",
                values.len()
            )));
        }
        Ok(Self { values, step })
    }

    pub fn from_fn(r: f64, step: f64, f: impl Fn(f64) -> T) -> Result<Self> {
        let q = grid_cells(r, step)?;
        let values = (0..=q).map(|i| f(-r + i as f64 * step)).collect();
        Ok(Self { values, step })
    }

    pub fn zeros(r: f64, step: f64) -> Result<Self> {
        Self::from_fn(r, step, |_| T::default())
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `r` spanned by the grid.
    pub fn span(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.step
    }

    /// Value at the oldest grid point, `θ = -r`.
    pub fn oldest(&self) -> T {
        self.values[0]
    }

    /// Value at `θ = 0`.
    pub fn newest(&self) -> T {
        self.values[self.values.len() - 1]
    }
}

/// Mode-level delay functional `alpha*m1*φ(-r) + m2*∫beta φ`, trapezoid on the segment grid.
pub fn apply_f_mode<T: Scalar>(k: &DelayKernel, m1: f64, m2: f64, phi: &Segment<T>) -> Result<T> {
    let span = phi.span();
    if (span - k.r).abs() > 1e-9 * k.r {
        return Err(Error::GridMismatch(format!(
            "segment spans {span}, kernel horizon is {}",
            k.r
        )));
    }
    let mut acc = phi.oldest() * (k.alpha * m1);
    if k.has_distributed() && m2 != 0.0 {
        let w = k.segment_weights(phi.len(), phi.step)?;
        let dist = w
            .iter()
            .zip(&phi.values)
            .fold(T::default(), |s, (&wi, &v)| s + v * wi);
        acc = acc + dist * m2;
    }
    Ok(acc)
}

/// Both sides of the discretised energy bound
/// `∫_0^T |F y_t|^2 dt <= C ∫_{-r}^T |y|^2 dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBound {
    pub lhs: f64,
    pub rhs: f64,
    /// `C = (|alpha*m1| + |m2| ||beta||_1)^2`.
    pub constant: f64,
}

impl EnergyBound {
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + rel_tol)
    }
}

/// Evaluates the energy bound for a path `y` sampled on `[-r, T]` with spacing `step`.
pub fn segment_energy_bound_check(
    k: &DelayKernel,
    m1: f64,
    m2: f64,
    y: &[f64],
    step: f64,
) -> Result<EnergyBound> {
    let q = k.cells_for_step(step)?;
    if y.len() < q + 2 {
        return Err(invalid("T", "path must extend past t = 0 (T > 0)"));
    }
    let w = k.quadrature_weights(step)?;
    let n_t = y.len() - q; // grid points t_n = n*step, n = 0..n_t-1
    let mut lhs = 0.0;
    for n in 0..n_t {
        let window = &y[n..=n + q];
        let mut fy = k.alpha * m1 * window[0];
        if m2 != 0.0 {
            fy += m2 * window.iter().zip(&w).map(|(v, wi)| v * wi).sum::<f64>();
        }
        let end = if n == 0 || n == n_t - 1 { 0.5 } else { 1.0 };
        lhs += end * step * fy * fy;
    }
    let squares: Vec<f64> = y.iter().map(|v| v * v).collect();
    let c = (k.alpha * m1).abs() + m2.abs() * k.beta_l1_norm();
    let constant = c * c;
    Ok(EnergyBound {
        lhs,
        rhs: constant * trapezoid(&squares, step),
        constant,
    })
}

pub(crate) fn grid_cells(r: f64, step: f64) -> Result<usize> {
    if !(step.is_finite() && step > 0.0) {
        return Err(invalid("dt", format!("step must be positive, got {step}")));
    }
    let q = (r / step).round();
    if q < 1.0 || (q * step - r).abs() > 1e-9 * r {
        return Err(invalid("dt", format!("step {step} does not divide r = {r}")));
    }
    Ok(q as usize)
}

pub(crate) fn trapezoid(v: &[f64], h: f64) -> f64 {
    match v.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (v[0] + v[n - 1]) + v[1..n - 1].iter().sum::<f64>()),
    }
}

// exact integral of |p| for the piecewise-linear interpolant p of v
fn trapezoid_abs_piecewise_linear(v: &[f64], h: f64) -> f64 {
    v.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            if a * b >= 0.0 {
                0.5 * h * (a.abs() + b.abs())
            } else {
                0.5 * h * (a * a + b * b) / (a.abs() + b.abs())
            }
        })
        .sum()
}

fn tab_sum(v: &[f64], h: f64, lambda: Complex64, f: impl Fn(f64, f64) -> f64) -> Complex64 {
    let n = v.len() - 1;
    let r = n as f64 * h;
    let step = (lambda * h).exp();
    // restart the geometric recurrence every few nodes to bound rounding growth
    let mut e = Complex64::new(0.0, 0.0);
    let mut sum = Complex64::new(0.0, 0.0);
    for (i, &b) in v.iter().enumerate() {
        let theta = -r + i as f64 * h;
        e = if i % 16 == 0 { (lambda * theta).exp() } else { e * step };
        let end = if i == 0 || i == n { 0.5 } else { 1.0 };
        sum += e * f(theta, end * h * b);
    }
    sum
}

const SERIES_RADIUS: f64 = 0.5;

/// `(1 - e^{-z}) / z = ∫_0^1 e^{-z u} du`, entire.
pub(crate) fn phi1_c(z: Complex64) -> Complex64 {
    if z.norm() < SERIES_RADIUS {
        // Σ (-z)^n / (n+1)!
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for n in 1..30 {
            term = term * (-z) / (n as f64 + 1.0);
            sum += term;
        }
        sum
    } else {
        (1.0 - (-z).exp()) / z
    }
}

pub(crate) fn phi1(x: f64) -> f64 {
    phi1_c(Complex64::new(x, 0.0)).re
}

/// `∫_0^1 u e^{-z u} du = (1 - e^{-z}(1 + z)) / z^2`, entire.
pub(crate) fn psi_c(z: Complex64) -> Complex64 {
    if z.norm() < SERIES_RADIUS {
        // Σ (-z)^n / (n! (n+2))
        let mut fact = Complex64::new(1.0, 0.0);
        let mut sum = fact / 2.0;
        for n in 1..30 {
            fact = fact * (-z) / n as f64;
            sum += fact / (n as f64 + 2.0);
        }
        sum
    } else {
        (1.0 - (-z).exp() * (1.0 + z)) / (z * z)
    }
}
