//! Characteristic function, per-mode characteristic values and the
//! stability criteria built on them.
//!
//! For a mode with eigenvalue `mu` and delay multipliers `m1`, `m2` the
//! characteristic value is
//!
//! ```text
//! Δ(λ) = λ - mu - alpha*m1*e^{-λr} - m2 ∫_{-r}^0 beta(θ) e^{λθ} dθ
//! ```
//!
//! and when both delay operators equal `A` this is `λ - n(λ) mu` with
//! `n(λ) = 1 + alpha e^{-λr} + ∫ beta(θ) e^{λθ} dθ`.

mod criteria;
mod resolvent;
mod roots;
mod winding;

pub use criteria::{
    discrete_stability_check, distributed_stability_check, example52_threshold,
    fractional_stability_check, remark51_real_roots, Verdict,
};
pub use resolvent::{resolvent_norm_sup, ResolventGrid, ResolventReport};
pub use roots::{
    find_roots, rightmost_in_rect, rightmost_root, spectral_abscissa, AbscissaOptions,
    AbscissaSource, Root, RootReport, SpectralAbscissa, ROOT_RESIDUAL_TOL,
};
pub use winding::{count_roots_in_rect, Rect};

use num_complex::Complex64;
use serde::Serialize;

use crate::kernel::DelayKernel;
use crate::modes::ModeEntry;

/// `n(λ) = 1 + alpha e^{-λr} + ∫ beta(θ) e^{λθ} dθ`.
pub fn n_of_lambda(k: &DelayKernel, lambda: Complex64) -> Complex64 {
    1.0 + (-lambda * k.r()).exp() * k.alpha() + k.beta_transform(lambda)
}

fn n_deriv(k: &DelayKernel, lambda: Complex64) -> Complex64 {
    -(-lambda * k.r()).exp() * (k.alpha() * k.r()) + k.beta_transform_deriv(lambda)
}

/// What the characteristic function is evaluated for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CharTarget {
    /// A single eigenmode.
    Mode { mu: f64, m1: f64, m2: f64 },
    /// The scalar function `n(λ)` alone, whose zeros form `Γ₀`.
    Gamma0,
}

impl From<&ModeEntry> for CharTarget {
    fn from(m: &ModeEntry) -> Self {
        CharTarget::Mode {
            mu: m.mu,
            m1: m.m1,
            m2: m.m2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CharProblem<'a> {
    pub kernel: &'a DelayKernel,
    pub target: CharTarget,
}

impl<'a> CharProblem<'a> {
    pub fn mode(kernel: &'a DelayKernel, mode: &ModeEntry) -> Self {
        Self {
            kernel,
            target: mode.into(),
        }
    }

    pub fn gamma0(kernel: &'a DelayKernel) -> Self {
        Self {
            kernel,
            target: CharTarget::Gamma0,
        }
    }

    pub fn value(&self, lambda: Complex64) -> Complex64 {
        char_value(self, lambda)
    }

    pub fn derivative(&self, lambda: Complex64) -> Complex64 {
        let k = self.kernel;
        match self.target {
            CharTarget::Mode { m1, m2, .. } => {
                1.0 + (-lambda * k.r()).exp() * (k.alpha() * m1 * k.r())
                    - k.beta_transform_deriv(lambda) * m2
            }
            CharTarget::Gamma0 => n_deriv(k, lambda),
        }
    }
}

/// Characteristic value of a mode, or `n(λ)` for the `Γ₀` problem.
pub fn char_value(p: &CharProblem<'_>, lambda: Complex64) -> Complex64 {
    let k = p.kernel;
    match p.target {
        CharTarget::Mode { mu, m1, m2 } => {
            lambda
                - mu
                - (-lambda * k.r()).exp() * (k.alpha() * m1)
                - k.beta_transform(lambda) * m2
        }
        CharTarget::Gamma0 => n_of_lambda(k, lambda),
    }
}

/// Classification of a point of the complex plane relative to the spectrum
/// of the lifted generator (delay operators proportional to `A`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GammaLabel {
    /// `λ ≠ 0` and `n(λ) = 0`.
    Gamma0,
    /// `n(λ) ≠ 0` and `λ / n(λ)` is an eigenvalue of `A`; also `λ = 0`
    /// when `1 + alpha + ∫beta = 0`.
    GammaP,
    Resolvent,
}

impl GammaLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            GammaLabel::Gamma0 => "gamma0",
            GammaLabel::GammaP => "gammaP",
            GammaLabel::Resolvent => "resolvent",
        }
    }
}

pub const GAMMA0_TOL: f64 = 1e-8;
pub const GAMMAP_REL_TOL: f64 = 1e-8;

/// Classifies `λ` given the (point) spectrum of `A`.
pub fn gamma_classify(k: &DelayKernel, lambda: Complex64, spectrum: &[f64]) -> GammaLabel {
    let n = n_of_lambda(k, lambda);
    if lambda.norm() == 0.0 {
        return if n.norm() < GAMMA0_TOL {
            GammaLabel::GammaP
        } else {
            GammaLabel::Resolvent
        };
    }
    if n.norm() < GAMMA0_TOL * (1.0 + lambda.norm()) {
        return GammaLabel::Gamma0;
    }
    let z = lambda / n;
    if spectrum
        .iter()
        .any(|&mu| (z - mu).norm() <= GAMMAP_REL_TOL * mu.abs().max(1.0))
    {
        GammaLabel::GammaP
    } else {
        GammaLabel::Resolvent
    }
}
