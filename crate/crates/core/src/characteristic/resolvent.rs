use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CharProblem;
use crate::error::{invalid, Result};
use crate::kernel::DelayKernel;
use crate::modes::ModeSystem;

/// Sampling plan over the closed right half-plane. By conjugate symmetry
/// only `Im λ >= 0` is sampled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolventGrid {
    /// Real parts of the vertical sample lines; `0` is the imaginary axis.
    pub lines: Vec<f64>,
    pub imag_max: f64,
    pub points_per_line: usize,
    /// Golden-section refinement around the largest sampled peaks.
    pub refine: bool,
}

impl ResolventGrid {
    /// Lines at `Re λ ∈ {0, 0.05, 0.25, 1, 5}` up to a height well past every mode.
    pub fn for_system(system: &ModeSystem, k: &DelayKernel) -> Self {
        let mu_max = system
            .modes()
            .iter()
            .map(|m| m.mu.abs() + (k.alpha() * m.m1).abs() + m.m2.abs() * k.beta_l1_norm())
            .fold(1.0, f64::max);
        Self {
            lines: vec![0.0, 0.05, 0.25, 1.0, 5.0],
            imag_max: 4.0 * mu_max,
            points_per_line: 4001,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolventReport {
    /// Estimate of `sup max_k |Δ_k(λ)|^{-1}` over the sampled points.
    pub sup: f64,
    pub argmax: (f64, f64),
    /// Estimate of `sup_a max_k |F_k(ia)| / |ia - mu_k|`, the gain of the
    /// delay operator composed with the resolvent of `A` on the imaginary axis.
    pub delay_gain_sup: f64,
    pub delay_gain_argmax: f64,
    pub samples: usize,
    /// Sample points that sit on a characteristic root and were excluded.
    pub flagged: Vec<(f64, f64)>,
}

const FLAG_TOL: f64 = 1e-10;

fn inv_min_char(system: &ModeSystem, k: &DelayKernel, z: Complex64) -> (f64, bool) {
    let min = system
        .modes()
        .iter()
        .map(|m| CharProblem::mode(k, m).value(z).norm())
        .fold(f64::INFINITY, f64::min);
    (1.0 / min, min < FLAG_TOL * (1.0 + z.norm()))
}

fn delay_gain(system: &ModeSystem, k: &DelayKernel, a: f64) -> f64 {
    let z = Complex64::new(0.0, a);
    let e = (-z * k.r()).exp();
    let b = k.beta_transform(z);
    system
        .modes()
        .iter()
        .map(|m| (e * (k.alpha() * m.m1) + b * m.m2).norm() / (z - m.mu).norm())
        .fold(0.0, f64::max)
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Refines the `n_peaks` largest local maxima of a sampled profile.
fn refine_peaks(ys: &[f64], vals: &[f64], f: &(dyn Fn(f64) -> f64 + Sync), n_peaks: usize) -> (f64, f64) {
    let mut peaks: Vec<usize> = (0..ys.len())
        .filter(|&i| {
            let left = i == 0 || vals[i] >= vals[i - 1];
            let right = i + 1 == ys.len() || vals[i] >= vals[i + 1];
            left && right && vals[i].is_finite()
        })
        .collect();
    peaks.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    peaks.truncate(n_peaks);
    peaks
        .par_iter()
        .map(|&i| {
            let a = ys[i.saturating_sub(1)];
            let b = ys[(i + 1).min(ys.len() - 1)];
            let (y, v) = golden_max(f, a, b);
            if v >= vals[i] {
                (y, v)
            } else {
                (ys[i], vals[i])
            }
        })
        .reduce(|| (0.0, f64::NEG_INFINITY), |p, q| if q.1 > p.1 { q } else { p })
}

/// Sampled supremum of `max_k |Δ_k(λ)|^{-1}` over `Re λ >= 0`.
pub fn resolvent_norm_sup(
    system: &ModeSystem,
    k: &DelayKernel,
    grid: &ResolventGrid,
) -> Result<ResolventReport> {
    if grid.lines.is_empty() || grid.lines.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(invalid("grid", "lines must be finite and in the closed right half-plane"));
    }
    if !(grid.imag_max > 0.0) || grid.points_per_line < 2 {
        return Err(invalid("grid", "need imag_max > 0 and at least two points per line"));
    }
    let n = grid.points_per_line;
    let ys: Vec<f64> = (0..n)
        .map(|i| grid.imag_max * i as f64 / (n - 1) as f64)
        .collect();

    let mut sup = (f64::NEG_INFINITY, (0.0, 0.0));
    let mut flagged = Vec::new();
    for &x in &grid.lines {
        let samples: Vec<(f64, bool)> = ys
            .par_iter()
            .map(|&y| inv_min_char(system, k, Complex64::new(x, y)))
            .collect();
        let vals: Vec<f64> = samples
            .iter()
            .zip(&ys)
            .map(|(&(v, hit), &y)| {
                if hit {
                    flagged.push((x, y));
                    f64::NAN
                } else {
                    v
                }
            })
            .collect();
        let best = if grid.refine {
            let f = |y: f64| {
                let (v, hit) = inv_min_char(system, k, Complex64::new(x, y));
                if hit {
                    f64::NEG_INFINITY
                } else {
                    v
                }
            };
            refine_peaks(&ys, &vals, &f, 8)
        } else {
            ys.iter()
                .zip(&vals)
                .filter(|(_, v)| v.is_finite())
                .fold((0.0, f64::NEG_INFINITY), |p, (&y, &v)| if v > p.1 { (y, v) } else { p })
        };
        if best.1 > sup.0 {
            sup = (best.1, (x, best.0));
        }
    }

    let gains: Vec<f64> = ys.par_iter().map(|&a| delay_gain(system, k, a)).collect();
    let gain_best = if grid.refine {
        let f = |a: f64| delay_gain(system, k, a);
        refine_peaks(&ys, &gains, &f, 8)
    } else {
        ys.iter()
            .zip(&gains)
            .fold((0.0, f64::NEG_INFINITY), |p, (&y, &v)| if v > p.1 { (y, v) } else { p })
    };

    Ok(ResolventReport {
        sup: sup.0,
        argmax: sup.1,
        delay_gain_sup: gain_best.1,
        delay_gain_argmax: gain_best.0,
        samples: n * grid.lines.len(),
        flagged,
    })
}
