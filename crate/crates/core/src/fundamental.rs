//! Fundamental solutions of the per-mode delay equation
//!
//! ```text
//! g'(t) = mu g(t) + alpha m1 g(t - r) + m2 ∫_{-r}^0 beta(θ) g(t + θ) dθ,   g(0) = 1, g = 0 on [-r, 0)
//! ```
//!
//! and the objects built from them: the variation-of-constants pieces and
//! the resolvent of the lifted generator.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::kernel::{apply_f_mode, grid_cells, phi1_c, DelayKernel, Scalar, Segment};
use crate::modes::{ModeEntry, ModeSystem};

/// Largest `|mu| h` the RK4 stepper is allowed; finer internal steps are
/// taken when the output grid is coarser.
const STIFF_LIMIT: f64 = 1.0;

fn horizon_steps(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(invalid("T", format!("horizon must be positive, got {t_end}")));
    }
    let n = (t_end / dt - 1e-9).ceil();
    Ok(n.max(1.0) as usize)
}

/// Derivative samples of a uniformly sampled function, fourth order
/// (second order for fewer than five points).
pub(crate) fn fd_derivative<T: Scalar>(v: &[T], h: f64) -> Vec<T> {
    let n = v.len();
    if n < 2 {
        return vec![T::default(); n];
    }
    if n < 5 {
        return (0..n)
            .map(|i| {
                if n == 2 {
                    (v[1] - v[0]) * (1.0 / h)
                } else if i == 0 {
                    (v[1] * 4.0 - v[0] * 3.0 - v[2]) * (0.5 / h)
                } else if i == n - 1 {
                    (v[n - 1] * 3.0 - v[n - 2] * 4.0 + v[n - 3]) * (0.5 / h)
                } else {
                    (v[i + 1] - v[i - 1]) * (0.5 / h)
                }
            })
            .collect();
    }
    let c = 1.0 / (12.0 * h);
    (0..n)
        .map(|i| {
            if i == 0 {
                (v[0] * -25.0 + v[1] * 48.0 - v[2] * 36.0 + v[3] * 16.0 - v[4] * 3.0) * c
            } else if i == 1 {
                (v[0] * -3.0 - v[1] * 10.0 + v[2] * 18.0 - v[3] * 6.0 + v[4]) * c
            } else if i == n - 2 {
                (v[n - 1] * 3.0 + v[n - 2] * 10.0 - v[n - 3] * 18.0 + v[n - 4] * 6.0 - v[n - 5]) * c
            } else if i == n - 1 {
                (v[n - 1] * 25.0 - v[n - 2] * 48.0 + v[n - 3] * 36.0 - v[n - 4] * 16.0 + v[n - 5] * 3.0)
                    * c
            } else {
                (v[i - 2] - v[i - 1] * 8.0 + v[i + 1] * 8.0 - v[i + 2]) * c
            }
        })
        .collect()
}

/// Piecewise cubic Hermite interpolant of a history segment on `[-r, 0]`.
struct HistoryInterp<'a> {
    v: &'a [f64],
    d: Vec<f64>,
    h: f64,
    r: f64,
}

impl<'a> HistoryInterp<'a> {
    fn new(seg: &'a Segment) -> Self {
        Self {
            v: seg.values(),
            d: fd_derivative(seg.values(), seg.step()),
            h: seg.step(),
            r: seg.span(),
        }
    }

    fn eval(&self, theta: f64) -> f64 {
        let n = self.v.len() - 1;
        let x = ((theta + self.r) / self.h).clamp(0.0, n as f64);
        let i = (x.floor() as usize).min(n - 1);
        let s = x - i as f64;
        let (y0, y1) = (self.v[i], self.v[i + 1]);
        let (d0, d1) = (self.d[i] * self.h, self.d[i + 1] * self.h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * d0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * d1
    }
}

/// Classical RK4 for the scalar delay equation on a grid with `q h = r`.
///
/// Breakpoints `t = j r` are grid points, delayed values at stage midpoints
/// come from cubic Hermite interpolation with one-sided derivatives, and the
/// distributed term is a cell-wise trapezoid that splits the cell holding
/// the jump between `phi1(0)` and `phi0`.
struct Stepper<'a> {
    mu: f64,
    a: f64,
    c: f64,
    h: f64,
    q: usize,
    kernel: &'a DelayKernel,
    beta: Vec<f64>,
    distributed: bool,
    phi0: f64,
    hist_node: Vec<f64>,
    hist_mid: Vec<f64>,
    y: Vec<f64>,
    dp: Vec<f64>,
    dm: Vec<f64>,
    mid: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(
        mode: &ModeEntry,
        k: &'a DelayKernel,
        h: f64,
        q: usize,
        phi0: f64,
        hist: impl Fn(f64) -> f64,
    ) -> Self {
        let r = k.r();
        let theta = |j: usize| -r + j as f64 * h;
        let distributed = k.has_distributed() && mode.m2 != 0.0;
        Self {
            mu: mode.mu,
            a: k.alpha() * mode.m1,
            c: mode.m2,
            h,
            q,
            kernel: k,
            beta: (0..=q).map(|j| k.beta_at(theta(j))).collect(),
            distributed,
            phi0,
            hist_node: (0..=q).map(|j| hist(theta(j))).collect(),
            hist_mid: (0..q).map(|j| hist(theta(j) + 0.5 * h)).collect(),
            y: vec![phi0],
            dp: Vec::new(),
            dm: vec![0.0],
            mid: Vec::new(),
        }
    }

    fn node(&self, i: isize, right: bool) -> f64 {
        if i < 0 {
            self.hist_node[(i + self.q as isize) as usize]
        } else if i == 0 && !right {
            self.hist_node[self.q]
        } else {
            self.y[i as usize]
        }
    }

    fn midv(&self, i: isize) -> f64 {
        if i < 0 {
            self.hist_mid[(i + self.q as isize) as usize]
        } else {
            self.mid[i as usize]
        }
    }

    /// Known part and current-state coefficient of the distributed term
    /// with the window ending at node `n`.
    fn dist_grid(&self, n: usize) -> (f64, f64) {
        if !self.distributed {
            return (0.0, 0.0);
        }
        let (q, hh) = (self.q as isize, 0.5 * self.h);
        let n = n as isize;
        let mut s = 0.0;
        for j in 0..q {
            let i = n - q + j;
            s += self.beta[j as usize] * self.node(i, true);
            if j + 1 < q {
                s += self.beta[j as usize + 1] * self.node(i + 1, false);
            }
        }
        (hh * s, hh * self.beta[self.q])
    }

    /// Same with the window ending half a step after node `n`.
    fn dist_mid(&self, n: usize) -> (f64, f64) {
        if !self.distributed {
            return (0.0, 0.0);
        }
        let (q, h) = (self.q as isize, self.h);
        let n = n as isize;
        let mut s = 0.0;
        let mut coef = 0.5 * h * self.beta[self.q];
        for j in 0..q {
            let i = n - q + j;
            let last = j + 1 == q;
            let ma = self.midv(i);
            if i == -1 {
                // the jump at t = 0 sits in the middle of this cell
                let b0 = self.kernel.beta_at(-self.kernel.r() + (j as f64 + 0.5) * h);
                s += 0.25 * h * (self.beta[j as usize] * ma + b0 * self.hist_node[self.q]);
                s += 0.25 * h * b0 * self.phi0;
                if last {
                    coef = 0.25 * h * self.beta[self.q];
                } else {
                    s += 0.25 * h * self.beta[j as usize + 1] * self.midv(i + 1);
                }
            } else {
                s += 0.5 * h * self.beta[j as usize] * ma;
                if !last {
                    s += 0.5 * h * self.beta[j as usize + 1] * self.midv(i + 1);
                }
            }
        }
        (s, coef)
    }

    fn rhs(&self, y: f64, delayed: f64, dist: (f64, f64)) -> f64 {
        self.mu * y + self.a * delayed + self.c * (dist.0 + dist.1 * y)
    }

    /// Values and right derivatives on the grid.
    fn run(mut self, steps: usize) -> (Vec<f64>, Vec<f64>) {
        let q = self.q as isize;
        let h = self.h;
        let mut g_now = self.dist_grid(0);
        for n in 0..steps {
            let ni = n as isize;
            let yn = self.y[n];
            let k1 = self.rhs(yn, self.node(ni - q, true), g_now);
            self.dp.push(k1);
            let gm = self.dist_mid(n);
            let dm_ = self.midv(ni - q);
            let k2 = self.rhs(yn + 0.5 * h * k1, dm_, gm);
            let k3 = self.rhs(yn + 0.5 * h * k2, dm_, gm);
            let g_next = self.dist_grid(n + 1);
            let d4 = self.node(ni + 1 - q, false);
            let k4 = self.rhs(yn + h * k3, d4, g_next);
            let y1 = yn + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            self.y.push(y1);
            let dmn = self.rhs(y1, d4, g_next);
            self.dm.push(dmn);
            self.mid.push(0.5 * (yn + y1) + h / 8.0 * (k1 - dmn));
            g_now = g_next;
        }
        let last = self.rhs(self.y[steps], self.node(steps as isize - q, true), g_now);
        self.dp.push(last);
        (self.y, self.dp)
    }
}

fn substeps(mode: &ModeEntry, k: &DelayKernel, dt: f64) -> usize {
    let scale = mode.mu.abs() + mode.m2.abs() * k.beta_l1_norm();
    ((scale * dt / STIFF_LIMIT).ceil() as usize).max(1)
}

/// Solution of the mode equation from initial state `phi0` and history
/// `phi1` on `[-r, 0]` (which may disagree with `phi0` at zero), sampled on
/// `t_i = i dt`, `i = 0..=N` with `N dt >= t_end`.
pub fn solve_with_history(
    mode: &ModeEntry,
    k: &DelayKernel,
    phi0: f64,
    phi1: &Segment,
    t_end: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    if (phi1.span() - k.r()).abs() > 1e-9 * k.r() {
        return Err(Error::GridMismatch(format!(
            "history spans {} but r = {}",
            phi1.span(),
            k.r()
        )));
    }
    let interp = HistoryInterp::new(phi1);
    Ok(solve_general(mode, k, phi0, |t| interp.eval(t), t_end, dt)?.0)
}

fn solve_general(
    mode: &ModeEntry,
    k: &DelayKernel,
    phi0: f64,
    hist: impl Fn(f64) -> f64,
    t_end: f64,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let q = grid_cells(k.r(), dt)?;
    let n = horizon_steps(t_end, dt)?;
    let m = substeps(mode, k, dt);
    let h = dt / m as f64;
    let (y, dp) = Stepper::new(mode, k, h, q * m, phi0, hist).run(n * m);
    Ok((y.into_iter().step_by(m).collect(), dp.into_iter().step_by(m).collect()))
}

/// Per-mode fundamental solution `g` on `t_i = i dt`, `i = 0..=N`.
pub fn solve_fundamental(mode: &ModeEntry, k: &DelayKernel, t_end: f64, dt: f64) -> Result<Vec<f64>> {
    Ok(fundamental_with_slopes(mode, k, t_end, dt)?.0)
}

fn fundamental_with_slopes(mode: &ModeEntry, k: &DelayKernel, t_end: f64, dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if t_end < k.r() {
        return Err(invalid("T", format!("horizon {t_end} shorter than the delay r = {}", k.r())));
    }
    solve_general(mode, k, 1.0, |_| 0.0, t_end, dt)
}

/// Fundamental solutions of every mode of a system on a common grid.
#[derive(Debug, Clone, Serialize)]
pub struct FundamentalTable {
    pub dt: f64,
    pub r: f64,
    /// `rows[k][i] = g_k(i dt)`.
    pub rows: Vec<Vec<f64>>,
    /// Right derivatives `g_k'(i dt+)`.
    pub slopes: Vec<Vec<f64>>,
}

impl FundamentalTable {
    pub fn compute(system: &ModeSystem, k: &DelayKernel, t_end: f64, dt: f64) -> Result<Self> {
        let (rows, slopes) = system
            .modes()
            .par_iter()
            .map(|m| fundamental_with_slopes(m, k, t_end, dt))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Ok(Self { dt, r: k.r(), rows, slopes })
    }

    /// Number of grid intervals `N`.
    pub fn steps(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len() - 1)
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }
}

/// Envelope `|g(t)| <= amplitude * exp(-rate * t)` fitted on `[from, to]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub amplitude: f64,
    pub rate: f64,
}

impl DecayFit {
    /// Bound on `∫_t^∞ g²`.
    pub fn square_tail(&self, t: f64) -> f64 {
        self.amplitude.powi(2) * (-2.0 * self.rate * t).exp() / (2.0 * self.rate)
    }
}

/// Fits an exponential envelope to the tail of a sampled trajectory.
///
/// The rate is a least-squares slope of the logarithm of the running
/// maximum `max_{s >= t} |g(s)|`; the amplitude is then raised until the
/// envelope dominates every sample of the window. `None` when the samples
/// do not decay.
pub fn fit_decay(g: &[f64], dt: f64, from: f64, to: f64) -> Option<DecayFit> {
    let i0 = (from / dt).floor() as usize;
    let i1 = ((to / dt).floor() as usize).min(g.len() - 1);
    if i1 <= i0 + 2 {
        return None;
    }
    let mut env = vec![0.0; i1 - i0 + 1];
    let mut run = 0.0f64;
    for i in (i0..=i1).rev() {
        run = run.max(g[i].abs());
        env[i - i0] = run.max(1e-300).ln();
    }
    let n = env.len() as f64;
    let ts: Vec<f64> = (i0..=i1).map(|i| i as f64 * dt).collect();
    let tm = ts.iter().sum::<f64>() / n;
    let em = env.iter().sum::<f64>() / n;
    let sxy: f64 = ts.iter().zip(&env).map(|(t, e)| (t - tm) * (e - em)).sum();
    let sxx: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
    let rate = -sxy / sxx;
    if !(rate > 0.0) {
        return None;
    }
    let amplitude = (i0..=i1)
        .map(|i| g[i].abs() * (rate * i as f64 * dt).exp())
        .fold(0.0, f64::max);
    Some(DecayFit { amplitude, rate })
}

/// One-sided values of `h(s) = alpha m1 g(s - r) + m2 ∫ beta(θ) g(s + θ) dθ`
/// at grid point `n`, as `(left limit, right limit)`.
fn forcing_limits(g: &[f64], n: usize, q: usize, a: f64, c: f64, w: &[f64]) -> (f64, f64) {
    let at = |i: isize, right: bool| -> f64 {
        if i < 0 || (i == 0 && !right) {
            0.0
        } else {
            g[i as usize]
        }
    };
    let ni = n as isize;
    let qi = q as isize;
    let mut dist = 0.0;
    if c != 0.0 {
        for j in 0..=qi {
            let i = ni - qi + j;
            // a jump node inside the window contributes the average of its limits
            let v = if i == 0 && j > 0 && j < qi {
                0.5 * g[0]
            } else {
                at(i, j > 0)
            };
            dist += w[j as usize] * v;
        }
    }
    let d = ni - qi;
    (
        a * at(d, false) + c * dist,
        a * at(d, true) + c * dist,
    )
}

/// Maximum over the grid of
/// `|g(t) - e^{mu t} - ∫_0^t e^{mu(t-s)} [alpha m1 g(s-r) + m2 ∫beta g(s+θ)dθ] ds|`,
/// with the outer integral by the trapezoid rule.
pub fn verify_integral_form(g: &[f64], mode: &ModeEntry, k: &DelayKernel, dt: f64) -> Result<f64> {
    let q = grid_cells(k.r(), dt)?;
    let w = k.quadrature_weights(dt)?;
    let (a, c) = (k.alpha() * mode.m1, if k.has_distributed() { mode.m2 } else { 0.0 });
    let e = (mode.mu * dt).exp();
    let mut integral = 0.0;
    let mut worst = (g[0] - 1.0).abs();
    let mut prev_right = forcing_limits(g, 0, q, a, c, &w).1;
    for n in 1..g.len() {
        let (left, right) = forcing_limits(g, n, q, a, c, &w);
        integral = e * integral + 0.5 * dt * (e * prev_right + left);
        prev_right = right;
        let t = n as f64 * dt;
        worst = worst.max((g[n] - (mode.mu * t).exp() - integral).abs());
    }
    Ok(worst)
}

/// `(S phi)(θ) = alpha m1 phi(-r-θ) + m2 ∫_{-r}^θ beta(τ) phi(τ-θ) dτ` on the
/// segment grid, partial integrals by the trapezoid rule.
pub fn structure_apply(k: &DelayKernel, mode: &ModeEntry, phi1: &Segment) -> Result<Segment> {
    let h = phi1.step();
    let n = phi1.len();
    // validates the grid and a tabulated kernel's length
    k.segment_weights(n, h)?;
    let q = n - 1;
    let phi = phi1.values();
    let a = k.alpha() * mode.m1;
    let c = if k.has_distributed() { mode.m2 } else { 0.0 };
    let beta: Vec<f64> = (0..=q).map(|j| k.beta_at(-k.r() + j as f64 * h)).collect();
    let out = (0..=q)
        .map(|i| {
            let mut part = 0.0;
            for j in 0..i {
                let s = q - i + j;
                part += 0.5 * h * (beta[j] * phi[s] + beta[j + 1] * phi[s + 1]);
            }
            a * phi[q - i] + c * part
        })
        .collect();
    Segment::new(out, h, k.r())
}

/// `t_n ↦ ∫_{-r}^0 g(t_n + θ) (S phi)(θ) dθ` with `g = 0` before zero.
pub fn history_response(g: &[f64], s_phi: &Segment) -> Vec<f64> {
    let h = s_phi.step();
    let q = s_phi.len() - 1;
    let sv = s_phi.values();
    let qi = q as isize;
    (0..g.len())
        .map(|n| {
            let ni = n as isize;
            let mut acc = 0.0;
            for j in 0..=qi {
                let i = ni - qi + j;
                let end = j == 0 || j == qi;
                let gv = if i < 0 {
                    0.0
                } else if i == 0 {
                    // g jumps from 0 to g(0) here
                    if j == 0 {
                        g[0]
                    } else if j == qi {
                        0.0
                    } else {
                        0.5 * g[0]
                    }
                } else {
                    g[i as usize]
                };
                acc += if end { 0.5 } else { 1.0 } * sv[j as usize] * gv;
            }
            h * acc
        })
        .collect()
}

/// `∫_0^1 s^k e^{-z s} ds` for `k = 0..=3`.
fn exp_moments(z: Complex64) -> [Complex64; 4] {
    let mut out = [Complex64::new(0.0, 0.0); 4];
    if z.norm() < 1.0 {
        for (k, o) in out.iter_mut().enumerate() {
            let mut term = Complex64::new(1.0, 0.0);
            let mut sum = term / (k as f64 + 1.0);
            for n in 1..40 {
                term = term * (-z) / n as f64;
                sum += term / (n as f64 + k as f64 + 1.0);
            }
            *o = sum;
        }
    } else {
        let e = (-z).exp();
        out[0] = phi1_c(z);
        for k in 1..4 {
            out[k] = (out[k - 1] * k as f64 - e) / z;
        }
    }
    out
}

/// Resolvent of the lifted generator on one mode: solves
/// `(λ - A)(phi0, phi1) = (psi0, psi1)`, i.e.
/// `λ phi0 - mu phi0 - F phi1 = psi0` and `λ phi1 - phi1' = psi1`, `phi1(0) = phi0`.
///
/// `F` is applied with the segment quadrature of [`apply_f_mode`], so the
/// returned pair satisfies the first equation to rounding error; `psi1` is
/// interpolated by cubic Hermite polynomials inside the exact
/// variation-of-constants integral for `phi1`.
pub fn resolvent_apply(
    lambda: Complex64,
    mode: &ModeEntry,
    k: &DelayKernel,
    psi0: Complex64,
    psi1: &Segment<Complex64>,
) -> Result<(Complex64, Segment<Complex64>)> {
    let h = psi1.step();
    let n = psi1.len();
    let w = k.segment_weights(n, h)?;
    let q = n - 1;
    let r = k.r();
    let psi = psi1.values();
    let dpsi = fd_derivative(psi, h);

    // J(θ) = ∫_θ^0 e^{λ(θ-τ)} psi(τ) dτ, swept from θ = 0 down to -r
    let m = exp_moments(lambda * h);
    let decay = (-lambda * h).exp();
    let mut j = vec![Complex64::new(0.0, 0.0); n];
    for i in (0..q).rev() {
        // cubic Hermite on [θ_i, θ_{i+1}] in the local variable s ∈ [0, 1]
        let (p0, p1) = (psi[i], psi[i + 1]);
        let (d0, d1) = (dpsi[i] * h, dpsi[i + 1] * h);
        let c0 = p0;
        let c1 = d0;
        let c2 = (p1 - p0) * 3.0 - d0 * 2.0 - d1;
        let c3 = (p0 - p1) * 2.0 + d0 + d1;
        let cell = (c0 * m[0] + c1 * m[1] + c2 * m[2] + c3 * m[3]) * h;
        j[i] = decay * j[i + 1] + cell;
    }

    let (a, c) = (k.alpha() * mode.m1, mode.m2);
    let theta = |i: usize| -r + i as f64 * h;
    let b_h: Complex64 = (0..n).map(|i| (lambda * theta(i)).exp() * w[i]).sum();
    let delta_h = lambda - mode.mu - (-lambda * r).exp() * a - b_h * c;
    let tol = 1e-10 * (1.0 + lambda.norm());
    if delta_h.norm() < tol {
        return Err(Error::InSpectrum {
            re: lambda.re,
            im: lambda.im,
            abs: delta_h.norm(),
        });
    }
    let fj: Complex64 = j[0] * a + (0..n).map(|i| j[i] * w[i]).sum::<Complex64>() * c;
    let phi0 = (psi0 + fj) / delta_h;
    let phi1: Vec<Complex64> = (0..n)
        .map(|i| (lambda * theta(i)).exp() * phi0 + j[i])
        .collect();
    Ok((phi0, Segment::new(phi1, h, r)?))
}

/// Residuals of `(λ - A)` applied discretely to `(phi0, phi1)` against
/// `(psi0, psi1)`: the scalar equation with [`apply_f_mode`] and the
/// segment equation with fourth-order finite differences.
pub fn resolvent_round_trip(
    lambda: Complex64,
    mode: &ModeEntry,
    k: &DelayKernel,
    phi: &(Complex64, Segment<Complex64>),
    psi0: Complex64,
    psi1: &Segment<Complex64>,
) -> Result<(f64, f64)> {
    let (phi0, phi1) = phi;
    let f = apply_f_mode(k, mode.m1, mode.m2, phi1)?;
    let e0 = (lambda * phi0 - *phi0 * mode.mu - f - psi0).norm();
    let d = fd_derivative(phi1.values(), phi1.step());
    let e1 = phi1
        .values()
        .iter()
        .zip(&d)
        .zip(psi1.values())
        .map(|((p, dp), s)| (lambda * p - dp - s).norm())
        .fold(0.0, f64::max);
    Ok((e0, e1))
}
