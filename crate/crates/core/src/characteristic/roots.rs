use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::winding::{contour_step, winding_count, Rect};
use super::{n_of_lambda, CharProblem};
use crate::error::{Error, Result};
use crate::kernel::DelayKernel;
use crate::modes::{ModeEntry, ModeSystem};

/// Accepted root: `|Δ(λ)| <= ROOT_RESIDUAL_TOL * (1 + |λ|)`.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-9;

const QUAD_POINTS: usize = 64;
const SPLIT_FRACTIONS: [f64; 6] = [0.5137, 0.4791, 0.3823, 0.6179, 0.2917, 0.7213];
const DEFAULT_COUNT_BUDGET: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub re: f64,
    pub im: f64,
    pub residual: f64,
    pub multiplicity: usize,
}

impl Root {
    pub fn lambda(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RootReport {
    pub rect: Rect,
    /// Winding count of the rectangle (with multiplicity).
    pub count: usize,
    /// Sorted by decreasing real part, then decreasing imaginary part.
    pub roots: Vec<Root>,
}

impl RootReport {
    pub fn rightmost(&self) -> Option<&Root> {
        self.roots.first()
    }
}

fn newton(p: &CharProblem<'_>, z0: Complex64) -> Option<Root> {
    let mut z = z0;
    for _ in 0..100 {
        let f = p.value(z);
        let d = p.derivative(z);
        let step = f / d;
        if !(step.re.is_finite() && step.im.is_finite()) {
            return None;
        }
        z -= step;
        if step.norm() <= 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    let residual = p.value(z).norm();
    (residual <= ROOT_RESIDUAL_TOL * (1.0 + z.norm())).then_some(Root {
        re: z.re,
        im: z.im,
        residual,
        multiplicity: 1,
    })
}

fn order(roots: &mut Vec<Root>) {
    roots.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
}

struct Isolator<'a, 'k> {
    p: &'a CharProblem<'k>,
    calls: usize,
    budget: usize,
    expected: usize,
    found: Vec<Root>,
}

impl Isolator<'_, '_> {
    fn count(&mut self, r: &Rect) -> Result<usize> {
        self.calls += 1;
        if self.calls > self.budget {
            return Err(self.budget_error());
        }
        let f = |z| self.p.value(z);
        winding_count(&f, r, contour_step(self.p, r, QUAD_POINTS), 4)
    }

    fn budget_error(&self) -> Error {
        Error::RootBudget {
            found: self.found.iter().map(|r| r.multiplicity).sum(),
            expected: self.expected,
            partial: self.found.iter().map(Root::lambda).collect(),
        }
    }

    fn newton_inside(&self, r: &Rect) -> Option<Root> {
        let slack = 1e-12 * (1.0 + r.center().norm());
        newton(self.p, r.center()).filter(|root| r.contains(root.lambda(), slack))
    }

    fn isolate(&mut self, r: Rect, n: usize) -> Result<()> {
        if n == 0 {
            return Ok(());
        }
        if n == 1 {
            if let Some(root) = self.newton_inside(&r) {
                self.found.push(root);
                return Ok(());
            }
        }
        let tiny = 1e-7 * (1.0 + r.center().norm());
        if r.width().max(r.height()) < tiny {
            if let Some(mut root) = self.newton_inside(&r) {
                root.multiplicity = n;
                self.found.push(root);
                return Ok(());
            }
        }
        for frac in SPLIT_FRACTIONS {
            let (a, b) = r.split(frac);
            let (na, nb) = match (self.count(&a), self.count(&b)) {
                (Ok(na), Ok(nb)) => (na, nb),
                (Err(Error::ContourTooClose { .. }), _) | (_, Err(Error::ContourTooClose { .. })) => {
                    continue
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            };
            if na + nb != n {
                continue;
            }
            self.isolate(a, na)?;
            return self.isolate(b, nb);
        }
        // every split grazes a root: a tight cluster sits in this rectangle
        if let Some(mut root) = self.newton_inside(&r) {
            root.multiplicity = n;
            self.found.push(root);
            return Ok(());
        }
        Err(self.budget_error())
    }

    fn finish(mut self, rect: &Rect) -> Vec<Root> {
        // real coefficients: the root set is closed under conjugation
        let mut extra = Vec::new();
        for root in &self.found {
            let z = root.lambda();
            let tol = 1e-8 * (1.0 + z.norm());
            if z.im.abs() <= tol || !rect.contains(z.conj(), 0.0) {
                continue;
            }
            let present = self
                .found
                .iter()
                .chain(extra.iter())
                .any(|o: &Root| (o.lambda() - z.conj()).norm() <= tol);
            if !present {
                if let Some(c) = newton(self.p, z.conj()) {
                    extra.push(Root {
                        multiplicity: root.multiplicity,
                        ..c
                    });
                }
            }
        }
        self.found.extend(extra);
        let mut out: Vec<Root> = Vec::with_capacity(self.found.len());
        for root in self.found {
            let tol = 1e-8 * (1.0 + root.lambda().norm());
            if !out.iter().any(|o| (o.lambda() - root.lambda()).norm() <= tol) {
                out.push(root);
            }
        }
        order(&mut out);
        out
    }
}

/// All characteristic roots in `rect`, isolated by recursive subdivision
/// and polished by Newton's method.
pub fn find_roots(p: &CharProblem<'_>, rect: Rect, max_counts: Option<usize>) -> Result<RootReport> {
    let mut iso = Isolator {
        p,
        calls: 0,
        budget: max_counts.unwrap_or(DEFAULT_COUNT_BUDGET),
        expected: 0,
        found: Vec::new(),
    };
    let count = iso.count(&rect)?;
    iso.expected = count;
    iso.isolate(rect, count)?;
    let roots = iso.finish(&rect);
    Ok(RootReport { rect, count, roots })
}

/// All roots in `[x_lo, x_hi] x [-imag_cap, imag_cap]`; the rightmost comes first.
pub fn rightmost_root(p: &CharProblem<'_>, window: (f64, f64), imag_cap: f64) -> Result<RootReport> {
    find_roots(p, Rect::new(window.0, window.1, -imag_cap, imag_cap)?, None)
}

/// The root of largest real part in `rect`, or `None` if `rect` encloses none.
///
/// Narrows a vertical strip by bisection in the real direction before
/// isolating the roots inside it, so tall rectangles stay cheap.
pub fn rightmost_in_rect(p: &CharProblem<'_>, rect: Rect) -> Result<Option<Root>> {
    let mut iso = Isolator {
        p,
        calls: 0,
        budget: DEFAULT_COUNT_BUDGET,
        expected: 0,
        found: Vec::new(),
    };
    let mut n = iso.count(&rect)?;
    iso.expected = n;
    if n == 0 {
        return Ok(None);
    }
    let mut cur = rect;
    'narrow: while cur.width() > 1e-3 * (1.0 + cur.re_max.abs()) {
        for frac in SPLIT_FRACTIONS {
            let x = cur.re_min + frac * cur.width();
            let right = Rect { re_min: x, ..cur };
            match iso.count(&right) {
                Ok(0) => cur.re_max = x,
                Ok(k) => {
                    cur = right;
                    n = k;
                }
                Err(Error::ContourTooClose { .. }) => continue,
                Err(e) => return Err(e),
            }
            continue 'narrow;
        }
        break;
    }
    iso.isolate(cur, n)?;
    let roots = iso.finish(&cur);
    Ok(roots
        .into_iter()
        .max_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))))
}

/// Radius `R(x)` with `|λ - mu| <= R(x)` for every mode root with `Re λ >= x`.
pub(crate) fn mode_radius(k: &DelayKernel, m: &ModeEntry, x: f64) -> f64 {
    (k.alpha() * m.m1).abs() * (-x * k.r()).exp() + m.m2.abs() * k.beta_abs_weighted(x)
}

/// Every root of the mode satisfies `Re λ <= x` where `x = mu + R(x)`.
pub(crate) fn mode_re_upper(k: &DelayKernel, m: &ModeEntry) -> f64 {
    let g = |x: f64| x - m.mu - mode_radius(k, m, x);
    let mut lo = m.mu;
    let mut step = 1.0;
    let mut hi = m.mu + step;
    while g(hi) < 0.0 {
        lo = hi;
        step *= 2.0;
        hi = m.mu + step;
    }
    bisect(g, lo, hi)
}

fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Zeros of `n` with `Re λ >= x_lo` have `Re λ <= x*` where
/// `|alpha| e^{-x* r} + ∫|beta| e^{x* θ} = 1`. `None` when there are none.
pub(crate) fn gamma0_re_upper(k: &DelayKernel, x_lo: f64) -> Option<f64> {
    let h = |x: f64| k.alpha().abs() * (-x * k.r()).exp() + k.beta_abs_weighted(x) - 1.0;
    if h(x_lo) < 0.0 {
        return None;
    }
    let mut step = 1.0;
    let mut hi = x_lo.max(0.0) + step;
    while h(hi) >= 0.0 {
        step *= 2.0;
        hi = x_lo.max(0.0) + step;
        if step > 1e12 {
            return None;
        }
    }
    // h decreasing: find the crossing as the root of -h
    Some(bisect(|x| -h(x), x_lo, hi))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbscissaOptions {
    /// Half-height cap for search rectangles.
    pub imag_cap: f64,
    /// Fixed search window `(x_lo, x_hi)`; adaptive when `None`.
    pub window: Option<(f64, f64)>,
    pub max_levels: usize,
}

impl Default for AbscissaOptions {
    fn default() -> Self {
        Self {
            imag_cap: 2000.0,
            window: None,
            max_levels: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AbscissaSource {
    Mode(usize),
    Gamma0,
    Gamma0Asymptote,
    Zero,
    /// No root was found; the value is the left edge of the search window.
    Window,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralAbscissa {
    pub value: f64,
    /// True when no spectral point was located and `value` is only an upper bound.
    pub upper_bound_only: bool,
    pub source: AbscissaSource,
    /// Left edge of the final search window.
    pub x_lo: f64,
    /// Rightmost root of each mode when it lies right of `x_lo`.
    pub per_mode: Vec<Option<Root>>,
    pub gamma0: Option<Root>,
    pub gamma0_asymptote: Option<f64>,
    pub zero_in_spectrum: bool,
    /// Modes whose search rectangle was clipped to `imag_cap`.
    pub truncated_modes: Vec<usize>,
    /// Modes whose root window could not be formed at the final level.
    pub unresolved_modes: Vec<usize>,
}

impl SpectralAbscissa {
    pub fn is_stable(&self) -> bool {
        self.value < 0.0
    }

    /// Exponential decay rate `-value` (positive when stable).
    pub fn decay_rate(&self) -> f64 {
        -self.value
    }
}

enum ModeOutcome {
    Empty,
    Unresolved,
    Searched { root: Option<Root>, truncated: bool },
}

fn search_mode(
    k: &DelayKernel,
    m: &ModeEntry,
    x_lo: f64,
    x_hi: Option<f64>,
    imag_cap: f64,
) -> Result<ModeOutcome> {
    let up = mode_re_upper(k, m);
    let mut hi = up + 1e-3 * (1.0 + up.abs());
    if let Some(h) = x_hi {
        hi = hi.min(h);
    }
    if hi <= x_lo {
        return Ok(ModeOutcome::Empty);
    }
    let radius = mode_radius(k, m, x_lo);
    if !radius.is_finite() {
        return Ok(ModeOutcome::Unresolved);
    }
    let full = radius + 0.25 + 1e-3 * m.mu.abs();
    let truncated = full > imag_cap;
    let half = full.min(imag_cap);
    let p = CharProblem::mode(k, m);
    let mut lo = x_lo;
    for attempt in 0..8 {
        let rect = Rect::new(lo, hi, -half * (1.0 + 1.3e-4 * attempt as f64), half)?;
        match rightmost_in_rect(&p, rect) {
            Ok(root) => return Ok(ModeOutcome::Searched { root, truncated }),
            Err(Error::ContourTooClose { .. }) => lo -= 1.7e-4 * (1.0 + lo.abs()) * (attempt + 1) as f64,
            Err(e) => return Err(e),
        }
    }
    Err(Error::ContourTooClose { min_abs: 0.0 })
}

fn search_gamma0(k: &DelayKernel, x_lo: f64, imag_cap: f64) -> Result<Option<Root>> {
    let Some(up) = gamma0_re_upper(k, x_lo) else {
        return Ok(None);
    };
    let hi = up + 1e-3 * (1.0 + up.abs());
    let half = if k.alpha() == 0.0 {
        (k.beta_parts_bound(x_lo) + 0.5).min(imag_cap)
    } else {
        imag_cap
    };
    let p = CharProblem::gamma0(k);
    let mut lo = x_lo;
    for attempt in 0..8 {
        let rect = Rect::new(lo, hi, -half * (1.0 + 1.1e-4 * attempt as f64), half)?;
        match rightmost_in_rect(&p, rect) {
            Ok(root) => return Ok(root),
            Err(Error::ContourTooClose { .. }) => lo -= 1.9e-4 * (1.0 + lo.abs()) * (attempt + 1) as f64,
            Err(e) => return Err(e),
        }
    }
    Err(Error::ContourTooClose { min_abs: 0.0 })
}

/// Supremum of the real parts of the spectrum of the delay system.
///
/// Without a fixed window, the left edge is lowered jointly over all modes
/// until some mode has a root to its right; every root right of that edge
/// is then enclosed by the rigorous per-mode radius bound (clipped to
/// `imag_cap`). For proportional systems the zeros of `n`, the
/// neutral-chain asymptote `ln|alpha|/r` and a possible zero eigenvalue are
/// included.
pub fn spectral_abscissa(
    system: &ModeSystem,
    k: &DelayKernel,
    opts: &AbscissaOptions,
) -> Result<SpectralAbscissa> {
    let modes = system.modes();
    let levels: Vec<(f64, Option<f64>)> = match opts.window {
        Some((lo, hi)) => vec![(lo, Some(hi))],
        None => {
            let top = modes
                .iter()
                .map(|m| mode_re_upper(k, m))
                .fold(f64::NEG_INFINITY, f64::max);
            let s0 = 0.25 * k.r().recip().min(1.0);
            (0..opts.max_levels)
                .map(|j| (top - s0 * 2f64.powi(j as i32) * 1.0007, None))
                .collect()
        }
    };

    let mut x_lo = levels[0].0;
    let mut per_mode = vec![None; modes.len()];
    let mut truncated_modes = Vec::new();
    let mut unresolved_modes = Vec::new();
    for &(lo, hi) in &levels {
        x_lo = lo;
        let outcomes: Vec<Result<ModeOutcome>> = modes
            .par_iter()
            .map(|m| search_mode(k, m, lo, hi, opts.imag_cap))
            .collect();
        truncated_modes.clear();
        unresolved_modes.clear();
        let mut any = false;
        for (i, o) in outcomes.into_iter().enumerate() {
            match o? {
                ModeOutcome::Empty => per_mode[i] = None,
                ModeOutcome::Unresolved => {
                    per_mode[i] = None;
                    unresolved_modes.push(i);
                }
                ModeOutcome::Searched { root, truncated } => {
                    any |= root.is_some();
                    per_mode[i] = root;
                    if truncated {
                        truncated_modes.push(i);
                    }
                }
            }
        }
        if any || unresolved_modes.len() == modes.len() {
            break;
        }
    }

    let proportional = system.is_proportional(k);
    let gamma0 = if proportional {
        search_gamma0(k, x_lo, opts.imag_cap)?
    } else {
        None
    };
    let gamma0_asymptote =
        (proportional && k.alpha() != 0.0).then(|| k.alpha().abs().ln() / k.r());
    let zero_in_spectrum =
        proportional && n_of_lambda(k, Complex64::new(0.0, 0.0)).norm() < 1e-12;

    let mut best: Option<(f64, AbscissaSource)> = None;
    let mut offer = |v: f64, s: AbscissaSource| {
        if best.map_or(true, |(b, _)| v > b) {
            best = Some((v, s));
        }
    };
    for (i, r) in per_mode.iter().enumerate() {
        if let Some(r) = r {
            offer(r.re, AbscissaSource::Mode(i));
        }
    }
    if let Some(g) = &gamma0 {
        offer(g.re, AbscissaSource::Gamma0);
    }
    if let Some(a) = gamma0_asymptote {
        offer(a, AbscissaSource::Gamma0Asymptote);
    }
    if zero_in_spectrum {
        offer(0.0, AbscissaSource::Zero);
    }
    let (value, source, upper_bound_only) = match best {
        Some((v, s)) => (v, s, false),
        None => (x_lo, AbscissaSource::Window, true),
    };
    Ok(SpectralAbscissa {
        value,
        upper_bound_only,
        source,
        x_lo,
        per_mode,
        gamma0,
        gamma0_asymptote,
        zero_in_spectrum,
        truncated_modes,
        unresolved_modes,
    })
}
