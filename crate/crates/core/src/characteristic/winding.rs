use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::CharProblem;
use crate::error::{invalid, Error, Result};

/// Closed axis-aligned rectangle in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Self> {
        let ok = [re_min, re_max, im_min, im_max].iter().all(|v| v.is_finite())
            && re_min < re_max
            && im_min < im_max;
        if !ok {
            return Err(invalid(
                "rect",
                format!("degenerate rectangle [{re_min}, {re_max}] x [{im_min}, {im_max}]"),
            ));
        }
        Ok(Self {
            re_min,
            re_max,
            im_min,
            im_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.re_max - self.re_min
    }

    pub fn height(&self) -> f64 {
        self.im_max - self.im_min
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(
            0.5 * (self.re_min + self.re_max),
            0.5 * (self.im_min + self.im_max),
        )
    }

    pub fn contains(&self, z: Complex64, slack: f64) -> bool {
        z.re >= self.re_min - slack
            && z.re <= self.re_max + slack
            && z.im >= self.im_min - slack
            && z.im <= self.im_max + slack
    }

    fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.re_min, self.im_min),
            Complex64::new(self.re_max, self.im_min),
            Complex64::new(self.re_max, self.im_max),
            Complex64::new(self.re_min, self.im_max),
        ]
    }

    /// Splits along the longer side at the given fraction of its length.
    pub(crate) fn split(&self, frac: f64) -> (Rect, Rect) {
        if self.width() >= self.height() {
            let x = self.re_min + frac * self.width();
            (Rect { re_max: x, ..*self }, Rect { re_min: x, ..*self })
        } else {
            let y = self.im_min + frac * self.height();
            (Rect { im_max: y, ..*self }, Rect { im_min: y, ..*self })
        }
    }
}

/// Smallest `|f|` tolerated on a contour before the count is refused.
pub const CONTOUR_MIN_ABS: f64 = 1e-8;

const MAX_PHASE_STEP: f64 = 0.5;
const MAX_DEPTH: u32 = 48;
const MAX_REFINEMENTS: u32 = 5;

struct Tracker<'f, F> {
    f: &'f F,
    min_abs: f64,
    evals: usize,
}

impl<F: Fn(Complex64) -> Complex64> Tracker<'_, F> {
    fn eval(&mut self, z: Complex64) -> Complex64 {
        let v = (self.f)(z);
        self.evals += 1;
        self.min_abs = self.min_abs.min(v.norm());
        v
    }

    fn piece(&mut self, z0: Complex64, v0: Complex64, z1: Complex64, v1: Complex64, depth: u32) -> f64 {
        let d = (v1 / v0).arg();
        if d.abs() < MAX_PHASE_STEP || depth >= MAX_DEPTH {
            return d;
        }
        let zm = 0.5 * (z0 + z1);
        let vm = self.eval(zm);
        self.piece(z0, v0, zm, vm, depth + 1) + self.piece(zm, vm, z1, v1, depth + 1)
    }

    fn edge(&mut self, a: Complex64, b: Complex64, n: usize) -> f64 {
        let mut total = 0.0;
        let mut z0 = a;
        let mut v0 = self.eval(a);
        for i in 1..=n {
            let z1 = a + (b - a) * (i as f64 / n as f64);
            let v1 = self.eval(z1);
            total += self.piece(z0, v0, z1, v1, 0);
            z0 = z1;
            v0 = v1;
        }
        total
    }
}

fn winding_once<F: Fn(Complex64) -> Complex64>(
    f: &F,
    rect: &Rect,
    max_step: f64,
    min_points: usize,
) -> (f64, f64) {
    let mut t = Tracker {
        f,
        min_abs: f64::INFINITY,
        evals: 0,
    };
    let c = rect.corners();
    let mut total = 0.0;
    for i in 0..4 {
        let (a, b) = (c[i], c[(i + 1) % 4]);
        let n = (((b - a).norm() / max_step).ceil() as usize).max(min_points);
        total += t.edge(a, b, n);
    }
    (total / (2.0 * PI), t.min_abs)
}

/// Number of zeros of `f` enclosed by `rect`, by the argument principle.
///
/// The edge sampling is refined until two successive levels agree on an
/// integer count.
pub(crate) fn winding_count<F: Fn(Complex64) -> Complex64>(
    f: &F,
    rect: &Rect,
    max_step: f64,
    min_points: usize,
) -> Result<usize> {
    let mut step = max_step;
    let mut prev: Option<i64> = None;
    for _ in 0..=MAX_REFINEMENTS {
        let (w, min_abs) = winding_once(f, rect, step, min_points);
        if !(min_abs >= CONTOUR_MIN_ABS) {
            return Err(Error::ContourTooClose { min_abs });
        }
        let rounded = w.round();
        if (w - rounded).abs() < 0.05 {
            let n = rounded as i64;
            if prev == Some(n) {
                if n < 0 {
                    return Err(invalid("rect", "negative winding number"));
                }
                return Ok(n as usize);
            }
            prev = Some(n);
        } else {
            prev = None;
        }
        step *= 0.5;
    }
    Err(invalid("rect", "winding number did not stabilise under refinement"))
}

/// Sampling step along contours that resolves the oscillation of `e^{-λr}`.
pub(crate) fn contour_step(p: &CharProblem<'_>, rect: &Rect, quad_points: usize) -> f64 {
    let perimeter = 2.0 * (rect.width() + rect.height());
    let base = perimeter / quad_points.max(16) as f64;
    let k = p.kernel;
    if k.alpha() != 0.0 || k.has_distributed() {
        base.min(0.2 / k.r())
    } else {
        base
    }
}

/// Counts the characteristic roots inside `rect` (with multiplicity).
///
/// Fails with [`Error::ContourTooClose`] when the boundary passes within
/// `1e-8` (in modulus of the characteristic value) of a root.
pub fn count_roots_in_rect(p: &CharProblem<'_>, rect: Rect, quad_points: usize) -> Result<usize> {
    let f = |z| p.value(z);
    winding_count(&f, &rect, contour_step(p, &rect, quad_points), 4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Beta, DelayKernel};
    use crate::modes::ModeEntry;

    #[test]
    fn polynomial_counts() {
        let f = |z: Complex64| (z - 1.0) * (z + Complex64::new(0.0, 2.0)) * (z - 3.0);
        let r = Rect::new(-2.0, 2.0, -3.0, 3.0).unwrap();
        assert_eq!(winding_count(&f, &r, 0.1, 4).unwrap(), 2);
        let r = Rect::new(-5.0, 5.0, -5.0, 5.0).unwrap();
        assert_eq!(winding_count(&f, &r, 0.1, 4).unwrap(), 3);
        let f2 = |z: Complex64| (z - 0.5) * (z - 0.5);
        let r = Rect::new(0.0, 1.0, -1.0, 1.0).unwrap();
        assert_eq!(winding_count(&f2, &r, 0.5, 4).unwrap(), 2);
    }

    #[test]
    fn no_delay_single_root() {
        let k = DelayKernel::none(1.0).unwrap();
        let m = ModeEntry::plain(-1.0, 1.0);
        let p = CharProblem::mode(&k, &m);
        let r = Rect::new(-2.0, 0.0, -1.0, 1.0).unwrap();
        assert_eq!(count_roots_in_rect(&p, r, 64).unwrap(), 1);
        let r = Rect::new(-0.5, 1.0, -1.0, 1.0).unwrap();
        assert_eq!(count_roots_in_rect(&p, r, 64).unwrap(), 0);
    }

    #[test]
    fn contour_through_root_is_refused() {
        let k = DelayKernel::none(1.0).unwrap();
        let m = ModeEntry::plain(-1.0, 1.0);
        let p = CharProblem::mode(&k, &m);
        let r = Rect::new(-1.0, 0.0, -1.0, 1.0).unwrap();
        assert!(matches!(
            count_roots_in_rect(&p, r, 64),
            Err(Error::ContourTooClose { .. })
        ));
    }

    #[test]
    fn neutral_chain_counts() {
        // n(λ) = 1 + e^{-λ}: zeros at i(2j+1)π
        let k = DelayKernel::new(1.0, 1.0, Beta::Zero).unwrap();
        let p = CharProblem::gamma0(&k);
        let r = Rect::new(-0.5, 0.5, -10.0, 10.0).unwrap();
        assert_eq!(count_roots_in_rect(&p, r, 64).unwrap(), 4);
    }

    #[test]
    fn degenerate_rect_rejected() {
        assert!(Rect::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(Rect::new(0.0, 1.0, 0.0, f64::NAN).is_err());
    }
}
