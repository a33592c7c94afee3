//! BFGS minimisation with a strong-Wolfe line search.
//!
//! The objective may return `+∞` outside its admissible region; such trial
//! points are treated as overshooting and the step is shortened. Near the
//! optimum the sufficient-decrease test is replaced by the approximate Wolfe
//! conditions of Hager and Zhang, since differences in `f` there fall below
//! its rounding error while the directional derivative is still accurate.

use nalgebra::{DMatrix, DVector};

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_BRACKET: usize = 30;
const MAX_ZOOM: usize = 40;
/// Largest infinity-norm of the first trial step.
const MAX_STEP: f64 = 5.0;

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub gtol: f64,
    pub max_iter: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            gtol: 1e-6,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Stationarity measure fell below `gtol`.
    Gradient,
    MaxIter,
    /// No acceptable step along the search direction, even after resetting
    /// the inverse Hessian.
    LineSearchFailed,
    /// The starting point is outside the admissible region.
    InfeasibleStart,
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    pub stationarity: f64,
}

impl BfgsOutcome {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Gradient
    }
}

#[derive(Debug, Clone)]
struct Trial {
    step: f64,
    f: f64,
    /// Directional derivative; NaN when `f` is not finite.
    slope: f64,
    grad: DVector<f64>,
}

struct Search<'a, F> {
    objective: &'a mut F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> Search<'_, F> {
    fn eval(&mut self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        self.evaluations += 1;
        let (f, g) = (self.objective)(x.as_slice());
        if f.is_finite() && g.iter().all(|v| v.is_finite()) {
            (f, DVector::from_vec(g))
        } else {
            (f64::INFINITY, DVector::zeros(x.len()))
        }
    }

    fn trial(&mut self, x: &DVector<f64>, dir: &DVector<f64>, step: f64) -> Trial {
        let (f, grad) = self.eval(&(x + dir * step));
        let slope = if f.is_finite() { grad.dot(dir) } else { f64::NAN };
        Trial { step, f, slope, grad }
    }
}

struct LineStart {
    f0: f64,
    d0: f64,
    /// Tolerance on `f` for the approximate Wolfe test.
    f_slack: f64,
}

impl LineStart {
    fn armijo(&self, t: &Trial) -> bool {
        t.f.is_finite() && t.f <= self.f0 + C1 * t.step * self.d0
    }

    fn curvature(&self, t: &Trial) -> bool {
        t.slope.abs() <= -C2 * self.d0
    }

    fn approximate_wolfe(&self, t: &Trial) -> bool {
        t.f.is_finite()
            && t.f <= self.f0 + self.f_slack
            && t.slope <= (2.0 * C1 - 1.0) * self.d0
            && t.slope >= C2 * self.d0
    }

    fn accept(&self, t: &Trial) -> bool {
        (self.armijo(t) && self.curvature(t)) || self.approximate_wolfe(t)
    }
}

fn interpolate(lo: &Trial, hi: &Trial) -> f64 {
    let (a, b) = (lo.step.min(hi.step), lo.step.max(hi.step));
    let width = b - a;
    let bisect = 0.5 * (a + b);
    if !(lo.f.is_finite() && hi.f.is_finite()) {
        return bisect;
    }
    // minimiser of the cubic through both end points
    let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (lo.step - hi.step);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return bisect;
    }
    let d2 = (hi.step - lo.step).signum() * disc.sqrt();
    let cand = hi.step - (hi.step - lo.step) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    if cand.is_finite() && cand > a + 0.1 * width && cand < b - 0.1 * width {
        cand
    } else {
        bisect
    }
}

fn zoom<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(
    search: &mut Search<'_, F>,
    x: &DVector<f64>,
    dir: &DVector<f64>,
    start: &LineStart,
    mut lo: Trial,
    mut hi: Trial,
) -> Option<Trial> {
    for _ in 0..MAX_ZOOM {
        let step = interpolate(&lo, &hi);
        let t = search.trial(x, dir, step);
        if start.accept(&t) {
            return Some(t);
        }
        if !start.armijo(&t) || t.f >= lo.f {
            hi = t;
        } else {
            if t.slope * (hi.step - lo.step) >= 0.0 {
                hi = lo;
            }
            lo = t;
        }
        if (hi.step - lo.step).abs() <= f64::EPSILON * lo.step.max(hi.step) {
            break;
        }
    }
    // fall back to the best strict decrease found
    (lo.step > 0.0 && lo.f < start.f0).then_some(lo)
}

fn line_search<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(
    search: &mut Search<'_, F>,
    x: &DVector<f64>,
    f0: f64,
    g0: &DVector<f64>,
    dir: &DVector<f64>,
) -> Option<Trial> {
    let d0 = g0.dot(dir);
    if !(d0 < 0.0) {
        return None;
    }
    let start = LineStart {
        f0,
        d0,
        f_slack: 1e-12 * (1.0 + f0.abs()),
    };
    let max_abs = dir.amax();
    let mut step = if max_abs > MAX_STEP { MAX_STEP / max_abs } else { 1.0 };
    let mut prev = Trial {
        step: 0.0,
        f: f0,
        slope: d0,
        grad: g0.clone(),
    };
    for i in 0..MAX_BRACKET {
        let t = search.trial(x, dir, step);
        if start.accept(&t) {
            return Some(t);
        }
        if !start.armijo(&t) || (i > 0 && t.f >= prev.f) {
            return zoom(search, x, dir, &start, prev, t);
        }
        if t.slope >= 0.0 {
            return zoom(search, x, dir, &start, t, prev);
        }
        prev = t;
        step *= 2.0;
    }
    (prev.step > 0.0).then_some(prev)
}

/// Minimises `objective`, which returns `(f, ∇f)`.
///
/// `h0` is an optional initial inverse Hessian; without it the identity is
/// rescaled after the first step. `stationarity(x, ∇f)` is compared with
/// `options.gtol` to declare convergence.
pub fn minimize<F, S>(
    mut objective: F,
    x0: &[f64],
    h0: Option<DMatrix<f64>>,
    options: &BfgsOptions,
    stationarity: S,
) -> BfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    S: Fn(&[f64], &[f64]) -> f64,
{
    let n = x0.len();
    let mut search = Search {
        objective: &mut objective,
        evaluations: 0,
    };
    let mut x = DVector::from_column_slice(x0);
    let (mut f, mut g) = search.eval(&x);
    let outcome = |x: &DVector<f64>, f: f64, g: &DVector<f64>, iterations, evaluations, termination| BfgsOutcome {
        x: x.as_slice().to_vec(),
        f,
        grad: g.as_slice().to_vec(),
        iterations,
        evaluations,
        termination,
        stationarity: stationarity(x.as_slice(), g.as_slice()),
    };
    if !f.is_finite() {
        return outcome(&x, f, &g, 0, search.evaluations, Termination::InfeasibleStart);
    }
    let initial = h0.filter(|h| h.nrows() == n && h.ncols() == n);
    let mut scaled = initial.is_some();
    let mut h = initial.clone().unwrap_or_else(|| DMatrix::identity(n, n));
    let mut fresh = true;
    let mut iter = 0;
    while iter < options.max_iter {
        if stationarity(x.as_slice(), g.as_slice()) < options.gtol {
            return outcome(&x, f, &g, iter, search.evaluations, Termination::Gradient);
        }
        let mut dir = -(&h * &g);
        if !(g.dot(&dir) < 0.0) {
            h = DMatrix::identity(n, n);
            scaled = false;
            dir = -g.clone();
        }
        let Some(t) = line_search(&mut search, &x, f, &g, &dir) else {
            if fresh {
                return outcome(&x, f, &g, iter, search.evaluations, Termination::LineSearchFailed);
            }
            // discard curvature information and retry once
            h = initial.clone().unwrap_or_else(|| DMatrix::identity(n, n));
            scaled = initial.is_some();
            fresh = true;
            continue;
        };
        iter += 1;
        let s = &dir * t.step;
        let y = &t.grad - &g;
        let sy = s.dot(&y);
        if sy > 1e-10 * s.norm() * y.norm() {
            if !scaled {
                h *= sy / y.dot(&y);
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H ← (I − ρsyᵀ)H(I − ρysᵀ) + ρssᵀ, expanded
            h -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            h += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        x += s;
        f = t.f;
        g = t.grad;
        fresh = false;
    }
    let termination = if stationarity(x.as_slice(), g.as_slice()) < options.gtol {
        Termination::Gradient
    } else {
        Termination::MaxIter
    };
    outcome(&x, f, &g, iter, search.evaluations, termination)
}

/// `max |gᵢ|`.
pub fn max_abs(_: &[f64], g: &[f64]) -> f64 {
    g.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
