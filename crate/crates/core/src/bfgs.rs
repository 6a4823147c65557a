//! Dense BFGS with a strong-Wolfe line search.
//!
//! Follows the textbook inverse-Hessian update with the initial scaling
//! `H₀ = (sᵀy / yᵀy) I` applied after the first step. Accepted iterates
//! always satisfy the sufficient-decrease condition, so the objective
//! history is non-increasing.

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop when `‖∇f‖_∞` drops below this.
    pub gradient_tol: f64,
    /// Stop when the relative decrease stays below this for `stall_iterations`
    /// consecutive iterations.
    pub f_tol: f64,
    pub stall_iterations: usize,
    /// Length of the first trial step, `‖α₀ p₀‖`, and of the first step after
    /// a reset.
    pub initial_step: f64,
    /// Times the curvature estimate may be discarded after a failed line
    /// search before giving up.
    pub max_resets: usize,
    /// Upper bound on `‖α p‖` for any trial step.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iterations: 500, gradient_tol: 1e-8, f_tol: 1e-10, stall_iterations: 5, initial_step: 0.1, max_resets: 10, max_step: f64::INFINITY }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    ObjectiveStalled,
    LineSearchFailed,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct BfgsReport {
    pub x: Vec<f64>,
    pub f: f64,
    pub gradient_norm: f64,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
}

impl BfgsReport {
    pub fn converged(&self) -> bool {
        matches!(self.stop, StopReason::GradientTolerance | StopReason::ObjectiveStalled)
    }
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 25;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Point {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

/// Minimizes `f`, which returns the value and gradient at a point.
pub fn minimize<E, F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Result<BfgsReport, E>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut gx) = f(&x)?;
    let mut evaluations = 1;
    let mut history = vec![fx];
    let mut hinv = vec![0.0; n * n];
    let reset = |h: &mut Vec<f64>, scale: f64| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = scale;
        }
    };
    reset(&mut hinv, 1.0);
    let mut scaled = false;
    let mut stalled = 0;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;
    let mut resets = 0;

    while iterations < opts.max_iterations {
        if inf_norm(&gx) < opts.gradient_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        let mut p: Vec<f64> = (0..n).map(|i| -dot(&hinv[i * n..(i + 1) * n], &gx)).collect();
        let mut slope = dot(&p, &gx);
        if !(slope < 0.0) {
            reset(&mut hinv, 1.0);
            scaled = false;
            p = gx.iter().map(|v| -v).collect();
            slope = dot(&p, &gx);
        }
        let pnorm = dot(&p, &p).sqrt();
        let alpha_max = opts.max_step / pnorm;
        let alpha0 = if scaled { 1.0 } else { opts.initial_step / pnorm }.min(alpha_max);

        let trial = |alpha: f64, f: &mut F, evals: &mut usize| -> Result<Point, E> {
            let xt: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + alpha * b).collect();
            let (ft, gt) = f(&xt)?;
            *evals += 1;
            let s = dot(&gt, &p);
            Ok(Point { alpha, f: ft, g: gt, slope: s })
        };

        let accepted = line_search(&mut f, &trial, fx, slope, alpha0, alpha_max, &mut evaluations)?;
        let Some(pt) = accepted else {
            // Retry along steepest descent before giving up.
            if scaled && resets < opts.max_resets {
                resets += 1;
                reset(&mut hinv, 1.0);
                scaled = false;
                continue;
            }
            stop = StopReason::LineSearchFailed;
            break;
        };
        iterations += 1;

        let s: Vec<f64> = p.iter().map(|v| pt.alpha * v).collect();
        let y: Vec<f64> = pt.g.iter().zip(&gx).map(|(a, b)| a - b).collect();
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        let rel = (fx - pt.f) / fx.abs().max(1e-300);
        fx = pt.f;
        gx = pt.g;
        history.push(fx);

        let sy = dot(&s, &y);
        if sy > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if !scaled {
                reset(&mut hinv, sy / dot(&y, &y));
                scaled = true;
            }
            bfgs_update(&mut hinv, &s, &y, sy);
        }

        if rel < opts.f_tol {
            stalled += 1;
            if stalled >= opts.stall_iterations {
                stop = StopReason::ObjectiveStalled;
                break;
            }
        } else {
            stalled = 0;
        }
    }
    if iterations >= opts.max_iterations && inf_norm(&gx) < opts.gradient_tol {
        stop = StopReason::GradientTolerance;
    }
    Ok(BfgsReport { gradient_norm: inf_norm(&gx), x, f: fx, history, iterations, evaluations, stop })
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ` with `ρ = 1/sᵀy`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coeff = rho * rho * yhy + rho;
    for i in 0..n {
        let row = &mut h[i * n..(i + 1) * n];
        for j in 0..n {
            row[j] += coeff * s[i] * s[j] - rho * (s[i] * hy[j] + hy[i] * s[j]);
        }
    }
}

/// Strong-Wolfe bracketing and zoom. Falls back to the best point satisfying
/// sufficient decrease when the curvature condition cannot be met.
fn line_search<E, F, T>(
    f: &mut F,
    trial: &T,
    f0: f64,
    slope0: f64,
    alpha0: f64,
    alpha_max: f64,
    evals: &mut usize,
) -> Result<Option<Point>, E>
where
    T: Fn(f64, &mut F, &mut usize) -> Result<Point, E>,
{
    let armijo = |pt: &Point| pt.f.is_finite() && pt.f <= f0 + C1 * pt.alpha * slope0;
    let mut best: Option<Point> = None;
    let keep = |pt: &Point, best: &mut Option<Point>| {
        if armijo(pt) && best.as_ref().is_none_or(|b| pt.f < b.f) {
            *best = Some(Point { alpha: pt.alpha, f: pt.f, g: pt.g.clone(), slope: pt.slope });
        }
    };

    let mut prev = Point { alpha: 0.0, f: f0, g: Vec::new(), slope: slope0 };
    let mut alpha = alpha0;
    let mut used = 0;
    let (mut lo, mut hi);
    loop {
        let cur = trial(alpha, f, evals)?;
        used += 1;
        keep(&cur, &mut best);
        if !armijo(&cur) || (used > 1 && cur.f >= prev.f) {
            lo = prev;
            hi = cur;
            break;
        }
        if cur.slope.abs() <= -C2 * slope0 {
            return Ok(Some(cur));
        }
        if cur.slope >= 0.0 {
            lo = cur;
            hi = prev;
            break;
        }
        if used >= MAX_LINE_EVALS || cur.alpha >= alpha_max {
            return Ok(best);
        }
        prev = cur;
        alpha = (2.0 * alpha).min(alpha_max);
    }

    while used < MAX_LINE_EVALS {
        let a = interpolate(&lo, &hi);
        let cur = trial(a, f, evals)?;
        used += 1;
        keep(&cur, &mut best);
        if !armijo(&cur) || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.slope.abs() <= -C2 * slope0 {
                return Ok(Some(cur));
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
        if (hi.alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1e-300) {
            break;
        }
    }
    Ok(best)
}

/// Cubic interpolation on the bracket, safeguarded toward bisection.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let mid = 0.5 * (a + b);
    if !hi.f.is_finite() {
        return mid;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let x = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (right - left);
    if x.is_finite() && x > left + margin && x < right - margin {
        x
    } else {
        mid
    }
}
