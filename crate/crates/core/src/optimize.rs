//! BFGS minimizer with a strong-Wolfe line search.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop once the gradient sup-norm falls below this.
    pub grad_tol: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 500, grad_tol: 1e-6, c1: 1e-4, c2: 0.9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub message: String,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Probe {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    d: f64,
}

struct LineSearch<'a, F> {
    f: &'a mut F,
    x: &'a [f64],
    p: &'a [f64],
    evals: usize,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> LineSearch<'_, F> {
    fn probe(&mut self, alpha: f64) -> Probe {
        let xn: Vec<f64> = self.x.iter().zip(self.p).map(|(x, p)| x + alpha * p).collect();
        let (f, g) = (self.f)(&xn);
        self.evals += 1;
        let d = dot(&g, self.p);
        if f.is_finite() && d.is_finite() {
            Probe { alpha, f, g, d }
        } else {
            Probe { alpha, f: f64::INFINITY, g, d: f64::NAN }
        }
    }
}

fn interpolate(lo: &Probe, hi: &Probe) -> f64 {
    // Cubic through both ends, safeguarded toward the bracket interior.
    let (a, b) = (lo.alpha, hi.alpha);
    let width = (b - a).abs();
    if hi.f.is_finite() && hi.d.is_finite() {
        let d1 = lo.d + hi.d - 3.0 * (lo.f - hi.f) / (a - b);
        let disc = d1 * d1 - lo.d * hi.d;
        if disc >= 0.0 {
            let d2 = (b - a).signum() * disc.sqrt();
            let t = b - (b - a) * (hi.d + d2 - d1) / (hi.d - lo.d + 2.0 * d2);
            let (mn, mx) = (a.min(b), a.max(b));
            if t.is_finite() && t > mn + 0.1 * width && t < mx - 0.1 * width {
                return t;
            }
        }
    }
    0.5 * (a + b)
}

fn strong_wolfe<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(
    ls: &mut LineSearch<'_, F>,
    f0: f64,
    d0: f64,
    opts: &BfgsOptions,
) -> Option<Probe> {
    let zero = Probe { alpha: 0.0, f: f0, g: Vec::new(), d: d0 };
    let mut prev = zero;
    let mut alpha = 1.0;
    for i in 0..40 {
        let cur = ls.probe(alpha);
        if cur.f > f0 + opts.c1 * alpha * d0 || (i > 0 && cur.f >= prev.f) || !cur.d.is_finite() {
            return zoom(ls, prev, cur, f0, d0, opts);
        }
        if cur.d.abs() <= -opts.c2 * d0 {
            return Some(cur);
        }
        if cur.d >= 0.0 {
            return zoom(ls, cur, prev, f0, d0, opts);
        }
        alpha *= 2.0;
        prev = cur;
    }
    None
}

fn zoom<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(
    ls: &mut LineSearch<'_, F>,
    mut lo: Probe,
    mut hi: Probe,
    f0: f64,
    d0: f64,
    opts: &BfgsOptions,
) -> Option<Probe> {
    for _ in 0..60 {
        let a = interpolate(&lo, &hi);
        let cur = ls.probe(a);
        if cur.f > f0 + opts.c1 * a * d0 || cur.f >= lo.f || !cur.d.is_finite() {
            hi = cur;
        } else {
            if cur.d.abs() <= -opts.c2 * d0 {
                return Some(cur);
            }
            if cur.d * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
        if (hi.alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1e-300) {
            break;
        }
    }
    // Accept a sufficient-decrease point even without the curvature condition.
    if lo.alpha > 0.0 && lo.f < f0 {
        Some(lo)
    } else {
        None
    }
}

/// Minimizes `f`, which returns the value and gradient at a point.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> OptimResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    let mut evals = 1;
    let mut h = vec![0.0; n * n];
    let reset = |h: &mut Vec<f64>, scale: f64| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = scale;
        }
    };
    reset(&mut h, 1.0);
    let mut fresh = true;

    if !fx.is_finite() {
        return OptimResult {
            x,
            f: fx,
            grad: g,
            iterations: 0,
            evaluations: evals,
            converged: false,
            message: "non-finite objective at the starting point".into(),
        };
    }

    for iter in 0..opts.max_iter {
        if sup_norm(&g) < opts.grad_tol {
            return OptimResult {
                x,
                f: fx,
                grad: g,
                iterations: iter,
                evaluations: evals,
                converged: true,
                message: "gradient tolerance reached".into(),
            };
        }
        let mut p: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut d0 = dot(&g, &p);
        if !(d0 < 0.0) {
            reset(&mut h, 1.0);
            fresh = true;
            p = g.iter().map(|v| -v).collect();
            d0 = dot(&g, &p);
        }
        let found = {
            let mut ls = LineSearch { f: &mut f, x: &x, p: &p, evals: 0 };
            let r = strong_wolfe(&mut ls, fx, d0, opts);
            evals += ls.evals;
            r
        };
        let Some(step) = found else {
            if fresh {
                return OptimResult {
                    x,
                    f: fx,
                    grad: g,
                    iterations: iter,
                    evaluations: evals,
                    converged: false,
                    message: "line search failed along steepest descent".into(),
                };
            }
            reset(&mut h, 1.0);
            fresh = true;
            continue;
        };
        let s: Vec<f64> = p.iter().map(|v| step.alpha * v).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        fx = step.f;
        g = step.g;
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                reset(&mut h, sy / dot(&y, &y));
            }
            // H <- (I - r s y') H (I - r y s') + r s s'
            let r = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -r * (hy[i] * s[j] + s[i] * hy[j]) + (r * r * yhy + r) * s[i] * s[j];
                }
            }
            fresh = false;
        }
    }
    OptimResult {
        x,
        f: fx,
        grad: g,
        iterations: opts.max_iter,
        evaluations: evals,
        converged: false,
        message: "iteration limit reached".into(),
    }
}
