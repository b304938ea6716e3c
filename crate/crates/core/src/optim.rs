//! Box-constrained L-BFGS with projected backtracking line search.
//!
//! Used for hyperparameter fitting (log space) and for refining acquisition
//! maxima. Objectives return `(value, gradient)`; non-finite values are
//! treated as +∞ by the line search.

use nalgebra::DVector;
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    /// Stop once the projected gradient's ∞-norm drops below this.
    pub gradient_tolerance: f64,
    pub memory: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { max_iters: 200, gradient_tolerance: 1e-6, memory: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub line_search_failed: bool,
}

fn project(x: &mut DVector<f64>, bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

fn projected_gradient(x: &DVector<f64>, g: &DVector<f64>, bounds: &[(f64, f64)]) -> DVector<f64> {
    let mut pg = g.clone();
    for i in 0..x.len() {
        let (lo, hi) = bounds[i];
        if (x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0) {
            pg[i] = 0.0;
        }
    }
    pg
}

/// Minimizes `f` over the box `bounds` starting from `x0` (projected first).
pub fn minimize_bounded<F>(mut f: F, x0: &DVector<f64>, bounds: &[(f64, f64)], opts: LbfgsOptions) -> MinimizeResult
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    assert_eq!(x0.len(), bounds.len());
    let mut x = x0.clone();
    project(&mut x, bounds);
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() {
        return MinimizeResult { x, value: f64::INFINITY, iterations: 0, converged: false, line_search_failed: true };
    }
    let mut memory: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut converged = false;
    let mut line_search_failed = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        let pg = projected_gradient(&x, &g, bounds);
        if pg.amax() < opts.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        // two-loop recursion on the projected gradient
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        let gamma = match memory.back() {
            Some((s, y, _)) => s.dot(y) / y.dot(y),
            None => 1.0 / pg.amax().max(1.0),
        };
        q *= gamma;
        for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
            let b = rho * y.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        let mut d = -q;
        for i in 0..d.len() {
            let (lo, hi) = bounds[i];
            if (x[i] <= lo && d[i] < 0.0) || (x[i] >= hi && d[i] > 0.0) {
                d[i] = 0.0;
            }
        }
        if g.dot(&d) >= 0.0 {
            memory.clear();
            d = -&pg / pg.amax().max(1.0);
        }

        let mut accepted = None;
        for attempt in 0..2 {
            let mut t = 1.0;
            for _ in 0..50 {
                let mut xn = &x + &d * t;
                project(&mut xn, bounds);
                let step = &xn - &x;
                if step.amax() == 0.0 {
                    break;
                }
                let (fnew, gnew) = f(&xn);
                if fnew.is_finite() && fnew <= fx + 1e-4 * g.dot(&step) {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
                t *= 0.5;
            }
            if accepted.is_some() || attempt == 1 || memory.is_empty() {
                break;
            }
            memory.clear();
            d = -&pg / pg.amax().max(1.0);
        }

        let Some((xn, fnew, gnew)) = accepted else {
            line_search_failed = true;
            break;
        };
        let s = &xn - &x;
        let y = &gnew - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        let decrease = fx - fnew;
        x = xn;
        fx = fnew;
        g = gnew;
        if decrease.abs() <= 1e-15 * fx.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    MinimizeResult { x, value: fx, iterations, converged, line_search_failed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_unconstrained() {
        let f = |x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = DVector::from_vec(vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ]);
            (v, g)
        };
        let r = minimize_bounded(
            f,
            &DVector::from_vec(vec![-1.2, 1.0]),
            &[(-5.0, 5.0), (-5.0, 5.0)],
            LbfgsOptions { max_iters: 500, ..Default::default() },
        );
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn active_bound() {
        // minimum of (x-3)^2 on [0, 1] is at the upper bound
        let f = |x: &DVector<f64>| ((x[0] - 3.0).powi(2), DVector::from_element(1, 2.0 * (x[0] - 3.0)));
        let r = minimize_bounded(f, &DVector::from_element(1, 0.2), &[(0.0, 1.0)], LbfgsOptions::default());
        assert_eq!(r.x[0], 1.0);
        assert!(r.converged);
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &DVector<f64>| ((x[0] * 3.0).sin() + x[0] * x[0] * 0.1, DVector::from_element(1, 3.0 * (x[0] * 3.0).cos() + 0.2 * x[0]));
        for start in [-4.0, -1.0, 0.3, 2.0, 4.5] {
            let x0 = DVector::from_element(1, start);
            let (f0, _) = f(&x0);
            let r = minimize_bounded(f, &x0, &[(-5.0, 5.0)], LbfgsOptions::default());
            assert!(r.value <= f0);
        }
    }
}
