//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the gradient norm falls below this.
    pub gradient_tolerance: f64,
    /// Stop when an accepted step lowers the objective by less than this
    /// (relative to `max(1, |f|)`).
    pub objective_tolerance: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iterations: 500,
            gradient_tolerance: 1e-10,
            objective_tolerance: 1e-15,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Gradient,
    Objective,
    LineSearch,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsResult {
    pub x: DVector<f64>,
    pub f: f64,
    pub iterations: usize,
    pub reason: StopReason,
    /// Objective after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

impl LbfgsResult {
    pub fn converged(&self) -> bool {
        matches!(self.reason, StopReason::Gradient | StopReason::Objective)
    }
}

/// Minimizes `objective`, which returns the value and gradient at a point,
/// or `None` if the point is outside the feasible region. The start must be
/// feasible. Infeasible trial points are handled by shrinking the step.
pub fn minimize<F>(mut objective: F, x0: DVector<f64>, options: &LbfgsOptions) -> Option<LbfgsResult>
where
    F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let mut x = x0;
    let (mut f, mut g) = objective(&x)?;
    let mut trace = vec![f];
    let mut history: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let reason = loop {
        if g.norm() < options.gradient_tolerance {
            break StopReason::Gradient;
        }
        if iterations >= options.max_iterations {
            break StopReason::MaxIterations;
        }
        iterations += 1;

        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            q *= s.dot(y) / y.dot(y);
        } else {
            q *= 1.0 / g.norm().max(1.0);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * y.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        let mut direction = -q;
        let mut slope = g.dot(&direction);
        if slope >= 0.0 {
            history.clear();
            direction = -g.clone();
            slope = -g.norm_squared();
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..options.max_backtracks {
            let trial = &x + &direction * step;
            if let Some((ft, gt)) = objective(&trial) {
                if ft.is_finite() && ft <= f + options.armijo * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break StopReason::LineSearch;
        };
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            if history.len() == options.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let decrease = f - f_new;
        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(f);
        if decrease <= options.objective_tolerance * f.abs().max(1.0) {
            break StopReason::Objective;
        }
    };
    Some(LbfgsResult {
        x,
        f,
        iterations,
        reason,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let rosen = |x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = DVector::from_vec(vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ]);
            Some((f, g))
        };
        let r = minimize(rosen, DVector::from_vec(vec![-1.2, 1.0]), &LbfgsOptions::default()).unwrap();
        assert!(r.converged());
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn respects_infeasible_region() {
        // minimum of (x-2)² restricted to x < 1.5
        let f = |x: &DVector<f64>| {
            (x[0] < 1.5).then(|| ((x[0] - 2.0).powi(2), DVector::from_element(1, 2.0 * (x[0] - 2.0))))
        };
        let r = minimize(f, DVector::from_element(1, 0.0), &LbfgsOptions::default()).unwrap();
        assert!(r.x[0] < 1.5 && r.x[0] > 1.4);
    }

    #[test]
    fn quadratic_converges_exactly() {
        let diag = [1.0, 10.0, 100.0, 1000.0];
        let f = |x: &DVector<f64>| {
            let v: f64 = (0..4).map(|i| diag[i] * x[i] * x[i]).sum();
            Some((v, DVector::from_fn(4, |i, _| 2.0 * diag[i] * x[i])))
        };
        let r = minimize(f, DVector::from_element(4, 1.0), &LbfgsOptions::default()).unwrap();
        assert!(r.f < 1e-16, "{}", r.f);
    }
}
