//! Derivative-free local refinement: Nelder–Mead in coordinates scaled by
//! per-axis initial steps, restarted from the incumbent with shrinking steps.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;

struct Scaled<'a, F: Fn(&[f64]) -> f64> {
    f: &'a F,
    x0: &'a [f64],
    steps: &'a [f64],
}

impl<F: Fn(&[f64]) -> f64> Scaled<'_, F> {
    fn unscale(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.x0)
            .zip(self.steps)
            .map(|((u, x), s)| x + u * s)
            .collect()
    }
}

impl<F: Fn(&[f64]) -> f64> CostFunction for Scaled<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, u: &Self::Param) -> Result<f64, argmin::core::Error> {
        let v = (self.f)(&self.unscale(u));
        Ok(if v.is_finite() { v } else { f64::MAX })
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub cost: f64,
    /// Best cost after each restart, starting with the initial point.
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0`; the result never has a higher cost than `x0`.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], steps: &[f64], max_evals: usize) -> SimplexResult {
    let dim = x0.len();
    let c0 = f(x0);
    let mut best_x = x0.to_vec();
    let mut best_c = c0;
    let mut trace = vec![c0];
    let mut evals = 1;
    let mut converged = false;
    let mut scale = 1.0;
    let mut step_now: Vec<f64> = steps.to_vec();
    for _restart in 0..4 {
        if evals >= max_evals || dim == 0 {
            break;
        }
        let problem = Scaled {
            f,
            x0: &best_x,
            steps: &step_now,
        };
        let mut simplex = vec![vec![0.0; dim]];
        for i in 0..dim {
            let mut v = vec![0.0; dim];
            v[i] = 1.0;
            simplex.push(v);
        }
        let tol = (1e-11 * c0.abs()).max(f64::MIN_POSITIVE);
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(tol)
            .expect("valid tolerance");
        let budget = ((max_evals - evals) / 2).max(dim + 2) as u64;
        let res = Executor::new(problem, solver)
            .configure(|s| s.max_iters(budget))
            .run();
        let Ok(res) = res else { break };
        let state = res.state();
        evals += state.get_func_counts().values().sum::<u64>() as usize;
        let cost = state.get_best_cost();
        let Some(u) = state.get_best_param() else { break };
        let improved = cost < best_c;
        if improved {
            let problem = Scaled {
                f,
                x0: &best_x,
                steps: &step_now,
            };
            best_x = problem.unscale(u);
            best_c = cost;
        }
        trace.push(best_c);
        let stalled = !improved || (trace[trace.len() - 2] - best_c) <= 1e-10 * best_c.abs();
        if stalled {
            converged = true;
            break;
        }
        scale *= 0.25;
        step_now = steps.iter().map(|s| s * scale).collect();
    }
    SimplexResult {
        x: best_x,
        cost: best_c,
        trace,
        evaluations: evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2e-8 * 1e8).powi(2);
        let r = minimize(&f, &[0.0, 0.0], &[0.5, 0.5], 5000);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] + 2.0).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn handles_badly_scaled_axes() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + ((x[1] - 5e-9) / 1e-9).powi(2);
        let r = minimize(&f, &[2.0, 0.0], &[0.5, 1e-9], 5000);
        assert!((r.x[1] - 5e-9).abs() < 1e-13);
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| x[0].abs().sqrt();
        let r = minimize(&f, &[0.0], &[1.0], 100);
        assert_eq!(r.cost, 0.0);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
