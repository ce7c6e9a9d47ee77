//! Adadelta gradient ascent.

use serde::{Deserialize, Serialize};

use crate::error::{GpError, Result};

pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Per-coordinate running averages for Adadelta.
#[derive(Clone, Debug, PartialEq)]
pub struct AdadeltaState {
    pub rho: f64,
    pub epsilon: f64,
    pub mean_sq_grad: Vec<f64>,
    pub mean_sq_update: Vec<f64>,
    pub step_count: usize,
}

impl AdadeltaState {
    pub fn new(n: usize) -> Self {
        Self::with_params(n, DEFAULT_RHO, DEFAULT_EPSILON)
    }

    pub fn with_params(n: usize, rho: f64, epsilon: f64) -> Self {
        Self {
            rho,
            epsilon,
            mean_sq_grad: vec![0.0; n],
            mean_sq_update: vec![0.0; n],
            step_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.mean_sq_grad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_sq_grad.is_empty()
    }

    /// Updates the accumulators in place and returns the ascent step.
    pub fn step(&mut self, grad: &[f64]) -> Result<Vec<f64>> {
        if grad.len() != self.len() {
            return Err(GpError::input(format!(
                "gradient has {} coordinates, optimizer expects {}",
                grad.len(),
                self.len()
            )));
        }
        if let Some(c) = grad.iter().position(|g| !g.is_finite()) {
            return Err(GpError::NonFiniteGradient { coordinate: c });
        }
        let (rho, eps) = (self.rho, self.epsilon);
        let mut delta = vec![0.0; grad.len()];
        for (c, &g) in grad.iter().enumerate() {
            self.mean_sq_grad[c] = rho * self.mean_sq_grad[c] + (1.0 - rho) * g * g;
            let d = (self.mean_sq_update[c] + eps).sqrt() / (self.mean_sq_grad[c] + eps).sqrt() * g;
            self.mean_sq_update[c] = rho * self.mean_sq_update[c] + (1.0 - rho) * d * d;
            delta[c] = d;
        }
        self.step_count += 1;
        Ok(delta)
    }
}

/// Functional form of [`AdadeltaState::step`].
pub fn adadelta_step(state: &AdadeltaState, grad: &[f64]) -> Result<(AdadeltaState, Vec<f64>)> {
    let mut next = state.clone();
    let delta = next.step(grad)?;
    Ok((next, delta))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceSpec {
    pub objective_tol: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Number of consecutive objective changes that must all fall below
    /// `objective_tol`.
    pub window: usize,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            objective_tol: 1e-4,
            grad_tol: 1e-6,
            max_iters: 1000,
            window: 5,
        }
    }
}

impl ConvergenceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.objective_tol > 0.0 && self.grad_tol > 0.0) {
            return Err(GpError::input("convergence tolerances must be positive"));
        }
        if self.window == 0 {
            return Err(GpError::input("convergence window must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AscentStatus {
    Converged,
    BudgetExhausted,
    /// The objective or gradient stopped being finite; the best earlier
    /// iterate was returned.
    NonFinite,
}

#[derive(Clone, Debug)]
pub struct AscentResult {
    pub params: Vec<f64>,
    pub objective: f64,
    pub gradient: Vec<f64>,
    /// Number of parameter updates taken.
    pub iterations: usize,
    pub status: AscentStatus,
    /// Objective at the start and after every update.
    pub trace: Vec<f64>,
    /// Optimizer accumulators at exit, for warm restarts.
    pub state: AdadeltaState,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, g| m.max(g.abs()))
}

/// Maximizes `f`, which returns the objective and its gradient. The best
/// iterate seen is returned, never a worse later one.
pub fn run_ascent<F>(mut f: F, x0: &[f64], mut state: AdadeltaState, spec: &ConvergenceSpec) -> Result<AscentResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    spec.validate()?;
    let (obj0, g0) = f(x0)?;
    if !obj0.is_finite() {
        return Err(GpError::numerical("objective is not finite at the starting point"));
    }
    let mut x = x0.to_vec();
    let mut best = (x.clone(), obj0, g0.clone());
    let mut g = g0;
    let mut prev = obj0;
    let mut trace = vec![obj0];
    let mut small_changes = 0;
    let mut iterations = 0;

    let status = loop {
        if max_abs(&g) < spec.grad_tol {
            break AscentStatus::Converged;
        }
        if iterations >= spec.max_iters {
            break AscentStatus::BudgetExhausted;
        }
        let delta = match state.step(&g) {
            Ok(d) => d,
            Err(_) => break AscentStatus::NonFinite,
        };
        for (xi, d) in x.iter_mut().zip(&delta) {
            *xi += d;
        }
        iterations += 1;
        let (obj, grad) = match f(&x) {
            Ok((o, gr)) if o.is_finite() => (o, gr),
            Ok(_) | Err(_) => {
                log::debug!("ascent stopped at iteration {iterations}: non-finite objective");
                break AscentStatus::NonFinite;
            }
        };
        trace.push(obj);
        if obj > best.1 {
            best = (x.clone(), obj, grad.clone());
        }
        if (obj - prev).abs() < spec.objective_tol {
            small_changes += 1;
        } else {
            small_changes = 0;
        }
        prev = obj;
        g = grad;
        if small_changes >= spec.window {
            break AscentStatus::Converged;
        }
    };

    Ok(AscentResult {
        params: best.0,
        objective: best.1,
        gradient: best.2,
        iterations,
        status,
        trace,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_value() {
        let (s, d) = adadelta_step(&AdadeltaState::new(1), &[1.0]).unwrap();
        let expected = 1e-6f64.sqrt() / (0.05f64 + 1e-6).sqrt();
        assert!((d[0] - expected).abs() < 1e-15);
        assert!((d[0] - 0.0044721).abs() < 1e-7);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn zero_gradient_leaves_accumulators() {
        let s0 = AdadeltaState::new(3);
        let (s, d) = adadelta_step(&s0, &[0.0; 3]).unwrap();
        assert_eq!(d, vec![0.0; 3]);
        assert_eq!(s.mean_sq_grad, s0.mean_sq_grad);
        assert_eq!(s.mean_sq_update, s0.mean_sq_update);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn non_finite_gradient_names_coordinate() {
        let err = adadelta_step(&AdadeltaState::new(3), &[0.0, 1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, GpError::NonFiniteGradient { coordinate: 2 }));
    }

    fn quadratic(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0] - 1.5, x[1] + 0.7);
        // curvature below 2: near the optimum Adadelta behaves like plain
        // ascent with unit rate and would cycle on stiffer directions
        Ok((-0.5 * a * a - 0.3 * b * b - 0.2 * a * b, vec![-a - 0.2 * b, -0.6 * b - 0.2 * a]))
    }

    #[test]
    fn concave_quadratic_reaches_maximizer() {
        let spec = ConvergenceSpec {
            objective_tol: 1e-9,
            grad_tol: 1e-6,
            max_iters: 20000,
            window: 5,
        };
        let r = run_ascent(quadratic, &[0.0, 0.0], AdadeltaState::new(2), &spec).unwrap();
        assert_eq!(r.status, AscentStatus::Converged, "{:?} after {}", r.params, r.iterations);
        assert!((r.params[0] - 1.5).abs() < 1e-3 && (r.params[1] + 0.7).abs() < 1e-3, "{:?}", r.params);
    }

    #[test]
    fn converged_start_takes_no_steps() {
        let r = run_ascent(quadratic, &[1.5, -0.7], AdadeltaState::new(2), &ConvergenceSpec::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.status, AscentStatus::Converged);
    }

    #[test]
    fn zero_budget_returns_start() {
        let spec = ConvergenceSpec {
            max_iters: 0,
            ..Default::default()
        };
        let r = run_ascent(quadratic, &[0.0, 0.0], AdadeltaState::new(2), &spec).unwrap();
        assert_eq!(r.status, AscentStatus::BudgetExhausted);
        assert_eq!(r.params, vec![0.0, 0.0]);
    }

    #[test]
    fn non_finite_objective_rolls_back_to_best() {
        let mut calls = 0;
        let f = |x: &[f64]| {
            calls += 1;
            if calls > 10 {
                Ok((f64::NAN, vec![1.0]))
            } else {
                Ok((x[0], vec![1.0]))
            }
        };
        let r = run_ascent(f, &[0.0], AdadeltaState::new(1), &ConvergenceSpec::default()).unwrap();
        assert_eq!(r.status, AscentStatus::NonFinite);
        assert_eq!(r.objective, *r.trace.iter().max_by(|a, b| a.total_cmp(b)).unwrap());
    }

    #[test]
    fn best_so_far_is_monotone_and_deterministic() {
        let f = |x: &[f64]| Ok(((3.0 * x[0]).sin() - 0.1 * x[0] * x[0], vec![3.0 * (3.0 * x[0]).cos() - 0.2 * x[0]]));
        let spec = ConvergenceSpec {
            max_iters: 300,
            ..Default::default()
        };
        let a = run_ascent(f, &[2.0], AdadeltaState::new(1), &spec).unwrap();
        let b = run_ascent(f, &[2.0], AdadeltaState::new(1), &spec).unwrap();
        assert_eq!(a.params, b.params);
        let best = a.trace.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.objective, best);
    }
}
