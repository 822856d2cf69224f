//! Maximum likelihood by Nelder–Mead in unconstrained coordinates, with a
//! finite-difference gradient check at the reported optimum.

use std::cell::Cell;

use argmin::core::{CostFunction, Error as ArgminError, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};

use super::{from_real, to_real, Family, InferenceError, Method, TimeSeries};

/// Cost assigned to infeasible points.
const PENALTY: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MleConfig {
    pub max_iters: u64,
    /// Standard deviation of the simplex values at convergence.
    pub sd_tolerance: f64,
    /// Edge length of the initial simplex in unconstrained coordinates.
    pub initial_step: f64,
    /// Restarts from the best vertex after convergence.
    pub restarts: usize,
    /// Success requires `‖∇ℓ(z)‖_∞ ≤ grad_tol` in unconstrained coordinates.
    pub grad_tol: f64,
    /// Central-difference step for the gradient.
    pub grad_step: f64,
}

impl Default for MleConfig {
    fn default() -> Self {
        MleConfig {
            max_iters: 4000,
            sd_tolerance: 1e-7,
            initial_step: 0.1,
            restarts: 1,
            grad_tol: 0.5,
            grad_step: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleReport {
    pub estimate: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: u64,
    pub evaluations: u64,
    /// Sup-norm of the gradient in unconstrained coordinates.
    pub gradient_norm: f64,
    pub converged: bool,
    pub success: bool,
    pub termination: String,
}

struct Negated<'a, F> {
    f: &'a F,
    count: &'a Cell<u64>,
}

impl<F: Fn(&[f64]) -> f64> CostFunction for Negated<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, z: &Self::Param) -> Result<f64, ArgminError> {
        self.count.set(self.count.get() + 1);
        let v = (self.f)(z);
        Ok(if v.is_finite() { -v } else { PENALTY })
    }
}

/// Maximizes `f` over `ℝ^d` from `z0`.
pub fn maximize<F: Fn(&[f64]) -> f64>(f: F, z0: &[f64], config: &MleConfig) -> Result<MleReport, InferenceError> {
    let start = f(z0);
    if !start.is_finite() {
        return Err(InferenceError::Invalid(format!("objective is not finite at the start {z0:?}")));
    }
    let count = Cell::new(1);
    let mut best = z0.to_vec();
    let mut iterations = 0;
    let mut converged = false;
    let mut termination = String::new();
    for _ in 0..=config.restarts {
        let mut simplex = vec![best.clone()];
        for i in 0..best.len() {
            let mut v = best.clone();
            v[i] += config.initial_step;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(config.sd_tolerance)
            .map_err(|e| InferenceError::Optimizer(e.to_string()))?;
        let problem = Negated { f: &f, count: &count };
        let res = Executor::new(problem, solver)
            .configure(|s| s.max_iters(config.max_iters))
            .run()
            .map_err(|e| InferenceError::Optimizer(e.to_string()))?;
        let state = res.state();
        iterations += state.get_iter();
        if let Some(p) = state.get_best_param() {
            best = p.clone();
        }
        converged = matches!(
            state.termination_status,
            TerminationStatus::Terminated(TerminationReason::SolverConverged)
        );
        termination = state.termination_status.to_string();
    }
    let value = f(&best);
    let h = config.grad_step;
    let mut gnorm: f64 = 0.0;
    for i in 0..best.len() {
        let mut up = best.clone();
        let mut dn = best.clone();
        up[i] += h;
        dn[i] -= h;
        let g = (f(&up) - f(&dn)) / (2.0 * h);
        gnorm = if g.is_finite() { gnorm.max(g.abs()) } else { f64::INFINITY };
    }
    let evaluations = count.get() + 1 + 2 * best.len() as u64;
    Ok(MleReport {
        estimate: best,
        log_likelihood: value,
        iterations,
        evaluations,
        gradient_norm: gnorm,
        converged,
        success: converged && value.is_finite() && gnorm <= config.grad_tol,
        termination,
    })
}

/// Maximum likelihood estimate for `family` from the feasible point `start`.
pub fn mle_fit(
    family: Family,
    data: &TimeSeries,
    method: Method,
    start: &[f64],
    config: &MleConfig,
) -> Result<MleReport, InferenceError> {
    if !family.feasible(start) {
        return Err(InferenceError::Invalid(format!("start {start:?} violates the parameter constraints")));
    }
    let tr = family.transforms();
    let objective = |z: &[f64]| family.log_likelihood_or_neg_inf(&from_real(&tr, z), data, method);
    let mut report = maximize(objective, &to_real(&tr, start), config)?;
    report.estimate = from_real(&tr, &report.estimate);
    Ok(report)
}
