//! Scaling algorithms: naive, stabilized with truncation, ε-scaling, the full multi-scale
//! driver, and the application solvers built on them.

mod barycenter;
mod flow;
mod multimarginal;
mod multiscale;
mod naive;
mod stabilized;

pub use barycenter::{solve_barycenter, BarycenterModel, BarycenterProblem, BarycenterSolution};
pub use flow::{gradient_flow_step, FlowStep, PorousMediumFlow};
pub use multimarginal::{project_barycenter, solve_multi_marginal, CostTensor, MultiMarginalSolution};
pub use multiscale::{default_eps_lists, eps_ladder, eps_scaling, solve_full};
pub use naive::scaling_algorithm;
pub use stabilized::scaling_algorithm_stabilized;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{LevelProblem, SparseKernel};
use crate::scalar::Real;

/// Relative scaling factors and absorbed duals: u = ũ·exp(α̂/ε), v = ṽ·exp(β̂/ε).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingState<T> {
    pub u_tilde: Vec<T>,
    pub v_tilde: Vec<T>,
    pub alpha_hat: Vec<T>,
    pub beta_hat: Vec<T>,
    pub eps: T,
}

impl<T: Real> ScalingState<T> {
    /// Fresh state at the given duals with ũ = ṽ = 1.
    pub fn new(alpha_hat: Vec<T>, beta_hat: Vec<T>, eps: T) -> Self {
        ScalingState {
            u_tilde: vec![T::one(); alpha_hat.len()],
            v_tilde: vec![T::one(); beta_hat.len()],
            alpha_hat,
            beta_hat,
            eps,
        }
    }

    /// α = α̂ + ε log ũ.
    pub fn alpha(&self) -> Vec<T> {
        self.alpha_hat.iter().zip(&self.u_tilde).map(|(&a, &u)| a + self.eps * u.ln()).collect()
    }

    /// β = β̂ + ε log ṽ.
    pub fn beta(&self) -> Vec<T> {
        self.beta_hat.iter().zip(&self.v_tilde).map(|(&b, &v)| b + self.eps * v.ln()).collect()
    }

    /// Moves ũ, ṽ into the absorbed duals and resets them to ones.
    pub fn absorb(&mut self) {
        self.alpha_hat = self.alpha();
        self.beta_hat = self.beta();
        self.u_tilde.iter_mut().for_each(|u| *u = T::one());
        self.v_tilde.iter_mut().for_each(|v| *v = T::one());
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule<T> {
    /// Largest absolute error of the fixed marginals.
    LInfMarginal(T),
    /// Restricted primal-dual gap.
    PrimalDualGap(T),
    FixedIterations(usize),
    /// Total coupling mass reaches the target.
    MassTarget(T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    pub theta: T,
    pub tau: T,
    /// Decreasing ε lists indexed by partition level (index 0 is the finest).
    pub eps_lists: Vec<Vec<T>>,
    pub stop_rule: StopRule<T>,
    /// Iteration cap per ε value.
    pub max_iterations: usize,
    pub absorption_check_every: usize,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            theta: T::lit(1e-20),
            tau: T::lit(1e2),
            eps_lists: Vec::new(),
            stop_rule: StopRule::LInfMarginal(T::lit(1e-7)),
            max_iterations: 100_000,
            absorption_check_every: 1,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > T::zero()) {
            return Err(Error::InvalidInput(format!("theta must be > 0, got {}", self.theta)));
        }
        if !(self.tau > T::one()) {
            return Err(Error::InvalidInput(format!("tau must be > 1, got {}", self.tau)));
        }
        if self.absorption_check_every == 0 {
            return Err(Error::InvalidInput("absorption_check_every must be >= 1".into()));
        }
        for (i, list) in self.eps_lists.iter().enumerate() {
            check_eps_list(list).map_err(|e| Error::InvalidInput(format!("eps list for level {i}: {e}")))?;
        }
        Ok(())
    }
}

pub(crate) fn check_eps_list<T: Real>(list: &[T]) -> Result<()> {
    if list.iter().any(|&e| !(e > T::zero() && e.is_finite())) {
        return Err(Error::InvalidInput("eps values must be positive and finite".into()));
    }
    if list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput("eps list must be strictly decreasing".into()));
    }
    Ok(())
}

/// Summary of a solve, serialized with camelCase field names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolveReport {
    pub iterations: usize,
    pub final_eps: f64,
    pub marginal_error_l_inf: f64,
    pub primal_dual_gap: f64,
    pub truncation_bound: f64,
    pub primal_value: f64,
    pub absorption_count: usize,
    pub per_eps_iteration_counts: Vec<usize>,
    #[serde(skip)]
    pub converged: bool,
}

impl SolveReport {
    /// Folds a later stage into this one: counts add up, final figures come from `next`.
    pub(crate) fn chain(&mut self, next: SolveReport) {
        self.iterations += next.iterations;
        self.absorption_count += next.absorption_count;
        self.per_eps_iteration_counts.extend(next.per_eps_iteration_counts);
        self.final_eps = next.final_eps;
        self.marginal_error_l_inf = next.marginal_error_l_inf;
        self.primal_dual_gap = next.primal_dual_gap;
        self.truncation_bound = next.truncation_bound;
        self.primal_value = next.primal_value;
        self.converged = next.converged;
    }
}

/// Result of a two-marginal solve at one level.
#[derive(Debug, Clone)]
pub struct Solution<T> {
    /// Final state after the closing absorption (ũ = ṽ = 1).
    pub state: ScalingState<T>,
    pub report: SolveReport,
    /// Optimal coupling estimate on the final kernel support, in compact indices.
    pub coupling: SparseKernel<T>,
    /// Number of entries of the last truncated kernel.
    pub kernel_nnz: usize,
    pub level: usize,
}

impl<T: Real> Solution<T> {
    /// Coupling triples in level-cell ids, row-major sorted.
    pub fn coupling_triples(&self, lp: &LevelProblem<T>) -> Vec<(usize, usize, T)> {
        let mut t: Vec<_> = self.coupling.triples().map(|(r, c, v)| (lp.x_ids[r], lp.y_ids[c], v)).collect();
        t.sort_by_key(|&(r, c, _)| (r, c));
        t
    }
}

/// An absorption as seen by an [`Observer`].
pub struct AbsorptionEvent<'a, T> {
    pub level: usize,
    pub problem: &'a LevelProblem<T>,
    pub theta: T,
    pub before: &'a ScalingState<T>,
    pub old_kernel: &'a SparseKernel<T>,
    pub after: &'a ScalingState<T>,
    pub new_kernel: &'a SparseKernel<T>,
}

/// Instrumentation hooks; all methods default to no-ops.
pub trait Observer<T> {
    fn iteration(&mut self, _level: usize, _iteration: usize, _state: &ScalingState<T>) {}
    fn absorption(&mut self, _event: &AbsorptionEvent<'_, T>) {}
}

pub struct NoObserver;

impl<T> Observer<T> for NoObserver {}

pub(crate) fn to_f64<T: Real>(x: T) -> f64 {
    x.as_f64()
}
