use super::multiscale::{eps_ladder, eps_scaling};
use super::{NoObserver, SolveReport, SolverConfig, StopRule};
use crate::costs::CostFunction;
use crate::error::{check_len, Error, Result};
use crate::kernel::{MultiScaleProblem, ProblemSpec, Rho};
use crate::measures::GridGeometry;
use crate::proxdiv::MarginalFunction;
use crate::scalar::{ordered_sum, Real};

#[derive(Debug, Clone)]
pub struct FlowStep<T> {
    /// New density weights on the grid (exact zeros on barrier cells).
    pub measure: Vec<T>,
    pub report: SolveReport,
}

/// One entropic JKO step for the porous-medium energy Σ (m²/ℒ + v·m) with time step τ.
///
/// The first marginal is fixed to `mu`, the second is penalized by 2τ times the energy.
/// Solved on a single level with an ε ladder halving from the largest cost down to `eps`.
pub fn gradient_flow_step<T: Real>(
    grid: &GridGeometry<T>,
    mu: &[T],
    potential: &[T],
    eps: T,
    tau: T,
    config: &SolverConfig<T>,
) -> Result<FlowStep<T>> {
    check_len("flow measure", grid.len(), mu.len())?;
    check_len("flow potential", grid.len(), potential.len())?;
    if mu.iter().any(|&m| !(m >= T::zero() && m.is_finite())) || !(ordered_sum(mu) > T::zero()) {
        return Err(Error::InvalidInput("flow measure must be non-negative with positive mass".into()));
    }
    let vol = grid.spacing().powi(grid.dim() as i32);
    let lebesgue = vec![vol; grid.len()];
    let spec = ProblemSpec::new(
        grid.clone(),
        grid.clone(),
        CostFunction::squared_euclidean(grid, grid)?,
        Rho::Product { x: mu.to_vec(), y: lebesgue.clone() },
        MarginalFunction::fixed(mu.to_vec())?,
        MarginalFunction::porous_medium(tau, potential.to_vec(), lebesgue)?,
    )?;
    let ms = MultiScaleProblem::single_level(spec)?;
    let lp = ms.level(0)?;
    let ladder = eps_ladder(ms.spec().cost.max_finite().max(eps), eps, T::lit(0.5))?;
    let zeros = |n| vec![T::zero(); n];
    let sol = eps_scaling(&ms, 0, &ladder, zeros(lp.x_ids.len()), zeros(lp.y_ids.len()), config, &mut NoObserver)?;
    let measure = lp.expand_y(&sol.coupling.col_sums(), T::zero());
    Ok(FlowStep { measure, report: sol.report })
}

/// Repeated JKO steps with a fixed potential, time step and ε.
#[derive(Debug, Clone)]
pub struct PorousMediumFlow<T> {
    pub grid: GridGeometry<T>,
    /// Per-cell potential; +∞ marks a barrier.
    pub potential: Vec<T>,
    pub eps: T,
    pub tau: T,
    pub config: SolverConfig<T>,
}

impl<T: Real> PorousMediumFlow<T> {
    /// Uses a 1e-12 marginal tolerance so each step conserves mass to roughly n·1e-12.
    pub fn new(grid: GridGeometry<T>, potential: Vec<T>, eps: T, tau: T) -> Self {
        let config = SolverConfig { stop_rule: StopRule::LInfMarginal(T::lit(1e-12)), ..SolverConfig::default() };
        PorousMediumFlow { grid, potential, eps, tau, config }
    }

    pub fn step(&self, mu: &[T]) -> Result<FlowStep<T>> {
        gradient_flow_step(&self.grid, mu, &self.potential, self.eps, self.tau, &self.config)
    }

    /// Frames μ₁..μ_steps starting from `mu0` (which is not included).
    pub fn run(&self, mu0: &[T], steps: usize) -> Result<Vec<FlowStep<T>>> {
        let mut frames: Vec<FlowStep<T>> = Vec::with_capacity(steps);
        for _ in 0..steps {
            let next = self.step(frames.last().map_or(mu0, |f| &f.measure))?;
            frames.push(next);
        }
        Ok(frames)
    }
}
