//! Stabilized sparse multi-scale scaling algorithms for entropic transport problems.
//!
//! Everything numeric is generic over [`scalar::Real`]; the aliases below fix `f64`.

pub mod costs;
pub mod error;
pub mod hierarchy;
pub mod io;
pub mod kernel;
pub mod measures;
pub mod proxdiv;
pub mod reference;
pub mod scalar;
pub mod solvers;

pub use error::{Error, Result};
pub use scalar::Real;

pub type GridGeometry = measures::GridGeometry<f64>;
pub type DiscreteMeasure = measures::DiscreteMeasure<f64>;
pub type CostFunction = costs::CostFunction<f64>;
pub type HierarchicalPartition = hierarchy::HierarchicalPartition<f64>;
pub type MarginalFunction = proxdiv::MarginalFunction<f64>;
pub type ProblemSpec = kernel::ProblemSpec<f64>;
pub type MultiScaleProblem = kernel::MultiScaleProblem<f64>;
pub type SparseKernel = kernel::SparseKernel<f64>;
pub type ScalingState = solvers::ScalingState<f64>;
pub type SolverConfig = solvers::SolverConfig<f64>;
pub type StopRule = solvers::StopRule<f64>;
pub type Solution = solvers::Solution<f64>;
pub type BarycenterProblem = solvers::BarycenterProblem<f64>;
pub type PorousMediumFlow = solvers::PorousMediumFlow<f64>;
pub use solvers::SolveReport;
