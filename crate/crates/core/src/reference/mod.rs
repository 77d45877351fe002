//! Reference algorithms and experiments: auction, asynchronous Sinkhorn, an exact LP oracle,
//! the dual stability check under ε-scaling, and iteration-count studies.

mod async_sinkhorn;
mod auction;
mod lp;
mod stability;
mod study;

pub use async_sinkhorn::{async_sinkhorn, coupling_mass, AsyncSinkhornResult};
pub use auction::{auction_solve, auction_solve_traced, AssignmentInstance, AuctionResult};
pub use lp::{lp_oracle, LpSolution, LP_SIDE_LIMIT};
pub use stability::{stability_experiment, stability_bound, AtomicMarginals, StabilityReport};
pub use study::{fit_log_log_slope, iteration_scaling_study, StudyRow, StudyTable};
