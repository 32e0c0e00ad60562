//! Hierarchical information bottleneck solvers and a task-driven scene-graph
//! pipeline built on top of them.

pub mod error;
pub mod graph;
pub mod hierarchy;
pub mod io;
pub mod metrics;
pub mod prob;
pub mod solver;
pub mod task_update;

pub use error::{Error, Result};
pub use prob::{
    bayes_invert, chain, entropy, kl_divergence, marginal, mutual_information, CondTable, Dist,
};
pub use solver::{
    distortion, effective_cluster_count, fixed_point_residual, initial_state, objective,
    solve_hdib, solve_hdib_observed, solve_hib, solve_hib_observed, solve_ib, solve_sequential_ib,
    update_level, HibProblem, HibState, Init, SolveOptions, SolveReport, UpdateRule,
};
