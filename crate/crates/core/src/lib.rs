//! Greedy randomized average block projection (GRABP) for linear
//! feasibility problems `Ax <= b`, with row-action baselines, instance
//! generators and readers, and reference analysis tools.

pub mod analysis;
pub mod linalg;
pub mod problem;
pub mod rng;
pub mod selection;
pub mod solvers;

pub use linalg::{Block, BlockView, LinalgError, RowMatrix};
pub use problem::{FeasibilityProblem, LpInstance, ProblemError, Provenance};
pub use selection::{Partition, ProbabilityCriterion};
pub use solvers::{
    run, GrabpConfig, Method, RunOptions, RunReport, SkmParams, StepsizePolicy, StepsizeSpec, StopReason,
    StoppingCriterion,
};
