//! Benchmark harness: problem construction, trial driver, CSV logs, and
//! cross-trial aggregation.

pub mod problems;
pub mod records;
pub mod runner;

pub use problems::{
    CoordinateSystem, ObjectiveId, ProblemInstance, box_bounds, d_crit, kkt_optimum,
    make_problem, objective_eval, rotation_matrix,
};
pub use records::{AggregateRecord, RunLogRecord};
pub use runner::{ConstraintHandling, aggregate, run_batch, run_trial};

use crate::arch::ArchError;
use crate::baselines::BaselineError;
use crate::cmaes::CmaError;
use crate::constraints::ConstraintError;
use crate::numerics::NumericsError;
use crate::repair::RepairError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {message}")]
    InvalidConfiguration { message: String },
    #[error("optimum verification failed: {message}")]
    OptimumVerification { message: String },
    #[error("log parse error at line {line}: {message}")]
    LogParse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Cma(#[from] CmaError),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Repair(#[from] RepairError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
