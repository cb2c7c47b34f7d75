//! Seeded experiment batches: spec files, problem generation, trial
//! execution, trimmed-mean aggregation, and CSV export.
//!
//! Each trial draws its problem from `(seed, trial, k0, m)` and its solver
//! randomness from `(seed, grid point, trial, sub-trial)`, so a spec and seed
//! determine every number in the output. Trials run on rayon when the
//! `parallel` feature is on; results are always collected in grid order.

pub mod aggregate;
pub mod export;
pub mod generate;
pub mod run;
pub mod spec;

pub use aggregate::{
    epoch_curves, min_measurements, recovery_table, trim_count, trimmed_indices, trimmed_mean, BlockLabel, CurveRow,
    MinMeasurementRow, RecoveryRow,
};
pub use export::export_csv;
pub use generate::{draw_problem, ProblemDraw};
pub use run::{run_experiment, run_experiment_with, solver_config, trial_problem, CurvePoint, Execution, TrialSet, TrialSummary};
pub use spec::{Ensemble, ExperimentKind, ExperimentSpec, GridPoint, ProjectionKind, SignalKind, SolverKind};

use thiserror::Error;

use crate::atoms::AtomError;
use crate::objectives::ObjectiveError;
use crate::solvers::SolverError;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// The spec cannot be run as written.
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Atom(#[from] AtomError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
