//! Experiment sweeps, statistics and result files.

mod experiment;
pub mod output;
pub mod stats;

use thiserror::Error;

pub use experiment::{
    run_experiment, run_hoplimit_study, run_learning_curve, run_prepared, CurveSample,
    ExperimentReport, ExperimentSpec, LearningCurve, Measurement, ParallelSpec, Point,
    PointOutcome, Prepared, ResultRow, RoundHook, RoundTiming, RowSeed, HISTOGRAM_CELLS,
};

use crate::engine::SimError;
use crate::learner::LearnerError;
use crate::parallel::ParallelError;
use crate::topology::TopologyError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Parallel(#[from] ParallelError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}
