//! Training orchestration: transfer-learning configuration, a pluggable
//! trainer seam, loss monitoring with convergence detection, and packaging
//! of the trained weights for embedding in an app.
//!
//! No learning happens here. A [`TrainerAdapter`] does the actual work and
//! streams `(step, loss)` pairs back; [`MockTrainer`] plays a scripted curve
//! so the pipeline runs without any ML runtime.

mod config;
mod convergence;
mod package;
mod run;
mod trainer;

use thiserror::Error;

pub use config::{build_training_config, SplitRef, TrainingConfig, TrainingOverrides, DEFAULT_MAX_STEPS};
pub use convergence::{check_convergence, convergence_step, ConvergenceDecision, ConvergencePolicy, LossPoint};
pub use package::{package_model, sha256_hex, verify_package, ModelPackage};
pub use run::{pump, start_training, RunStatus, RunStore, SharedRun, TrainingRun};
pub use trainer::{
    read_handoff_config, write_handoff, ArtifactMeta, DirectoryTrainer, MockTrainer, TrainerAdapter, TrainerArtifacts,
    TrainerEvent, TrainingJob, ARTIFACT_FILE, ARTIFACT_META_FILE, FAILED_FILE, HANDOFF_CONFIG, LOSS_LOG, STOP_FILE,
};

use crate::models::ModelError;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error(transparent)]
    ClassCapacity(#[from] ModelError),

    #[error("no dataset split is available for training")]
    MissingSplit,

    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),

    #[error("trainer unavailable: {0}")]
    TrainerUnavailable(String),

    #[error("step {step} is not after the last recorded step {last}")]
    OutOfOrderStep { step: u64, last: u64 },

    #[error("loss {0} is not a finite non-negative number")]
    InvalidLoss(f64),

    #[error("run {run_id} is {status}, not running")]
    RunNotActive { run_id: String, status: RunStatus },

    #[error("run {run_id} is {status}; only finished runs can be packaged")]
    RunNotFinished { run_id: String, status: RunStatus },

    #[error("artifact {path} is missing: {message}")]
    ArtifactMissing { path: String, message: String },

    #[error("artifact {path} checksum {actual} does not match {expected}")]
    ChecksumMismatch {
        path: String,
        expected: String,
        actual: String,
    },

    #[error("unknown run {0}")]
    UnknownRun(String),

    #[error("trainer protocol: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TrainingError {
    pub fn code(&self) -> &'static str {
        match self {
            TrainingError::ClassCapacity(e) => e.code(),
            TrainingError::MissingSplit => "MISSING_SPLIT",
            TrainingError::InvalidConfig(_) => "INVALID_CONFIG",
            TrainingError::TrainerUnavailable(_) => "TRAINER_UNAVAILABLE",
            TrainingError::OutOfOrderStep { .. } => "OUT_OF_ORDER_STEP",
            TrainingError::InvalidLoss(_) => "INVALID_LOSS",
            TrainingError::RunNotActive { .. } => "RUN_NOT_ACTIVE",
            TrainingError::RunNotFinished { .. } => "RUN_NOT_FINISHED",
            TrainingError::ArtifactMissing { .. } => "ARTIFACT_MISSING",
            TrainingError::ChecksumMismatch { .. } => "CHECKSUM_MISMATCH",
            TrainingError::UnknownRun(_) => "UNKNOWN_RUN",
            TrainingError::Protocol(_) => "TRAINER_PROTOCOL",
            TrainingError::Io(_) => "IO_ERROR",
        }
    }
}
