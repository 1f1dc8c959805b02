//! Dataset construction: frame-extraction plans, seeded splits, label
//! statistics and the per-class sufficiency advisor.

mod frames;
mod split;
mod stats;

use thiserror::Error;

pub use frames::{plan_frame_extraction, FramePlan, MAX_PLANNED_FRAMES};
pub use split::{
    apportion, read_split_manifests, split_dataset, write_split_manifests, SplitRatio, SplitResult, Stratum,
    StratumSplit, SPLIT_SIDECAR,
};
pub use stats::{
    advise_sufficiency, dataset_stats, tier_for, AdvisoryReport, DatasetStats, SufficiencyTier, GOOD_MIN_IMAGES,
    MARGINAL_MIN_IMAGES, OPTIMAL_MIN_IMAGES,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{what} must be a positive finite number, got {value}")]
    InvalidRate { what: &'static str, value: f64 },

    #[error("plan would hold {count} frames, above the limit of {limit}")]
    TooManyFrames { count: f64, limit: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid split ratio: {0}")]
    InvalidRatio(String),

    #[error("split manifest {path}: {message}")]
    Manifest { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DatasetError {
    pub fn code(&self) -> &'static str {
        match self {
            DatasetError::InvalidRate { .. } => "INVALID_RATE",
            DatasetError::TooManyFrames { .. } => "TOO_MANY_FRAMES",
            DatasetError::EmptyDataset => "EMPTY_DATASET",
            DatasetError::InvalidRatio(_) => "INVALID_RATIO",
            DatasetError::Manifest { .. } => "MANIFEST_ERROR",
            DatasetError::Io(_) => "IO_ERROR",
        }
    }
}
