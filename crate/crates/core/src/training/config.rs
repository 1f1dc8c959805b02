use serde::{Deserialize, Serialize};

use super::{ConvergencePolicy, TrainingError};
use crate::dataset::SplitResult;
use crate::domain::{validate_label_map, LabelMap};
use crate::models::{check_class_capacity, ModelRegistryEntry};

/// Step budget when none is given. Runs that reach it end as
/// `max_steps_reached` and can still be packaged.
pub const DEFAULT_MAX_STEPS: u64 = 40_000;

/// Where a split's manifests live, plus its subset sizes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRef {
    pub manifest_dir: String,
    pub seed: u64,
    pub train: usize,
    pub test: usize,
    pub eval: usize,
}

impl SplitRef {
    pub fn new(manifest_dir: impl Into<String>, split: &SplitResult) -> Self {
        let (train, test, eval) = split.sizes();
        Self {
            manifest_dir: manifest_dir.into(),
            seed: split.seed,
            train,
            test,
            eval,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub model: ModelRegistryEntry,
    /// Pre-trained checkpoint the run fine-tunes from.
    pub base_weights: String,
    pub split: SplitRef,
    pub label_map: LabelMap,
    pub max_steps: u64,
    pub convergence: ConvergencePolicy,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingOverrides {
    #[serde(default)]
    pub max_steps: Option<u64>,
    #[serde(default)]
    pub loss_threshold: Option<f64>,
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default)]
    pub patience: Option<usize>,
    #[serde(default)]
    pub base_weights: Option<String>,
}

/// COCO-pretrained checkpoint reference for a registry model.
fn default_base_weights(model: &ModelRegistryEntry) -> String {
    let slug: String = model
        .name
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("-");
    format!("pretrained/coco/{slug}")
}

pub fn build_training_config(
    label_map: &LabelMap,
    model: &ModelRegistryEntry,
    split: Option<&SplitRef>,
    overrides: &TrainingOverrides,
) -> Result<TrainingConfig, TrainingError> {
    let report = validate_label_map(label_map);
    if !report.ok {
        return Err(TrainingError::InvalidConfig(report.first_error().unwrap_or_default()));
    }
    check_class_capacity(model, label_map.len() as u32)?;
    let split = match split {
        Some(s) if s.train > 0 => s.clone(),
        _ => return Err(TrainingError::MissingSplit),
    };

    let defaults = ConvergencePolicy::default();
    let convergence = ConvergencePolicy {
        loss_threshold: overrides.loss_threshold.unwrap_or(defaults.loss_threshold),
        window: overrides.window.unwrap_or(defaults.window),
        patience: overrides.patience.unwrap_or(defaults.patience),
    };
    convergence.validate()?;
    let max_steps = overrides.max_steps.unwrap_or(DEFAULT_MAX_STEPS);
    if max_steps == 0 {
        return Err(TrainingError::InvalidConfig("max_steps must be positive".into()));
    }

    Ok(TrainingConfig {
        model: model.clone(),
        base_weights: overrides
            .base_weights
            .clone()
            .unwrap_or_else(|| default_base_weights(model)),
        split,
        label_map: label_map.clone(),
        max_steps,
        convergence,
    })
}
