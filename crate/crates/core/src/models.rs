//! Registry of mobile-ready vision models and constrained selection over the
//! latency / accuracy / package-size trade-off.
//!
//! Selection maximizes COCO mAP among the entries that satisfy every bound.
//! Ties fall to lower latency, then smaller size, then name.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Task;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRegistryEntry {
    pub name: String,
    /// Per-frame inference latency in milliseconds.
    pub inference_ms: f64,
    /// COCO mean average precision, percentage points.
    pub map_coco: f64,
    /// Size of the converted on-device model in megabytes.
    pub size_mb: f64,
    pub task: Task,
    /// Maximum number of classes; `None` means no defined limit.
    #[serde(default)]
    pub class_capacity: Option<u32>,
    /// Field observations about on-device behaviour, shown next to a
    /// selection but never used to rank.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability_note: Option<String>,
}

impl ModelRegistryEntry {
    fn new(name: &str, inference_ms: f64, map_coco: f64, size_mb: f64, class_capacity: Option<u32>) -> Self {
        Self {
            name: name.to_owned(),
            inference_ms,
            map_coco,
            size_mb,
            task: Task::Detection,
            class_capacity,
            stability_note: None,
        }
    }

    fn check_invariants(&self) -> Result<(), ModelError> {
        let bad = |field: &str, value: f64| ModelError::InvalidEntry {
            name: self.name.clone(),
            message: format!("{field} = {value}"),
        };
        if self.name.trim().is_empty() {
            return Err(ModelError::InvalidEntry {
                name: self.name.clone(),
                message: "empty name".into(),
            });
        }
        if !(self.inference_ms.is_finite() && self.inference_ms > 0.0) {
            return Err(bad("inference_ms", self.inference_ms));
        }
        if !(self.map_coco > 0.0 && self.map_coco <= 100.0) {
            return Err(bad("map_coco", self.map_coco));
        }
        if !(self.size_mb.is_finite() && self.size_mb > 0.0) {
            return Err(bad("size_mb", self.size_mb));
        }
        if self.class_capacity == Some(0) {
            return Err(bad("class_capacity", 0.0));
        }
        Ok(())
    }

    /// True when `self` is at least as good on every axis and better on one.
    pub fn dominates(&self, other: &ModelRegistryEntry) -> bool {
        let no_worse =
            self.map_coco >= other.map_coco && self.inference_ms <= other.inference_ms && self.size_mb <= other.size_mb;
        let better =
            self.map_coco > other.map_coco || self.inference_ms < other.inference_ms || self.size_mb < other.size_mb;
        no_worse && better
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no model satisfies the constraints: {}", binding.join("; "))]
    NoFeasibleModel { binding: Vec<String> },

    #[error("{model} supports at most {capacity} classes, {requested} requested")]
    ClassCapacityExceeded {
        model: String,
        capacity: u32,
        requested: u32,
    },

    #[error("registry entry {name:?} is invalid: {message}")]
    InvalidEntry { name: String, message: String },

    #[error("invalid selection constraints: {0}")]
    InvalidConstraints(String),

    #[error("registry is empty")]
    EmptyRegistry,

    #[error("registry file: {0}")]
    Registry(String),

    #[error("no model named {0:?} in the registry")]
    UnknownModel(String),
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::NoFeasibleModel { .. } => "NO_FEASIBLE_MODEL",
            ModelError::ClassCapacityExceeded { .. } => "CLASS_CAPACITY_EXCEEDED",
            ModelError::InvalidEntry { .. } => "INVALID_REGISTRY_ENTRY",
            ModelError::InvalidConstraints(_) => "INVALID_CONSTRAINTS",
            ModelError::EmptyRegistry => "EMPTY_REGISTRY",
            ModelError::Registry(_) => "REGISTRY_ERROR",
            ModelError::UnknownModel(_) => "UNKNOWN_MODEL",
        }
    }
}

/// The six benchmarked mobile detectors.
pub fn default_registry() -> Vec<ModelRegistryEntry> {
    let mut d2 = ModelRegistryEntry::new("EfficientDet D2", 67.0, 41.8, 11.0, Some(999));
    d2.stability_note = Some("more stable than YOLOv8m on the phones it was tested on".into());
    vec![
        ModelRegistryEntry::new("SSD MobileNet v1", 48.0, 29.1, 5.0, None),
        ModelRegistryEntry::new("SSD MobileNet v2", 39.0, 28.2, 5.0, None),
        ModelRegistryEntry::new("EfficientDet D0", 39.0, 33.6, 6.0, Some(999)),
        ModelRegistryEntry::new("EfficientDet D1", 54.0, 38.4, 8.0, Some(999)),
        d2,
        ModelRegistryEntry::new("YOLOv8m", 32.0, 50.2, 49.0, None),
    ]
}

/// Parses a registry file: a JSON array of entries.
pub fn parse_registry(json: &str) -> Result<Vec<ModelRegistryEntry>, ModelError> {
    let entries: Vec<ModelRegistryEntry> =
        serde_json::from_str(json).map_err(|e| ModelError::Registry(e.to_string()))?;
    if entries.is_empty() {
        return Err(ModelError::EmptyRegistry);
    }
    for e in &entries {
        e.check_invariants()?;
    }
    Ok(entries)
}

pub fn load_registry(path: &Path) -> Result<Vec<ModelRegistryEntry>, ModelError> {
    let text = fs::read_to_string(path).map_err(|e| ModelError::Registry(format!("{}: {e}", path.display())))?;
    parse_registry(&text)
}

pub fn registry_to_json(registry: &[ModelRegistryEntry]) -> String {
    serde_json::to_string_pretty(registry).expect("registry serializes")
}

pub fn find_model<'a>(registry: &'a [ModelRegistryEntry], name: &str) -> Result<&'a ModelRegistryEntry, ModelError> {
    registry
        .iter()
        .find(|e| e.name.eq_ignore_ascii_case(name.trim()))
        .ok_or_else(|| ModelError::UnknownModel(name.to_owned()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionConstraints {
    #[serde(default)]
    pub max_inference_ms: Option<f64>,
    #[serde(default)]
    pub max_size_mb: Option<f64>,
    #[serde(default)]
    pub min_map: Option<f64>,
    pub task: Task,
    pub num_classes: u32,
}

impl SelectionConstraints {
    pub fn detection(num_classes: u32) -> Self {
        Self {
            max_inference_ms: None,
            max_size_mb: None,
            min_map: None,
            task: Task::Detection,
            num_classes,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.num_classes == 0 {
            return Err(ModelError::InvalidConstraints("num_classes must be positive".into()));
        }
        for (name, bound) in [
            ("max_inference_ms", self.max_inference_ms),
            ("max_size_mb", self.max_size_mb),
            ("min_map", self.min_map),
        ] {
            if let Some(v) = bound {
                if !(v.is_finite() && v > 0.0) {
                    return Err(ModelError::InvalidConstraints(format!(
                        "{name} must be positive, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn check_class_capacity(entry: &ModelRegistryEntry, num_classes: u32) -> Result<(), ModelError> {
    match entry.class_capacity {
        Some(capacity) if num_classes > capacity => Err(ModelError::ClassCapacityExceeded {
            model: entry.name.clone(),
            capacity,
            requested: num_classes,
        }),
        _ => Ok(()),
    }
}

fn is_feasible(entry: &ModelRegistryEntry, c: &SelectionConstraints) -> bool {
    entry.task == c.task
        && c.max_inference_ms.is_none_or(|max| entry.inference_ms <= max)
        && c.max_size_mb.is_none_or(|max| entry.size_mb <= max)
        && c.min_map.is_none_or(|min| entry.map_coco >= min)
        && check_class_capacity(entry, c.num_classes).is_ok()
}

/// Total order used to rank feasible entries; `Less` means preferred.
fn preference(a: &ModelRegistryEntry, b: &ModelRegistryEntry) -> Ordering {
    b.map_coco
        .total_cmp(&a.map_coco)
        .then(a.inference_ms.total_cmp(&b.inference_ms))
        .then(a.size_mb.total_cmp(&b.size_mb))
        .then_with(|| a.name.cmp(&b.name))
}

/// Entries satisfying every constraint, best first.
pub fn feasible_models<'a>(
    registry: &'a [ModelRegistryEntry],
    constraints: &SelectionConstraints,
) -> Vec<&'a ModelRegistryEntry> {
    let mut feasible: Vec<_> = registry.iter().filter(|e| is_feasible(e, constraints)).collect();
    feasible.sort_by(|a, b| preference(a, b));
    feasible
}

pub fn select_model(
    registry: &[ModelRegistryEntry],
    constraints: &SelectionConstraints,
) -> Result<ModelRegistryEntry, ModelError> {
    if registry.is_empty() {
        return Err(ModelError::EmptyRegistry);
    }
    constraints.validate()?;
    match feasible_models(registry, constraints).first() {
        Some(best) => Ok((*best).clone()),
        None => Err(ModelError::NoFeasibleModel {
            binding: binding_constraints(registry, constraints),
        }),
    }
}

/// Describes each constraint that rules out models on its own, with the best
/// value available among entries of the requested task.
fn binding_constraints(registry: &[ModelRegistryEntry], c: &SelectionConstraints) -> Vec<String> {
    let candidates: Vec<&ModelRegistryEntry> = registry.iter().filter(|e| e.task == c.task).collect();
    if candidates.is_empty() {
        return vec![format!("task {} (no {} models registered)", c.task, c.task)];
    }
    let best = |f: fn(&ModelRegistryEntry) -> f64, max: bool| {
        candidates
            .iter()
            .map(|e| f(e))
            .fold(if max { f64::MIN } else { f64::MAX }, |acc, v| {
                if max {
                    acc.max(v)
                } else {
                    acc.min(v)
                }
            })
    };
    let mut out = Vec::new();
    if let Some(max) = c.max_inference_ms {
        if candidates.iter().any(|e| e.inference_ms > max) {
            out.push(format!(
                "max_inference_ms {max} (fastest is {} ms)",
                best(|e| e.inference_ms, false)
            ));
        }
    }
    if let Some(max) = c.max_size_mb {
        if candidates.iter().any(|e| e.size_mb > max) {
            out.push(format!(
                "max_size_mb {max} (smallest is {} MB)",
                best(|e| e.size_mb, false)
            ));
        }
    }
    if let Some(min) = c.min_map {
        if candidates.iter().any(|e| e.map_coco < min) {
            out.push(format!("min_map {min} (best is {} mAP)", best(|e| e.map_coco, true)));
        }
    }
    if candidates
        .iter()
        .any(|e| check_class_capacity(e, c.num_classes).is_err())
    {
        out.push(format!("num_classes {}", c.num_classes));
    }
    out
}
