use chrono::{DateTime, Utc};
use fieldlab_core::domain::{BoundingBox, LabelMap};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignInMethod {
    EmailPassword,
    Anonymous,
    /// Accepted by the API shape but not implemented.
    Federated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Researcher,
    Participant,
    Curator,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub account_id: String,
    pub method: SignInMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub email: Option<String>,
    /// PHC-format salted hash. Persisted, but never returned by the API.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_hash: Option<String>,
    pub role: Role,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub project_id: String,
    pub owner: String,
    pub name: String,
    pub label_map: LabelMap,
    #[serde(default)]
    pub dataset_refs: Vec<String>,
    #[serde(default)]
    pub model_package_refs: Vec<String>,
    #[serde(default)]
    pub bundle_refs: Vec<String>,
    pub created_at: DateTime<Utc>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectionMode {
    MlAssisted,
    Expert,
}

impl CollectionMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "ml_assisted" => Some(CollectionMode::MlAssisted),
            "expert" => Some(CollectionMode::Expert),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaRef {
    pub blob: String,
    /// Lowercase hex SHA-256 of the stored bytes.
    pub checksum: String,
    pub size_bytes: u64,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_type: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub observation_id: String,
    pub project_id: String,
    pub submitter: String,
    pub media: MediaRef,
    pub captured_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo: Option<GeoPoint>,
    #[serde(default)]
    pub detections: Vec<BoundingBox>,
    pub mode: CollectionMode,
    pub received_at: DateTime<Utc>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
    Corrected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurationRecord {
    pub observation_id: String,
    pub curator: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_boxes: Option<Vec<BoundingBox>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback_text: Option<String>,
    pub decided_at: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub observation_id: String,
    pub stored_checksum: String,
}

/// Metadata part of an upload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationMetadata {
    pub captured_at: DateTime<Utc>,
    #[serde(default)]
    pub geo: Option<GeoPoint>,
    #[serde(default)]
    pub detections: Vec<BoundingBox>,
    pub mode: CollectionMode,
    pub media_width: u32,
    pub media_height: u32,
    #[serde(default)]
    pub content_type: Option<String>,
}
