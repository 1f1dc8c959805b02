//! Shared value types and the validation rules every pipeline stage relies on.
//!
//! Boxes are stored in one canonical form: real-valued pixel coordinates with
//! the origin at the top-left corner, min-inclusive and max-exclusive. Each
//! format parser owns its conversion into this form.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Opaque identifier of an image, frame or video.
pub type MediaId = String;

/// Kind of vision task a dataset, model or template is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Detection,
    Classification,
    Segmentation,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Detection => "detection",
            Task::Classification => "classification",
            Task::Segmentation => "segmentation",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "detection" => Ok(Task::Detection),
            "classification" => Ok(Task::Classification),
            "segmentation" => Ok(Task::Segmentation),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

/// Ordered class names; a class id is the position of its name.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelMap(Vec<String>);

impl LabelMap {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self(names.into_iter().map(Into::into).collect())
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn name(&self, class_id: usize) -> Option<&str> {
        self.0.get(class_id).map(String::as_str)
    }

    /// Looks up a class by name using the case-insensitive identity rule.
    pub fn id_of(&self, name: &str) -> Option<usize> {
        let key = class_key(name);
        self.0.iter().position(|n| class_key(n) == key)
    }

    pub fn contains_id(&self, class_id: usize) -> bool {
        class_id < self.0.len()
    }
}

/// Identity key of a class name: trimmed and case-folded.
pub fn class_key(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Axis-aligned box in canonical pixel coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub class_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, class_id: usize) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
            class_id,
            confidence: None,
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = Some(confidence);
        self
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Strictly positive extent on both axes, with finite coordinates.
    pub fn is_well_formed(&self) -> bool {
        [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.x_min >= 0.0 && self.y_min >= 0.0 && self.x_max <= f64::from(width) && self.y_max <= f64::from(height)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    #[default]
    Still,
    ExtractedFrame,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub media_id: MediaId,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub source: ImageSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_video: Option<MediaId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_s: Option<f64>,
}

impl ImageRecord {
    pub fn still(media_id: impl Into<MediaId>, width: u32, height: u32) -> Self {
        Self {
            media_id: media_id.into(),
            width,
            height,
            source: ImageSource::Still,
            source_video: None,
            timestamp_s: None,
        }
    }

    pub fn frame(
        media_id: impl Into<MediaId>,
        width: u32,
        height: u32,
        video: impl Into<MediaId>,
        timestamp_s: f64,
    ) -> Self {
        Self {
            media_id: media_id.into(),
            width,
            height,
            source: ImageSource::ExtractedFrame,
            source_video: Some(video.into()),
            timestamp_s: Some(timestamp_s),
        }
    }
}

/// Images plus their labels. Detection sets use `boxes`, classification sets
/// use `class_of`; the other map stays empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub task: Task,
    pub label_map: LabelMap,
    pub images: Vec<ImageRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub boxes: BTreeMap<MediaId, Vec<BoundingBox>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub class_of: BTreeMap<MediaId, usize>,
}

impl AnnotationSet {
    pub fn empty(task: Task) -> Self {
        Self {
            task,
            label_map: LabelMap::default(),
            images: Vec::new(),
            boxes: BTreeMap::new(),
            class_of: BTreeMap::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, media_id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|img| img.media_id == media_id)
    }

    pub fn boxes_of(&self, media_id: &str) -> &[BoundingBox] {
        self.boxes.get(media_id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Distinct class ids labelled on an image, ascending.
    pub fn classes_of(&self, media_id: &str) -> Vec<usize> {
        match self.task {
            Task::Classification => self.class_of.get(media_id).copied().into_iter().collect(),
            _ => {
                let mut ids: Vec<usize> = self.boxes_of(media_id).iter().map(|b| b.class_id).collect();
                ids.sort_unstable();
                ids.dedup();
                ids
            }
        }
    }

    pub fn is_labeled(&self, media_id: &str) -> bool {
        match self.task {
            Task::Classification => self.class_of.contains_key(media_id),
            _ => !self.boxes_of(media_id).is_empty(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IssueCode {
    EmptyLabelMap,
    EmptyClassName,
    DuplicateClass,
    DuplicateMediaId,
    InvalidDimensions,
    InvalidFrameSource,
    UnsupportedTask,
    TaskLabelMismatch,
    DanglingMediaId,
    UnknownClassId,
    DegenerateBox,
    BoxOutOfBounds,
    InvalidConfidence,
    UnlabeledImage,
}

impl IssueCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            IssueCode::EmptyLabelMap => "EMPTY_LABEL_MAP",
            IssueCode::EmptyClassName => "EMPTY_CLASS_NAME",
            IssueCode::DuplicateClass => "DUPLICATE_CLASS",
            IssueCode::DuplicateMediaId => "DUPLICATE_MEDIA_ID",
            IssueCode::InvalidDimensions => "INVALID_DIMENSIONS",
            IssueCode::InvalidFrameSource => "INVALID_FRAME_SOURCE",
            IssueCode::UnsupportedTask => "UNSUPPORTED_TASK",
            IssueCode::TaskLabelMismatch => "TASK_LABEL_MISMATCH",
            IssueCode::DanglingMediaId => "DANGLING_MEDIA_ID",
            IssueCode::UnknownClassId => "UNKNOWN_CLASS_ID",
            IssueCode::DegenerateBox => "DEGENERATE_BOX",
            IssueCode::BoxOutOfBounds => "BOX_OUT_OF_BOUNDS",
            IssueCode::InvalidConfidence => "INVALID_CONFIDENCE",
            IssueCode::UnlabeledImage => "UNLABELED_IMAGE",
        }
    }
}

impl fmt::Display for IssueCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub code: IssueCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_id: Option<MediaId>,
    pub message: String,
}

/// Outcome of a validation pass. Problems are data here, never faults.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
    pub ok: bool,
}

impl ValidationReport {
    fn from_parts(errors: Vec<Issue>, warnings: Vec<Issue>) -> Self {
        let ok = errors.is_empty();
        Self { errors, warnings, ok }
    }

    pub fn has_error(&self, code: IssueCode) -> bool {
        self.errors.iter().any(|i| i.code == code)
    }

    pub fn has_warning(&self, code: IssueCode) -> bool {
        self.warnings.iter().any(|i| i.code == code)
    }

    /// First error, formatted as `CODE: message`.
    pub fn first_error(&self) -> Option<String> {
        self.errors.first().map(|i| format!("{}: {}", i.code, i.message))
    }
}

fn issue(code: IssueCode, media_id: Option<&str>, message: impl Into<String>) -> Issue {
    Issue {
        code,
        media_id: media_id.map(str::to_owned),
        message: message.into(),
    }
}

/// Reports empty maps, empty names and case-insensitive duplicates.
pub fn validate_label_map(label_map: &LabelMap) -> ValidationReport {
    let mut errors = Vec::new();
    if label_map.is_empty() {
        errors.push(issue(IssueCode::EmptyLabelMap, None, "label map has no classes"));
    }
    errors.extend(label_name_issues(label_map));
    ValidationReport::from_parts(errors, Vec::new())
}

fn label_name_issues(label_map: &LabelMap) -> Vec<Issue> {
    let mut errors = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (id, name) in label_map.names().iter().enumerate() {
        let key = class_key(name);
        if key.is_empty() {
            errors.push(issue(
                IssueCode::EmptyClassName,
                None,
                format!("class {id} has an empty name"),
            ));
            continue;
        }
        if let Some(first) = seen.get(&key) {
            errors.push(issue(
                IssueCode::DuplicateClass,
                None,
                format!("class {id} {name:?} duplicates class {first}"),
            ));
        } else {
            seen.insert(key, id);
        }
    }
    errors
}

/// Checks every structural invariant of an [`AnnotationSet`].
///
/// An empty label map is accepted here (an empty dataset is valid); only the
/// names it does contain are checked. Images without labels produce
/// `UNLABELED_IMAGE` warnings since negative examples are legitimate.
pub fn validate_annotation_set(set: &AnnotationSet) -> ValidationReport {
    let mut errors = label_name_issues(&set.label_map);
    let mut warnings = Vec::new();

    if set.task == Task::Segmentation {
        errors.push(issue(
            IssueCode::UnsupportedTask,
            None,
            "annotation sets hold detection or classification labels only",
        ));
    }

    let mut dims: HashMap<&str, (u32, u32)> = HashMap::new();
    for img in &set.images {
        let id = img.media_id.as_str();
        if dims.insert(id, (img.width, img.height)).is_some() {
            errors.push(issue(IssueCode::DuplicateMediaId, Some(id), "media id listed twice"));
        }
        if img.width == 0 || img.height == 0 {
            errors.push(issue(
                IssueCode::InvalidDimensions,
                Some(id),
                format!("image is {}x{}", img.width, img.height),
            ));
        }
        let frame_fields = img.source_video.is_some() && img.timestamp_s.is_some();
        let no_frame_fields = img.source_video.is_none() && img.timestamp_s.is_none();
        let consistent = match img.source {
            ImageSource::ExtractedFrame => frame_fields && img.timestamp_s.is_some_and(|t| t.is_finite() && t >= 0.0),
            ImageSource::Still => no_frame_fields,
        };
        if !consistent {
            errors.push(issue(
                IssueCode::InvalidFrameSource,
                Some(id),
                "extracted frames need a source video and timestamp; stills need neither",
            ));
        }
    }

    match set.task {
        Task::Classification if !set.boxes.is_empty() => errors.push(issue(
            IssueCode::TaskLabelMismatch,
            None,
            "classification set carries bounding boxes",
        )),
        Task::Detection if !set.class_of.is_empty() => errors.push(issue(
            IssueCode::TaskLabelMismatch,
            None,
            "detection set carries image-level classes",
        )),
        _ => {}
    }

    for (media_id, boxes) in &set.boxes {
        let Some(&(w, h)) = dims.get(media_id.as_str()) else {
            errors.push(issue(
                IssueCode::DanglingMediaId,
                Some(media_id),
                "boxes reference an image that is not in the set",
            ));
            continue;
        };
        for (i, b) in boxes.iter().enumerate() {
            if !set.label_map.contains_id(b.class_id) {
                errors.push(issue(
                    IssueCode::UnknownClassId,
                    Some(media_id),
                    format!("box {i} has class id {} outside the label map", b.class_id),
                ));
            }
            if !b.is_well_formed() {
                errors.push(issue(
                    IssueCode::DegenerateBox,
                    Some(media_id),
                    format!(
                        "box {i} ({}, {}, {}, {}) has no positive extent",
                        b.x_min, b.y_min, b.x_max, b.y_max
                    ),
                ));
            } else if !b.fits_within(w, h) {
                errors.push(issue(
                    IssueCode::BoxOutOfBounds,
                    Some(media_id),
                    format!(
                        "box {i} ({}, {}, {}, {}) exceeds {w}x{h}",
                        b.x_min, b.y_min, b.x_max, b.y_max
                    ),
                ));
            }
            if let Some(c) = b.confidence {
                if !(0.0..=1.0).contains(&c) {
                    errors.push(issue(
                        IssueCode::InvalidConfidence,
                        Some(media_id),
                        format!("box {i} confidence {c} outside [0, 1]"),
                    ));
                }
            }
        }
    }

    for (media_id, &class_id) in &set.class_of {
        if !dims.contains_key(media_id.as_str()) {
            errors.push(issue(
                IssueCode::DanglingMediaId,
                Some(media_id),
                "class assignment references an image that is not in the set",
            ));
        }
        if !set.label_map.contains_id(class_id) {
            errors.push(issue(
                IssueCode::UnknownClassId,
                Some(media_id),
                format!("class id {class_id} outside the label map"),
            ));
        }
    }

    let mut warned: HashSet<&str> = HashSet::new();
    for img in &set.images {
        if !set.is_labeled(&img.media_id) && warned.insert(&img.media_id) {
            warnings.push(issue(
                IssueCode::UnlabeledImage,
                Some(&img.media_id),
                "image has no labels",
            ));
        }
    }

    ValidationReport::from_parts(errors, warnings)
}
