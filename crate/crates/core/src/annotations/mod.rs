//! Readers and writers for the interchange formats produced by common
//! labeling tools. Every reader converges on [`AnnotationSet`]; every writer
//! starts from it.

mod coco;
mod folders;
mod mturk;
mod voc;
mod yolo;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{validate_annotation_set, AnnotationSet, Task, ValidationReport};

pub use coco::{export_coco, parse_coco};
pub use folders::{ingest_classification_folders, FolderImage};
pub use mturk::{import_mturk, AnswerGeometry, MTurkFieldMapping};
pub use voc::{export_voc, parse_voc};
pub use yolo::{export_yolo, parse_yolo, yolo_files_from_documents, YoloFile, YOLO_LABEL_FILE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatTag {
    VocXml,
    CocoJson,
    YoloTxt,
    MturkBatch,
    ClassFolders,
}

impl FormatTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            FormatTag::VocXml => "voc_xml",
            FormatTag::CocoJson => "coco_json",
            FormatTag::YoloTxt => "yolo_txt",
            FormatTag::MturkBatch => "mturk_batch",
            FormatTag::ClassFolders => "class_folders",
        }
    }
}

impl fmt::Display for FormatTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormatTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "voc" | "voc_xml" => Ok(FormatTag::VocXml),
            "coco" | "coco_json" => Ok(FormatTag::CocoJson),
            "yolo" | "yolo_txt" => Ok(FormatTag::YoloTxt),
            "mturk" | "mturk_batch" => Ok(FormatTag::MturkBatch),
            "folders" | "class_folders" => Ok(FormatTag::ClassFolders),
            other => Err(format!("unknown annotation format {other:?}")),
        }
    }
}

/// A named text document, either read from or written to disk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub name: String,
    pub content: String,
}

impl Document {
    pub fn new(name: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("{source_name}: {message}")]
    Parse { source_name: String, message: String },

    #[error("{source_name}: image size (width/height) is missing")]
    MissingSize { source_name: String },

    #[error("annotation {annotation_id} references image id {image_id}, which is not listed")]
    DanglingImageId { annotation_id: String, image_id: String },

    #[error("{source_name} line {line}: class {class_id} is outside the {num_classes}-class label file")]
    ClassOutOfRange {
        source_name: String,
        line: usize,
        class_id: i64,
        num_classes: usize,
    },

    #[error("{source_name} line {line}: {what} = {value} is outside [0, 1]")]
    NormalizedOutOfRange {
        source_name: String,
        line: usize,
        what: &'static str,
        value: f64,
    },

    #[error("no image dimensions for media {media_id:?}")]
    MissingDims { media_id: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("duplicate class name {name:?}")]
    DuplicateClass { name: String },

    #[error("cannot export a {task} set as {format}")]
    UnsupportedExport { task: Task, format: FormatTag },

    #[error("annotations failed validation: {}", .0.first_error().unwrap_or_default())]
    Invalid(ValidationReport),
}

impl AnnotationError {
    pub fn code(&self) -> &'static str {
        match self {
            AnnotationError::Parse { .. } => "PARSE_ERROR",
            AnnotationError::MissingSize { .. } => "MISSING_SIZE",
            AnnotationError::DanglingImageId { .. } => "DANGLING_IMAGE_ID",
            AnnotationError::ClassOutOfRange { .. } => "CLASS_OUT_OF_RANGE",
            AnnotationError::NormalizedOutOfRange { .. } => "NORMALIZED_OUT_OF_RANGE",
            AnnotationError::MissingDims { .. } => "MISSING_DIMS",
            AnnotationError::EmptyDataset => "EMPTY_DATASET",
            AnnotationError::DuplicateClass { .. } => "DUPLICATE_CLASS",
            AnnotationError::UnsupportedExport { .. } => "UNSUPPORTED_EXPORT",
            AnnotationError::Invalid(_) => "INVALID_ANNOTATIONS",
        }
    }

    pub(crate) fn parse(source_name: impl Into<String>, message: impl fmt::Display) -> Self {
        AnnotationError::Parse {
            source_name: source_name.into(),
            message: message.to_string(),
        }
    }
}

/// Writes `set` in one of the exportable formats.
///
/// Detection sets export to all three; classification sets only to COCO.
pub fn export(set: &AnnotationSet, format: FormatTag) -> Result<Vec<Document>, AnnotationError> {
    let supported = match format {
        FormatTag::CocoJson => matches!(set.task, Task::Detection | Task::Classification),
        FormatTag::VocXml | FormatTag::YoloTxt => set.task == Task::Detection,
        FormatTag::MturkBatch | FormatTag::ClassFolders => false,
    };
    if !supported {
        return Err(AnnotationError::UnsupportedExport { task: set.task, format });
    }
    ensure_valid(set)?;
    match format {
        FormatTag::CocoJson => Ok(vec![export_coco(set)?]),
        FormatTag::VocXml => export_voc(set),
        FormatTag::YoloTxt => Ok(export_yolo(set)),
        FormatTag::MturkBatch | FormatTag::ClassFolders => unreachable!("rejected above"),
    }
}

/// Parsers finish here so they never hand out a set that fails validation.
pub(crate) fn ensure_valid(set: &AnnotationSet) -> Result<(), AnnotationError> {
    let report = validate_annotation_set(set);
    if report.ok {
        Ok(())
    } else {
        Err(AnnotationError::Invalid(report))
    }
}

/// Folds case-variant class names into one class, keeping the
/// lexicographically smallest spelling, and returns the sorted label list.
pub(crate) fn sorted_class_union<'a>(names: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    use std::collections::BTreeMap;

    let mut by_key: BTreeMap<String, String> = BTreeMap::new();
    for name in names {
        let trimmed = name.trim();
        let key = crate::domain::class_key(trimmed);
        by_key
            .entry(key)
            .and_modify(|cur| {
                if trimmed < cur.as_str() {
                    *cur = trimmed.to_owned();
                }
            })
            .or_insert_with(|| trimmed.to_owned());
    }
    let mut out: Vec<String> = by_key.into_values().collect();
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BoundingBox, ImageRecord, LabelMap};

    fn classification_set() -> AnnotationSet {
        let mut set = AnnotationSet::empty(Task::Classification);
        set.label_map = LabelMap::new(["a", "b"]);
        set.images.push(ImageRecord::still("x", 4, 4));
        set.class_of.insert("x".into(), 1);
        set
    }

    #[test]
    fn classification_cannot_go_to_yolo_or_voc() {
        let set = classification_set();
        let err = export(&set, FormatTag::YoloTxt).unwrap_err();
        assert_eq!(err.code(), "UNSUPPORTED_EXPORT");
        assert_eq!(
            export(&set, FormatTag::VocXml).unwrap_err().code(),
            "UNSUPPORTED_EXPORT"
        );
        assert_eq!(
            export(&set, FormatTag::MturkBatch).unwrap_err().code(),
            "UNSUPPORTED_EXPORT"
        );
        assert_eq!(export(&set, FormatTag::CocoJson).unwrap().len(), 1);
    }

    #[test]
    fn export_rejects_invalid_sets() {
        let mut set = AnnotationSet::empty(Task::Detection);
        set.label_map = LabelMap::new(["a"]);
        set.images.push(ImageRecord::still("x", 4, 4));
        set.boxes
            .insert("x".into(), vec![BoundingBox::new(0.0, 0.0, 9.0, 1.0, 0)]);
        assert_eq!(
            export(&set, FormatTag::CocoJson).unwrap_err().code(),
            "INVALID_ANNOTATIONS"
        );
    }

    #[test]
    fn format_tags_parse_from_short_names() {
        assert_eq!("voc".parse::<FormatTag>().unwrap(), FormatTag::VocXml);
        assert_eq!("COCO_JSON".parse::<FormatTag>().unwrap(), FormatTag::CocoJson);
        assert!("tfrecord".parse::<FormatTag>().is_err());
    }

    #[test]
    fn class_union_folds_case() {
        let names = sorted_class_union(["rip", "Rip", " wave ", "can"]);
        assert_eq!(names, vec!["Rip".to_owned(), "can".into(), "wave".into()]);
    }
}
