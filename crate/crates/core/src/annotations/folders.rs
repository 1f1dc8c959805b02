//! Classification datasets laid out as one directory per class.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{ensure_valid, AnnotationError};
use crate::domain::{class_key, validate_label_map, AnnotationSet, ImageRecord, IssueCode, LabelMap, Task};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FolderImage {
    pub media_id: String,
    pub width: u32,
    pub height: u32,
}

impl FolderImage {
    pub fn new(media_id: impl Into<String>, width: u32, height: u32) -> Self {
        Self {
            media_id: media_id.into(),
            width,
            height,
        }
    }
}

/// Builds a classification set whose classes are the directory names, sorted.
pub fn ingest_classification_folders(
    listing: &BTreeMap<String, Vec<FolderImage>>,
) -> Result<AnnotationSet, AnnotationError> {
    if listing.is_empty() {
        return Err(AnnotationError::EmptyDataset);
    }
    // BTreeMap iteration is already lexicographic.
    let label_map = LabelMap::new(listing.keys().cloned());
    let report = validate_label_map(&label_map);
    if report.has_error(IssueCode::DuplicateClass) {
        let mut seen = HashSet::new();
        let name = listing
            .keys()
            .find(|name| !seen.insert(class_key(name)))
            .cloned()
            .unwrap_or_default();
        return Err(AnnotationError::DuplicateClass { name });
    }
    if !report.ok {
        return Err(AnnotationError::Invalid(report));
    }

    let mut set = AnnotationSet::empty(Task::Classification);
    set.label_map = label_map;
    for (class_id, images) in listing.values().enumerate() {
        for img in images {
            set.images
                .push(ImageRecord::still(img.media_id.clone(), img.width, img.height));
            set.class_of.insert(img.media_id.clone(), class_id);
        }
    }
    ensure_valid(&set)?;
    Ok(set)
}
