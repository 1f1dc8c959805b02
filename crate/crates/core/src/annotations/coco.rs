//! COCO JSON: a single document holding images, annotations and categories.
//!
//! Category ids are remapped to dense positions ordered by the original id.
//! Classification sets are written as annotations without a `bbox`, with
//! `info.task` recording the task so empty sets survive a round trip.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ensure_valid, AnnotationError, Document};
use crate::domain::{class_key, AnnotationSet, BoundingBox, ImageRecord, ImageSource, LabelMap, Task};

const SOURCE: &str = "coco";

/// COCO ids are integers in practice, but some exporters write strings.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
enum CocoId {
    Num(i64),
    Str(String),
}

impl fmt::Display for CocoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CocoId::Num(n) => write!(f, "{n}"),
            CocoId::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct CocoInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    task: Option<Task>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    info: Option<CocoInfo>,
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    id: CocoId,
    file_name: String,
    #[serde(default)]
    width: Option<u32>,
    #[serde(default)]
    height: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_video: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frame_timestamp_s: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    id: CocoId,
    image_id: CocoId,
    category_id: CocoId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bbox: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoCategory {
    id: CocoId,
    name: String,
}

pub fn parse_coco(document: &str) -> Result<AnnotationSet, AnnotationError> {
    let doc: CocoDocument = serde_json::from_str(document).map_err(|e| AnnotationError::parse(SOURCE, e))?;

    let mut categories: Vec<&CocoCategory> = doc.categories.iter().collect();
    categories.sort_by(|a, b| a.id.cmp(&b.id));
    let mut class_index: HashMap<&CocoId, usize> = HashMap::new();
    let mut seen_names: HashSet<String> = HashSet::new();
    for (pos, cat) in categories.iter().enumerate() {
        if class_index.insert(&cat.id, pos).is_some() {
            return Err(AnnotationError::parse(
                SOURCE,
                format!("category id {} is listed twice", cat.id),
            ));
        }
        if !seen_names.insert(class_key(&cat.name)) {
            return Err(AnnotationError::DuplicateClass { name: cat.name.clone() });
        }
    }

    let task = match doc.info.as_ref().and_then(|i| i.task) {
        Some(task) => task,
        None if !doc.annotations.is_empty() && doc.annotations.iter().all(|a| a.bbox.is_none()) => Task::Classification,
        None => Task::Detection,
    };
    if task == Task::Segmentation {
        return Err(AnnotationError::parse(SOURCE, "segmentation is not supported"));
    }

    let mut set = AnnotationSet::empty(task);
    set.label_map = LabelMap::new(categories.iter().map(|c| c.name.trim().to_owned()));

    let mut media_of: HashMap<&CocoId, &str> = HashMap::new();
    for img in &doc.images {
        let source_name = || format!("{SOURCE} image {}", img.id);
        let (Some(width), Some(height)) = (img.width, img.height) else {
            return Err(AnnotationError::MissingSize {
                source_name: source_name(),
            });
        };
        if media_of.insert(&img.id, &img.file_name).is_some() {
            return Err(AnnotationError::parse(source_name(), "image id is listed twice"));
        }
        let mut record = ImageRecord::still(img.file_name.clone(), width, height);
        if img.source_video.is_some() || img.frame_timestamp_s.is_some() {
            record.source = ImageSource::ExtractedFrame;
            record.source_video = img.source_video.clone();
            record.timestamp_s = img.frame_timestamp_s;
        }
        set.images.push(record);
    }

    let mut boxes: BTreeMap<String, Vec<BoundingBox>> = BTreeMap::new();
    for ann in &doc.annotations {
        let media_id = *media_of
            .get(&ann.image_id)
            .ok_or_else(|| AnnotationError::DanglingImageId {
                annotation_id: ann.id.to_string(),
                image_id: ann.image_id.to_string(),
            })?;
        let class_id = *class_index.get(&ann.category_id).ok_or_else(|| {
            AnnotationError::parse(
                format!("{SOURCE} annotation {}", ann.id),
                format!("unknown category id {}", ann.category_id),
            )
        })?;
        match (task, ann.bbox) {
            (Task::Detection, Some([x, y, w, h])) => {
                let mut b = BoundingBox::new(x, y, x + w, y + h, class_id);
                b.confidence = ann.score;
                boxes.entry(media_id.to_owned()).or_default().push(b);
            }
            (Task::Classification, None) => {
                if set.class_of.insert(media_id.to_owned(), class_id).is_some() {
                    return Err(AnnotationError::parse(
                        format!("{SOURCE} annotation {}", ann.id),
                        format!("image {media_id:?} already has a class"),
                    ));
                }
            }
            _ => {
                return Err(AnnotationError::parse(
                    format!("{SOURCE} annotation {}", ann.id),
                    format!("bbox presence does not match a {task} dataset"),
                ))
            }
        }
    }
    set.boxes = boxes;

    ensure_valid(&set)?;
    Ok(set)
}

/// Writes a single `annotations.json` document. Ids are 1-based positions.
pub fn export_coco(set: &AnnotationSet) -> Result<Document, AnnotationError> {
    let image_ids: HashMap<&str, i64> = set
        .images
        .iter()
        .enumerate()
        .map(|(i, img)| (img.media_id.as_str(), i as i64 + 1))
        .collect();

    let images = set
        .images
        .iter()
        .map(|img| CocoImage {
            id: CocoId::Num(image_ids[img.media_id.as_str()]),
            file_name: img.media_id.clone(),
            width: Some(img.width),
            height: Some(img.height),
            source_video: img.source_video.clone(),
            frame_timestamp_s: img.timestamp_s,
        })
        .collect();

    let mut annotations = Vec::new();
    for img in &set.images {
        let image_id = CocoId::Num(image_ids[img.media_id.as_str()]);
        for b in set.boxes_of(&img.media_id) {
            annotations.push(CocoAnnotation {
                id: CocoId::Num(annotations.len() as i64 + 1),
                image_id: image_id.clone(),
                category_id: CocoId::Num(b.class_id as i64 + 1),
                bbox: Some([b.x_min, b.y_min, b.width(), b.height()]),
                score: b.confidence,
            });
        }
        if let Some(&class_id) = set.class_of.get(&img.media_id) {
            annotations.push(CocoAnnotation {
                id: CocoId::Num(annotations.len() as i64 + 1),
                image_id: image_id.clone(),
                category_id: CocoId::Num(class_id as i64 + 1),
                bbox: None,
                score: None,
            });
        }
    }

    let categories = set
        .label_map
        .names()
        .iter()
        .enumerate()
        .map(|(i, name)| CocoCategory {
            id: CocoId::Num(i as i64 + 1),
            name: name.clone(),
        })
        .collect();

    let doc = CocoDocument {
        info: Some(CocoInfo { task: Some(set.task) }),
        images,
        annotations,
        categories,
    };
    let content = serde_json::to_string_pretty(&doc).map_err(|e| AnnotationError::parse(SOURCE, e))?;
    Ok(Document::new("annotations.json", content + "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn doc(annotations: serde_json::Value, categories: serde_json::Value) -> String {
        json!({
            "images": [{"id": 1, "file_name": "a.jpg", "width": 640, "height": 480}],
            "annotations": annotations,
            "categories": categories,
        })
        .to_string()
    }

    #[test]
    fn bbox_width_height_becomes_corner() {
        let set = parse_coco(&doc(
            json!([{"id": 1, "image_id": 1, "category_id": 1, "bbox": [10, 20, 30, 40]}]),
            json!([{"id": 1, "name": "rip"}]),
        ))
        .unwrap();
        let b = &set.boxes["a.jpg"][0];
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (10.0, 20.0, 40.0, 60.0));
        assert_eq!(set.task, Task::Detection);
    }

    #[test]
    fn categories_remapped_densely_by_id() {
        let set = parse_coco(&doc(
            json!([
                {"id": 1, "image_id": 1, "category_id": 7, "bbox": [0, 0, 5, 5]},
                {"id": 2, "image_id": 1, "category_id": 3, "bbox": [0, 0, 5, 5]}
            ]),
            json!([{"id": 7, "name": "sea lion"}, {"id": 3, "name": "seal"}]),
        ))
        .unwrap();
        assert_eq!(set.label_map, LabelMap::new(["seal", "sea lion"]));
        let ids: Vec<usize> = set.boxes["a.jpg"].iter().map(|b| b.class_id).collect();
        assert_eq!(ids, vec![1, 0]);
    }

    #[test]
    fn dangling_image_id() {
        let err = parse_coco(&doc(
            json!([{"id": 9, "image_id": 2, "category_id": 1, "bbox": [0, 0, 1, 1]}]),
            json!([{"id": 1, "name": "rip"}]),
        ))
        .unwrap_err();
        assert_eq!(err.code(), "DANGLING_IMAGE_ID");
        assert!(err.to_string().contains("annotation 9"));
    }

    #[test]
    fn malformed_json_and_missing_collections() {
        assert_eq!(parse_coco("{").unwrap_err().code(), "PARSE_ERROR");
        assert_eq!(parse_coco(r#"{"images": []}"#).unwrap_err().code(), "PARSE_ERROR");
    }

    #[test]
    fn missing_image_size() {
        let text = json!({
            "images": [{"id": 1, "file_name": "a.jpg"}],
            "annotations": [],
            "categories": [],
        })
        .to_string();
        assert_eq!(parse_coco(&text).unwrap_err().code(), "MISSING_SIZE");
    }

    #[test]
    fn duplicate_category_names_rejected() {
        let err = parse_coco(&doc(
            json!([]),
            json!([{"id": 1, "name": "Seal"}, {"id": 2, "name": "seal"}]),
        ))
        .unwrap_err();
        assert_eq!(err.code(), "DUPLICATE_CLASS");
    }

    #[test]
    fn string_ids_accepted() {
        let text = json!({
            "images": [{"id": "img-a", "file_name": "a.jpg", "width": 10, "height": 10}],
            "annotations": [{"id": "x", "image_id": "img-a", "category_id": 1, "bbox": [1, 1, 2, 2]}],
            "categories": [{"id": 1, "name": "can"}],
        })
        .to_string();
        assert_eq!(parse_coco(&text).unwrap().boxes["a.jpg"].len(), 1);
    }

    #[test]
    fn classification_inferred_without_bbox() {
        let set = parse_coco(&doc(
            json!([{"id": 1, "image_id": 1, "category_id": 1}]),
            json!([{"id": 1, "name": "seal"}]),
        ))
        .unwrap();
        assert_eq!(set.task, Task::Classification);
        assert_eq!(set.class_of["a.jpg"], 0);
    }

    #[test]
    fn mixed_bbox_presence_rejected() {
        let err = parse_coco(&doc(
            json!([
                {"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, 1, 1]},
                {"id": 2, "image_id": 1, "category_id": 1}
            ]),
            json!([{"id": 1, "name": "seal"}]),
        ))
        .unwrap_err();
        assert_eq!(err.code(), "PARSE_ERROR");
    }

    #[test]
    fn frames_and_scores_survive_export() {
        let mut set = AnnotationSet::empty(Task::Detection);
        set.label_map = LabelMap::new(["rip", "wave"]);
        set.images
            .push(ImageRecord::frame("v_000.jpg", 1280, 720, "v.mp4", 1.5));
        set.images.push(ImageRecord::still("still.jpg", 64, 64));
        set.boxes.insert(
            "v_000.jpg".into(),
            vec![BoundingBox::new(0.5, 1.5, 100.25, 700.0, 1).with_confidence(0.875)],
        );
        let out = export_coco(&set).unwrap();
        assert_eq!(parse_coco(&out.content).unwrap(), set);
    }
}
