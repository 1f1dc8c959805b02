//! Mechanical Turk batch results: comma-separated rows, one JSON answer
//! payload per row.
//!
//! Answer payloads vary with the task template, so the columns and keys to
//! read are configured explicitly through [`MTurkFieldMapping`]. A payload may
//! be a single box object, an array of payloads, an object with a
//! `boundingBoxes` array, or the bounding-box template's
//! `{"annotatedResult": {...}}` wrapper.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ensure_valid, sorted_class_union, AnnotationError};
use crate::domain::{class_key, AnnotationSet, BoundingBox, ImageRecord, LabelMap, Task};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerGeometry {
    AbsolutePx,
    Normalized,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MTurkFieldMapping {
    /// Column holding the media id (usually the image URL input).
    pub media_field: String,
    /// Column holding the JSON answer payload.
    pub answer_field: String,
    pub answer_geometry: AnswerGeometry,
    /// Key of the class label inside each box object.
    pub class_field: String,
}

impl Default for MTurkFieldMapping {
    fn default() -> Self {
        Self {
            media_field: "Input.image_url".into(),
            answer_field: "Answer.taskAnswers".into(),
            answer_geometry: AnswerGeometry::AbsolutePx,
            class_field: "label".into(),
        }
    }
}

struct RawBox {
    label: String,
    left: f64,
    top: f64,
    width: f64,
    height: f64,
}

fn row_error(row: usize, message: impl std::fmt::Display) -> AnnotationError {
    AnnotationError::parse(format!("mturk row {row}"), message)
}

fn number(obj: &serde_json::Map<String, Value>, key: &str, row: usize) -> Result<f64, AnnotationError> {
    match obj.get(key) {
        Some(Value::Number(n)) => n.as_f64().ok_or_else(|| row_error(row, format!("{key} is not finite"))),
        Some(Value::String(s)) => s
            .trim()
            .parse()
            .map_err(|_| row_error(row, format!("{key} {s:?} is not a number"))),
        _ => Err(row_error(row, format!("answer box lacks numeric {key:?}"))),
    }
}

fn collect_boxes(
    value: &Value,
    class_field: &str,
    row: usize,
    out: &mut Vec<RawBox>,
    dims_hint: &mut Option<(u32, u32)>,
) -> Result<(), AnnotationError> {
    match value {
        Value::Null => Ok(()),
        Value::Array(items) => items
            .iter()
            .try_for_each(|v| collect_boxes(v, class_field, row, out, dims_hint)),
        Value::Object(obj) if obj.is_empty() => Ok(()),
        Value::Object(obj) => {
            if let Some(props) = obj.get("inputImageProperties").and_then(Value::as_object) {
                if let (Ok(w), Ok(h)) = (number(props, "width", row), number(props, "height", row)) {
                    if w >= 1.0 && h >= 1.0 {
                        *dims_hint = Some((w as u32, h as u32));
                    }
                }
            }
            if let Some(inner) = obj.get("annotatedResult") {
                return collect_boxes(inner, class_field, row, out, dims_hint);
            }
            if let Some(inner) = obj.get("boundingBoxes") {
                return collect_boxes(inner, class_field, row, out, dims_hint);
            }
            let label = match obj.get(class_field) {
                Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_owned(),
                _ => return Err(row_error(row, format!("answer box lacks a {class_field:?} label"))),
            };
            out.push(RawBox {
                label,
                left: number(obj, "left", row)?,
                top: number(obj, "top", row)?,
                width: number(obj, "width", row)?,
                height: number(obj, "height", row)?,
            });
            Ok(())
        }
        other => Err(row_error(row, format!("unexpected answer payload {other}"))),
    }
}

/// Imports a batch results file.
///
/// Rows sharing a media id are merged. Rows with an empty answer still add
/// their image, which then validates as unlabeled.
pub fn import_mturk(
    batch: &str,
    mapping: &MTurkFieldMapping,
    image_dims: &HashMap<String, (u32, u32)>,
) -> Result<AnnotationSet, AnnotationError> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(batch.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| AnnotationError::parse("mturk header", e))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AnnotationError::parse("mturk header", format!("no column named {name:?}")))
    };
    let media_col = column(&mapping.media_field)?;
    let answer_col = column(&mapping.answer_field)?;

    let mut order: Vec<String> = Vec::new();
    let mut dims: HashMap<String, (u32, u32)> = HashMap::new();
    let mut raw: HashMap<String, Vec<RawBox>> = HashMap::new();

    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| row_error(row, e))?;
        let media_id = record.get(media_col).unwrap_or_default().trim().to_owned();
        if media_id.is_empty() {
            return Err(row_error(row, "empty media id"));
        }
        let answer = record.get(answer_col).unwrap_or_default().trim();
        let mut boxes = Vec::new();
        let mut hint = None;
        if !answer.is_empty() {
            let payload: Value = serde_json::from_str(answer).map_err(|e| row_error(row, e))?;
            collect_boxes(&payload, &mapping.class_field, row, &mut boxes, &mut hint)?;
        }

        // Later rows for the same image reuse the size found first.
        let known = image_dims.get(&media_id).or_else(|| dims.get(&media_id)).copied();
        let size = match (mapping.answer_geometry, known) {
            (_, Some(d)) => d,
            (AnswerGeometry::AbsolutePx, None) => hint.ok_or_else(|| AnnotationError::MissingDims {
                media_id: media_id.clone(),
            })?,
            (AnswerGeometry::Normalized, None) => return Err(AnnotationError::MissingDims { media_id }),
        };

        if !dims.contains_key(&media_id) {
            order.push(media_id.clone());
            dims.insert(media_id.clone(), size);
        }
        raw.entry(media_id).or_default().extend(boxes);
    }

    let names = sorted_class_union(raw.values().flatten().map(|b| b.label.as_str()));
    let ids: BTreeMap<String, usize> = names.iter().enumerate().map(|(i, n)| (class_key(n), i)).collect();

    let mut set = AnnotationSet::empty(Task::Detection);
    set.label_map = LabelMap::new(names);
    for media_id in order {
        let (w, h) = dims[&media_id];
        let (sx, sy) = match mapping.answer_geometry {
            AnswerGeometry::AbsolutePx => (1.0, 1.0),
            AnswerGeometry::Normalized => (f64::from(w), f64::from(h)),
        };
        let boxes: Vec<BoundingBox> = raw
            .remove(&media_id)
            .unwrap_or_default()
            .into_iter()
            .map(|b| {
                let x = b.left * sx;
                let y = b.top * sy;
                BoundingBox::new(x, y, x + b.width * sx, y + b.height * sy, ids[&class_key(&b.label)])
            })
            .collect();
        if !boxes.is_empty() {
            set.boxes.insert(media_id.clone(), boxes);
        }
        set.images.push(ImageRecord::still(media_id, w, h));
    }
    ensure_valid(&set)?;
    Ok(set)
}
