//! YOLO text labels: one file per image with `class cx cy w h [conf]` lines in
//! normalized coordinates, plus a label file listing one class per line.
//!
//! Values are written with the shortest representation that round-trips an
//! `f64`, so re-parsing recovers pixel coordinates to within float rounding.

use std::collections::HashMap;

use super::{ensure_valid, AnnotationError, Document};
use crate::domain::{class_key, AnnotationSet, BoundingBox, ImageRecord, LabelMap, Task};

/// Name of the class-list document produced by [`export_yolo`].
pub const YOLO_LABEL_FILE: &str = "classes.txt";

/// Slack for box edges that land a hair outside `[0, 1]` after float math.
const EDGE_EPS: f64 = 1e-9;

/// Label lines for one image together with the image's pixel size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct YoloFile {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub lines: String,
}

fn field(raw: &str, what: &'static str, source_name: &str, line: usize) -> Result<f64, AnnotationError> {
    let value: f64 = raw.parse().map_err(|_| {
        AnnotationError::parse(
            format!("{source_name} line {line}"),
            format!("{what} {raw:?} is not a number"),
        )
    })?;
    if !(0.0..=1.0).contains(&value) {
        return Err(AnnotationError::NormalizedOutOfRange {
            source_name: source_name.to_owned(),
            line,
            what,
            value,
        });
    }
    Ok(value)
}

fn edge(value: f64, what: &'static str, source_name: &str, line: usize) -> Result<f64, AnnotationError> {
    if !(-EDGE_EPS..=1.0 + EDGE_EPS).contains(&value) {
        return Err(AnnotationError::NormalizedOutOfRange {
            source_name: source_name.to_owned(),
            line,
            what,
            value,
        });
    }
    Ok(value.clamp(0.0, 1.0))
}

fn parse_line(text: &str, file: &YoloFile, line: usize, num_classes: usize) -> Result<BoundingBox, AnnotationError> {
    let name = file.image_id.as_str();
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != 5 && parts.len() != 6 {
        return Err(AnnotationError::parse(
            format!("{name} line {line}"),
            format!("expected 5 or 6 fields, found {}", parts.len()),
        ));
    }
    let class_id: i64 = parts[0].parse().map_err(|_| {
        AnnotationError::parse(
            format!("{name} line {line}"),
            format!("class {:?} is not an integer", parts[0]),
        )
    })?;
    if class_id < 0 || class_id as usize >= num_classes {
        return Err(AnnotationError::ClassOutOfRange {
            source_name: name.to_owned(),
            line,
            class_id,
            num_classes,
        });
    }
    let cx = field(parts[1], "cx", name, line)?;
    let cy = field(parts[2], "cy", name, line)?;
    let w = field(parts[3], "w", name, line)?;
    let h = field(parts[4], "h", name, line)?;
    let confidence = parts
        .get(5)
        .map(|raw| field(raw, "confidence", name, line))
        .transpose()?;

    let width = f64::from(file.width);
    let height = f64::from(file.height);
    let left = edge(cx - w / 2.0, "cx - w/2", name, line)?;
    let right = edge(cx + w / 2.0, "cx + w/2", name, line)?;
    let top = edge(cy - h / 2.0, "cy - h/2", name, line)?;
    let bottom = edge(cy + h / 2.0, "cy + h/2", name, line)?;
    Ok(BoundingBox {
        x_min: left * width,
        y_min: top * height,
        x_max: right * width,
        y_max: bottom * height,
        class_id: class_id as usize,
        confidence,
    })
}

/// Parses per-image label files against a class list. Images are ordered by
/// id; every file yields an image, even when it holds no lines.
pub fn parse_yolo(files: &[YoloFile], label_file: &[String]) -> Result<AnnotationSet, AnnotationError> {
    let names: Vec<String> = label_file
        .iter()
        .map(|n| n.trim().to_owned())
        .filter(|n| !n.is_empty())
        .collect();
    let mut seen = std::collections::HashSet::new();
    for n in &names {
        if !seen.insert(class_key(n)) {
            return Err(AnnotationError::DuplicateClass { name: n.clone() });
        }
    }

    let mut ordered: Vec<&YoloFile> = files.iter().collect();
    ordered.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let mut set = AnnotationSet::empty(Task::Detection);
    set.label_map = LabelMap::new(names);
    for file in ordered {
        let mut boxes = Vec::new();
        for (idx, text) in file.lines.lines().enumerate() {
            if text.trim().is_empty() {
                continue;
            }
            boxes.push(parse_line(text, file, idx + 1, set.label_map.len())?);
        }
        if !boxes.is_empty() {
            set.boxes.insert(file.image_id.clone(), boxes);
        }
        set.images
            .push(ImageRecord::still(file.image_id.clone(), file.width, file.height));
    }
    ensure_valid(&set)?;
    Ok(set)
}

fn label_stem(media_id: &str) -> &str {
    let base_start = media_id.rfind('/').map_or(0, |i| i + 1);
    match media_id[base_start..].rfind('.') {
        Some(dot) if dot > 0 => &media_id[..base_start + dot],
        _ => media_id,
    }
}

/// One `<stem>.txt` per image (image extension dropped) and [`YOLO_LABEL_FILE`].
pub fn export_yolo(set: &AnnotationSet) -> Vec<Document> {
    let mut docs: Vec<Document> = set
        .images
        .iter()
        .map(|img| {
            let w = f64::from(img.width);
            let h = f64::from(img.height);
            let mut text = String::new();
            for b in set.boxes_of(&img.media_id) {
                let cx = (b.x_min + b.x_max) / 2.0 / w;
                let cy = (b.y_min + b.y_max) / 2.0 / h;
                let bw = b.width() / w;
                let bh = b.height() / h;
                text.push_str(&format!("{} {cx} {cy} {bw} {bh}", b.class_id));
                if let Some(c) = b.confidence {
                    text.push_str(&format!(" {c}"));
                }
                text.push('\n');
            }
            Document::new(format!("{}.txt", label_stem(&img.media_id)), text)
        })
        .collect();
    let mut labels = set.label_map.names().join("\n");
    if !labels.is_empty() {
        labels.push('\n');
    }
    docs.push(Document::new(YOLO_LABEL_FILE, labels));
    docs
}

/// Pairs exported label documents with image sizes.
///
/// `images` resolves each `<stem>.txt` back to its media id and dimensions;
/// a document whose stem matches no image is a `MISSING_DIMS` error.
pub fn yolo_files_from_documents(
    documents: &[Document],
    images: &[ImageRecord],
) -> Result<(Vec<YoloFile>, Vec<String>), AnnotationError> {
    let by_stem: HashMap<&str, &ImageRecord> = images.iter().map(|img| (label_stem(&img.media_id), img)).collect();
    let mut files = Vec::new();
    let mut labels = Vec::new();
    for doc in documents {
        if doc.name == YOLO_LABEL_FILE {
            labels = doc.content.lines().map(str::to_owned).collect();
            continue;
        }
        let stem = doc.name.strip_suffix(".txt").unwrap_or(&doc.name);
        let img = by_stem.get(stem).ok_or_else(|| AnnotationError::MissingDims {
            media_id: stem.to_owned(),
        })?;
        files.push(YoloFile {
            image_id: img.media_id.clone(),
            width: img.width,
            height: img.height,
            lines: doc.content.clone(),
        });
    }
    Ok((files, labels))
}
