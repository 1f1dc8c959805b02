//! Pascal VOC XML, one document per image (the LabelImg output format).
//!
//! Coordinates are copied as written. VOC tools disagree on whether pixel
//! indices are 1-based, so no offset is applied in either direction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ensure_valid, sorted_class_union, AnnotationError, Document};
use crate::domain::{class_key, AnnotationSet, BoundingBox, ImageRecord, LabelMap, Task};

#[derive(Debug, Deserialize, Serialize)]
#[serde(rename = "annotation")]
struct VocAnnotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    filename: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    size: Option<VocSize>,
    #[serde(default, rename = "object")]
    objects: Vec<VocObject>,
}

#[derive(Debug, Deserialize, Serialize)]
struct VocSize {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth: Option<u32>,
}

#[derive(Debug, Deserialize, Serialize)]
struct VocObject {
    name: String,
    #[serde(default)]
    difficult: u8,
    bndbox: VocBndBox,
}

#[derive(Debug, Deserialize, Serialize)]
struct VocBndBox {
    xmin: f64,
    ymin: f64,
    xmax: f64,
    ymax: f64,
}

struct ParsedDoc {
    image: ImageRecord,
    objects: Vec<(String, [f64; 4])>,
}

fn dimension(value: Option<f64>, source_name: &str) -> Result<u32, AnnotationError> {
    let missing = || AnnotationError::MissingSize {
        source_name: source_name.to_owned(),
    };
    let v = value.ok_or_else(missing)?;
    if !(v.is_finite() && v >= 1.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX)) {
        return Err(AnnotationError::parse(
            source_name,
            format!("image dimension {v} is not a positive integer"),
        ));
    }
    Ok(v as u32)
}

fn parse_document(content: &str, source_name: &str) -> Result<ParsedDoc, AnnotationError> {
    let ann: VocAnnotation = quick_xml::de::from_str(content).map_err(|e| AnnotationError::parse(source_name, e))?;
    let size = ann.size.as_ref();
    let width = dimension(size.and_then(|s| s.width), source_name)?;
    let height = dimension(size.and_then(|s| s.height), source_name)?;
    let media_id = match ann.filename.as_deref().map(str::trim) {
        Some(name) if !name.is_empty() => name.to_owned(),
        _ => source_name.strip_suffix(".xml").unwrap_or(source_name).to_owned(),
    };
    let objects = ann
        .objects
        .into_iter()
        .map(|o| {
            let b = o.bndbox;
            (o.name.trim().to_owned(), [b.xmin, b.ymin, b.xmax, b.ymax])
        })
        .collect();
    Ok(ParsedDoc {
        image: ImageRecord::still(media_id, width, height),
        objects,
    })
}

/// Parses VOC documents given as `(content, filename)` pairs.
///
/// Documents are merged in lexicographic filename order; the label map is the
/// sorted union of object names.
pub fn parse_voc<S: AsRef<str>, N: AsRef<str>>(documents: &[(S, N)]) -> Result<AnnotationSet, AnnotationError> {
    let mut parsed: Vec<(&str, ParsedDoc)> = documents
        .iter()
        .map(|(content, name)| parse_document(content.as_ref(), name.as_ref()).map(|doc| (name.as_ref(), doc)))
        .collect::<Result<_, _>>()?;
    parsed.sort_by(|a, b| a.0.cmp(b.0));

    let names = sorted_class_union(
        parsed
            .iter()
            .flat_map(|(_, doc)| doc.objects.iter().map(|(n, _)| n.as_str())),
    );
    let ids: BTreeMap<String, usize> = names.iter().enumerate().map(|(i, n)| (class_key(n), i)).collect();

    let mut set = AnnotationSet::empty(Task::Detection);
    set.label_map = LabelMap::new(names);
    for (_, doc) in parsed {
        let boxes: Vec<BoundingBox> = doc
            .objects
            .iter()
            .map(|(name, [x0, y0, x1, y1])| BoundingBox::new(*x0, *y0, *x1, *y1, ids[&class_key(name)]))
            .collect();
        if !boxes.is_empty() {
            set.boxes.entry(doc.image.media_id.clone()).or_default().extend(boxes);
        }
        set.images.push(doc.image);
    }
    ensure_valid(&set)?;
    Ok(set)
}

/// One document per image, named `<media_id>.xml`.
pub fn export_voc(set: &AnnotationSet) -> Result<Vec<Document>, AnnotationError> {
    set.images
        .iter()
        .map(|img| {
            let objects = set
                .boxes_of(&img.media_id)
                .iter()
                .map(|b| VocObject {
                    name: set.label_map.name(b.class_id).unwrap_or_default().to_owned(),
                    difficult: 0,
                    bndbox: VocBndBox {
                        xmin: b.x_min,
                        ymin: b.y_min,
                        xmax: b.x_max,
                        ymax: b.y_max,
                    },
                })
                .collect();
            let ann = VocAnnotation {
                filename: Some(img.media_id.clone()),
                size: Some(VocSize {
                    width: Some(f64::from(img.width)),
                    height: Some(f64::from(img.height)),
                    depth: Some(3),
                }),
                objects,
            };
            let mut xml = String::new();
            let mut ser = quick_xml::se::Serializer::new(&mut xml);
            ser.indent(' ', 2);
            ann.serialize(ser)
                .map_err(|e| AnnotationError::parse(&img.media_id, e))?;
            xml.push('\n');
            Ok(Document::new(format!("{}.xml", img.media_id), xml))
        })
        .collect()
}
