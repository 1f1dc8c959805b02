use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{AnnotationSet, Task};

/// Lower bound (inclusive) of the marginal tier.
pub const MARGINAL_MIN_IMAGES: usize = 150;
/// Lower bound (inclusive) of the good tier.
pub const GOOD_MIN_IMAGES: usize = 500;
/// Lower bound (inclusive) of the optimal tier.
pub const OPTIMAL_MIN_IMAGES: usize = 2000;

/// Label counts. Every class in the label map has an entry, zero included.
///
/// `labeled_images + unlabeled_images == total_images`. In detection sets an
/// image may count toward several classes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub per_class_image_count: BTreeMap<usize, usize>,
    pub per_class_box_count: BTreeMap<usize, usize>,
    pub total_images: usize,
    pub labeled_images: usize,
    pub unlabeled_images: usize,
}

pub fn dataset_stats(set: &AnnotationSet) -> DatasetStats {
    let mut stats = DatasetStats {
        total_images: set.images.len(),
        ..Default::default()
    };
    for class_id in 0..set.label_map.len() {
        stats.per_class_image_count.insert(class_id, 0);
        if set.task == Task::Detection {
            stats.per_class_box_count.insert(class_id, 0);
        }
    }
    for img in &set.images {
        let classes = set.classes_of(&img.media_id);
        if classes.is_empty() {
            stats.unlabeled_images += 1;
        } else {
            stats.labeled_images += 1;
        }
        for c in classes {
            *stats.per_class_image_count.entry(c).or_default() += 1;
        }
        for b in set.boxes_of(&img.media_id) {
            *stats.per_class_box_count.entry(b.class_id).or_default() += 1;
        }
    }
    stats
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SufficiencyTier {
    Insufficient,
    Marginal,
    Good,
    Optimal,
}

impl SufficiencyTier {
    pub fn as_str(&self) -> &'static str {
        match self {
            SufficiencyTier::Insufficient => "insufficient",
            SufficiencyTier::Marginal => "marginal",
            SufficiencyTier::Good => "good",
            SufficiencyTier::Optimal => "optimal",
        }
    }

    /// Image count at which the next tier starts, if any.
    pub fn next_threshold(&self) -> Option<usize> {
        match self {
            SufficiencyTier::Insufficient => Some(MARGINAL_MIN_IMAGES),
            SufficiencyTier::Marginal => Some(GOOD_MIN_IMAGES),
            SufficiencyTier::Good => Some(OPTIMAL_MIN_IMAGES),
            SufficiencyTier::Optimal => None,
        }
    }
}

impl std::fmt::Display for SufficiencyTier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn tier_for(image_count: usize) -> SufficiencyTier {
    match image_count {
        n if n >= OPTIMAL_MIN_IMAGES => SufficiencyTier::Optimal,
        n if n >= GOOD_MIN_IMAGES => SufficiencyTier::Good,
        n if n >= MARGINAL_MIN_IMAGES => SufficiencyTier::Marginal,
        _ => SufficiencyTier::Insufficient,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvisoryReport {
    pub per_class_tier: BTreeMap<usize, SufficiencyTier>,
    pub notes: Vec<String>,
}

impl AdvisoryReport {
    /// Lowest tier over all classes; `None` for an empty label map.
    pub fn weakest(&self) -> Option<SufficiencyTier> {
        self.per_class_tier.values().min().copied()
    }
}

pub fn advise_sufficiency(stats: &DatasetStats) -> AdvisoryReport {
    let mut report = AdvisoryReport::default();
    for (&class_id, &count) in &stats.per_class_image_count {
        let tier = tier_for(count);
        report.per_class_tier.insert(class_id, tier);
        if let Some(next) = tier.next_threshold() {
            if tier < SufficiencyTier::Good {
                report.notes.push(format!(
                    "class {class_id}: {count} images ({tier}); {} more reach the next tier at {next}",
                    next - count
                ));
            }
        }
    }
    if stats.unlabeled_images > 0 {
        report.notes.push(format!(
            "{} unlabeled images are kept as negative examples",
            stats.unlabeled_images
        ));
    }
    report
}
