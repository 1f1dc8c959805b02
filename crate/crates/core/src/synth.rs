//! Seeded synthetic data: random annotation sets, a small two-class rip
//! current dataset, and noisy loss curves. Used by the demos and test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{AnnotationSet, BoundingBox, ImageRecord, LabelMap, Task};
use crate::training::LossPoint;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SetShape {
    pub images: usize,
    pub classes: usize,
    /// Upper bound on boxes per image (inclusive).
    pub max_boxes: usize,
    /// Probability that an image carries no boxes at all.
    pub unlabeled_rate: f64,
}

impl SetShape {
    pub fn new(images: usize, classes: usize) -> Self {
        Self {
            images,
            classes,
            max_boxes: 4,
            unlabeled_rate: 0.1,
        }
    }
}

fn coordinate_pair(rng: &mut ChaCha8Rng, extent: u32) -> (f64, f64) {
    let extent = f64::from(extent);
    let a = rng.random_range(0.0..extent * 0.9);
    let b = rng.random_range(a + extent * 0.01..=extent);
    (a, b)
}

/// A random valid detection set. Class names are `class_00`, `class_01`, …
/// so lexicographic and id order agree.
pub fn random_detection_set(seed: u64, shape: SetShape) -> AnnotationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = AnnotationSet::empty(Task::Detection);
    set.label_map = LabelMap::new((0..shape.classes.max(1)).map(|i| format!("class_{i:02}")));
    for i in 0..shape.images {
        let media_id = format!("img_{i:05}.jpg");
        let width = rng.random_range(16..=4096u32);
        let height = rng.random_range(16..=4096u32);
        let unlabeled = shape.classes == 0 || rng.random_bool(shape.unlabeled_rate.clamp(0.0, 1.0));
        if !unlabeled {
            let n = rng.random_range(1..=shape.max_boxes.max(1));
            let boxes = (0..n)
                .map(|_| {
                    let (x0, x1) = coordinate_pair(&mut rng, width);
                    let (y0, y1) = coordinate_pair(&mut rng, height);
                    BoundingBox::new(x0, y0, x1, y1, rng.random_range(0..shape.classes))
                })
                .collect();
            set.boxes.insert(media_id.clone(), boxes);
        }
        set.images.push(ImageRecord::still(media_id, width, height));
    }
    set
}

/// Twenty 1280x720 beach images with two classes of rip current, ten images
/// each. Every fourth image also shows the other class.
pub fn rip_fixture() -> AnnotationSet {
    let mut set = AnnotationSet::empty(Task::Detection);
    set.label_map = LabelMap::new(["rip_channel", "rip_plume"]);
    for i in 0..20usize {
        let media_id = format!("beach_{i:02}.jpg");
        let class_id = i % 2;
        let x = 100.0 + 40.0 * i as f64;
        let mut boxes = vec![BoundingBox::new(x, 200.0, x + 320.0, 560.0, class_id)];
        if i % 4 == 3 {
            boxes.push(BoundingBox::new(20.0, 40.0, 260.0, 180.0, 1 - class_id));
        }
        set.boxes.insert(media_id.clone(), boxes);
        set.images.push(ImageRecord::still(media_id, 1280, 720));
    }
    set
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveShape {
    pub points: usize,
    /// Steps between consecutive reports.
    pub every: u64,
    pub start: f64,
    /// Value the loss decays toward.
    pub plateau: f64,
    /// Decay per report.
    pub rate: f64,
    /// Half-width of uniform noise, relative to the noiseless value.
    pub noise: f64,
}

/// Exponential decay toward a plateau with multiplicative uniform noise.
/// Losses never go negative.
pub fn loss_curve(seed: u64, shape: CurveShape) -> Vec<LossPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=shape.points)
        .map(|i| {
            let clean = shape.plateau + (shape.start - shape.plateau) * (-shape.rate * i as f64).exp();
            let jitter = if shape.noise > 0.0 {
                rng.random_range(-shape.noise..=shape.noise)
            } else {
                0.0
            };
            LossPoint::new(i as u64 * shape.every, (clean * (1.0 + jitter)).max(0.0))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate_annotation_set;

    #[test]
    fn random_sets_are_valid_and_seeded() {
        for seed in 0..20 {
            let set = random_detection_set(seed, SetShape::new(30, 3));
            assert!(validate_annotation_set(&set).ok, "seed {seed}");
            assert_eq!(set, random_detection_set(seed, SetShape::new(30, 3)));
        }
    }

    #[test]
    fn rip_fixture_shape() {
        let set = rip_fixture();
        assert!(validate_annotation_set(&set).ok);
        assert_eq!(set.images.len(), 20);
        assert_eq!(set.label_map.len(), 2);
    }

    #[test]
    fn curve_is_seeded_and_non_negative() {
        let shape = CurveShape {
            points: 200,
            every: 10,
            start: 2.0,
            plateau: 0.05,
            rate: 0.05,
            noise: 0.5,
        };
        let a = loss_curve(9, shape);
        assert_eq!(a, loss_curve(9, shape));
        assert!(a.iter().all(|p| p.loss >= 0.0));
        assert!(a.windows(2).all(|w| w[0].step < w[1].step));
    }
}
