//! Seeded, stratified train/test/eval splitting.
//!
//! Each stratum is apportioned on its own by largest remainder over the
//! normalized ratio. Remainder ties, and any units a tie leaves over, go to
//! train first, then test, then eval. Members of a stratum are sorted by
//! media id and shuffled with a ChaCha stream seeded from the caller's seed,
//! so a split is a pure function of `(set, ratio, seed)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::domain::{AnnotationSet, MediaId};

/// File name of the JSON sidecar written next to the three manifests.
pub const SPLIT_SIDECAR: &str = "split.json";

const SUBSETS: [&str; 3] = ["train", "test", "eval"];

/// Snap for quotas that sit a float ulp below an integer.
const QUOTA_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: f64,
    pub test: f64,
    pub eval: f64,
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self::new(6.0, 2.0, 2.0)
    }
}

impl SplitRatio {
    pub const fn new(train: f64, test: f64, eval: f64) -> Self {
        Self { train, test, eval }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        for (name, v) in SUBSETS.iter().zip(self.parts()) {
            if !(v.is_finite() && v > 0.0) {
                return Err(DatasetError::InvalidRatio(format!(
                    "{name} part must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn parts(&self) -> [f64; 3] {
        [self.train, self.test, self.eval]
    }

    /// Proportions summing to one.
    pub fn normalized(&self) -> [f64; 3] {
        let sum: f64 = self.parts().iter().sum();
        self.parts().map(|p| p / sum)
    }
}

impl fmt::Display for SplitRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.train, self.test, self.eval)
    }
}

impl FromStr for SplitRatio {
    type Err = DatasetError;

    /// Parses `train:test:eval`, e.g. `6:2:2` or `0.7:0.15:0.15`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| DatasetError::InvalidRatio(format!("{s:?} is not train:test:eval")))?;
        let [train, test, eval] = parts[..] else {
            return Err(DatasetError::InvalidRatio(format!("{s:?} needs exactly three parts")));
        };
        let ratio = SplitRatio::new(train, test, eval);
        ratio.validate()?;
        Ok(ratio)
    }
}

/// Largest-remainder apportionment of `n` units over `ratio`.
pub fn apportion(n: usize, ratio: &SplitRatio) -> [usize; 3] {
    let props = ratio.normalized();
    let quotas = props.map(|p| n as f64 * p);
    let mut counts = quotas.map(|q| ((q + QUOTA_EPS).floor() as usize).min(n));
    let assigned: usize = counts.iter().sum();
    let mut leftover = n.saturating_sub(assigned);

    let mut order = [0usize, 1, 2];
    let remainders = [0, 1, 2].map(|i| (quotas[i] - counts[i] as f64).max(0.0));
    // Stable sort keeps train < test < eval among equal remainders.
    order.sort_by(|&a, &b| remainders[b].total_cmp(&remainders[a]));
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "class_id")]
pub enum Stratum {
    Class(usize),
    Unlabeled,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumSplit {
    pub stratum: Stratum,
    pub total: usize,
    pub train: usize,
    pub test: usize,
    pub eval: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub train: Vec<MediaId>,
    pub test: Vec<MediaId>,
    pub eval: Vec<MediaId>,
    pub seed: u64,
    pub ratio: SplitRatio,
    pub strata: Vec<StratumSplit>,
}

impl SplitResult {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.test.len(), self.eval.len())
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.test.len() + self.eval.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Stratum of every image. Images with several classes join the stratum of
/// their rarest class (fewest images; lowest id on ties) so that small
/// classes still reach every subset.
fn strata_of(set: &AnnotationSet) -> BTreeMap<Stratum, Vec<&str>> {
    let mut class_images: HashMap<usize, usize> = HashMap::new();
    let classes: Vec<Vec<usize>> = set
        .images
        .iter()
        .map(|img| {
            let ids = set.classes_of(&img.media_id);
            for &c in &ids {
                *class_images.entry(c).or_default() += 1;
            }
            ids
        })
        .collect();

    let mut strata: BTreeMap<Stratum, Vec<&str>> = BTreeMap::new();
    for (img, ids) in set.images.iter().zip(classes) {
        let stratum = ids
            .iter()
            .min_by_key(|&&c| (class_images[&c], c))
            .map_or(Stratum::Unlabeled, |&c| Stratum::Class(c));
        strata.entry(stratum).or_default().push(&img.media_id);
    }
    strata
}

pub fn split_dataset(set: &AnnotationSet, ratio: &SplitRatio, seed: u64) -> Result<SplitResult, DatasetError> {
    if set.images.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    ratio.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subsets: [Vec<MediaId>; 3] = Default::default();
    let mut summaries = Vec::new();

    for (stratum, mut members) in strata_of(set) {
        members.sort_unstable();
        members.shuffle(&mut rng);
        let [n_train, n_test, n_eval] = apportion(members.len(), ratio);
        let (train, rest) = members.split_at(n_train);
        let (test, eval) = rest.split_at(n_test);
        for (subset, ids) in subsets.iter_mut().zip([train, test, eval]) {
            subset.extend(ids.iter().map(|s| s.to_string()));
        }
        summaries.push(StratumSplit {
            stratum,
            total: members.len(),
            train: n_train,
            test: n_test,
            eval: n_eval,
        });
    }

    let [mut train, mut test, mut eval] = subsets;
    train.sort();
    test.sort();
    eval.sort();
    Ok(SplitResult {
        train,
        test,
        eval,
        seed,
        ratio: *ratio,
        strata: summaries,
    })
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    ratio: SplitRatio,
    seed: u64,
    counts: BTreeMap<String, usize>,
    strata: Vec<StratumSplit>,
}

/// Writes `train.txt`, `test.txt`, `eval.txt` (one media id per line) and the
/// [`SPLIT_SIDECAR`] into `dir`, returning the written paths.
pub fn write_split_manifests(dir: &Path, split: &SplitResult) -> Result<Vec<PathBuf>, DatasetError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, ids) in SUBSETS.iter().zip([&split.train, &split.test, &split.eval]) {
        let path = dir.join(format!("{name}.txt"));
        let mut text = ids.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        fs::write(&path, text)?;
        written.push(path);
    }
    let sidecar = Sidecar {
        ratio: split.ratio,
        seed: split.seed,
        counts: SUBSETS
            .iter()
            .zip([split.train.len(), split.test.len(), split.eval.len()])
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        strata: split.strata.clone(),
    };
    let path = dir.join(SPLIT_SIDECAR);
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&path, json + "\n")?;
    written.push(path);
    Ok(written)
}

pub fn read_split_manifests(dir: &Path) -> Result<SplitResult, DatasetError> {
    let sidecar_path = dir.join(SPLIT_SIDECAR);
    let sidecar: Sidecar =
        serde_json::from_str(&fs::read_to_string(&sidecar_path)?).map_err(|e| DatasetError::Manifest {
            path: sidecar_path.display().to_string(),
            message: e.to_string(),
        })?;
    let mut lists: [Vec<MediaId>; 3] = Default::default();
    for (name, list) in SUBSETS.iter().zip(lists.iter_mut()) {
        let path = dir.join(format!("{name}.txt"));
        *list = fs::read_to_string(&path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(str::to_owned)
            .collect();
        if sidecar.counts.get(*name) != Some(&list.len()) {
            return Err(DatasetError::Manifest {
                path: path.display().to_string(),
                message: format!(
                    "holds {} ids but the sidecar records {:?}",
                    list.len(),
                    sidecar.counts.get(*name)
                ),
            });
        }
    }
    let [train, test, eval] = lists;
    Ok(SplitResult {
        train,
        test,
        eval,
        seed: sidecar.seed,
        ratio: sidecar.ratio,
        strata: sidecar.strata,
    })
}
