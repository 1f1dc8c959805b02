//! On-disk project layout: `dataset/`, `splits/`, `runs/` and `bundles/`
//! under one root.

use std::fs;
use std::path::{Path, PathBuf};

use fieldlab_core::dataset::{read_split_manifests, SplitResult};
use fieldlab_core::domain::AnnotationSet;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const DATASET_FILE: &str = "annotations.json";
pub const TRAINING_CONFIG_FILE: &str = "config.json";
pub const RUN_FILE: &str = "run.json";
pub const PACKAGE_FILE: &str = "package.json";
pub const DESCRIPTOR_FILE: &str = "descriptor.json";

#[derive(Clone, Debug)]
pub struct Project {
    pub root: PathBuf,
}

impl Project {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn dataset_file(&self) -> PathBuf {
        self.dataset_dir().join(DATASET_FILE)
    }

    pub fn splits_dir(&self) -> PathBuf {
        self.root.join("splits")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.runs_dir().join(run_id)
    }

    pub fn training_config(&self) -> PathBuf {
        self.runs_dir().join(TRAINING_CONFIG_FILE)
    }

    pub fn bundles_dir(&self) -> PathBuf {
        self.root.join("bundles")
    }

    pub fn bundle_dir(&self, bundle_id: &str) -> PathBuf {
        self.bundles_dir().join(bundle_id)
    }

    pub fn load_dataset(&self) -> CliResult<AnnotationSet> {
        let path = self.dataset_file();
        if !path.is_file() {
            return Err(CliError::validation(
                "NO_DATASET",
                format!("{} does not exist; run `dataset ingest` first", path.display()),
            ));
        }
        read_json(&path)
    }

    pub fn load_split(&self) -> CliResult<SplitResult> {
        let dir = self.splits_dir();
        if !dir.is_dir() {
            return Err(CliError::validation(
                "MISSING_SPLIT",
                format!("{} does not exist; run `dataset split` first", dir.display()),
            ));
        }
        Ok(read_split_manifests(&dir)?)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation("PARSE_ERROR", format!("{}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline, parents created as needed.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<PathBuf> {
    write_text(path, &to_json(value))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<PathBuf> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("result serializes") + "\n"
}
