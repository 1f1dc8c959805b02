use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{RunStatus, TrainerArtifacts, TrainingError, TrainingRun};
use crate::domain::{LabelMap, Task};

/// Trained weights ready to embed in an app.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelPackage {
    /// Where the weights live. Opaque to everything but the bundler.
    pub weights_ref: String,
    pub runtime_format_tag: String,
    pub label_map: LabelMap,
    pub input_size: (u32, u32),
    /// Lowercase hex SHA-256 of the weight bytes.
    pub checksum: String,
    pub source_run: String,
    pub task: Task,
    pub model_name: String,
}

fn read_weights(path: &Path) -> Result<Vec<u8>, TrainingError> {
    fs::read(path).map_err(|e| TrainingError::ArtifactMissing {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn package_model(run: &TrainingRun, artifacts: &TrainerArtifacts) -> Result<ModelPackage, TrainingError> {
    if !matches!(run.status, RunStatus::Converged | RunStatus::MaxStepsReached) {
        return Err(TrainingError::RunNotFinished {
            run_id: run.run_id.clone(),
            status: run.status,
        });
    }
    let bytes = read_weights(&artifacts.weights_path)?;
    Ok(ModelPackage {
        weights_ref: artifacts.weights_path.display().to_string(),
        runtime_format_tag: artifacts.meta.runtime_format_tag.clone(),
        label_map: run.config.label_map.clone(),
        input_size: artifacts.meta.input_size,
        checksum: sha256_hex(&bytes),
        source_run: run.run_id.clone(),
        task: run.config.model.task,
        model_name: run.config.model.name.clone(),
    })
}

/// Re-hashes the referenced weights and compares with the recorded checksum.
pub fn verify_package(package: &ModelPackage) -> Result<(), TrainingError> {
    let bytes = read_weights(Path::new(&package.weights_ref))?;
    let actual = sha256_hex(&bytes);
    if actual != package.checksum {
        return Err(TrainingError::ChecksumMismatch {
            path: package.weights_ref.clone(),
            expected: package.checksum.clone(),
            actual,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_abc() {
        // FIPS 180-2 test vector
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
