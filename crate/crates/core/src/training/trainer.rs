//! The seam between orchestration and whatever actually trains the model.
//!
//! Hand-off is directory based. For each run the orchestrator writes
//!
//! ```text
//! <run dir>/config.json            training configuration
//! <run dir>/splits/{train,test,eval}.txt, split.json
//! <run dir>/dataset/annotations.json   dataset in COCO form
//! ```
//!
//! and the trainer answers with `loss.log` (`step<TAB>loss` per line), then
//! `model.bin` plus `meta.json` once it has weights to hand back. A `failed`
//! file (its content is the reason) reports a crash; the orchestrator writes
//! `stop` when it no longer needs the run.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LossPoint, TrainingConfig, TrainingError};
use crate::annotations::{export, FormatTag};
use crate::dataset::{write_split_manifests, SplitResult};
use crate::domain::AnnotationSet;

pub const HANDOFF_CONFIG: &str = "config.json";
pub const LOSS_LOG: &str = "loss.log";
pub const ARTIFACT_FILE: &str = "model.bin";
pub const ARTIFACT_META_FILE: &str = "meta.json";
pub const FAILED_FILE: &str = "failed";
pub const STOP_FILE: &str = "stop";

/// Everything a trainer receives for one run.
#[derive(Clone, Copy, Debug)]
pub struct TrainingJob<'a> {
    pub run_id: &'a str,
    pub config: &'a TrainingConfig,
    pub split: &'a SplitResult,
    pub dataset: &'a AnnotationSet,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainerEvent {
    Loss(LossPoint),
    /// The trainer stopped on its own and its artifacts are ready.
    Finished,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    /// On-device inference format of `model.bin`, e.g. `tflite`.
    pub runtime_format_tag: String,
    pub input_size: (u32, u32),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainerArtifacts {
    pub weights_path: PathBuf,
    pub meta: ArtifactMeta,
}

pub trait TrainerAdapter: Send {
    /// Starts a run. Errors with `TRAINER_UNAVAILABLE` when the trainer cannot
    /// be reached.
    fn launch(&mut self, job: &TrainingJob<'_>) -> Result<(), TrainingError>;

    /// Events produced since the previous poll, in order.
    fn poll(&mut self, run_id: &str) -> Result<Vec<TrainerEvent>, TrainingError>;

    /// Asks the trainer to wrap up and leave its final artifacts behind.
    fn stop(&mut self, run_id: &str) -> Result<(), TrainingError>;

    fn artifacts(&self, run_id: &str) -> Result<TrainerArtifacts, TrainingError>;
}

/// Writes the hand-off directory for `job` into `dir`.
pub fn write_handoff(dir: &Path, job: &TrainingJob<'_>) -> Result<(), TrainingError> {
    fs::create_dir_all(dir)?;
    let config = serde_json::to_string_pretty(job.config).expect("config serializes");
    fs::write(dir.join(HANDOFF_CONFIG), config + "\n")?;
    write_split_manifests(&dir.join("splits"), job.split)
        .map_err(|e| TrainingError::Protocol(format!("writing split manifests: {e}")))?;
    let docs = export(job.dataset, FormatTag::CocoJson)
        .map_err(|e| TrainingError::Protocol(format!("exporting dataset: {e}")))?;
    let dataset_dir = dir.join("dataset");
    fs::create_dir_all(&dataset_dir)?;
    for doc in docs {
        fs::write(dataset_dir.join(&doc.name), doc.content)?;
    }
    Ok(())
}

pub fn read_handoff_config(dir: &Path) -> Result<TrainingConfig, TrainingError> {
    let text = fs::read_to_string(dir.join(HANDOFF_CONFIG))?;
    serde_json::from_str(&text).map_err(|e| TrainingError::Protocol(format!("{HANDOFF_CONFIG}: {e}")))
}

fn parse_loss_line(line: &str) -> Result<LossPoint, TrainingError> {
    let bad = || TrainingError::Protocol(format!("malformed {LOSS_LOG} line {line:?}"));
    let (step, loss) = line.split_once('\t').ok_or_else(bad)?;
    Ok(LossPoint::new(
        step.trim().parse().map_err(|_| bad())?,
        loss.trim().parse().map_err(|_| bad())?,
    ))
}

fn read_artifacts(dir: &Path) -> Result<TrainerArtifacts, TrainingError> {
    let meta_path = dir.join(ARTIFACT_META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| TrainingError::ArtifactMissing {
        path: meta_path.display().to_string(),
        message: e.to_string(),
    })?;
    let meta: ArtifactMeta =
        serde_json::from_str(&text).map_err(|e| TrainingError::Protocol(format!("{ARTIFACT_META_FILE}: {e}")))?;
    Ok(TrainerArtifacts {
        weights_path: dir.join(ARTIFACT_FILE),
        meta,
    })
}

#[derive(Debug, Default)]
struct TailState {
    offset: u64,
    skip_through: Option<u64>,
    finished_sent: bool,
}

/// Adapter for an external trainer process that shares a directory with the
/// orchestrator. It never starts the process itself.
#[derive(Debug)]
pub struct DirectoryTrainer {
    root: PathBuf,
    runs: HashMap<String, TailState>,
}

impl DirectoryTrainer {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            runs: HashMap::new(),
        }
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    /// Re-attaches to a run after a restart. Loss lines up to and including
    /// `last_recorded_step` are skipped, since the run already holds them.
    pub fn resume(&mut self, run_id: &str, last_recorded_step: Option<u64>) {
        self.runs.insert(
            run_id.to_owned(),
            TailState {
                skip_through: last_recorded_step,
                ..Default::default()
            },
        );
    }
}

impl TrainerAdapter for DirectoryTrainer {
    fn launch(&mut self, job: &TrainingJob<'_>) -> Result<(), TrainingError> {
        let dir = self.run_dir(job.run_id);
        write_handoff(&dir, job).map_err(|e| TrainingError::TrainerUnavailable(format!("{}: {e}", dir.display())))?;
        self.runs.insert(job.run_id.to_owned(), TailState::default());
        Ok(())
    }

    fn poll(&mut self, run_id: &str) -> Result<Vec<TrainerEvent>, TrainingError> {
        let dir = self.run_dir(run_id);
        let state = self
            .runs
            .get_mut(run_id)
            .ok_or_else(|| TrainingError::UnknownRun(run_id.to_owned()))?;
        let mut events = Vec::new();

        if let Ok(mut file) = fs::File::open(dir.join(LOSS_LOG)) {
            file.seek(SeekFrom::Start(state.offset))?;
            let mut buf = String::new();
            file.read_to_string(&mut buf)?;
            // A trailing line without newline may still be mid-write.
            let complete = buf.rfind('\n').map_or(0, |i| i + 1);
            for line in buf[..complete].lines().filter(|l| !l.trim().is_empty()) {
                let point = parse_loss_line(line)?;
                if state.skip_through.is_some_and(|s| point.step <= s) {
                    continue;
                }
                events.push(TrainerEvent::Loss(point));
            }
            state.offset += complete as u64;
        }

        if let Ok(reason) = fs::read_to_string(dir.join(FAILED_FILE)) {
            events.push(TrainerEvent::Failed(reason.trim().to_owned()));
        } else if !state.finished_sent && dir.join(ARTIFACT_FILE).is_file() && dir.join(ARTIFACT_META_FILE).is_file() {
            state.finished_sent = true;
            events.push(TrainerEvent::Finished);
        }
        Ok(events)
    }

    fn stop(&mut self, run_id: &str) -> Result<(), TrainingError> {
        fs::write(self.run_dir(run_id).join(STOP_FILE), "")?;
        Ok(())
    }

    fn artifacts(&self, run_id: &str) -> Result<TrainerArtifacts, TrainingError> {
        read_artifacts(&self.run_dir(run_id))
    }
}

#[derive(Debug)]
struct MockRun {
    dir: PathBuf,
    cursor: usize,
    weights: Vec<u8>,
    done: bool,
}

/// Plays a scripted loss curve through the directory protocol and leaves a
/// deterministic dummy artifact behind.
///
/// The dummy weights depend only on the model, label map and base weights, so
/// two runs of the same project package to the same checksum.
#[derive(Debug)]
pub struct MockTrainer {
    workdir: PathBuf,
    script: Vec<LossPoint>,
    per_poll: usize,
    available: bool,
    fail_after: Option<(usize, String)>,
    runtime_format_tag: String,
    runs: HashMap<String, MockRun>,
}

impl MockTrainer {
    pub fn new(workdir: impl Into<PathBuf>, script: Vec<LossPoint>) -> Self {
        Self {
            workdir: workdir.into(),
            script,
            per_poll: usize::MAX,
            available: true,
            fail_after: None,
            runtime_format_tag: "tflite".into(),
            runs: HashMap::new(),
        }
    }

    /// A curve decaying from `start` toward `floor`, one point every `every`
    /// steps.
    pub fn exponential_curve(points: usize, every: u64, start: f64, floor: f64, rate: f64) -> Vec<LossPoint> {
        (1..=points)
            .map(|i| {
                let step = i as u64 * every;
                LossPoint::new(step, floor + (start - floor) * (-rate * i as f64).exp())
            })
            .collect()
    }

    /// Emit at most `n` events per poll.
    pub fn per_poll(mut self, n: usize) -> Self {
        self.per_poll = n.max(1);
        self
    }

    /// Refuse every launch, as an unreachable trainer would.
    pub fn unavailable(mut self) -> Self {
        self.available = false;
        self
    }

    /// Report a failure after `points` loss reports.
    pub fn failing_after(mut self, points: usize, reason: impl Into<String>) -> Self {
        self.fail_after = Some((points, reason.into()));
        self
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.workdir.join(run_id)
    }

    fn input_size(model: &str) -> (u32, u32) {
        let side = match model {
            "EfficientDet D0" => 512,
            "EfficientDet D1" => 640,
            "EfficientDet D2" => 768,
            "YOLOv8m" => 640,
            _ => 320,
        };
        (side, side)
    }

    fn dummy_weights(config: &TrainingConfig) -> Vec<u8> {
        let mut seed = Sha256::new();
        seed.update(config.model.name.as_bytes());
        for name in config.label_map.names() {
            seed.update([0u8]);
            seed.update(name.as_bytes());
        }
        seed.update([0u8]);
        seed.update(config.base_weights.as_bytes());
        let mut block: [u8; 32] = seed.finalize().into();
        let mut bytes = b"FIELDLAB-MOCK-WEIGHTS\n".to_vec();
        for _ in 0..128 {
            block = Sha256::digest(block).into();
            bytes.extend_from_slice(&block);
        }
        bytes
    }

    fn write_artifacts(&self, run_id: &str, meta: &ArtifactMeta) -> Result<(), TrainingError> {
        let run = &self.runs[run_id];
        fs::write(run.dir.join(ARTIFACT_FILE), &run.weights)?;
        let json = serde_json::to_string_pretty(meta).expect("meta serializes");
        fs::write(run.dir.join(ARTIFACT_META_FILE), json + "\n")?;
        Ok(())
    }

    fn meta_for(&self, run_id: &str) -> Result<ArtifactMeta, TrainingError> {
        let config = read_handoff_config(&self.run_dir(run_id))?;
        Ok(ArtifactMeta {
            runtime_format_tag: self.runtime_format_tag.clone(),
            input_size: Self::input_size(&config.model.name),
        })
    }
}

impl TrainerAdapter for MockTrainer {
    fn launch(&mut self, job: &TrainingJob<'_>) -> Result<(), TrainingError> {
        if !self.available {
            return Err(TrainingError::TrainerUnavailable(
                "mock trainer refused the connection".into(),
            ));
        }
        let dir = self.run_dir(job.run_id);
        write_handoff(&dir, job)?;
        fs::write(dir.join(LOSS_LOG), "")?;
        self.runs.insert(
            job.run_id.to_owned(),
            MockRun {
                dir,
                cursor: 0,
                weights: Self::dummy_weights(job.config),
                done: false,
            },
        );
        Ok(())
    }

    fn poll(&mut self, run_id: &str) -> Result<Vec<TrainerEvent>, TrainingError> {
        let meta = self.meta_for(run_id)?;
        let script_len = self.script.len();
        let fail_after = self.fail_after.clone();
        let run = self
            .runs
            .get_mut(run_id)
            .ok_or_else(|| TrainingError::UnknownRun(run_id.to_owned()))?;
        if run.done {
            return Ok(Vec::new());
        }
        let limit = fail_after.as_ref().map_or(script_len, |(n, _)| (*n).min(script_len));
        let end = run.cursor.saturating_add(self.per_poll).min(limit);
        let batch = &self.script[run.cursor..end];
        let mut log = String::new();
        for p in batch {
            log.push_str(&format!("{}\t{}\n", p.step, p.loss));
        }
        let mut file = fs::OpenOptions::new().append(true).open(run.dir.join(LOSS_LOG))?;
        std::io::Write::write_all(&mut file, log.as_bytes())?;
        let mut events: Vec<TrainerEvent> = batch.iter().copied().map(TrainerEvent::Loss).collect();
        run.cursor = end;

        if run.cursor == limit {
            run.done = true;
            match fail_after {
                Some((_, reason)) => {
                    fs::write(run.dir.join(FAILED_FILE), &reason)?;
                    events.push(TrainerEvent::Failed(reason));
                }
                None => {
                    self.write_artifacts(run_id, &meta)?;
                    events.push(TrainerEvent::Finished);
                }
            }
        }
        Ok(events)
    }

    fn stop(&mut self, run_id: &str) -> Result<(), TrainingError> {
        let meta = self.meta_for(run_id)?;
        let run = self
            .runs
            .get_mut(run_id)
            .ok_or_else(|| TrainingError::UnknownRun(run_id.to_owned()))?;
        fs::write(run.dir.join(STOP_FILE), "")?;
        let failed = run.dir.join(FAILED_FILE).exists();
        run.done = true;
        if !failed {
            self.write_artifacts(run_id, &meta)?;
        }
        Ok(())
    }

    fn artifacts(&self, run_id: &str) -> Result<TrainerArtifacts, TrainingError> {
        read_artifacts(&self.run_dir(run_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_lines() {
        assert_eq!(parse_loss_line("100\t0.25").unwrap(), LossPoint::new(100, 0.25));
        assert!(parse_loss_line("100 0.25").is_err());
        assert!(parse_loss_line("x\t0.25").is_err());
    }

    #[test]
    fn exponential_curve_decays() {
        let curve = MockTrainer::exponential_curve(50, 10, 2.0, 0.02, 0.2);
        assert_eq!(curve.len(), 50);
        assert_eq!(curve[0].step, 10);
        assert!(curve.windows(2).all(|w| w[1].loss < w[0].loss));
        assert!(curve.last().unwrap().loss > 0.02);
    }

    #[test]
    fn missing_meta_is_artifact_missing() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_artifacts(dir.path()).unwrap_err();
        assert_eq!(err.code(), "ARTIFACT_MISSING");
    }
}
