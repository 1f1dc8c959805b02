use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::{
    check_convergence, ConvergenceDecision, LossPoint, TrainerAdapter, TrainerEvent, TrainingConfig, TrainingError,
    TrainingJob,
};
use crate::dataset::SplitResult;
use crate::domain::AnnotationSet;
use crate::ids::fresh_id;
use crate::models::check_class_capacity;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pending,
    Running,
    Converged,
    MaxStepsReached,
    Failed,
}

impl RunStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            RunStatus::Converged | RunStatus::MaxStepsReached | RunStatus::Failed
        )
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Pending => "pending",
            RunStatus::Running => "running",
            RunStatus::Converged => "converged",
            RunStatus::MaxStepsReached => "max_steps_reached",
            RunStatus::Failed => "failed",
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub run_id: String,
    pub config: TrainingConfig,
    pub loss_history: Vec<LossPoint>,
    pub status: RunStatus,
    /// Step at which the status left `running`, if it has.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at_step: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl TrainingRun {
    pub fn new(config: TrainingConfig) -> Self {
        Self {
            run_id: fresh_id(),
            config,
            loss_history: Vec::new(),
            status: RunStatus::Pending,
            finished_at_step: None,
            failure: None,
        }
    }

    pub fn last_step(&self) -> Option<u64> {
        self.loss_history.last().map(|p| p.step)
    }

    fn ensure_running(&self) -> Result<(), TrainingError> {
        if self.status == RunStatus::Running {
            Ok(())
        } else {
            Err(TrainingError::RunNotActive {
                run_id: self.run_id.clone(),
                status: self.status,
            })
        }
    }

    /// Appends one loss report and re-evaluates convergence and the step
    /// budget. Convergence takes precedence when both trip on the same step.
    pub fn record_loss(&mut self, step: u64, loss: f64) -> Result<RunStatus, TrainingError> {
        self.ensure_running()?;
        if let Some(last) = self.last_step() {
            if step <= last {
                return Err(TrainingError::OutOfOrderStep { step, last });
            }
        }
        if !(loss.is_finite() && loss >= 0.0) {
            return Err(TrainingError::InvalidLoss(loss));
        }
        self.loss_history.push(LossPoint::new(step, loss));
        if check_convergence(&self.loss_history, &self.config.convergence) == ConvergenceDecision::Converged {
            self.status = RunStatus::Converged;
            self.finished_at_step = Some(step);
        } else if step >= self.config.max_steps {
            self.status = RunStatus::MaxStepsReached;
            self.finished_at_step = Some(step);
        }
        Ok(self.status)
    }

    /// The trainer stopped on its own before convergence: its budget is spent.
    pub fn finish(&mut self) -> Result<RunStatus, TrainingError> {
        self.ensure_running()?;
        self.status = RunStatus::MaxStepsReached;
        self.finished_at_step = self.last_step();
        Ok(self.status)
    }

    pub fn fail(&mut self, reason: impl Into<String>) -> Result<RunStatus, TrainingError> {
        self.ensure_running()?;
        self.status = RunStatus::Failed;
        self.failure = Some(reason.into());
        self.finished_at_step = self.last_step();
        Ok(self.status)
    }

    fn apply(&mut self, event: TrainerEvent) -> Result<(), TrainingError> {
        match event {
            TrainerEvent::Loss(p) => self.record_loss(p.step, p.loss).map(drop),
            TrainerEvent::Finished => self.finish().map(drop),
            TrainerEvent::Failed(reason) => self.fail(reason).map(drop),
        }
    }
}

/// Hands a run to the trainer. The returned run is `running`.
pub fn start_training(
    config: TrainingConfig,
    trainer: &mut dyn TrainerAdapter,
    split: &SplitResult,
    dataset: &AnnotationSet,
) -> Result<TrainingRun, TrainingError> {
    config.convergence.validate()?;
    check_class_capacity(&config.model, config.label_map.len() as u32)?;
    let mut run = TrainingRun::new(config);
    let job = TrainingJob {
        run_id: &run.run_id,
        config: &run.config,
        split,
        dataset,
    };
    trainer.launch(&job)?;
    run.status = RunStatus::Running;
    Ok(run)
}

/// A run shared between its single writer (the event pump) and any number of
/// readers. Readers get whole-batch snapshots, never a half-applied batch.
#[derive(Clone, Debug)]
pub struct SharedRun(Arc<RwLock<TrainingRun>>);

impl SharedRun {
    pub fn new(run: TrainingRun) -> Self {
        Self(Arc::new(RwLock::new(run)))
    }

    pub fn snapshot(&self) -> TrainingRun {
        self.0.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn status(&self) -> RunStatus {
        self.0.read().unwrap_or_else(|e| e.into_inner()).status
    }

    pub fn run_id(&self) -> String {
        self.0.read().unwrap_or_else(|e| e.into_inner()).run_id.clone()
    }
}

/// Pulls pending events from the trainer into the run. Once the run leaves
/// `running` the trainer is told to stop and later events are dropped.
pub fn pump(run: &SharedRun, trainer: &mut dyn TrainerAdapter) -> Result<RunStatus, TrainingError> {
    let run_id = run.run_id();
    let events = trainer.poll(&run_id)?;
    let status = {
        let mut guard = run.0.write().unwrap_or_else(|e| e.into_inner());
        for event in events {
            if guard.status.is_terminal() {
                break;
            }
            guard.apply(event)?;
        }
        guard.status
    };
    if status.is_terminal() {
        trainer.stop(&run_id)?;
    }
    Ok(status)
}

/// Persists runs as `<root>/<run_id>/run.json` so monitoring can resume after
/// a restart.
#[derive(Clone, Debug)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    pub fn save(&self, run: &TrainingRun) -> Result<PathBuf, TrainingError> {
        let dir = self.run_dir(&run.run_id);
        fs::create_dir_all(&dir)?;
        let path = dir.join("run.json");
        let tmp = dir.join("run.json.tmp");
        let json = serde_json::to_string_pretty(run).expect("run serializes");
        fs::write(&tmp, json + "\n")?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    pub fn load(&self, run_id: &str) -> Result<TrainingRun, TrainingError> {
        let path = self.run_dir(run_id).join("run.json");
        let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => TrainingError::UnknownRun(run_id.to_owned()),
            _ => TrainingError::Io(e),
        })?;
        serde_json::from_str(&text).map_err(|e| TrainingError::Protocol(format!("{}: {e}", path.display())))
    }

    /// All stored runs, ordered by run id.
    pub fn list(&self) -> Result<Vec<TrainingRun>, TrainingError> {
        let mut runs = Vec::new();
        let entries = match fs::read_dir(&self.root) {
            Ok(entries) => entries,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(runs),
            Err(e) => return Err(e.into()),
        };
        for entry in entries {
            let entry = entry?;
            if entry.path().join("run.json").is_file() {
                runs.push(self.load(&entry.file_name().to_string_lossy())?);
            }
        }
        runs.sort_by(|a, b| a.run_id.cmp(&b.run_id));
        Ok(runs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::{build_training_config, ConvergencePolicy, SplitRef, TrainingOverrides};
    use crate::{domain::LabelMap, models::default_registry};

    fn config(max_steps: u64, policy: ConvergencePolicy) -> TrainingConfig {
        let split = SplitRef {
            manifest_dir: "s".into(),
            seed: 0,
            train: 1,
            test: 0,
            eval: 0,
        };
        let overrides = TrainingOverrides {
            max_steps: Some(max_steps),
            loss_threshold: Some(policy.loss_threshold),
            window: Some(policy.window),
            patience: Some(policy.patience),
            base_weights: None,
        };
        build_training_config(
            &LabelMap::new(["rip", "no_rip"]),
            &default_registry()[4],
            Some(&split),
            &overrides,
        )
        .unwrap()
    }

    fn running(max_steps: u64, policy: ConvergencePolicy) -> TrainingRun {
        let mut run = TrainingRun::new(config(max_steps, policy));
        run.status = RunStatus::Running;
        run
    }

    #[test]
    fn history_grows() {
        let mut run = running(1000, ConvergencePolicy::default());
        run.record_loss(50, 0.9).unwrap();
        run.record_loss(100, 0.35).unwrap();
        assert_eq!(run.loss_history.len(), 2);
        assert_eq!(run.status, RunStatus::Running);
    }

    #[test]
    fn out_of_order_rejected() {
        let mut run = running(1000, ConvergencePolicy::default());
        run.record_loss(100, 0.5).unwrap();
        let err = run.record_loss(50, 0.4).unwrap_err();
        assert_eq!(err.code(), "OUT_OF_ORDER_STEP");
        assert_eq!(run.record_loss(100, 0.4).unwrap_err().code(), "OUT_OF_ORDER_STEP");
        assert_eq!(run.loss_history.len(), 1);
    }

    #[test]
    fn converged_run_is_closed() {
        let mut run = running(1000, ConvergencePolicy::new(0.1, 2, 1));
        run.record_loss(1, 0.05).unwrap();
        assert_eq!(run.record_loss(2, 0.05).unwrap(), RunStatus::Converged);
        assert_eq!(run.finished_at_step, Some(2));
        assert_eq!(run.record_loss(3, 0.01).unwrap_err().code(), "RUN_NOT_ACTIVE");
    }

    #[test]
    fn budget_exhausted() {
        let mut run = running(10, ConvergencePolicy::new(0.1, 2, 1));
        run.record_loss(5, 1.0).unwrap();
        assert_eq!(run.record_loss(10, 1.0).unwrap(), RunStatus::MaxStepsReached);
    }

    #[test]
    fn convergence_wins_at_budget() {
        let mut run = running(2, ConvergencePolicy::new(0.1, 2, 1));
        run.record_loss(1, 0.01).unwrap();
        assert_eq!(run.record_loss(2, 0.01).unwrap(), RunStatus::Converged);
    }

    #[test]
    fn invalid_loss_and_pending_run() {
        let mut run = running(10, ConvergencePolicy::default());
        assert_eq!(run.record_loss(1, -0.1).unwrap_err().code(), "INVALID_LOSS");
        assert_eq!(run.record_loss(1, f64::NAN).unwrap_err().code(), "INVALID_LOSS");
        let mut pending = TrainingRun::new(config(10, ConvergencePolicy::default()));
        assert_eq!(pending.record_loss(1, 0.1).unwrap_err().code(), "RUN_NOT_ACTIVE");
    }

    #[test]
    fn failure_is_terminal() {
        let mut run = running(10, ConvergencePolicy::default());
        run.record_loss(1, 3.0).unwrap();
        run.fail("out of memory").unwrap();
        assert_eq!(run.status, RunStatus::Failed);
        assert_eq!(run.failure.as_deref(), Some("out of memory"));
        assert!(run.finish().is_err());
    }

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let mut run = running(10, ConvergencePolicy::default());
        run.record_loss(1, 0.5).unwrap();
        store.save(&run).unwrap();
        assert_eq!(store.load(&run.run_id).unwrap(), run);
        assert_eq!(store.list().unwrap(), vec![run]);
        assert_eq!(store.load("nope").unwrap_err().code(), "UNKNOWN_RUN");
        assert!(RunStore::new(dir.path().join("absent")).list().unwrap().is_empty());
    }
}
