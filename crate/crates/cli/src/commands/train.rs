use std::thread;
use std::time::{Duration, Instant};

use clap::{Args, Subcommand, ValueEnum};
use fieldlab_core::models::find_model;
use fieldlab_core::training::{
    build_training_config, package_model, pump, start_training, verify_package, DirectoryTrainer, MockTrainer,
    RunStatus, RunStore, SharedRun, SplitRef, TrainerAdapter, TrainingConfig, TrainingError, TrainingOverrides,
    TrainingRun,
};
use serde::Serialize;

use super::model::{registry, RegistryArg};
use crate::error::{CliError, CliResult};
use crate::project::{read_json, write_json, Project, PACKAGE_FILE, RUN_FILE};
use crate::{Ctx, Outcome};

#[derive(Debug, Subcommand)]
pub enum TrainCommand {
    /// Build the training configuration from the dataset, split and a model.
    Init(InitArgs),
    /// Launch a run from the saved configuration.
    Start(StartArgs),
    /// Show one run (polling it if still running) or list all runs.
    Status(StatusArgs),
    /// Package a finished run's weights for the app.
    Package(RunArg),
}

#[derive(Debug, Args)]
pub struct InitArgs {
    /// Registry model name, e.g. "EfficientDet D1".
    #[arg(long)]
    pub model: String,
    #[command(flatten)]
    pub registry: RegistryArg,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub loss_threshold: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub base_weights: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TrainerKind {
    /// In-process stand-in that replays a synthetic loss curve.
    Mock,
    /// An external trainer that follows the hand-off directory protocol.
    External,
}

#[derive(Debug, Args)]
pub struct StartArgs {
    #[arg(long, value_enum, default_value = "mock")]
    pub trainer: TrainerKind,
    /// Mock: number of loss reports in the scripted curve.
    #[arg(long, default_value_t = 600)]
    pub mock_points: usize,
    /// Mock: steps between loss reports.
    #[arg(long, default_value_t = 10)]
    pub mock_every: u64,
    /// Mock: per-report decay rate of the curve.
    #[arg(long, default_value_t = 0.05)]
    pub mock_rate: f64,
    /// Mock: fail after this many reports.
    #[arg(long)]
    pub mock_fail_after: Option<usize>,
    /// External: keep polling until the run ends.
    #[arg(long)]
    pub wait: bool,
    /// External: give up waiting after this many seconds.
    #[arg(long, default_value_t = 3600)]
    pub timeout_s: u64,
    #[arg(long, default_value_t = 500)]
    pub poll_ms: u64,
}

#[derive(Debug, Args)]
pub struct StatusArgs {
    pub run_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArg {
    pub run_id: String,
}

pub(crate) fn run(ctx: &Ctx<'_>, cmd: TrainCommand) -> CliResult<Outcome> {
    match cmd {
        TrainCommand::Init(args) => init(ctx, args),
        TrainCommand::Start(args) => start(ctx, args),
        TrainCommand::Status(args) => status(ctx, args),
        TrainCommand::Package(args) => package(ctx, args),
    }
}

fn init(ctx: &Ctx<'_>, args: InitArgs) -> CliResult<Outcome> {
    let project = &ctx.project;
    let set = project.load_dataset()?;
    let split = project.load_split()?;
    let entries = registry(ctx, &args.registry)?;
    let model = find_model(&entries, &args.model)?;
    let overrides = TrainingOverrides {
        max_steps: args.max_steps,
        loss_threshold: args.loss_threshold,
        window: args.window,
        patience: args.patience,
        base_weights: args.base_weights,
    };
    let config = build_training_config(
        &set.label_map,
        model,
        Some(&SplitRef::new("splits", &split)),
        &overrides,
    )?;
    let path = write_json(&project.training_config(), &config)?;
    let summary = format!(
        "{} on {} classes, {} training images, at most {} steps; written to {}",
        config.model.name,
        config.label_map.len(),
        config.split.train,
        config.max_steps,
        path.display()
    );
    Ok(Outcome::new(&config, summary).with_artifacts(vec![path]))
}

fn describe(run: &TrainingRun) -> String {
    let mut s = format!("run {} {}", run.run_id, run.status);
    if let Some(last) = run.loss_history.last() {
        s.push_str(&format!(", step {} loss {:.4}", last.step, last.loss));
    }
    if let Some(step) = run.finished_at_step {
        s.push_str(&format!(", ended at step {step}"));
    }
    if let Some(reason) = &run.failure {
        s.push_str(&format!(": {reason}"));
    }
    s
}

fn drive(
    store: &RunStore,
    shared: &SharedRun,
    trainer: &mut dyn TrainerAdapter,
    deadline: Option<Instant>,
    pause: Duration,
) -> CliResult<RunStatus> {
    loop {
        let status = pump(shared, trainer)?;
        store.save(&shared.snapshot())?;
        if status.is_terminal() {
            return Ok(status);
        }
        match deadline {
            Some(d) if Instant::now() >= d => return Ok(status),
            Some(_) => thread::sleep(pause),
            None => {}
        }
    }
}

fn start(ctx: &Ctx<'_>, args: StartArgs) -> CliResult<Outcome> {
    let project = &ctx.project;
    let config: TrainingConfig = read_json(&project.training_config()).map_err(|e| match e.code.as_str() {
        "IO_ERROR" => CliError::validation("MISSING_CONFIG", format!("{}; run `train init` first", e.message)),
        _ => e,
    })?;
    let set = project.load_dataset()?;
    let split = project.load_split()?;
    let store = RunStore::new(project.runs_dir());

    let (shared, status) = match args.trainer {
        TrainerKind::Mock => {
            let curve = MockTrainer::exponential_curve(args.mock_points, args.mock_every, 2.0, 0.02, args.mock_rate);
            let mut trainer = MockTrainer::new(project.runs_dir(), curve).per_poll(100);
            if let Some(n) = args.mock_fail_after {
                trainer = trainer.failing_after(n, "mock trainer failure");
            }
            let shared = SharedRun::new(start_training(config, &mut trainer, &split, &set)?);
            let status = drive(&store, &shared, &mut trainer, None, Duration::ZERO)?;
            (shared, status)
        }
        TrainerKind::External => {
            let mut trainer = DirectoryTrainer::new(project.runs_dir());
            let shared = SharedRun::new(start_training(config, &mut trainer, &split, &set)?);
            store.save(&shared.snapshot())?;
            let status = if args.wait {
                let deadline = Instant::now() + Duration::from_secs(args.timeout_s);
                drive(
                    &store,
                    &shared,
                    &mut trainer,
                    Some(deadline),
                    Duration::from_millis(args.poll_ms),
                )?
            } else {
                shared.status()
            };
            (shared, status)
        }
    };
    let run = shared.snapshot();
    let path = project.run_dir(&run.run_id).join(RUN_FILE);
    let mut summary = describe(&run);
    if !status.is_terminal() {
        summary.push_str(&format!(
            "\nhand-off directory {}; check progress with `train status {}`",
            project.run_dir(&run.run_id).display(),
            run.run_id
        ));
    }
    Ok(Outcome::new(&run, summary).with_artifacts(vec![path]))
}

#[derive(Debug, Serialize)]
struct RunListing {
    run_id: String,
    model: String,
    status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    finished_at_step: Option<u64>,
}

fn status(ctx: &Ctx<'_>, args: StatusArgs) -> CliResult<Outcome> {
    let project = &ctx.project;
    let store = RunStore::new(project.runs_dir());
    let Some(run_id) = args.run_id else {
        let runs = store.list()?;
        let listing: Vec<RunListing> = runs
            .iter()
            .map(|r| RunListing {
                run_id: r.run_id.clone(),
                model: r.config.model.name.clone(),
                status: r.status,
                finished_at_step: r.finished_at_step,
            })
            .collect();
        let summary = if runs.is_empty() {
            "no runs".to_owned()
        } else {
            runs.iter().map(describe).collect::<Vec<_>>().join("\n")
        };
        return Ok(Outcome::new(&listing, summary));
    };
    let mut run = store.load(&run_id)?;
    if run.status == RunStatus::Running {
        // Only external runs outlive the command that started them.
        let mut trainer = DirectoryTrainer::new(project.runs_dir());
        trainer.resume(&run_id, run.last_step());
        let shared = SharedRun::new(run);
        pump(&shared, &mut trainer)?;
        run = shared.snapshot();
        store.save(&run)?;
    }
    Ok(Outcome::new(&run, describe(&run)))
}

pub(crate) fn load_package(project: &Project, run_id: &str) -> CliResult<fieldlab_core::training::ModelPackage> {
    let path = project.run_dir(run_id).join(PACKAGE_FILE);
    if !path.is_file() {
        return Err(CliError::validation(
            "MISSING_MODEL",
            format!("run {run_id} has no package; run `train package {run_id}` first"),
        ));
    }
    let pkg = read_json(&path)?;
    verify_package(&pkg)?;
    Ok(pkg)
}

fn package(ctx: &Ctx<'_>, args: RunArg) -> CliResult<Outcome> {
    let project = &ctx.project;
    let run = RunStore::new(project.runs_dir()).load(&args.run_id)?;
    if !matches!(run.status, RunStatus::Converged | RunStatus::MaxStepsReached) {
        return Err(TrainingError::RunNotFinished {
            run_id: run.run_id,
            status: run.status,
        }
        .into());
    }
    let trainer = DirectoryTrainer::new(project.runs_dir());
    let pkg = package_model(&run, &trainer.artifacts(&run.run_id)?)?;
    verify_package(&pkg)?;
    let path = write_json(&project.run_dir(&run.run_id).join(PACKAGE_FILE), &pkg)?;
    let summary = format!(
        "{} ({}, {}x{}) checksum {}",
        pkg.model_name, pkg.runtime_format_tag, pkg.input_size.0, pkg.input_size.1, pkg.checksum
    );
    Ok(Outcome::new(&pkg, summary).with_artifacts(vec![path]))
}
