//! Scriptable front end for the whole workflow: build a dataset, train a
//! model, generate the app, and run the collection service.
//!
//! [`execute`] is the library entry point; the `fieldlab` binary only prints
//! what it returns. Under `--json` stdout carries the operation's result
//! serialized, nothing else.

pub mod commands;
pub mod error;
pub mod project;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};
use serde::Serialize;

use crate::commands::{app, dataset, model, serve, train};
pub use crate::error::{CliError, CliResult, EXIT_ENVIRONMENT, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION};
use crate::project::{to_json, Project};

/// Environment variable naming the default registry file.
pub const REGISTRY_ENV: &str = "FIELDLAB_REGISTRY";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommandResult {
    /// 0 success, 1 validation failure, 2 usage error, 3 environment or IO.
    pub exit_code: i32,
    /// Files written, in the order they were written.
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
    pub stdout: String,
    pub stderr: String,
}

/// What a subcommand hands back on success.
pub struct Outcome {
    json: String,
    summary: String,
    artifacts: Vec<PathBuf>,
}

impl Outcome {
    pub fn new<T: Serialize>(result: &T, summary: impl Into<String>) -> Self {
        Self::raw(to_json(result), summary)
    }

    /// For results that already own a canonical serialization.
    pub fn raw(json: String, summary: impl Into<String>) -> Self {
        Self {
            json,
            summary: summary.into(),
            artifacts: Vec::new(),
        }
    }

    pub fn with_artifacts(mut self, artifacts: Vec<PathBuf>) -> Self {
        self.artifacts = artifacts;
        self
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "fieldlab",
    version,
    about = "Dataset, training and app-building workflow for field ML projects"
)]
pub struct Cli {
    /// Print the operation's result as JSON instead of a summary.
    #[arg(long, global = true)]
    pub json: bool,

    /// Project root holding dataset/, splits/, runs/ and bundles/.
    #[arg(long, short = 'p', global = true, default_value = ".")]
    pub project: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Import, convert, split and assess annotated data.
    #[command(subcommand)]
    Dataset(dataset::DatasetCommand),
    /// Inspect the model registry and pick a model.
    #[command(subcommand)]
    Model(model::ModelCommand),
    /// Configure, launch, monitor and package training runs.
    #[command(subcommand)]
    Train(train::TrainCommand),
    /// Instantiate app templates and emit build and deploy files.
    #[command(subcommand)]
    App(app::AppCommand),
    /// Run the observation collection service until interrupted.
    Serve(serve::ServeArgs),
}

/// Resolves `path` against the directory the command runs in.
pub(crate) fn resolve(working_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        working_dir.join(path)
    }
}

pub(crate) struct Ctx<'a> {
    pub working_dir: &'a Path,
    pub project: Project,
}

impl Ctx<'_> {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        resolve(self.working_dir, path)
    }

    /// The project named by a positional argument, falling back to `--project`.
    pub fn project_or(&self, positional: Option<&Path>) -> Project {
        match positional {
            Some(p) => Project::new(self.resolve(p)),
            None => self.project.clone(),
        }
    }
}

/// Parses `argv` (without the program name) and runs the command.
pub fn execute<I, S>(argv: I, working_dir: &Path) -> CommandResult
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let args = std::iter::once(OsString::from("fieldlab")).chain(argv.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CommandResult {
                    exit_code: EXIT_OK,
                    summary: text.clone(),
                    stdout: text,
                    ..Default::default()
                },
                _ => {
                    let mut text = text;
                    if !text.contains("Usage:") {
                        text = format!("{text}\n{}\n", Cli::command().render_usage());
                    }
                    CommandResult {
                        exit_code: EXIT_USAGE,
                        summary: text.clone(),
                        stderr: text,
                        ..Default::default()
                    }
                }
            };
        }
    };
    let ctx = Ctx {
        working_dir,
        project: Project::new(resolve(working_dir, &cli.project)),
    };
    let outcome = match cli.command {
        Command::Dataset(cmd) => dataset::run(&ctx, cmd),
        Command::Model(cmd) => model::run(&ctx, cmd),
        Command::Train(cmd) => train::run(&ctx, cmd),
        Command::App(cmd) => app::run(&ctx, cmd),
        Command::Serve(args) => serve::run(&ctx, args),
    };
    match outcome {
        Ok(o) => CommandResult {
            exit_code: EXIT_OK,
            stdout: if cli.json { o.json } else { format!("{}\n", o.summary) },
            summary: o.summary,
            artifacts: o.artifacts,
            stderr: String::new(),
        },
        Err(e) => {
            let summary = format!("error {e}");
            CommandResult {
                exit_code: e.exit_code,
                artifacts: Vec::new(),
                stdout: if cli.json { to_json(&e) } else { String::new() },
                stderr: if cli.json {
                    String::new()
                } else {
                    format!("{summary}\n")
                },
                summary,
            }
        }
    }
}
