use std::path::PathBuf;

use clap::{Args, Subcommand};
use fieldlab_core::domain::Task;
use fieldlab_core::models::{default_registry, load_registry, select_model, ModelRegistryEntry, SelectionConstraints};

use crate::error::{CliError, CliResult};
use crate::{Ctx, Outcome, REGISTRY_ENV};

#[derive(Debug, Subcommand)]
pub enum ModelCommand {
    /// Print the registry.
    List(RegistryArg),
    /// Pick the best model under the given constraints.
    Select(SelectArgs),
}

#[derive(Debug, Args)]
pub struct RegistryArg {
    /// Registry JSON file; defaults to $FIELDLAB_REGISTRY, then the built-in table.
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub registry: RegistryArg,
    #[arg(long)]
    pub max_size_mb: Option<f64>,
    #[arg(long)]
    pub max_inference_ms: Option<f64>,
    /// Minimum COCO mAP, in percentage points.
    #[arg(long)]
    pub min_map: Option<f64>,
    /// Number of classes; defaults to the project dataset's label count.
    #[arg(long)]
    pub classes: Option<u32>,
    #[arg(long, default_value = "detection")]
    pub task: Task,
}

pub(crate) fn registry(ctx: &Ctx<'_>, arg: &RegistryArg) -> CliResult<Vec<ModelRegistryEntry>> {
    let path = arg.registry.clone().or_else(|| {
        std::env::var_os(REGISTRY_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    });
    match path {
        Some(p) => Ok(load_registry(&ctx.resolve(&p))?),
        None => Ok(default_registry()),
    }
}

pub(crate) fn run(ctx: &Ctx<'_>, cmd: ModelCommand) -> CliResult<Outcome> {
    match cmd {
        ModelCommand::List(arg) => {
            let entries = registry(ctx, &arg)?;
            let mut lines = vec![format!(
                "{:<18} {:>8} {:>6} {:>8} {:>9}",
                "model", "ms", "mAP", "MB", "classes"
            )];
            for e in &entries {
                lines.push(format!(
                    "{:<18} {:>8} {:>6} {:>8} {:>9}",
                    e.name,
                    e.inference_ms,
                    e.map_coco,
                    e.size_mb,
                    e.class_capacity.map_or("-".to_owned(), |c| c.to_string())
                ));
            }
            Ok(Outcome::new(&entries, lines.join("\n")))
        }
        ModelCommand::Select(args) => {
            let entries = registry(ctx, &args.registry)?;
            let num_classes = match args.classes {
                Some(n) => n,
                None if ctx.project.dataset_file().is_file() => ctx.project.load_dataset()?.label_map.len() as u32,
                None => return Err(CliError::usage("--classes is required when the project has no dataset")),
            };
            let constraints = SelectionConstraints {
                max_inference_ms: args.max_inference_ms,
                max_size_mb: args.max_size_mb,
                min_map: args.min_map,
                task: args.task,
                num_classes,
            };
            let chosen = select_model(&entries, &constraints)?;
            let mut summary = chosen.name.clone();
            if let Some(note) = &chosen.stability_note {
                summary.push_str(&format!("\nnote: {note}"));
            }
            Ok(Outcome::new(&chosen, summary))
        }
    }
}
