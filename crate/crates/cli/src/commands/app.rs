use std::fs;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use fieldlab_core::appforge::{
    emit_build_manifest, emit_deploy_lanes, find_template, instantiate_template, template_catalog, AppBundleDescriptor,
    Channel, Customization, Platform, DEFAULT_CONFIDENCE_THRESHOLD,
};

use super::train::load_package;
use crate::error::{CliError, CliResult};
use crate::project::{read_json, write_json, write_text, Project, DESCRIPTOR_FILE};
use crate::{Ctx, Outcome};

#[derive(Debug, Subcommand)]
pub enum AppCommand {
    /// Instantiate a template with customizations and a packaged model.
    Scaffold(ScaffoldArgs),
    /// Emit the build manifest for one platform and stage its assets.
    Manifest(ManifestArgs),
    /// Emit the signing, build and distribution lanes.
    DeployLanes(LanesArgs),
}

#[derive(Debug, Args)]
pub struct ScaffoldArgs {
    #[arg(long, default_value = "detection-camera")]
    pub template: String,
    #[arg(long)]
    pub name: String,
    /// Interface color as #RRGGBB.
    #[arg(long)]
    pub color: String,
    /// Icon image, relative to the project.
    #[arg(long)]
    pub icon: Option<String>,
    #[arg(long)]
    pub logo: Option<String>,
    #[arg(long)]
    pub info_text: Option<String>,
    /// Let users record observations without the model.
    #[arg(long)]
    pub expert_mode: bool,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE_THRESHOLD)]
    pub confidence: f64,
    /// Target platforms; repeat or separate with commas.
    #[arg(long = "platform", value_delimiter = ',', required = true)]
    pub platforms: Vec<Platform>,
    /// Base URL of the observation service the app uploads to.
    #[arg(long)]
    pub upload_endpoint: String,
    /// Training run whose package the app embeds. Omit for expert-only apps.
    #[arg(long)]
    pub run: Option<String>,
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    pub bundle_id: String,
    #[arg(long)]
    pub platform: Platform,
}

#[derive(Debug, Args)]
pub struct LanesArgs {
    pub bundle_id: String,
    #[arg(long)]
    pub platform: Platform,
    #[arg(long, default_value = "beta")]
    pub channel: Channel,
}

pub(crate) fn run(ctx: &Ctx<'_>, cmd: AppCommand) -> CliResult<Outcome> {
    match cmd {
        AppCommand::Scaffold(args) => scaffold(ctx, args),
        AppCommand::Manifest(args) => manifest(ctx, args),
        AppCommand::DeployLanes(args) => lanes(ctx, args),
    }
}

fn scaffold(ctx: &Ctx<'_>, args: ScaffoldArgs) -> CliResult<Outcome> {
    let project = &ctx.project;
    let catalog = template_catalog();
    let template = find_template(&catalog, &args.template)?;
    let package = args.run.as_deref().map(|id| load_package(project, id)).transpose()?;
    let customization = Customization {
        app_name: args.name,
        gui_color: args.color,
        icon: args.icon,
        logo: args.logo,
        info_panel_text: args.info_text,
        expert_mode_enabled: args.expert_mode,
        confidence_threshold: args.confidence,
    };
    let descriptor = instantiate_template(
        template,
        &customization,
        package.as_ref(),
        &args.platforms,
        &args.upload_endpoint,
    )?;
    let path = write_json(
        &project.bundle_dir(&descriptor.bundle_id).join(DESCRIPTOR_FILE),
        &descriptor,
    )?;
    let platforms: Vec<&str> = descriptor.target_platforms.iter().map(Platform::as_str).collect();
    let summary = format!(
        "bundle {} ({}) from {} for {}{}",
        descriptor.bundle_id,
        descriptor.app_identifier(),
        descriptor.template_id,
        platforms.join(", "),
        if descriptor.is_expert_only() {
            ", expert mode only"
        } else {
            ""
        }
    );
    Ok(Outcome::new(&descriptor, summary).with_artifacts(vec![path]))
}

fn load_descriptor(project: &Project, bundle_id: &str) -> CliResult<AppBundleDescriptor> {
    let path = project.bundle_dir(bundle_id).join(DESCRIPTOR_FILE);
    if !path.is_file() {
        return Err(CliError::validation(
            "UNKNOWN_BUNDLE",
            format!("no bundle {bundle_id} in {}", project.bundles_dir().display()),
        ));
    }
    read_json(&path)
}

/// Writes the manifest and stages the files it references under
/// `bundles/<id>/<platform>/`.
fn manifest(ctx: &Ctx<'_>, args: ManifestArgs) -> CliResult<Outcome> {
    let project = &ctx.project;
    let descriptor = load_descriptor(project, &args.bundle_id)?;
    let manifest = emit_build_manifest(&descriptor, args.platform)?;
    let out = project.bundle_dir(&args.bundle_id).join(args.platform.as_str());
    let json = manifest.to_json();
    let mut artifacts = vec![write_text(&out.join("manifest.json"), &json)?];

    // Guides resolve against the template source; only user-supplied files
    // come from the project.
    for asset in manifest.assets.iter().filter(|a| a.key == "icon" || a.key == "logo") {
        if let (Some(source), Some(target)) = (&asset.source, &asset.target) {
            let from = project.root.join(source);
            if !from.is_file() {
                return Err(CliError::validation(
                    "ASSET_MISSING",
                    format!("{} asset {} does not exist", asset.key, from.display()),
                ));
            }
            let to = out.join(target);
            copy(&from, &to)?;
            artifacts.push(to);
        }
    }
    if let (Some(section), Some(pkg)) = (&manifest.model, &descriptor.model) {
        let to = out.join(&section.path);
        copy(&PathBuf::from(&pkg.weights_ref), &to)?;
        artifacts.push(to);
    }
    if let Some(labels) = &manifest.labels {
        artifacts.push(write_text(
            &out.join(&labels.path),
            &(labels.classes.join("\n") + "\n"),
        )?);
    }
    let summary = format!(
        "{} manifest for {} with {} assets, checksum {}",
        args.platform,
        manifest.build.app_identifier,
        manifest.assets.len(),
        manifest.checksum
    );
    Ok(Outcome::raw(json, summary).with_artifacts(artifacts))
}

fn copy(from: &std::path::Path, to: &std::path::Path) -> CliResult<()> {
    if let Some(parent) = to.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::copy(from, to).map_err(|e| CliError::io(from, e))?;
    Ok(())
}

fn lanes(ctx: &Ctx<'_>, args: LanesArgs) -> CliResult<Outcome> {
    let project = &ctx.project;
    let descriptor = load_descriptor(project, &args.bundle_id)?;
    let config = emit_deploy_lanes(&descriptor, args.platform, args.channel)?;
    let json = config.to_json();
    let channel = match args.channel {
        Channel::Beta => "beta",
        Channel::Release => "release",
    };
    let path = write_text(
        &project
            .bundle_dir(&args.bundle_id)
            .join(args.platform.as_str())
            .join(format!("lanes-{channel}.json")),
        &json,
    )?;
    let summary = format!("{} {channel} lane: {} steps", args.platform, config.lane_steps.len());
    Ok(Outcome::raw(json, summary).with_artifacts(vec![path]))
}
