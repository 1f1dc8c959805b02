//! App building as descriptor generation.
//!
//! A template plus customization plus (optionally) a model package becomes an
//! [`AppBundleDescriptor`]. From a descriptor we emit a per-platform build
//! manifest and deployment lanes. Native toolchains are never invoked here;
//! the manifest is what they consume.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{validate_label_map, Task};
use crate::ids::fresh_id;
use crate::training::{sha256_hex, ModelPackage};

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Platform {
    Ios,
    Android,
}

impl Platform {
    pub fn as_str(&self) -> &'static str {
        match self {
            Platform::Ios => "ios",
            Platform::Android => "android",
        }
    }

    pub fn tool_entry_point(&self) -> &'static str {
        match self {
            Platform::Ios => "xcodebuild -workspace App.xcworkspace -scheme App -configuration Release archive",
            Platform::Android => "./gradlew bundleRelease",
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Platform {
    type Err = AppForgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ios" => Ok(Platform::Ios),
            "android" => Ok(Platform::Android),
            other => Err(AppForgeError::UnknownPlatform(other.to_owned())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Beta,
    Release,
}

impl FromStr for Channel {
    type Err = AppForgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "beta" => Ok(Channel::Beta),
            "release" => Ok(Channel::Release),
            other => Err(AppForgeError::UnknownChannel(other.to_owned())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CustomKey {
    GuiColor,
    Icon,
    Logo,
    AppName,
    InfoPanelText,
}

impl CustomKey {
    pub const ALL: [CustomKey; 5] = [
        CustomKey::GuiColor,
        CustomKey::Icon,
        CustomKey::Logo,
        CustomKey::AppName,
        CustomKey::InfoPanelText,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CustomKey::GuiColor => "gui_color",
            CustomKey::Icon => "icon",
            CustomKey::Logo => "logo",
            CustomKey::AppName => "app_name",
            CustomKey::InfoPanelText => "info_panel_text",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppTemplate {
    pub template_id: String,
    pub supported_tasks: BTreeSet<Task>,
    pub customizable_keys: BTreeSet<CustomKey>,
    pub supports_expert_mode: bool,
    /// User guides and tutorials shipped with the template, as opaque refs.
    #[serde(default)]
    pub guides: Vec<String>,
}

impl AppTemplate {
    pub fn source_ref(&self, platform: Platform) -> String {
        format!("templates/{}/{}", self.template_id, platform)
    }
}

/// The two reference templates: a live camera with detection overlays and a
/// camera that classifies the whole frame.
pub fn template_catalog() -> Vec<AppTemplate> {
    let keys: BTreeSet<CustomKey> = CustomKey::ALL.into_iter().collect();
    let guides = vec![
        "guides/getting-started.md".to_owned(),
        "guides/labeling-tutorial.md".to_owned(),
    ];
    vec![
        AppTemplate {
            template_id: "detection-camera".into(),
            supported_tasks: [Task::Detection].into_iter().collect(),
            customizable_keys: keys.clone(),
            supports_expert_mode: true,
            guides: guides.clone(),
        },
        AppTemplate {
            template_id: "classification-camera".into(),
            supported_tasks: [Task::Classification].into_iter().collect(),
            customizable_keys: keys,
            supports_expert_mode: true,
            guides,
        },
    ]
}

pub fn find_template<'a>(catalog: &'a [AppTemplate], id: &str) -> Result<&'a AppTemplate, AppForgeError> {
    catalog
        .iter()
        .find(|t| t.template_id == id)
        .ok_or_else(|| AppForgeError::UnknownTemplate(id.to_owned()))
}

fn default_threshold() -> f64 {
    DEFAULT_CONFIDENCE_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Customization {
    pub app_name: String,
    /// `#RRGGBB`.
    pub gui_color: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icon: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logo: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info_panel_text: Option<String>,
    #[serde(default)]
    pub expert_mode_enabled: bool,
    #[serde(default = "default_threshold")]
    pub confidence_threshold: f64,
}

impl Customization {
    pub fn new(app_name: impl Into<String>, gui_color: impl Into<String>) -> Self {
        Self {
            app_name: app_name.into(),
            gui_color: gui_color.into(),
            icon: None,
            logo: None,
            info_panel_text: None,
            expert_mode_enabled: false,
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
        }
    }

    /// Keys this customization actually sets.
    pub fn used_keys(&self) -> BTreeSet<CustomKey> {
        let mut keys: BTreeSet<CustomKey> = [CustomKey::AppName, CustomKey::GuiColor].into_iter().collect();
        if self.icon.is_some() {
            keys.insert(CustomKey::Icon);
        }
        if self.logo.is_some() {
            keys.insert(CustomKey::Logo);
        }
        if self.info_panel_text.is_some() {
            keys.insert(CustomKey::InfoPanelText);
        }
        keys
    }

    pub fn validate(&self) -> Result<(), AppForgeError> {
        if self.app_name.trim().is_empty() {
            return Err(AppForgeError::InvalidCustomization("app_name must not be empty".into()));
        }
        if !is_hex_color(&self.gui_color) {
            return Err(AppForgeError::InvalidCustomization(format!(
                "gui_color {:?} is not #RRGGBB",
                self.gui_color
            )));
        }
        let t = self.confidence_threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(AppForgeError::InvalidCustomization(format!(
                "confidence_threshold {t} is outside (0, 1)"
            )));
        }
        Ok(())
    }
}

fn is_hex_color(s: &str) -> bool {
    s.len() == 7 && s.starts_with('#') && s[1..].bytes().all(|b| b.is_ascii_hexdigit())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppBundleDescriptor {
    pub bundle_id: String,
    pub template_id: String,
    pub customization: Customization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelPackage>,
    pub target_platforms: Vec<Platform>,
    pub upload_endpoint: String,
    pub created_at: String,
    /// Copied from the template so manifests can be emitted without the
    /// catalog at hand.
    #[serde(default)]
    pub guides: Vec<String>,
}

impl AppBundleDescriptor {
    pub fn is_expert_only(&self) -> bool {
        self.model.is_none()
    }

    /// Reverse-DNS identifier derived from the app name.
    pub fn app_identifier(&self) -> String {
        let mut slug: String = self
            .customization
            .app_name
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        if slug.is_empty() || slug.starts_with(|c: char| c.is_ascii_digit()) {
            slug.insert(0, 'a');
        }
        format!("org.fieldlab.apps.{slug}")
    }

    fn ensure_targeted(&self, platform: Platform) -> Result<(), AppForgeError> {
        if self.target_platforms.contains(&platform) {
            Ok(())
        } else {
            Err(AppForgeError::PlatformNotTargeted(platform))
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AppForgeError {
    #[error("template supports {supported} but the model is for {model}")]
    TaskMismatch { supported: String, model: Task },

    #[error("template {template} does not allow customizing {key}")]
    UnsupportedCustomization { template: String, key: String },

    #[error("no model package given and expert mode is disabled")]
    MissingModel,

    #[error("invalid customization: {0}")]
    InvalidCustomization(String),

    #[error("invalid model package: {0}")]
    InvalidModelPackage(String),

    #[error("at least one target platform is required")]
    NoTargetPlatform,

    #[error("upload endpoint {0:?} is not an http(s) URL")]
    InvalidUploadEndpoint(String),

    #[error("platform {0} is not targeted by this bundle")]
    PlatformNotTargeted(Platform),

    #[error("unknown template {0:?}")]
    UnknownTemplate(String),

    #[error("unknown platform {0:?}")]
    UnknownPlatform(String),

    #[error("unknown channel {0:?}")]
    UnknownChannel(String),
}

impl AppForgeError {
    pub fn code(&self) -> &'static str {
        match self {
            AppForgeError::TaskMismatch { .. } => "TASK_MISMATCH",
            AppForgeError::UnsupportedCustomization { .. } => "UNSUPPORTED_CUSTOMIZATION",
            AppForgeError::MissingModel => "MISSING_MODEL",
            AppForgeError::InvalidCustomization(_) => "INVALID_CUSTOMIZATION",
            AppForgeError::InvalidModelPackage(_) => "INVALID_MODEL_PACKAGE",
            AppForgeError::NoTargetPlatform => "NO_TARGET_PLATFORM",
            AppForgeError::InvalidUploadEndpoint(_) => "INVALID_UPLOAD_ENDPOINT",
            AppForgeError::PlatformNotTargeted(_) => "PLATFORM_NOT_TARGETED",
            AppForgeError::UnknownTemplate(_) => "UNKNOWN_TEMPLATE",
            AppForgeError::UnknownPlatform(_) => "UNKNOWN_PLATFORM",
            AppForgeError::UnknownChannel(_) => "UNKNOWN_CHANNEL",
        }
    }
}

pub fn instantiate_template(
    template: &AppTemplate,
    customization: &Customization,
    model: Option<&ModelPackage>,
    platforms: &[Platform],
    upload_endpoint: &str,
) -> Result<AppBundleDescriptor, AppForgeError> {
    instantiate_template_at(template, customization, model, platforms, upload_endpoint, Utc::now())
}

/// [`instantiate_template`] with an explicit creation time, for callers
/// without a system clock.
pub fn instantiate_template_at(
    template: &AppTemplate,
    customization: &Customization,
    model: Option<&ModelPackage>,
    platforms: &[Platform],
    upload_endpoint: &str,
    created_at: DateTime<Utc>,
) -> Result<AppBundleDescriptor, AppForgeError> {
    customization.validate()?;
    if let Some(key) = customization
        .used_keys()
        .into_iter()
        .find(|k| !template.customizable_keys.contains(k))
    {
        return Err(AppForgeError::UnsupportedCustomization {
            template: template.template_id.clone(),
            key: key.as_str().into(),
        });
    }
    if customization.expert_mode_enabled && !template.supports_expert_mode {
        return Err(AppForgeError::UnsupportedCustomization {
            template: template.template_id.clone(),
            key: "expert_mode_enabled".into(),
        });
    }
    match model {
        Some(pkg) => {
            if !template.supported_tasks.contains(&pkg.task) {
                let supported: Vec<String> = template.supported_tasks.iter().map(Task::to_string).collect();
                return Err(AppForgeError::TaskMismatch {
                    supported: supported.join(", "),
                    model: pkg.task,
                });
            }
            let report = validate_label_map(&pkg.label_map);
            if !report.ok {
                return Err(AppForgeError::InvalidModelPackage(
                    report.first_error().unwrap_or_default(),
                ));
            }
        }
        None if !customization.expert_mode_enabled => return Err(AppForgeError::MissingModel),
        None => {}
    }
    let target_platforms: Vec<Platform> = platforms.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if target_platforms.is_empty() {
        return Err(AppForgeError::NoTargetPlatform);
    }
    let endpoint = upload_endpoint.trim();
    let rest = endpoint
        .strip_prefix("https://")
        .or_else(|| endpoint.strip_prefix("http://"));
    if rest.is_none_or(|host| host.is_empty() || host.starts_with('/')) {
        return Err(AppForgeError::InvalidUploadEndpoint(upload_endpoint.to_owned()));
    }

    Ok(AppBundleDescriptor {
        bundle_id: fresh_id(),
        template_id: template.template_id.clone(),
        customization: customization.clone(),
        model: model.cloned(),
        target_platforms,
        upload_endpoint: endpoint.to_owned(),
        created_at: created_at.to_rfc3339_opts(SecondsFormat::Secs, true),
        guides: template.guides.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateSection {
    pub id: String,
    pub source: String,
}

/// One substitution applied to the template: either a literal value or a
/// file copied from `source` to `target` inside the platform project.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssetSubstitution {
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub path: String,
    pub checksum: String,
    pub format_tag: String,
    pub input_size: (u32, u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelsSection {
    pub path: String,
    pub classes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeSection {
    pub confidence_threshold: f64,
    pub expert_mode: bool,
    pub upload_endpoint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildSection {
    pub platform: Platform,
    pub tool_entry_point: String,
    pub app_identifier: String,
}

/// Everything a platform build needs. Deliberately leaves out the bundle id,
/// creation time and the weights' on-disk location, so re-running the same
/// project yields the same bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildManifest {
    pub template: TemplateSection,
    pub assets: Vec<AssetSubstitution>,
    /// `None` for expert-only apps.
    pub model: Option<ModelSection>,
    pub labels: Option<LabelsSection>,
    pub runtime: RuntimeSection,
    pub build: BuildSection,
    /// SHA-256 over the compact JSON of the sections above.
    pub checksum: String,
}

impl BuildManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    /// Recomputes the checksum section from the other sections.
    pub fn computed_checksum(&self) -> String {
        let body = (
            &self.template,
            &self.assets,
            &self.model,
            &self.labels,
            &self.runtime,
            &self.build,
        );
        sha256_hex(&serde_json::to_vec(&body).expect("manifest serializes"))
    }
}

fn model_file_name(pkg: &ModelPackage) -> String {
    let slug: String = pkg
        .model_name
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("-");
    format!("{slug}.{}", pkg.runtime_format_tag)
}

fn file_asset(key: &str, source: &str, target: &str) -> AssetSubstitution {
    AssetSubstitution {
        key: key.into(),
        value: None,
        source: Some(source.into()),
        target: Some(target.into()),
    }
}

fn value_asset(key: &str, value: &str) -> AssetSubstitution {
    AssetSubstitution {
        key: key.into(),
        value: Some(value.into()),
        source: None,
        target: None,
    }
}

pub fn emit_build_manifest(
    descriptor: &AppBundleDescriptor,
    platform: Platform,
) -> Result<BuildManifest, AppForgeError> {
    descriptor.ensure_targeted(platform)?;
    let c = &descriptor.customization;
    let (icon_target, logo_target, res_dir) = match platform {
        Platform::Ios => (
            "App/Assets.xcassets/AppIcon.appiconset/icon.png",
            "App/Assets.xcassets/Logo.imageset/logo.png",
            "App/Resources",
        ),
        Platform::Android => (
            "app/src/main/res/mipmap-xxxhdpi/ic_launcher.png",
            "app/src/main/res/drawable/logo.png",
            "app/src/main/assets",
        ),
    };

    let mut assets = vec![
        value_asset("app_name", &c.app_name),
        value_asset("gui_color", &c.gui_color),
    ];
    if let Some(icon) = &c.icon {
        assets.push(file_asset("icon", icon, icon_target));
    }
    if let Some(logo) = &c.logo {
        assets.push(file_asset("logo", logo, logo_target));
    }
    if let Some(text) = &c.info_panel_text {
        assets.push(value_asset("info_panel_text", text));
    }
    for guide in &descriptor.guides {
        let name = guide.rsplit('/').next().unwrap_or(guide);
        assets.push(file_asset("guide", guide, &format!("{res_dir}/guides/{name}")));
    }

    let (model, labels) = match &descriptor.model {
        Some(pkg) => (
            Some(ModelSection {
                path: format!("model/{}", model_file_name(pkg)),
                checksum: pkg.checksum.clone(),
                format_tag: pkg.runtime_format_tag.clone(),
                input_size: pkg.input_size,
            }),
            Some(LabelsSection {
                path: "model/labels.txt".into(),
                classes: pkg.label_map.names().to_vec(),
            }),
        ),
        None => (None, None),
    };

    let mut manifest = BuildManifest {
        template: TemplateSection {
            id: descriptor.template_id.clone(),
            source: format!("templates/{}/{}", descriptor.template_id, platform),
        },
        assets,
        model,
        labels,
        runtime: RuntimeSection {
            confidence_threshold: c.confidence_threshold,
            expert_mode: c.expert_mode_enabled,
            upload_endpoint: descriptor.upload_endpoint.clone(),
        },
        build: BuildSection {
            platform,
            tool_entry_point: platform.tool_entry_point().into(),
            app_identifier: descriptor.app_identifier(),
        },
        checksum: String::new(),
    };
    manifest.checksum = manifest.computed_checksum();
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum LaneStep {
    IncrementBuildNumber,
    Sign { method: String },
    Build { tool_entry_point: String },
    BetaDistribution { service: String },
    StoreSubmission { store: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeployConfig {
    pub platform: Platform,
    pub channel: Channel,
    pub app_identifier: String,
    pub lane_steps: Vec<LaneStep>,
}

impl DeployConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lanes serialize") + "\n"
    }
}

pub fn emit_deploy_lanes(
    descriptor: &AppBundleDescriptor,
    platform: Platform,
    channel: Channel,
) -> Result<DeployConfig, AppForgeError> {
    descriptor.ensure_targeted(platform)?;
    let sign = match (platform, channel) {
        (Platform::Ios, Channel::Beta) => "app_store_profile_for_testflight",
        (Platform::Ios, Channel::Release) => "app_store_profile",
        (Platform::Android, _) => "upload_keystore",
    };
    let last = match (platform, channel) {
        (Platform::Ios, Channel::Beta) => LaneStep::BetaDistribution {
            service: "testflight".into(),
        },
        (Platform::Android, Channel::Beta) => LaneStep::BetaDistribution {
            service: "play_internal_testing".into(),
        },
        (Platform::Ios, Channel::Release) => LaneStep::StoreSubmission {
            store: "app_store".into(),
        },
        (Platform::Android, Channel::Release) => LaneStep::StoreSubmission {
            store: "play_store".into(),
        },
    };
    Ok(DeployConfig {
        platform,
        channel,
        app_identifier: descriptor.app_identifier(),
        lane_steps: vec![
            LaneStep::IncrementBuildNumber,
            LaneStep::Sign { method: sign.into() },
            LaneStep::Build {
                tool_entry_point: platform.tool_entry_point().into(),
            },
            last,
        ],
    })
}
