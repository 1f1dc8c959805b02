use std::path::PathBuf;

use clap::Args;
use fieldlab_service::ServiceConfig;

use crate::error::{CliError, CliResult};
use crate::{Ctx, Outcome};

/// Flags override FIELDLAB_PORT, FIELDLAB_STORAGE_ROOT and
/// FIELDLAB_MEDIA_CAP_BYTES.
#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    /// Directory for persistent state; in-memory when unset.
    #[arg(long)]
    pub storage_root: Option<PathBuf>,
    #[arg(long)]
    pub media_cap_bytes: Option<u64>,
}

pub(crate) fn config(ctx: &Ctx<'_>, args: &ServeArgs) -> CliResult<ServiceConfig> {
    let mut config = ServiceConfig::from_env().map_err(|e| CliError::environment("INVALID_CONFIG", e.to_string()))?;
    if let Some(port) = args.port {
        config.port = port;
    }
    if let Some(root) = &args.storage_root {
        config.storage_root = Some(ctx.resolve(root));
    }
    if let Some(cap) = args.media_cap_bytes {
        if cap == 0 {
            return Err(CliError::usage("--media-cap-bytes must be positive"));
        }
        config.media_cap_bytes = cap;
    }
    Ok(config)
}

pub(crate) fn run(ctx: &Ctx<'_>, args: ServeArgs) -> CliResult<Outcome> {
    let config = config(ctx, &args)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::environment("IO_ERROR", e.to_string()))?;
    runtime
        .block_on(fieldlab_service::serve(config.clone()))
        .map_err(|e| CliError::environment("IO_ERROR", format!("port {}: {e}", config.port)))?;
    Ok(Outcome::new(&serde_json::json!({ "stopped": true }), "service stopped"))
}
