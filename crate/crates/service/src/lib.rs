//! Back-end for field data collection: accounts, projects, observation
//! uploads, curation and the retraining export.

pub mod api;
pub mod auth;
pub mod client;
pub mod config;
pub mod model;
pub mod store;

use std::sync::Arc;

pub use api::{router, AppState};
pub use config::ServiceConfig;

use store::{FileStore, MemoryStore, Store};

pub fn open_store(config: &ServiceConfig) -> Result<Arc<dyn Store>, store::StoreError> {
    Ok(match &config.storage_root {
        Some(root) => Arc::new(FileStore::open(root)?),
        None => Arc::new(MemoryStore::default()),
    })
}

/// Binds `0.0.0.0:<port>` and serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let store = open_store(&config).map_err(std::io::Error::other)?;
    let state = AppState {
        store,
        media_cap_bytes: config.media_cap_bytes,
        hash_cost: config.hash_cost,
    };
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", config.port)).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
