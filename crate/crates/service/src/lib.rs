//! Online half of the triage engine: classifies incoming mail against the
//! active model, records agent selections, serves sender history and swaps in
//! relearned models without interrupting classification.
//!
//! Request and response shapes are documented in `docs/api.md`.

pub mod api;
pub mod config;
pub mod state;

use std::sync::Arc;

use mailtriage_core::corpus::CorpusStore;
use mailtriage_core::pipeline::Classifier;
use mailtriage_core::stp::Resources;
use thiserror::Error;
use tokio::net::TcpListener;

pub use api::router;
pub use config::Config;
pub use state::{AppState, ModelSlot, RelearnRequest};

#[derive(Debug, Error)]
pub enum StartError {
    #[error(transparent)]
    Store(#[from] mailtriage_core::corpus::StoreError),
    #[error(transparent)]
    Resources(#[from] mailtriage_core::stp::ResourceError),
    #[error("cannot load model {path}: {message}")]
    Model { path: String, message: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Opens the store, resources and (if present) the saved model named by `config`.
pub fn build_state(config: Config) -> Result<AppState, StartError> {
    let store = CorpusStore::open(&config.store)?;
    let resources = match &config.resources {
        Some(dir) => Arc::new(Resources::load_dir(dir)?),
        None => Resources::builtin(),
    };
    let model = match &config.model {
        Some(path) if path.exists() => {
            let err = |message: String| StartError::Model {
                path: path.display().to_string(),
                message,
            };
            let bytes = std::fs::read(path).map_err(|e| err(e.to_string()))?;
            let classifier = Classifier::from_bytes(&bytes).map_err(|e| err(e.to_string()))?;
            let built_at = std::fs::metadata(path)
                .and_then(|m| m.modified())
                .map(chrono::DateTime::<chrono::Utc>::from)
                .unwrap_or_else(|_| chrono::Utc::now());
            Some(ModelSlot::new(classifier, built_at, None))
        }
        _ => None,
    };
    Ok(AppState::new(config, store, resources, model))
}

/// Serves until ctrl-c. Starts the relearn timer when the config asks for one.
pub async fn serve(state: Arc<AppState>, listener: TcpListener) -> std::io::Result<()> {
    let interval = state.config.relearn_interval_secs;
    if interval > 0 {
        let timer_state = Arc::clone(&state);
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(std::time::Duration::from_secs(interval));
            tick.tick().await;
            loop {
                tick.tick().await;
                if let Err(e) = timer_state.relearn(RelearnRequest::default()).await {
                    log::warn!("scheduled relearn failed: {e}");
                }
            }
        });
    }
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
