use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::{DateTime, Utc};
use mailtriage_core::corpus::{CorpusStore, StoreError, write_atomic};
use mailtriage_core::learners::{ClassifierSpec, Family};
use mailtriage_core::pipeline::{Classifier, PipelineError};
use mailtriage_core::stp::{Mode, Resources};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;

/// One published model. Requests clone the `Arc` and finish on it even if a
/// relearn swaps in a successor meanwhile.
#[derive(Debug)]
pub struct ModelSlot {
    pub version: u64,
    pub classifier: Classifier,
    pub fingerprint: String,
    pub built_at: DateTime<Utc>,
    /// Training documents, when the model was built by this process.
    pub n_docs: Option<usize>,
}

impl ModelSlot {
    pub fn new(classifier: Classifier, built_at: DateTime<Utc>, n_docs: Option<usize>) -> Self {
        Self {
            version: classifier.model.version,
            fingerprint: classifier.relevancy.fingerprint(),
            classifier,
            built_at,
            n_docs,
        }
    }
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// Overrides for one relearn; unset fields fall back to the service config.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelearnRequest {
    pub min_docs: Option<usize>,
    pub mode: Option<String>,
    pub family: Option<String>,
    #[serde(default)]
    pub params: std::collections::BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RelearnOutcome {
    pub version: u64,
    pub previous_version: Option<u64>,
    pub fingerprint: String,
    pub mode: Mode,
    pub family: Family,
    pub n_docs: usize,
    pub n_categories: usize,
    pub n_features: usize,
}

#[derive(Debug, Error)]
pub enum RelearnError {
    #[error("a relearn is already running")]
    Busy,
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("training task failed: {0}")]
    Task(String),
}

pub struct AppState {
    pub config: Config,
    pub resources: Arc<Resources>,
    store: Mutex<CorpusStore>,
    slot: RwLock<Option<Arc<ModelSlot>>>,
    relearn: tokio::sync::Mutex<()>,
    clock: Clock,
}

impl AppState {
    pub fn new(config: Config, store: CorpusStore, resources: Arc<Resources>, model: Option<ModelSlot>) -> Self {
        Self {
            config,
            resources,
            store: Mutex::new(store),
            slot: RwLock::new(model.map(Arc::new)),
            relearn: tokio::sync::Mutex::new(()),
            clock: Arc::new(Utc::now),
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    pub fn store(&self) -> MutexGuard<'_, CorpusStore> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn model(&self) -> Option<Arc<ModelSlot>> {
        self.slot.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    fn publish(&self, slot: ModelSlot) {
        *self.slot.write().unwrap_or_else(|p| p.into_inner()) = Some(Arc::new(slot));
    }

    /// Snapshot, build and fit off the async workers, then publish. The active
    /// model keeps serving throughout and stays active on any failure.
    pub async fn relearn(self: &Arc<Self>, req: RelearnRequest) -> Result<RelearnOutcome, RelearnError> {
        let _guard = self.relearn.try_lock().map_err(|_| RelearnError::Busy)?;
        let mode: Mode = match &req.mode {
            Some(m) => m.parse().map_err(RelearnError::BadRequest)?,
            None => self.config.mode,
        };
        let family: Family = match &req.family {
            Some(f) => f.parse().map_err(RelearnError::BadRequest)?,
            None => self.config.family,
        };
        let mut spec = ClassifierSpec::new(family, req.seed.unwrap_or(self.config.seed));
        for (k, v) in &req.params {
            spec = spec.with_param(k, v).map_err(|e| RelearnError::BadRequest(e.to_string()))?;
        }
        spec.params.validate().map_err(|e| RelearnError::BadRequest(e.to_string()))?;
        let min_docs = req.min_docs.unwrap_or(self.config.min_docs);
        let top_k = req.top_k.unwrap_or(self.config.top_k);
        let snapshot = self.store().snapshot(min_docs)?;

        let previous = self.model().map(|m| m.version);
        let version = previous.unwrap_or(0) + 1;
        let state = Arc::clone(self);
        let (slot, outcome) = tokio::task::spawn_blocking(move || -> Result<_, RelearnError> {
            let mut classifier = Classifier::train(&snapshot, mode, &spec, top_k, &state.resources)?;
            classifier.model.version = version;
            if let Some(path) = &state.config.model {
                write_atomic(path, &classifier.to_bytes())?;
            }
            let outcome = RelearnOutcome {
                version,
                previous_version: previous,
                fingerprint: classifier.relevancy.fingerprint(),
                mode,
                family,
                n_docs: snapshot.len(),
                n_categories: snapshot.categories().len(),
                n_features: classifier.relevancy.len(),
            };
            Ok((ModelSlot::new(classifier, state.now(), Some(snapshot.len())), outcome))
        })
        .await
        .map_err(|e| RelearnError::Task(e.to_string()))??;
        self.publish(slot);
        log::info!("published model version {version}");
        Ok(outcome)
    }
}
