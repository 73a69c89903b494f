//! Text in, ranked categories out: a relevancy vector, a model over it, and the
//! preprocessing mode both were built with.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Snapshot;
use crate::features::{build_relevancy, vectorize, FeatureError, RelevancyVector};
use crate::learners::{fit, predict, ClassifierSpec, LearnError, RankedPrediction, TrainedModel, TrainingData};
use crate::stp::{extract, ExtractionResult, Mode, Resources};

pub const BUNDLE_FORMAT: &str = "mailtriage-bundle";
pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("malformed bundle: {0}")]
    Format(String),
    #[error("bundle mode {bundle} does not match relevancy vector mode {rv}")]
    ModeMismatch { bundle: Mode, rv: Mode },
}

#[derive(Debug, Clone)]
pub struct Classifier {
    pub mode: Mode,
    pub relevancy: RelevancyVector,
    pub model: TrainedModel,
}

#[derive(Serialize)]
struct BundleOut<'a> {
    format: &'static str,
    format_version: u32,
    mode: Mode,
    relevancy: &'a RelevancyVector,
    model: &'a TrainedModel,
}

#[derive(Deserialize)]
struct BundleIn {
    format: String,
    format_version: u32,
    mode: Mode,
    relevancy: serde_json::Value,
    model: serde_json::Value,
}

impl Classifier {
    /// Extracts every snapshot document, builds the relevancy vector and fits `spec`.
    pub fn train(
        snapshot: &Snapshot,
        mode: Mode,
        spec: &ClassifierSpec,
        top_k: usize,
        res: &Resources,
    ) -> Result<Self, PipelineError> {
        let docs = snapshot.documents();
        let extracted: Vec<ExtractionResult> = docs.iter().map(|d| extract(&d.text, mode, res)).collect();
        let labels: Vec<String> = docs
            .iter()
            .map(|d| d.category_id.clone().expect("snapshot documents are labeled"))
            .collect();
        Self::train_extracted(&extracted, &labels, mode, spec, top_k)
    }

    pub fn train_extracted(
        extracted: &[ExtractionResult],
        labels: &[String],
        mode: Mode,
        spec: &ClassifierSpec,
        top_k: usize,
    ) -> Result<Self, PipelineError> {
        let relevancy = build_relevancy(extracted.iter().zip(labels.iter().map(String::as_str)), top_k)?;
        let vectors: Vec<_> = extracted.iter().map(|e| vectorize(e, &relevancy)).collect();
        let fingerprint = relevancy.fingerprint();
        let model = fit(
            spec,
            &TrainingData {
                vectors: &vectors,
                labels,
                rv_fingerprint: &fingerprint,
            },
        )?;
        Ok(Self { mode, relevancy, model })
    }

    pub fn classify(&self, text: &str, res: &Resources) -> Result<RankedPrediction, PipelineError> {
        let extracted = extract(text, self.mode, res);
        Ok(predict(&self.model, &vectorize(&extracted, &self.relevancy))?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&BundleOut {
            format: BUNDLE_FORMAT,
            format_version: BUNDLE_FORMAT_VERSION,
            mode: self.mode,
            relevancy: &self.relevancy,
            model: &self.model,
        })
        .expect("bundles serialize")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PipelineError> {
        let raw: BundleIn = serde_json::from_slice(bytes).map_err(|e| PipelineError::Format(e.to_string()))?;
        if raw.format != BUNDLE_FORMAT {
            return Err(PipelineError::Format(format!("unknown container `{}`", raw.format)));
        }
        if raw.format_version != BUNDLE_FORMAT_VERSION {
            return Err(PipelineError::Format(format!(
                "unsupported bundle version {}",
                raw.format_version
            )));
        }
        let relevancy = RelevancyVector::from_json(&raw.relevancy.to_string())?;
        if relevancy.mode != raw.mode {
            return Err(PipelineError::ModeMismatch {
                bundle: raw.mode,
                rv: relevancy.mode,
            });
        }
        let model = TrainedModel::from_bytes_checked(raw.model.to_string().as_bytes(), &relevancy.fingerprint())?;
        if model.n_features != relevancy.len() {
            return Err(PipelineError::Learn(LearnError::LengthMismatch {
                expected: relevancy.len(),
                actual: model.n_features,
            }));
        }
        Ok(Self {
            mode: raw.mode,
            relevancy,
            model,
        })
    }
}
