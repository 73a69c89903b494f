//! Five classifier families behind one fit/predict contract.
//!
//! All families train on binary [`DocVector`]s and return a full ranking over the
//! trained categories, so Best-N accuracy can be read off any of them. Models are
//! plain data and serialize to a versioned JSON container (see `docs/model-format.md`).

mod id3;
mod knn;
mod lvq;
mod naive_bayes;
mod svm;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::DocVector;

pub use id3::TreeModel;
pub use knn::KnnModel;
pub use lvq::LvqModel;
pub use naive_bayes::NaiveBayesModel;
pub use svm::{SvmModel, SvmTrace};

pub const MODEL_FORMAT: &str = "mailtriage-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("need at least 2 categories to train, got {0}")]
    TooFewClasses(usize),
    #[error("training set is empty")]
    EmptyTraining,
    #[error("training vectors have zero length")]
    ZeroLengthVectors,
    #[error("training vector {index} has length {actual}, expected {expected}")]
    InconsistentLengths {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("vector length {actual} does not match model length {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidParam(String),
    #[error("malformed model: {0}")]
    Format(String),
    #[error("unsupported model format version {found} (expected {expected})")]
    FormatVersion { expected: u32, found: u32 },
    #[error("model was trained on relevancy vector {found}, expected {expected}")]
    FingerprintMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Knn,
    NaiveBayes,
    Id3,
    LinearSvmOvr,
    Lvq,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Lvq,
        Family::Knn,
        Family::NaiveBayes,
        Family::Id3,
        Family::LinearSvmOvr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Knn => "knn",
            Family::NaiveBayes => "naive_bayes",
            Family::Id3 => "id3",
            Family::LinearSvmOvr => "linear_svm_ovr",
            Family::Lvq => "lvq",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Family::Knn => "kNN",
            Family::NaiveBayes => "Naive Bayes",
            Family::Id3 => "ID3",
            Family::LinearSvmOvr => "Linear SVM (OvR)",
            Family::Lvq => "LVQ1",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "knn" | "ib" => Ok(Family::Knn),
            "naive_bayes" | "nb" | "bayes" => Ok(Family::NaiveBayes),
            "id3" => Ok(Family::Id3),
            "linear_svm_ovr" | "svm" | "linear_svm" => Ok(Family::LinearSvmOvr),
            "lvq" | "lvq1" => Ok(Family::Lvq),
            other => Err(format!(
                "unknown family `{other}` (expected knn, naive_bayes, id3, linear_svm_ovr or lvq)"
            )),
        }
    }
}

/// Family tag plus that family's hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Hyperparams {
    Knn {
        k: usize,
    },
    NaiveBayes {
        alpha: f64,
    },
    Id3 {
        max_depth: Option<usize>,
    },
    LinearSvmOvr {
        epochs: usize,
        lambda: f64,
    },
    Lvq {
        codebooks_per_class: usize,
        rate: f64,
        passes: usize,
    },
}

impl Hyperparams {
    pub fn defaults(family: Family) -> Self {
        match family {
            Family::Knn => Hyperparams::Knn { k: 5 },
            Family::NaiveBayes => Hyperparams::NaiveBayes { alpha: 1.0 },
            Family::Id3 => Hyperparams::Id3 { max_depth: None },
            Family::LinearSvmOvr => Hyperparams::LinearSvmOvr {
                epochs: 50,
                lambda: 1e-2,
            },
            Family::Lvq => Hyperparams::Lvq {
                codebooks_per_class: 5,
                rate: 0.05,
                passes: 20,
            },
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Hyperparams::Knn { .. } => Family::Knn,
            Hyperparams::NaiveBayes { .. } => Family::NaiveBayes,
            Hyperparams::Id3 { .. } => Family::Id3,
            Hyperparams::LinearSvmOvr { .. } => Family::LinearSvmOvr,
            Hyperparams::Lvq { .. } => Family::Lvq,
        }
    }

    /// Overrides one named parameter, e.g. `("k", "1")` for kNN.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), LearnError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, LearnError> {
            value
                .parse()
                .map_err(|_| LearnError::InvalidParam(format!("cannot parse {key}={value}")))
        }
        match (self, key) {
            (Hyperparams::Knn { k }, "k") => *k = parse(key, value)?,
            (Hyperparams::NaiveBayes { alpha }, "alpha") => *alpha = parse(key, value)?,
            (Hyperparams::Id3 { max_depth }, "max_depth") => {
                *max_depth = match value {
                    "none" | "unlimited" => None,
                    v => Some(parse(key, v)?),
                }
            }
            (Hyperparams::LinearSvmOvr { epochs, .. }, "epochs") => *epochs = parse(key, value)?,
            (Hyperparams::LinearSvmOvr { lambda, .. }, "lambda") => *lambda = parse(key, value)?,
            (Hyperparams::Lvq { codebooks_per_class, .. }, "codebooks" | "codebooks_per_class") => {
                *codebooks_per_class = parse(key, value)?
            }
            (Hyperparams::Lvq { rate, .. }, "rate") => *rate = parse(key, value)?,
            (Hyperparams::Lvq { passes, .. }, "passes") => *passes = parse(key, value)?,
            (params, key) => {
                return Err(LearnError::InvalidParam(format!(
                    "`{key}` is not a {} parameter",
                    params.family()
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidParam(m.to_string()));
        match *self {
            Hyperparams::Knn { k: 0 } => bad("knn k must be positive"),
            Hyperparams::NaiveBayes { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                bad("naive bayes alpha must be positive")
            }
            Hyperparams::Id3 { max_depth: Some(0) } => bad("id3 max_depth must be positive"),
            Hyperparams::LinearSvmOvr { epochs, lambda } if epochs == 0 || lambda.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) => {
                bad("svm needs epochs > 0 and lambda > 0")
            }
            Hyperparams::Lvq {
                codebooks_per_class,
                rate,
                passes,
            } if codebooks_per_class == 0 || passes == 0 || !(rate > 0.0 && rate < 1.0) => {
                bad("lvq needs codebooks > 0, passes > 0 and 0 < rate < 1")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub params: Hyperparams,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        Self {
            params: Hyperparams::defaults(family),
            seed,
        }
    }

    pub fn family(&self) -> Family {
        self.params.family()
    }

    pub fn with_param(mut self, key: &str, value: &str) -> Result<Self, LearnError> {
        self.params.set(key, value)?;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub category: String,
    pub score: f64,
}

/// Categories best-first with non-increasing scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub ranking: Vec<Ranked>,
}

impl RankedPrediction {
    pub fn best(&self) -> &Ranked {
        &self.ranking[0]
    }

    pub fn top(&self, n: usize) -> &[Ranked] {
        &self.ranking[..n.min(self.ranking.len())]
    }

    /// 1-based rank of `category`, if ranked.
    pub fn rank_of(&self, category: &str) -> Option<usize> {
        self.ranking.iter().position(|r| r.category == category).map(|p| p + 1)
    }

    pub fn hit_at(&self, category: &str, n: usize) -> bool {
        self.rank_of(category).is_some_and(|r| r <= n)
    }
}

/// Labeled training vectors plus the digest of the feature axis they live on.
#[derive(Debug, Clone)]
pub struct TrainingData<'a> {
    pub vectors: &'a [DocVector],
    pub labels: &'a [String],
    pub rv_fingerprint: &'a str,
}

/// Class-indexed view shared by the family implementations. Classes are sorted, so
/// comparing class indices is the lexicographic tie-break.
pub(crate) struct Prepared<'a> {
    pub n_features: usize,
    pub n_classes: usize,
    pub x: &'a [DocVector],
    pub y: Vec<usize>,
}

fn prepare<'a>(data: &TrainingData<'a>) -> Result<(Prepared<'a>, Vec<String>), LearnError> {
    if data.vectors.is_empty() {
        return Err(LearnError::EmptyTraining);
    }
    if data.vectors.len() != data.labels.len() {
        return Err(LearnError::Format(format!(
            "{} vectors but {} labels",
            data.vectors.len(),
            data.labels.len()
        )));
    }
    let n_features = data.vectors[0].len();
    if n_features == 0 {
        return Err(LearnError::ZeroLengthVectors);
    }
    if let Some((index, v)) = data.vectors.iter().enumerate().find(|(_, v)| v.len() != n_features) {
        return Err(LearnError::InconsistentLengths {
            index,
            expected: n_features,
            actual: v.len(),
        });
    }
    let mut classes: Vec<String> = data.labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(LearnError::TooFewClasses(classes.len()));
    }
    let y = data
        .labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label is a class"))
        .collect();
    let n_classes = classes.len();
    Ok((
        Prepared {
            n_features,
            n_classes,
            x: data.vectors,
            y,
        },
        classes,
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Knn(KnnModel),
    NaiveBayes(NaiveBayesModel),
    Id3(TreeModel),
    LinearSvmOvr(SvmModel),
    Lvq(LvqModel),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub format_version: u32,
    pub version: u64,
    pub spec: ClassifierSpec,
    pub rv_fingerprint: String,
    pub n_features: usize,
    pub classes: Vec<String>,
    pub payload: Payload,
}

impl TrainedModel {
    pub fn family(&self) -> Family {
        self.spec.family()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("models serialize")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LearnError> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            format_version: u32,
        }
        let header: Header =
            serde_json::from_slice(bytes).map_err(|e| LearnError::Format(e.to_string()))?;
        if header.format != MODEL_FORMAT {
            return Err(LearnError::Format(format!("unknown container `{}`", header.format)));
        }
        if header.format_version != MODEL_FORMAT_VERSION {
            return Err(LearnError::FormatVersion {
                expected: MODEL_FORMAT_VERSION,
                found: header.format_version,
            });
        }
        let mut model: Self =
            serde_json::from_slice(bytes).map_err(|e| LearnError::Format(e.to_string()))?;
        if model.spec.family() != model.payload_family() {
            return Err(LearnError::Format("spec family does not match payload".into()));
        }
        if let Payload::Knn(knn) = &mut model.payload {
            knn.rebuild_index(model.n_features);
        }
        Ok(model)
    }

    /// Loads and checks the model belongs to the given relevancy vector.
    pub fn from_bytes_checked(bytes: &[u8], rv_fingerprint: &str) -> Result<Self, LearnError> {
        let model = Self::from_bytes(bytes)?;
        if model.rv_fingerprint != rv_fingerprint {
            return Err(LearnError::FingerprintMismatch {
                expected: rv_fingerprint.to_string(),
                found: model.rv_fingerprint,
            });
        }
        Ok(model)
    }

    fn payload_family(&self) -> Family {
        match self.payload {
            Payload::Knn(_) => Family::Knn,
            Payload::NaiveBayes(_) => Family::NaiveBayes,
            Payload::Id3(_) => Family::Id3,
            Payload::LinearSvmOvr(_) => Family::LinearSvmOvr,
            Payload::Lvq(_) => Family::Lvq,
        }
    }
}

pub fn fit(spec: &ClassifierSpec, data: &TrainingData<'_>) -> Result<TrainedModel, LearnError> {
    spec.params.validate()?;
    let (prep, classes) = prepare(data)?;
    let payload = match spec.params {
        Hyperparams::Knn { k } => Payload::Knn(KnnModel::fit(&prep, k)),
        Hyperparams::NaiveBayes { alpha } => Payload::NaiveBayes(NaiveBayesModel::fit(&prep, alpha)),
        Hyperparams::Id3 { max_depth } => Payload::Id3(TreeModel::fit(&prep, max_depth)),
        Hyperparams::LinearSvmOvr { epochs, lambda } => {
            Payload::LinearSvmOvr(SvmModel::fit(&prep, epochs, lambda, spec.seed).0)
        }
        Hyperparams::Lvq {
            codebooks_per_class,
            rate,
            passes,
        } => Payload::Lvq(LvqModel::fit(&prep, codebooks_per_class, rate, passes, spec.seed)),
    };
    Ok(TrainedModel {
        format: MODEL_FORMAT.to_string(),
        format_version: MODEL_FORMAT_VERSION,
        version: 1,
        spec: spec.clone(),
        rv_fingerprint: data.rv_fingerprint.to_string(),
        n_features: prep.n_features,
        classes,
        payload,
    })
}

/// Trains the one-vs-rest SVM and also returns its per-class objective traces.
pub fn fit_svm_traced(
    spec: &ClassifierSpec,
    data: &TrainingData<'_>,
) -> Result<(TrainedModel, Vec<SvmTrace>), LearnError> {
    let Hyperparams::LinearSvmOvr { epochs, lambda } = spec.params else {
        return Err(LearnError::InvalidParam("traced fit needs an svm spec".into()));
    };
    spec.params.validate()?;
    let (prep, classes) = prepare(data)?;
    let (svm, traces) = SvmModel::fit(&prep, epochs, lambda, spec.seed);
    let model = TrainedModel {
        format: MODEL_FORMAT.to_string(),
        format_version: MODEL_FORMAT_VERSION,
        version: 1,
        spec: spec.clone(),
        rv_fingerprint: data.rv_fingerprint.to_string(),
        n_features: prep.n_features,
        classes,
        payload: Payload::LinearSvmOvr(svm),
    };
    Ok((model, traces))
}

/// Sorts `(class, score)` by score desc, class index asc.
pub(crate) fn sort_scores(scores: &mut [(usize, f64)]) {
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

pub fn predict(model: &TrainedModel, v: &DocVector) -> Result<RankedPrediction, LearnError> {
    if v.len() != model.n_features {
        return Err(LearnError::LengthMismatch {
            expected: model.n_features,
            actual: v.len(),
        });
    }
    let ranked: Vec<(usize, f64)> = match &model.payload {
        Payload::Knn(m) => m.rank(v, model.classes.len()),
        Payload::NaiveBayes(m) => m.rank(v),
        Payload::Id3(m) => m.rank(v, model.classes.len()),
        Payload::LinearSvmOvr(m) => m.rank(v),
        Payload::Lvq(m) => m.rank(v, model.classes.len()),
    };
    Ok(RankedPrediction {
        ranking: ranked
            .into_iter()
            .map(|(c, score)| Ranked {
                category: model.classes[c].clone(),
                score,
            })
            .collect(),
    })
}
