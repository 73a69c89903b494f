//! Stratified cross-validation over the preprocessing-mode x classifier grid.

mod report;
pub mod synth;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Document, Snapshot};
use crate::features::{build_relevancy, vectorize, DEFAULT_TOP_K};
use crate::learners::{fit, predict, ClassifierSpec, Family, TrainingData};
use crate::stp::{extract, ExtractionResult, Mode, Resources};

pub use report::{render_report, ReportFormat};
pub use synth::{synth_corpus, SynthCorpus, SynthError, SynthParams};

pub const DEFAULT_FOLDS: usize = 10;
pub const REPORT_FORMAT: &str = "mailtriage-eval";
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("no labeled documents to fold")]
    NoDocuments,
    #[error("grid is empty: give at least one mode and one classifier")]
    EmptyGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub n_folds: usize,
    /// Document id -> fold index.
    pub assignment: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

impl FoldPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Per category (in id order), shuffles its documents with the seeded RNG and deals them
/// round-robin. The dealing position carries over between categories so that fold totals
/// also stay within one of each other.
pub fn make_folds(docs: &[Document], n_folds: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if n_folds < 2 {
        return Err(EvalError::TooFewFolds(n_folds));
    }
    let mut by_category: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for d in docs {
        if let Some(c) = &d.category_id {
            by_category.entry(c).or_default().push(&d.id);
        }
    }
    if by_category.is_empty() {
        return Err(EvalError::NoDocuments);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut next = 0usize;
    for (cat, mut ids) in by_category {
        if ids.len() < n_folds {
            warnings.push(format!(
                "category `{cat}` has {} documents, fewer than {n_folds} folds; some folds get none",
                ids.len()
            ));
        }
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        for id in ids {
            assignment.insert(id.to_string(), next % n_folds);
            next += 1;
        }
    }
    Ok(FoldPlan {
        seed,
        n_folds,
        assignment,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub modes: Vec<Mode>,
    pub specs: Vec<ClassifierSpec>,
    pub n_folds: usize,
    pub seed: u64,
    pub top_k: usize,
    /// Cell whose Best5 enters the overall-performance product.
    pub designated: (Mode, Family),
}

impl GridConfig {
    /// Every mode x every family with default hyperparameters.
    pub fn full(seed: u64) -> Self {
        Self {
            modes: Mode::ALL.to_vec(),
            specs: Family::ALL.iter().map(|&f| ClassifierSpec::new(f, seed)).collect(),
            n_folds: DEFAULT_FOLDS,
            seed,
            top_k: DEFAULT_TOP_K,
            designated: (Mode::Combined, Family::LinearSvmOvr),
        }
    }

    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub hits1: usize,
    pub hits5: usize,
    pub n_features: usize,
    pub rv_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mode: Mode,
    pub family: Family,
    pub best1: f64,
    pub best5: f64,
    pub n_test: usize,
    pub folds: Vec<FoldResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub best1: f64,
    pub best5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub format_version: u32,
    pub config: GridConfig,
    pub config_fingerprint: String,
    pub n_docs: usize,
    pub n_categories: usize,
    pub coverage: f64,
    /// Majority-class predictor: the most frequent training categories, in frequency order.
    pub baseline: Baseline,
    pub cells: Vec<Cell>,
    pub designated_best5: Option<f64>,
    pub overall_best5: Option<f64>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn cell(&self, mode: Mode, family: Family) -> Option<&Cell> {
        self.cells.iter().find(|c| c.mode == mode && c.family == family)
    }
}

/// Share of all mail answered correctly within the top five: the learnable share of the
/// corpus times the Best5 accuracy on it.
pub fn overall_performance(coverage: f64, best5: f64) -> f64 {
    coverage * best5
}

/// Whole-percent rendering, e.g. `0.7332 -> "73%"`.
pub fn percent(fraction: f64) -> String {
    format!("{:.0}%", fraction * 100.0)
}

fn majority_order(labels: &[&str]) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let mut order: Vec<(&str, usize)> = counts.into_iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    order.into_iter().map(|(c, _)| c.to_string()).collect()
}

/// Runs every (mode, classifier) cell over the folds. The relevancy vector of each fold is
/// built from that fold's training documents only. A failing fit marks its cell with the
/// error and the run continues.
pub fn run_grid(
    snapshot: &Snapshot,
    coverage: f64,
    config: &GridConfig,
    res: &Resources,
) -> Result<EvalReport, EvalError> {
    if config.modes.is_empty() || config.specs.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let docs = snapshot.documents();
    let plan = make_folds(docs, config.n_folds, config.seed)?;
    let labels: Vec<&str> = docs.iter().map(|d| d.category_id.as_deref().unwrap_or("")).collect();
    let fold_of: Vec<usize> = docs.iter().map(|d| plan.fold_of(&d.id).expect("every doc folded")).collect();

    let mut baseline_hits = (0usize, 0usize);
    for fold in 0..config.n_folds {
        let train: Vec<&str> = (0..docs.len()).filter(|&i| fold_of[i] != fold).map(|i| labels[i]).collect();
        let order = majority_order(&train);
        for i in (0..docs.len()).filter(|&i| fold_of[i] == fold) {
            match order.iter().position(|c| c == labels[i]) {
                Some(0) => {
                    baseline_hits.0 += 1;
                    baseline_hits.1 += 1;
                }
                Some(r) if r < 5 => baseline_hits.1 += 1,
                _ => {}
            }
        }
    }
    let n = docs.len().max(1) as f64;
    let baseline = Baseline {
        best1: baseline_hits.0 as f64 / n,
        best5: baseline_hits.1 as f64 / n,
    };

    let mut cells = Vec::new();
    for &mode in &config.modes {
        let extracted: Vec<ExtractionResult> = docs.iter().map(|d| extract(&d.text, mode, res)).collect();
        let mut mode_cells: Vec<Cell> = config
            .specs
            .iter()
            .map(|s| Cell {
                mode,
                family: s.family(),
                best1: 0.0,
                best5: 0.0,
                n_test: 0,
                folds: Vec::new(),
                error: None,
            })
            .collect();
        for fold in 0..config.n_folds {
            let train: Vec<usize> = (0..docs.len()).filter(|&i| fold_of[i] != fold).collect();
            let test: Vec<usize> = (0..docs.len()).filter(|&i| fold_of[i] == fold).collect();
            if test.is_empty() {
                continue;
            }
            let rv = match build_relevancy(train.iter().map(|&i| (&extracted[i], labels[i])), config.top_k) {
                Ok(rv) => rv,
                Err(e) => {
                    for cell in &mut mode_cells {
                        cell.error.get_or_insert_with(|| format!("fold {fold}: {e}"));
                    }
                    continue;
                }
            };
            let fingerprint = rv.fingerprint();
            let train_x: Vec<_> = train.iter().map(|&i| vectorize(&extracted[i], &rv)).collect();
            let train_y: Vec<String> = train.iter().map(|&i| labels[i].to_string()).collect();
            let test_x: Vec<_> = test.iter().map(|&i| vectorize(&extracted[i], &rv)).collect();
            let data = TrainingData {
                vectors: &train_x,
                labels: &train_y,
                rv_fingerprint: &fingerprint,
            };
            for (spec, cell) in config.specs.iter().zip(&mut mode_cells) {
                if cell.error.is_some() {
                    continue;
                }
                let model = match fit(spec, &data) {
                    Ok(m) => m,
                    Err(e) => {
                        cell.error = Some(format!("fold {fold}: {e}"));
                        continue;
                    }
                };
                let (mut hits1, mut hits5) = (0, 0);
                for (v, &i) in test_x.iter().zip(&test) {
                    let p = predict(&model, v).expect("vector built on the model's axis");
                    hits1 += p.hit_at(labels[i], 1) as usize;
                    hits5 += p.hit_at(labels[i], 5) as usize;
                }
                cell.folds.push(FoldResult {
                    fold,
                    n_train: train.len(),
                    n_test: test.len(),
                    hits1,
                    hits5,
                    n_features: rv.len(),
                    rv_fingerprint: fingerprint.clone(),
                });
            }
        }
        for cell in &mut mode_cells {
            if cell.error.is_some() {
                cell.folds.clear();
                continue;
            }
            let n_test: usize = cell.folds.iter().map(|f| f.n_test).sum();
            let h1: usize = cell.folds.iter().map(|f| f.hits1).sum();
            let h5: usize = cell.folds.iter().map(|f| f.hits5).sum();
            cell.n_test = n_test;
            cell.best1 = h1 as f64 / n_test.max(1) as f64;
            cell.best5 = h5 as f64 / n_test.max(1) as f64;
        }
        cells.extend(mode_cells);
    }

    let (dm, df) = config.designated;
    let designated_best5 = cells
        .iter()
        .find(|c| c.mode == dm && c.family == df && c.error.is_none())
        .map(|c| c.best5);
    Ok(EvalReport {
        format: REPORT_FORMAT.to_string(),
        format_version: REPORT_FORMAT_VERSION,
        config: config.clone(),
        config_fingerprint: config.fingerprint(),
        n_docs: docs.len(),
        n_categories: snapshot.categories().len(),
        coverage,
        baseline,
        cells,
        designated_best5,
        overall_best5: designated_best5.map(|b| overall_performance(coverage, b)),
        warnings: plan.warnings,
    })
}
