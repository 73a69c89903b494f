use serde::{Deserialize, Serialize};

use super::{sort_scores, Prepared};
use crate::features::DocVector;

/// Bernoulli naive Bayes with additive smoothing:
/// `P(x_f = 1 | c) = (n_cf + alpha) / (n_c + 2 alpha)`, prior `n_c / n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub alpha: f64,
    pub log_prior: Vec<f64>,
    /// `ln P(x_f = 1 | c)`, class-major.
    pub log_present: Vec<Vec<f64>>,
    /// `ln P(x_f = 0 | c)`, class-major.
    pub log_absent: Vec<Vec<f64>>,
    /// Per class, the log-likelihood of the all-zero vector.
    all_absent: Vec<f64>,
}

impl NaiveBayesModel {
    pub(crate) fn fit(data: &Prepared<'_>, alpha: f64) -> Self {
        let (nc, nf) = (data.n_classes, data.n_features);
        let mut class_count = vec![0usize; nc];
        let mut feature_count = vec![vec![0usize; nf]; nc];
        for (v, &c) in data.x.iter().zip(&data.y) {
            class_count[c] += 1;
            for &f in v.ones() {
                feature_count[c][f as usize] += 1;
            }
        }
        let n = data.x.len() as f64;
        let log_prior = class_count.iter().map(|&k| (k as f64 / n).ln()).collect();
        let mut log_present = Vec::with_capacity(nc);
        let mut log_absent = Vec::with_capacity(nc);
        let mut all_absent = Vec::with_capacity(nc);
        for c in 0..nc {
            let denom = class_count[c] as f64 + 2.0 * alpha;
            let p: Vec<f64> = feature_count[c].iter().map(|&k| (k as f64 + alpha) / denom).collect();
            let present: Vec<f64> = p.iter().map(|p| p.ln()).collect();
            let absent: Vec<f64> = p.iter().map(|p| (-p).ln_1p()).collect();
            all_absent.push(absent.iter().sum());
            log_present.push(present);
            log_absent.push(absent);
        }
        Self {
            alpha,
            log_prior,
            log_present,
            log_absent,
            all_absent,
        }
    }

    /// Unnormalized `ln P(c) + ln P(v | c)` per class.
    pub fn log_joint(&self, v: &DocVector) -> Vec<f64> {
        (0..self.log_prior.len())
            .map(|c| {
                let flips: f64 = v
                    .ones()
                    .iter()
                    .map(|&f| self.log_present[c][f as usize] - self.log_absent[c][f as usize])
                    .sum();
                self.log_prior[c] + self.all_absent[c] + flips
            })
            .collect()
    }

    /// Normalized log-posteriors `ln P(c | v)`.
    pub fn log_posterior(&self, v: &DocVector) -> Vec<f64> {
        let joint = self.log_joint(v);
        let max = joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + joint.iter().map(|j| (j - max).exp()).sum::<f64>().ln();
        joint.into_iter().map(|j| j - lse).collect()
    }

    pub(crate) fn rank(&self, v: &DocVector) -> Vec<(usize, f64)> {
        let mut scores: Vec<(usize, f64)> = self.log_posterior(v).into_iter().enumerate().collect();
        sort_scores(&mut scores);
        scores
    }
}
