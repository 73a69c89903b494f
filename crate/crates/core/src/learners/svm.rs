use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sort_scores, Prepared};
use crate::features::DocVector;

/// One-vs-rest linear SVMs trained with Pegasos (primal stochastic subgradient).
///
/// Each class gets a hinge-loss separator `w . [x; 1]`; the constant input acts as the bias
/// and is regularized along with the weights. Scores are raw margins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmModel {
    pub lambda: f64,
    pub epochs: usize,
    /// Class-major; the last entry of each row is the bias.
    pub weights: Vec<Vec<f64>>,
}

/// Objective `lambda/2 |w|^2 + mean hinge` after each epoch for one class.
/// Epochs whose update raised the objective are rolled back and marked rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmTrace {
    pub class: usize,
    pub initial: f64,
    pub objective: Vec<f64>,
    pub rejected: Vec<bool>,
}

/// `w = scale * v`, so the per-step shrink is O(1).
struct Scaled {
    v: Vec<f64>,
    scale: f64,
    sq_norm_v: f64,
}

impl Scaled {
    fn zeros(n: usize) -> Self {
        Self {
            v: vec![0.0; n],
            scale: 1.0,
            sq_norm_v: 0.0,
        }
    }

    /// `v` has a trailing bias slot that is always active.
    fn dot(&self, x: &DocVector) -> f64 {
        let bias = self.v.len() - 1;
        let raw: f64 = x.ones().iter().map(|&f| self.v[f as usize]).sum::<f64>() + self.v[bias];
        raw * self.scale
    }

    fn add(&mut self, x: &DocVector, amount: f64) {
        let delta = amount / self.scale;
        let bias = self.v.len() - 1;
        for f in x.ones().iter().map(|&f| f as usize).chain(std::iter::once(bias)) {
            let old = self.v[f];
            let new = old + delta;
            self.sq_norm_v += new * new - old * old;
            self.v[f] = new;
        }
    }

    fn sq_norm(&self) -> f64 {
        self.sq_norm_v * self.scale * self.scale
    }

    fn materialize(&self) -> Vec<f64> {
        self.v.iter().map(|x| x * self.scale).collect()
    }

    fn renormalize(&mut self) {
        for x in &mut self.v {
            *x *= self.scale;
        }
        self.scale = 1.0;
        self.sq_norm_v = self.v.iter().map(|x| x * x).sum();
    }
}

fn objective(w: &Scaled, x: &[DocVector], target: &[f64], lambda: f64) -> f64 {
    let hinge: f64 = x
        .iter()
        .zip(target)
        .map(|(v, &t)| (1.0 - t * w.dot(v)).max(0.0))
        .sum();
    0.5 * lambda * w.sq_norm() + hinge / x.len() as f64
}

impl SvmModel {
    pub(crate) fn fit(data: &Prepared<'_>, epochs: usize, lambda: f64, seed: u64) -> (Self, Vec<SvmTrace>) {
        let n = data.x.len();
        let radius_sq = 1.0 / lambda;
        let mut weights = Vec::with_capacity(data.n_classes);
        let mut traces = Vec::with_capacity(data.n_classes);
        for class in 0..data.n_classes {
            let target: Vec<f64> = data.y.iter().map(|&c| if c == class { 1.0 } else { -1.0 }).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut order: Vec<usize> = (0..n).collect();
            let mut w = Scaled::zeros(data.n_features + 1);
            let mut best = objective(&w, data.x, &target, lambda);
            let mut trace = SvmTrace {
                class,
                initial: best,
                objective: Vec::with_capacity(epochs),
                rejected: Vec::with_capacity(epochs),
            };
            let mut t = 0usize;
            for _ in 0..epochs {
                let snapshot = w.materialize();
                order.shuffle(&mut rng);
                for &i in &order {
                    t += 1;
                    let eta = 1.0 / (lambda * t as f64);
                    let margin = target[i] * w.dot(&data.x[i]);
                    if t == 1 {
                        w = Scaled::zeros(data.n_features + 1);
                    } else {
                        w.scale *= 1.0 - 1.0 / t as f64;
                    }
                    if margin < 1.0 {
                        w.add(&data.x[i], eta * target[i]);
                    }
                    let sq = w.sq_norm();
                    if sq > radius_sq {
                        w.scale *= (radius_sq / sq).sqrt();
                    }
                    if w.scale < 1e-100 {
                        w.renormalize();
                    }
                }
                w.renormalize();
                let obj = objective(&w, data.x, &target, lambda);
                if obj > best {
                    w = Scaled {
                        sq_norm_v: snapshot.iter().map(|x| x * x).sum(),
                        v: snapshot,
                        scale: 1.0,
                    };
                    trace.objective.push(best);
                    trace.rejected.push(true);
                } else {
                    best = obj;
                    trace.objective.push(obj);
                    trace.rejected.push(false);
                }
            }
            weights.push(w.materialize());
            traces.push(trace);
        }
        (Self { lambda, epochs, weights }, traces)
    }

    pub fn margins(&self, v: &DocVector) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| {
                let bias = w[w.len() - 1];
                v.ones().iter().map(|&f| w[f as usize]).sum::<f64>() + bias
            })
            .collect()
    }

    pub(crate) fn rank(&self, v: &DocVector) -> Vec<(usize, f64)> {
        let mut scores: Vec<(usize, f64)> = self.margins(v).into_iter().enumerate().collect();
        sort_scores(&mut scores);
        scores
    }
}
