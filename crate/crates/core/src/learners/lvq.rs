use std::sync::OnceLock;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sort_scores, Prepared};
use crate::features::DocVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub class: usize,
    /// Non-zero weights as `(feature, value)`, by feature.
    pub weights: Vec<(u32, f64)>,
}

/// LVQ1 with a linearly decaying learning rate. Each class starts from up to
/// `codebooks_per_class` of its own training vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LvqModel {
    pub codebooks_per_class: usize,
    pub rate: f64,
    pub passes: usize,
    pub codebooks: Vec<Codebook>,
    #[serde(skip)]
    dense: OnceLock<Vec<(Vec<f64>, f64)>>,
}

/// Codebook kept as `scale * u` so the `(1 - beta)` shrink of an update is O(1).
struct Working {
    class: usize,
    u: Vec<f64>,
    scale: f64,
    sq_norm_u: f64,
}

impl Working {
    fn from_vector(class: usize, x: &DocVector, n: usize) -> Self {
        let mut u = vec![0.0; n];
        for &f in x.ones() {
            u[f as usize] = 1.0;
        }
        Self {
            class,
            u,
            scale: 1.0,
            sq_norm_u: x.weight() as f64,
        }
    }

    fn sq_distance(&self, x: &DocVector) -> f64 {
        let cross: f64 = x.ones().iter().map(|&f| self.u[f as usize]).sum();
        self.scale * self.scale * self.sq_norm_u - 2.0 * self.scale * cross + x.weight() as f64
    }

    /// `c <- (1 - beta) c + beta x`; positive beta attracts, negative repels.
    fn step(&mut self, x: &DocVector, beta: f64) {
        self.scale *= 1.0 - beta;
        let delta = beta / self.scale;
        for &f in x.ones() {
            let old = self.u[f as usize];
            let new = old + delta;
            self.sq_norm_u += new * new - old * old;
            self.u[f as usize] = new;
        }
        if !(1e-30..=1e30).contains(&self.scale.abs()) {
            self.renormalize();
        }
    }

    fn renormalize(&mut self) {
        for x in &mut self.u {
            *x *= self.scale;
        }
        self.scale = 1.0;
        self.sq_norm_u = self.u.iter().map(|x| x * x).sum();
    }
}

impl LvqModel {
    pub(crate) fn fit(data: &Prepared<'_>, m: usize, rate: f64, passes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); data.n_classes];
        for (i, &c) in data.y.iter().enumerate() {
            members[c].push(i);
        }
        let mut books: Vec<Working> = Vec::new();
        for (class, idx) in members.iter().enumerate() {
            let take = m.min(idx.len());
            let mut picked: Vec<usize> = index::sample(&mut rng, idx.len(), take).into_vec();
            picked.sort_unstable();
            for p in picked {
                books.push(Working::from_vector(class, &data.x[idx[p]], data.n_features));
            }
        }

        let n = data.x.len();
        let total = (passes * n) as f64;
        let mut order: Vec<usize> = (0..n).collect();
        let mut t = 0usize;
        for _ in 0..passes {
            order.shuffle(&mut rng);
            for &i in &order {
                let alpha = rate * (1.0 - t as f64 / total);
                t += 1;
                let x = &data.x[i];
                let winner = nearest(&books, x);
                let beta = if books[winner].class == data.y[i] { alpha } else { -alpha };
                books[winner].step(x, beta);
            }
            for b in &mut books {
                b.renormalize();
            }
        }

        let codebooks = books
            .into_iter()
            .map(|b| Codebook {
                class: b.class,
                weights: b
                    .u
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w != 0.0)
                    .map(|(f, &w)| (f as u32, w))
                    .collect(),
            })
            .collect();
        Self {
            codebooks_per_class: m,
            rate,
            passes,
            codebooks,
            dense: OnceLock::new(),
        }
    }

    fn dense(&self, n_features: usize) -> &[(Vec<f64>, f64)] {
        self.dense.get_or_init(|| {
            self.codebooks
                .iter()
                .map(|c| {
                    let mut w = vec![0.0; n_features];
                    for &(f, v) in &c.weights {
                        w[f as usize] = v;
                    }
                    let sq = c.weights.iter().map(|(_, v)| v * v).sum();
                    (w, sq)
                })
                .collect()
        })
    }

    /// Each class scores minus the squared distance to its closest codebook.
    pub(crate) fn rank(&self, v: &DocVector, n_classes: usize) -> Vec<(usize, f64)> {
        let dense = self.dense(v.len());
        let mut best = vec![f64::INFINITY; n_classes];
        for (c, (w, sq)) in self.codebooks.iter().zip(dense) {
            let cross: f64 = v.ones().iter().map(|&f| w[f as usize]).sum();
            let d = sq - 2.0 * cross + v.weight() as f64;
            if d < best[c.class] {
                best[c.class] = d;
            }
        }
        let mut scores: Vec<(usize, f64)> = best.into_iter().map(|d| -d).enumerate().collect();
        sort_scores(&mut scores);
        scores
    }
}

fn nearest(books: &[Working], x: &DocVector) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, b) in books.iter().enumerate() {
        let d = b.sq_distance(x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}
