use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::Prepared;
use crate::features::DocVector;

/// Instance-based learner: keeps every training vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    instances: Vec<DocVector>,
    labels: Vec<usize>,
    /// feature -> training instances that have it; rebuilt after loading
    #[serde(skip)]
    postings: OnceLock<Vec<Vec<u32>>>,
}

impl KnnModel {
    pub(crate) fn fit(data: &Prepared<'_>, k: usize) -> Self {
        let model = Self {
            k,
            instances: data.x.to_vec(),
            labels: data.y.clone(),
            postings: OnceLock::new(),
        };
        model.rebuild_index(data.n_features);
        model
    }

    pub(crate) fn rebuild_index(&self, n_features: usize) {
        self.postings.get_or_init(|| {
            let mut postings = vec![Vec::new(); n_features];
            for (i, v) in self.instances.iter().enumerate() {
                for &f in v.ones() {
                    postings[f as usize].push(i as u32);
                }
            }
            postings
        });
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Squared distance from `v` to every stored instance, via the posting lists.
    fn distances(&self, v: &DocVector) -> Vec<usize> {
        self.rebuild_index(v.len());
        let postings = self.postings.get().expect("index built");
        let mut overlap = vec![0usize; self.instances.len()];
        for &f in v.ones() {
            for &i in &postings[f as usize] {
                overlap[i as usize] += 1;
            }
        }
        self.instances
            .iter()
            .zip(overlap)
            .map(|(x, o)| x.weight() + v.weight() - 2 * o)
            .collect()
    }

    /// The `k` nearest instances as `(index, squared distance)`, ordered by distance then index.
    pub fn neighbors(&self, v: &DocVector, k: usize) -> Vec<(usize, usize)> {
        let dist = self.distances(v);
        let mut order: Vec<(usize, usize)> = dist.into_iter().enumerate().collect();
        order.sort_unstable_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        order.truncate(k);
        order
    }

    /// Classes with votes among the k nearest come first (more votes, then smaller summed
    /// distance, then class order), scored by their vote count. The remaining classes
    /// follow by distance of their nearest instance, scored by its negation.
    pub(crate) fn rank(&self, v: &DocVector, n_classes: usize) -> Vec<(usize, f64)> {
        let mut order: Vec<(usize, usize)> = self.distances(v).into_iter().enumerate().collect();
        order.sort_unstable_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));

        let mut votes = vec![0usize; n_classes];
        let mut summed = vec![0usize; n_classes];
        let mut nearest: Vec<Option<usize>> = vec![None; n_classes];
        for (pos, &(i, d)) in order.iter().enumerate() {
            let c = self.labels[i];
            if pos < self.k {
                votes[c] += 1;
                summed[c] += d;
            }
            if nearest[c].is_none() {
                nearest[c] = Some(d);
            }
        }
        let mut voters: Vec<usize> = (0..n_classes).filter(|&c| votes[c] > 0).collect();
        voters.sort_by(|&a, &b| votes[b].cmp(&votes[a]).then(summed[a].cmp(&summed[b])).then(a.cmp(&b)));
        let mut rest: Vec<usize> = (0..n_classes).filter(|&c| votes[c] == 0).collect();
        rest.sort_by_key(|&c| (nearest[c].unwrap_or(usize::MAX), c));

        voters
            .into_iter()
            .map(|c| (c, votes[c] as f64))
            .chain(rest.into_iter().map(|c| (c, -(nearest[c].unwrap_or(usize::MAX) as f64))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{fit, predict, ClassifierSpec, Family, Payload, TrainingData};

    #[test]
    fn exact_match_wins_with_k1() {
        let (x, y) = crate::learners::tests::toy();
        let data = TrainingData { vectors: &x, labels: &y, rv_fingerprint: "" };
        let spec = ClassifierSpec::new(Family::Knn, 0).with_param("k", "1").unwrap();
        let model = fit(&spec, &data).unwrap();
        for (v, label) in x.iter().zip(&y) {
            assert_eq!(&predict(&model, v).unwrap().best().category, label);
        }
    }

    #[test]
    fn vote_ties_fall_back_to_summed_distance() {
        // k=2 around {0}: a and b get one vote each, a is closer
        let x = vec![
            DocVector::from_indices(4, [0, 1]),    // a, d=1 from {0}
            DocVector::from_indices(4, [0, 2, 3]), // b, d=2
            DocVector::from_indices(4, [3]),       // c, d=2
        ];
        let y: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let data = TrainingData { vectors: &x, labels: &y, rv_fingerprint: "" };
        let spec = ClassifierSpec::new(Family::Knn, 0).with_param("k", "2").unwrap();
        let model = fit(&spec, &data).unwrap();
        let p = predict(&model, &DocVector::from_indices(4, [0])).unwrap();
        let cats: Vec<&str> = p.ranking.iter().map(|r| r.category.as_str()).collect();
        assert_eq!(cats, vec!["a", "b", "c"]);
        assert_eq!(p.ranking[2].score, -2.0);
        let Payload::Knn(knn) = &model.payload else { unreachable!() };
        assert_eq!(knn.neighbors(&DocVector::from_indices(4, [0]), 3), vec![(0, 1), (1, 2), (2, 2)]);
    }
}
