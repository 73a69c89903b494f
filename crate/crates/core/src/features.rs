//! Relevancy-vector construction and binary document vectors.
//!
//! Every category's extraction results are pooled into one multiset. Each feature of a
//! pool is scored `tf * idf` with `tf` the raw count in the pool and
//! `idf = ln(C / c_t)`, `C` the number of categories and `c_t` the number of pools that
//! contain the feature. The top `k` of every pool (score desc, then tf desc, then
//! feature asc) are concatenated in lexicographic category order with duplicates
//! skipped; that list is the feature axis for all document vectors.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::stp::{ExtractionResult, Mode};

pub const DEFAULT_TOP_K: usize = 100;
pub const RELEVANCY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("need at least 2 categories to build a relevancy vector, got {0}")]
    TooFewCategories(usize),
    #[error("category `{0}` has no extraction results")]
    EmptyPool(String),
    #[error("training results mix preprocessing modes {0} and {1}")]
    MixedModes(Mode, Mode),
    #[error("top-k must be positive")]
    ZeroK,
    #[error("unsupported relevancy vector format version {0}")]
    Version(u32),
    #[error("malformed relevancy vector: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureScore {
    pub feature: String,
    pub category: String,
    pub tf: usize,
    pub idf: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelevancyVector {
    pub format_version: u32,
    pub features: Vec<String>,
    pub per_category_top: BTreeMap<String, Vec<String>>,
    pub k: usize,
    pub mode: Mode,
    /// Order-free digest of the category pools the vector was built from.
    pub corpus_fingerprint: String,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl PartialEq for RelevancyVector {
    fn eq(&self, other: &Self) -> bool {
        self.features == other.features
            && self.per_category_top == other.per_category_top
            && self.k == other.k
            && self.mode == other.mode
            && self.corpus_fingerprint == other.corpus_fingerprint
    }
}

impl RelevancyVector {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn position(&self, feature: &str) -> Option<usize> {
        self.index.get(feature).copied()
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.per_category_top.keys().map(String::as_str)
    }

    /// Digest of the feature axis; models record it to reject mismatched vectors.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"relevancy-v1\0");
        h.update(self.mode.as_str().as_bytes());
        h.update(self.k.to_le_bytes());
        for f in &self.features {
            h.update(f.as_bytes());
            h.update([0]);
        }
        h.update(self.corpus_fingerprint.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("relevancy vector serializes")
    }

    pub fn from_json(raw: &str) -> Result<Self, FeatureError> {
        let mut rv: Self = serde_json::from_str(raw).map_err(|e| FeatureError::Malformed(e.to_string()))?;
        if rv.format_version != RELEVANCY_FORMAT_VERSION {
            return Err(FeatureError::Version(rv.format_version));
        }
        rv.rebuild_index().map_err(FeatureError::Malformed)?;
        Ok(rv)
    }

    fn rebuild_index(&mut self) -> Result<(), String> {
        self.index = HashMap::with_capacity(self.features.len());
        for (i, f) in self.features.iter().enumerate() {
            if self.index.insert(f.clone(), i).is_some() {
                return Err(format!("duplicate feature `{f}`"));
            }
        }
        Ok(())
    }
}

type Pools<'a> = BTreeMap<&'a str, HashMap<&'a str, usize>>;

fn pools<'a, I>(training: I) -> Result<(Pools<'a>, Mode), FeatureError>
where
    I: IntoIterator<Item = (&'a ExtractionResult, &'a str)>,
{
    let mut pools: Pools<'a> = BTreeMap::new();
    let mut mode = None;
    for (result, category) in training {
        match mode {
            None => mode = Some(result.mode),
            Some(m) if m != result.mode => return Err(FeatureError::MixedModes(m, result.mode)),
            _ => {}
        }
        let pool = pools.entry(category).or_default();
        for item in &result.items {
            *pool.entry(item.as_str()).or_default() += 1;
        }
    }
    if pools.len() < 2 {
        return Err(FeatureError::TooFewCategories(pools.len()));
    }
    if let Some((cat, _)) = pools.iter().find(|(_, p)| p.is_empty()) {
        return Err(FeatureError::EmptyPool(cat.to_string()));
    }
    Ok((pools, mode.unwrap_or(Mode::Morphana)))
}

fn rank_pools(pools: &Pools<'_>) -> BTreeMap<String, Vec<FeatureScore>> {
    let n_categories = pools.len() as f64;
    let mut containing: HashMap<&str, usize> = HashMap::new();
    for pool in pools.values() {
        for f in pool.keys() {
            *containing.entry(f).or_default() += 1;
        }
    }
    pools
        .iter()
        .map(|(&cat, pool)| {
            let mut scores: Vec<FeatureScore> = pool
                .iter()
                .map(|(&feature, &tf)| {
                    let idf = (n_categories / containing[feature] as f64).ln();
                    FeatureScore {
                        feature: feature.to_string(),
                        category: cat.to_string(),
                        tf,
                        idf,
                        score: tf as f64 * idf,
                    }
                })
                .collect();
            scores.sort_by(|a, b| {
                b.score
                    .total_cmp(&a.score)
                    .then(b.tf.cmp(&a.tf))
                    .then_with(|| a.feature.cmp(&b.feature))
            });
            (cat.to_string(), scores)
        })
        .collect()
}

/// Full per-category score rankings, best first. Exposed for inspection and tests.
pub fn score_features<'a, I>(training: I) -> Result<BTreeMap<String, Vec<FeatureScore>>, FeatureError>
where
    I: IntoIterator<Item = (&'a ExtractionResult, &'a str)>,
{
    let (pools, _) = pools(training)?;
    Ok(rank_pools(&pools))
}

fn corpus_fingerprint(pools: &Pools<'_>) -> String {
    let mut h = Sha256::new();
    for (cat, pool) in pools {
        h.update(cat.as_bytes());
        h.update([1]);
        let mut entries: Vec<(&&str, &usize)> = pool.iter().collect();
        entries.sort();
        for (f, n) in entries {
            h.update(f.as_bytes());
            h.update([0]);
            h.update((*n as u64).to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn build_relevancy<'a, I>(training: I, k: usize) -> Result<RelevancyVector, FeatureError>
where
    I: IntoIterator<Item = (&'a ExtractionResult, &'a str)>,
{
    if k == 0 {
        return Err(FeatureError::ZeroK);
    }
    let (pools, mode) = pools(training)?;
    let ranked = rank_pools(&pools);
    let mut per_category_top = BTreeMap::new();
    let mut features = Vec::new();
    let mut index = HashMap::new();
    for (cat, scores) in ranked {
        let top: Vec<String> = scores.into_iter().take(k).map(|s| s.feature).collect();
        for f in &top {
            if !index.contains_key(f) {
                index.insert(f.clone(), features.len());
                features.push(f.clone());
            }
        }
        per_category_top.insert(cat, top);
    }
    Ok(RelevancyVector {
        format_version: RELEVANCY_FORMAT_VERSION,
        features,
        per_category_top,
        k,
        mode,
        corpus_fingerprint: corpus_fingerprint(&pools),
        index,
    })
}

/// Binary occurrence vector over a relevancy vector, stored as sorted set-bit indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DocVector {
    len: usize,
    ones: Vec<u32>,
}

impl DocVector {
    /// Builds from arbitrary indices; duplicates collapse and order is normalized.
    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut ones: Vec<u32> = indices
            .into_iter()
            .inspect(|&i| assert!(i < len, "index {i} out of range for length {len}"))
            .map(|i| i as u32)
            .collect();
        ones.sort_unstable();
        ones.dedup();
        Self { len, ones }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        Self::from_indices(bits.len(), bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Hamming weight.
    pub fn weight(&self) -> usize {
        self.ones.len()
    }

    pub fn ones(&self) -> &[u32] {
        &self.ones
    }

    pub fn get(&self, i: usize) -> bool {
        self.ones.binary_search(&(i as u32)).is_ok()
    }

    pub fn bits(&self) -> Vec<u8> {
        let mut bits = vec![0u8; self.len];
        for &i in &self.ones {
            bits[i as usize] = 1;
        }
        bits
    }

    /// Size of the intersection of the two bit sets.
    pub fn overlap(&self, other: &DocVector) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.ones.len() && j < other.ones.len() {
            match self.ones[i].cmp(&other.ones[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    /// Squared Euclidean distance between two binary vectors.
    pub fn squared_distance(&self, other: &DocVector) -> usize {
        self.weight() + other.weight() - 2 * self.overlap(other)
    }
}

pub fn vectorize(doc: &ExtractionResult, rv: &RelevancyVector) -> DocVector {
    DocVector::from_indices(rv.len(), doc.items.iter().filter_map(|item| rv.position(item)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res(items: &[&str]) -> ExtractionResult {
        ExtractionResult {
            items: items.iter().map(|s| s.to_string()).collect(),
            mode: Mode::Morphana,
            fallback_used: false,
        }
    }

    fn build(data: &[(ExtractionResult, &str)], k: usize) -> Result<RelevancyVector, FeatureError> {
        build_relevancy(data.iter().map(|(r, c)| (r, *c)), k)
    }

    #[test]
    fn disjoint_vocabularies() {
        let data = vec![
            (res(&["a1", "a2", "a3"]), "A"),
            (res(&["a1"]), "A"),
            (res(&["b1", "b2", "b3"]), "B"),
        ];
        let rv = build(&data, 100).unwrap();
        assert_eq!(rv.len(), 6);
        let scores = score_features(data.iter().map(|(r, c)| (r, *c))).unwrap();
        for s in scores.values().flatten() {
            assert!((s.idf - 2f64.ln()).abs() < 1e-15);
        }
        // a1 has tf 2 and leads category A
        assert_eq!(rv.per_category_top["A"], vec!["a1", "a2", "a3"]);
        assert_eq!(rv.features, vec!["a1", "a2", "a3", "b1", "b2", "b3"]);
    }

    #[test]
    fn shared_feature_has_zero_idf_and_ranks_last() {
        let data = vec![
            (res(&["common", "common", "common", "x"]), "A"),
            (res(&["common", "y"]), "B"),
            (res(&["common", "z"]), "C"),
        ];
        let scores = score_features(data.iter().map(|(r, c)| (r, *c))).unwrap();
        let a = &scores["A"];
        assert_eq!(a[0].feature, "x");
        assert_eq!(a[1].feature, "common");
        assert_eq!(a[1].idf, 0.0);
        // still eligible when k leaves room
        let rv = build(&data, 2).unwrap();
        assert_eq!(rv.per_category_top["A"], vec!["x", "common"]);
        let rv = build(&data, 1).unwrap();
        assert_eq!(rv.features, vec!["x", "y", "z"]);
    }

    #[test]
    fn ties_break_by_tf_then_name() {
        // b and a: equal score and tf, alphabetical; c: same idf but lower tf
        let data = vec![
            (res(&["b", "a", "b", "a", "c"]), "A"),
            (res(&["d"]), "B"),
        ];
        let rv = build(&data, 100).unwrap();
        assert_eq!(rv.per_category_top["A"], vec!["a", "b", "c"]);
    }

    #[test]
    fn errors() {
        assert_eq!(build(&[(res(&["a"]), "A")], 10).unwrap_err(), FeatureError::TooFewCategories(1));
        assert_eq!(
            build(&[(res(&["a"]), "A"), (res(&[]), "B")], 10).unwrap_err(),
            FeatureError::EmptyPool("B".into())
        );
        assert_eq!(build(&[(res(&["a"]), "A"), (res(&["b"]), "B")], 0).unwrap_err(), FeatureError::ZeroK);
        let mut other = res(&["b"]);
        other.mode = Mode::Combined;
        assert!(matches!(
            build(&[(res(&["a"]), "A"), (other, "B")], 3),
            Err(FeatureError::MixedModes(..))
        ));
    }

    #[test]
    fn vectors_are_binary() {
        let data = vec![(res(&["a", "b"]), "A"), (res(&["c"]), "B")];
        let rv = build(&data, 10).unwrap();
        assert_eq!(vectorize(&res(&[]), &rv).bits(), vec![0, 0, 0]);
        let v = vectorize(&res(&["b", "b", "b", "b", "b"]), &rv);
        assert_eq!(v.bits(), vec![0, 1, 0]);
        assert_eq!(v.weight(), 1);
        let v = vectorize(&res(&["c", "unknown", "a"]), &rv);
        assert_eq!(v.bits(), vec![1, 0, 1]);
    }

    #[test]
    fn json_round_trip_keeps_index() {
        let data = vec![(res(&["a", "b"]), "A"), (res(&["c"]), "B")];
        let rv = build(&data, 10).unwrap();
        let back = RelevancyVector::from_json(&rv.to_json()).unwrap();
        assert_eq!(back, rv);
        assert_eq!(back.position("c"), Some(2));
        assert_eq!(back.fingerprint(), rv.fingerprint());
    }

    #[test]
    fn distance_helpers() {
        let a = DocVector::from_indices(8, [0, 2, 5]);
        let b = DocVector::from_indices(8, [2, 5, 7, 7]);
        assert_eq!(a.overlap(&b), 2);
        assert_eq!(a.squared_distance(&b), 2);
        assert!(b.get(7) && !b.get(1));
    }
}
