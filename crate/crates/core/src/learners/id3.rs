use serde::{Deserialize, Serialize};

use super::Prepared;
use crate::features::DocVector;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        counts: Vec<(u32, u32)>,
    },
    Split {
        feature: u32,
        absent: u32,
        present: u32,
        counts: Vec<(u32, u32)>,
    },
}

impl Node {
    /// Sparse `(class, training count)` pairs at this node, by class.
    pub fn counts(&self) -> &[(u32, u32)] {
        match self {
            Node::Leaf { counts } | Node::Split { counts, .. } => counts,
        }
    }
}

/// Unpruned information-gain tree over binary features. Node 0 is the root.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeModel {
    pub max_depth: Option<usize>,
    pub nodes: Vec<Node>,
}

fn entropy(counts: impl Iterator<Item = usize>, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .filter(|&k| k > 0)
        .map(|k| {
            let p = k as f64 / n;
            -p * p.log2()
        })
        .sum()
}

struct Pending {
    node: usize,
    samples: Vec<u32>,
    depth: usize,
}

impl TreeModel {
    pub(crate) fn fit(data: &Prepared<'_>, max_depth: Option<usize>) -> Self {
        let nc = data.n_classes;
        let mut nodes: Vec<Node> = vec![Node::Leaf { counts: Vec::new() }];
        let mut stack = vec![Pending {
            node: 0,
            samples: (0..data.x.len() as u32).collect(),
            depth: 0,
        }];
        // scratch: per-feature per-class presence counts for the current node
        let mut present = vec![0u32; data.n_features * nc];
        let mut present_total = vec![0u32; data.n_features];
        let mut touched: Vec<u32> = Vec::new();

        while let Some(Pending { node, samples, depth }) = stack.pop() {
            let mut class_counts = vec![0usize; nc];
            for &s in &samples {
                class_counts[data.y[s as usize]] += 1;
            }
            let sparse: Vec<(u32, u32)> = class_counts
                .iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(c, &k)| (c as u32, k as u32))
                .collect();
            let pure = sparse.len() <= 1;
            let depth_capped = max_depth.is_some_and(|d| depth >= d);
            let split = if pure || depth_capped {
                None
            } else {
                best_split(data, &samples, &class_counts, &mut present, &mut present_total, &mut touched)
            };
            let Some(feature) = split else {
                nodes[node] = Node::Leaf { counts: sparse };
                continue;
            };
            let (with, without): (Vec<u32>, Vec<u32>) =
                samples.iter().partition(|&&s| data.x[s as usize].get(feature as usize));
            let absent = nodes.len();
            let present_child = absent + 1;
            nodes.push(Node::Leaf { counts: Vec::new() });
            nodes.push(Node::Leaf { counts: Vec::new() });
            nodes[node] = Node::Split {
                feature,
                absent: absent as u32,
                present: present_child as u32,
                counts: sparse,
            };
            stack.push(Pending {
                node: present_child,
                samples: with,
                depth: depth + 1,
            });
            stack.push(Pending {
                node: absent,
                samples: without,
                depth: depth + 1,
            });
        }
        Self { max_depth, nodes }
    }

    pub fn root_feature(&self) -> Option<usize> {
        match self.nodes.first() {
            Some(Node::Split { feature, .. }) => Some(*feature as usize),
            _ => None,
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node]) -> usize {
            let mut best = 0;
            let mut stack = vec![(0usize, 0usize)];
            while let Some((n, d)) = stack.pop() {
                best = best.max(d);
                if let Node::Split { absent, present, .. } = nodes[n] {
                    stack.push((absent as usize, d + 1));
                    stack.push((present as usize, d + 1));
                }
            }
            best
        }
        walk(&self.nodes)
    }

    fn path(&self, v: &DocVector) -> Vec<usize> {
        let mut path = vec![0];
        let mut node = 0;
        while let Node::Split {
            feature,
            absent,
            present,
            ..
        } = self.nodes[node]
        {
            node = if v.get(feature as usize) {
                present as usize
            } else {
                absent as usize
            };
            path.push(node);
        }
        path
    }

    /// Ranks by the leaf's class frequencies. Classes the leaf has not seen are ordered by
    /// the frequencies of the nearest ancestor that has seen them, up to the root.
    pub(crate) fn rank(&self, v: &DocVector, n_classes: usize) -> Vec<(usize, f64)> {
        let path = self.path(v);
        // proportions along the path, leaf first
        let table: Vec<Vec<f64>> = path
            .iter()
            .rev()
            .map(|&n| {
                let counts = self.nodes[n].counts();
                let total: u32 = counts.iter().map(|&(_, k)| k).sum();
                let mut p = vec![0.0; n_classes];
                for &(c, k) in counts {
                    p[c as usize] = k as f64 / total.max(1) as f64;
                }
                p
            })
            .collect();
        let mut classes: Vec<usize> = (0..n_classes).collect();
        classes.sort_by(|&a, &b| {
            for level in &table {
                match level[b].total_cmp(&level[a]) {
                    std::cmp::Ordering::Equal => continue,
                    other => return other,
                }
            }
            a.cmp(&b)
        });
        classes.into_iter().map(|c| (c, table[0][c])).collect()
    }
}

/// Highest-gain feature that splits the samples into two non-empty parts; ties go to the
/// lower feature index. A zero-gain split is still taken so the tree grows to purity.
fn best_split(
    data: &Prepared<'_>,
    samples: &[u32],
    class_counts: &[usize],
    present: &mut [u32],
    present_total: &mut [u32],
    touched: &mut Vec<u32>,
) -> Option<u32> {
    let nc = data.n_classes;
    let n = samples.len();
    touched.clear();
    for &s in samples {
        let c = data.y[s as usize];
        for &f in data.x[s as usize].ones() {
            if present_total[f as usize] == 0 {
                touched.push(f);
            }
            present_total[f as usize] += 1;
            present[f as usize * nc + c] += 1;
        }
    }
    touched.sort_unstable();

    let parent = entropy(class_counts.iter().copied(), n);
    let mut best: Option<(u32, f64)> = None;
    for &f in touched.iter() {
        let fi = f as usize;
        let with = present_total[fi] as usize;
        if with == 0 || with == n {
            continue;
        }
        let row = &present[fi * nc..(fi + 1) * nc];
        let h_with = entropy(row.iter().map(|&k| k as usize), with);
        let h_without = entropy(class_counts.iter().zip(row).map(|(&t, &k)| t - k as usize), n - with);
        let gain = parent - (with as f64 / n as f64) * h_with - ((n - with) as f64 / n as f64) * h_without;
        if best.is_none_or(|(_, g)| gain > g + 1e-12) {
            best = Some((f, gain));
        }
    }
    for &f in touched.iter() {
        let fi = f as usize;
        present_total[fi] = 0;
        present[fi * nc..(fi + 1) * nc].fill(0);
    }
    best.map(|(f, _)| f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{fit, predict, ClassifierSpec, Family, Payload, TrainingData};

    fn tree(x: &[DocVector], y: &[String]) -> TreeModel {
        let data = TrainingData { vectors: x, labels: y, rv_fingerprint: "" };
        match fit(&ClassifierSpec::new(Family::Id3, 0), &data).unwrap().payload {
            Payload::Id3(t) => t,
            _ => unreachable!(),
        }
    }

    fn labels(ls: &[&str]) -> Vec<String> {
        ls.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_feature_is_the_root() {
        // feature 0 separates the classes; features 1 and 2 split 2:1 / 1:2.
        // hand computation: IG(f0) = 1 bit, IG(f1) = IG(f2) = 1 - H(1/3) = 0.082 bits
        let x = vec![
            DocVector::from_indices(3, [0, 1]),
            DocVector::from_indices(3, [0, 1, 2]),
            DocVector::from_indices(3, [0, 2]),
            DocVector::from_indices(3, [1]),
            DocVector::from_indices(3, [2]),
            DocVector::from_indices(3, []),
        ];
        let y = labels(&["a", "a", "a", "b", "b", "b"]);
        let t = tree(&x, &y);
        assert_eq!(t.root_feature(), Some(0));
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn xor_needs_zero_gain_split_and_still_fits() {
        let x = vec![
            DocVector::from_indices(2, []),
            DocVector::from_indices(2, [0]),
            DocVector::from_indices(2, [1]),
            DocVector::from_indices(2, [0, 1]),
        ];
        let y = labels(&["a", "b", "b", "a"]);
        let data = TrainingData { vectors: &x, labels: &y, rv_fingerprint: "" };
        let model = fit(&ClassifierSpec::new(Family::Id3, 0), &data).unwrap();
        for (v, l) in x.iter().zip(&y) {
            assert_eq!(&predict(&model, v).unwrap().best().category, l);
        }
    }

    #[test]
    fn conflicting_duplicates_become_a_mixed_leaf() {
        let x = vec![DocVector::from_indices(2, [1]); 3];
        let y = labels(&["a", "b", "b"]);
        let t = tree(&x, &y);
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.nodes[0].counts(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn unseen_classes_ranked_from_ancestors() {
        // root splits on f1 (gain 1.0 vs 0.81 for f0); the f1=0 branch {a, b} splits on f0.
        // the query's leaf only knows "a"; its parent knows "b" but not "c".
        let x = vec![
            DocVector::from_indices(2, [0]),
            DocVector::from_indices(2, [1]),
            DocVector::from_indices(2, [1]),
            DocVector::from_indices(2, []),
        ];
        let y = labels(&["a", "c", "c", "b"]);
        let data = TrainingData { vectors: &x, labels: &y, rv_fingerprint: "" };
        let model = fit(&ClassifierSpec::new(Family::Id3, 0), &data).unwrap();
        let p = predict(&model, &DocVector::from_indices(2, [0])).unwrap();
        let cats: Vec<&str> = p.ranking.iter().map(|r| r.category.as_str()).collect();
        assert_eq!(cats, vec!["a", "b", "c"]);
        assert_eq!(p.ranking[2].score, 0.0);
        assert_eq!(p.ranking[0].score, 1.0);
    }

    #[test]
    fn max_depth_caps_growth() {
        let x = vec![
            DocVector::from_indices(2, []),
            DocVector::from_indices(2, [0]),
            DocVector::from_indices(2, [1]),
            DocVector::from_indices(2, [0, 1]),
        ];
        let y = labels(&["a", "b", "b", "a"]);
        let data = TrainingData { vectors: &x, labels: &y, rv_fingerprint: "" };
        let spec = ClassifierSpec::new(Family::Id3, 0).with_param("max_depth", "1").unwrap();
        let Payload::Id3(t) = fit(&spec, &data).unwrap().payload else { unreachable!() };
        assert_eq!(t.depth(), 1);
    }
}
