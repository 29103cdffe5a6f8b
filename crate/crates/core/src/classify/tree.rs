use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::NUM_SPECIES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// Class frequencies of the training samples that reached the leaf,
    /// indexed by species slot.
    Leaf { freq: [f64; NUM_SPECIES] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_features: usize,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
}

impl DecisionTree {
    pub fn leaf_of(&self, x: &[f64]) -> &[f64; NUM_SPECIES] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { freq } => return freq,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + go(nodes, *left as usize).max(go(nodes, *right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }

    /// Grows a CART tree on `samples` (indices into `x`, repeats allowed).
    pub(crate) fn fit<R: Rng>(
        x: &[Vec<f64>],
        y: &[u8],
        samples: Vec<u32>,
        params: TreeParams,
        rng: &mut R,
    ) -> Self {
        let n_features = x.first().map_or(0, Vec::len);
        let mut tree = DecisionTree { nodes: Vec::new() };
        let mut builder = Builder {
            x,
            y,
            params,
            n_features,
            order: (0..n_features).collect(),
            scratch: Vec::new(),
        };
        tree.nodes.push(Node::Leaf {
            freq: [0.0; NUM_SPECIES],
        });
        // Explicit stack of (node slot, samples, depth).
        let mut stack = vec![(0usize, samples, 0usize)];
        while let Some((slot, idx, depth)) = stack.pop() {
            let counts = class_counts(y, &idx);
            let split = if builder.should_split(&counts, idx.len(), depth) {
                builder.best_split(&idx, &counts, rng)
            } else {
                None
            };
            match split {
                None => tree.nodes[slot] = Node::Leaf { freq: freq(&counts) },
                Some((feature, threshold)) => {
                    let (l, r): (Vec<u32>, Vec<u32>) = idx
                        .into_iter()
                        .partition(|&i| x[i as usize][feature] <= threshold);
                    let left = tree.nodes.len();
                    tree.nodes.push(Node::Leaf {
                        freq: [0.0; NUM_SPECIES],
                    });
                    tree.nodes.push(Node::Leaf {
                        freq: [0.0; NUM_SPECIES],
                    });
                    tree.nodes[slot] = Node::Split {
                        feature: feature as u32,
                        threshold,
                        left: left as u32,
                        right: left as u32 + 1,
                    };
                    stack.push((left + 1, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        tree
    }
}

fn class_counts(y: &[u8], idx: &[u32]) -> [usize; NUM_SPECIES] {
    let mut c = [0usize; NUM_SPECIES];
    for &i in idx {
        c[y[i as usize] as usize] += 1;
    }
    c
}

fn freq(counts: &[usize; NUM_SPECIES]) -> [f64; NUM_SPECIES] {
    let n: usize = counts.iter().sum();
    let mut f = [0.0; NUM_SPECIES];
    if n > 0 {
        for k in 0..NUM_SPECIES {
            f[k] = counts[k] as f64 / n as f64;
        }
    }
    f
}

fn gini_sum(counts: &[usize; NUM_SPECIES], n: usize) -> f64 {
    // n * gini = n - sum(c^2) / n
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - sq / n as f64
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    params: TreeParams,
    n_features: usize,
    order: Vec<usize>,
    scratch: Vec<(f64, u8)>,
}

impl Builder<'_> {
    fn should_split(&self, counts: &[usize; NUM_SPECIES], n: usize, depth: usize) -> bool {
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        !pure
            && n >= 2 * self.params.min_samples_leaf
            && self.params.max_depth.is_none_or(|d| depth < d)
    }

    /// Best Gini split over `max_features` randomly drawn features. If none of
    /// them can split the node, further features are tried in the drawn order
    /// until one can. Ties go to the lowest feature index, then the lowest
    /// threshold.
    fn best_split<R: Rng>(
        &mut self,
        idx: &[u32],
        counts: &[usize; NUM_SPECIES],
        rng: &mut R,
    ) -> Option<(usize, f64)> {
        self.order.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut tried = 0;
        for k in 0..self.n_features {
            if tried >= self.params.max_features && best.is_some() {
                break;
            }
            let f = self.order[k];
            tried += 1;
            if let Some((score, thr)) = self.eval_feature(f, idx, counts) {
                let better = match best {
                    None => true,
                    Some((bs, bf, bt)) => {
                        score < bs || (score == bs && (f < bf || (f == bf && thr < bt)))
                    }
                };
                if better {
                    best = Some((score, f, thr));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    /// Lowest weighted child impurity over thresholds of feature `f`.
    fn eval_feature(
        &mut self,
        f: usize,
        idx: &[u32],
        total: &[usize; NUM_SPECIES],
    ) -> Option<(f64, f64)> {
        let s = &mut self.scratch;
        s.clear();
        s.extend(idx.iter().map(|&i| (self.x[i as usize][f], self.y[i as usize])));
        s.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let n = s.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut left = [0usize; NUM_SPECIES];
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            left[s[i].1 as usize] += 1;
            let nl = i + 1;
            if s[i].0 == s[i + 1].0 || nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let mut right = *total;
            for k in 0..NUM_SPECIES {
                right[k] -= left[k];
            }
            let score = gini_sum(&left, nl) + gini_sum(&right, n - nl);
            if best.is_none_or(|(b, _)| score < b) {
                let (a, b) = (s[i].0, s[i + 1].0);
                let mut thr = a + (b - a) / 2.0;
                if thr >= b || !thr.is_finite() {
                    thr = a;
                }
                best = Some((score, thr));
            }
        }
        best
    }
}
