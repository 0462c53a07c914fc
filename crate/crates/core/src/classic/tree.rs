//! Greedy variance-reduction regression trees.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::numcore::Matrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Maximum depth; 0 means unlimited.
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: 8, min_leaf: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Flat tree; node 0 is the root. Points with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|r| self.predict_row(x.row(r))).collect()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// A chosen split and its reduction in squared error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Best variance-reduction split over `features` for the points in `idx`.
///
/// Thresholds are observed values; each side keeps at least `min_leaf`
/// points. Ties go to the lowest feature index, then the lowest threshold.
pub fn best_split(x: &Matrix, y: &[f64], idx: &[usize], features: &[usize], min_leaf: usize) -> Option<Split> {
    let n = idx.len();
    let min_leaf = min_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
    let sse: f64 = idx.iter().map(|&i| (y[i] - mean) * (y[i] - mean)).sum();
    if sse <= 0.0 {
        return None;
    }
    let min_gain = sse * 1e-12;

    let mut best: Option<Split> = None;
    let mut order: Vec<usize> = idx.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)));
        // With centered targets the total sum is zero and the gain of a split
        // reduces to S_L² n / (n_L n_R).
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += y[order[k]] - mean;
            let n_left = k + 1;
            let n_right = n - n_left;
            if n_left < min_leaf {
                continue;
            }
            if n_right < min_leaf {
                break;
            }
            let here = x.get(order[k], f);
            if here == x.get(order[k + 1], f) {
                continue;
            }
            let gain = left_sum * left_sum * n as f64 / (n_left as f64 * n_right as f64);
            if gain > min_gain && best.map_or(true, |b| gain > b.gain) {
                best = Some(Split { feature: f, threshold: here, gain });
            }
        }
    }
    best
}

/// Per-split feature subsampling used by random forests.
pub struct FeatureSampler<'a> {
    pub rng: &'a mut Rng,
    pub m_features: usize,
}

impl FeatureSampler<'_> {
    fn draw(&mut self, p: usize) -> Vec<usize> {
        let mut all: Vec<usize> = (0..p).collect();
        let m = self.m_features.min(p);
        for i in 0..m {
            let j = self.rng.gen_range(i..p);
            all.swap(i, j);
        }
        let mut chosen = all[..m].to_vec();
        chosen.sort_unstable();
        chosen
    }
}

pub fn fit_tree(x: &Matrix, y: &[f64], params: TreeParams, mut sampler: Option<FeatureSampler<'_>>) -> Tree {
    let mut nodes = Vec::new();
    let idx: Vec<usize> = (0..x.rows()).collect();
    grow(x, y, &idx, 0, params, &mut sampler, &mut nodes);
    Tree { nodes }
}

fn grow(
    x: &Matrix,
    y: &[f64],
    idx: &[usize],
    depth: usize,
    params: TreeParams,
    sampler: &mut Option<FeatureSampler<'_>>,
    nodes: &mut Vec<Node>,
) -> usize {
    let at = nodes.len();
    let value = if idx.is_empty() {
        0.0
    } else {
        idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
    };
    nodes.push(Node::Leaf { value });
    if params.max_depth != 0 && depth >= params.max_depth {
        return at;
    }
    let features: Vec<usize> = match sampler {
        Some(s) => s.draw(x.cols()),
        None => (0..x.cols()).collect(),
    };
    let Some(split) = best_split(x, y, idx, &features, params.min_leaf) else {
        return at;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x.get(i, split.feature) <= split.threshold);
    let left = grow(x, y, &l, depth + 1, params, sampler, nodes);
    let right = grow(x, y, &r, depth + 1, params, sampler, nodes);
    nodes[at] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
    at
}
