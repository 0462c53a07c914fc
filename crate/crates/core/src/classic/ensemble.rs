//! Tree ensembles: bootstrap aggregation, random forests and least-squares
//! gradient boosting.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, FeatureSampler, Tree, TreeParams};
use crate::features::SupervisedSet;
use crate::numcore::Matrix;
use crate::rng;

/// How each member's training sample is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resample {
    Bootstrap,
    /// Every member sees the training set unchanged. Test hook.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub members: Vec<Tree>,
}

impl Forest {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.members.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.members.len() as f64
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|r| self.predict_row(x.row(r))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    /// `None` considers every feature at every split (bagging).
    pub m_features: Option<usize>,
    pub resample: Resample,
}

/// Member `k` draws from stream `k` of `seed`, so parallel fitting equals
/// sequential fitting.
pub fn fit_forest(data: &SupervisedSet, params: ForestParams, seed: u64) -> Forest {
    let n = data.len();
    let members = (0..params.n_trees)
        .into_par_iter()
        .map(|k| {
            let mut g = rng::seeded_stream(seed, k as u64);
            let sample = match params.resample {
                Resample::Bootstrap => {
                    let idx: Vec<usize> = (0..n).map(|_| g.gen_range(0..n)).collect();
                    data.select(&idx)
                }
                Resample::Identity => data.clone(),
            };
            let sampler = params.m_features.map(|m| FeatureSampler { rng: &mut g, m_features: m });
            fit_tree(&sample.x, &sample.y, params.tree, sampler)
        })
        .collect();
    Forest { members }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boosted {
    pub init: f64,
    pub shrinkage: f64,
    pub trees: Vec<Tree>,
}

impl Boosted {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.init + self.trees.iter().map(|t| self.shrinkage * t.predict_row(row)).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub shrinkage: f64,
    pub tree: TreeParams,
}

/// Stagewise least-squares boosting. Also returns training MSE after each
/// stage, starting with the constant model.
pub fn fit_boosting(data: &SupervisedSet, params: BoostParams) -> (Boosted, Vec<f64>) {
    let n = data.len() as f64;
    let init = data.y.iter().sum::<f64>() / n;
    let mut fitted = vec![init; data.len()];
    let mse = |f: &[f64]| f.iter().zip(&data.y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let mut history = vec![mse(&fitted)];
    let mut trees = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        let resid: Vec<f64> = data.y.iter().zip(&fitted).map(|(y, f)| y - f).collect();
        let tree = fit_tree(&data.x, &resid, params.tree, None);
        for (r, f) in fitted.iter_mut().enumerate() {
            *f += params.shrinkage * tree.predict_row(data.x.row(r));
        }
        history.push(mse(&fitted));
        trees.push(tree);
    }
    (Boosted { init, shrinkage: params.shrinkage, trees }, history)
}
