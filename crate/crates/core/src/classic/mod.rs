//! The eight classical regressors behind one fit/predict contract.

pub mod ann;
pub mod ensemble;
pub mod mars;
pub mod ols;
pub mod svr;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{MinMax, ScalerParams, SupervisedSet};
use crate::numcore::Matrix;

use ann::{AnnParams, Mlp};
use ensemble::{BoostParams, Boosted, Forest, ForestParams, Resample};
use mars::Mars;
use ols::Ols;
use svr::{LinearSvr, SvrParams};
use tree::{Tree, TreeParams};

/// Version tag written into serialized models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Ols,
    Mars,
    Cart,
    Bagging,
    Boosting,
    RandomForest,
    Ann,
    Svr,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Ols,
        Family::Mars,
        Family::Cart,
        Family::Bagging,
        Family::Boosting,
        Family::RandomForest,
        Family::Ann,
        Family::Svr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Ols => "ols",
            Family::Mars => "mars",
            Family::Cart => "cart",
            Family::Bagging => "bagging",
            Family::Boosting => "boosting",
            Family::RandomForest => "random_forest",
            Family::Ann => "ann",
            Family::Svr => "svr",
        }
    }

    /// Accepted hyperparameters and their defaults.
    pub fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            Family::Ols => &[],
            Family::Mars => &[("max_terms", 21.0)],
            Family::Cart => &[("max_depth", 8.0), ("min_leaf", 5.0)],
            Family::Bagging => &[("n_trees", 100.0), ("max_depth", 8.0), ("min_leaf", 5.0)],
            Family::Boosting => &[("n_rounds", 100.0), ("shrinkage", 0.1), ("tree_depth", 3.0), ("min_leaf", 1.0)],
            Family::RandomForest => {
                &[("n_trees", 100.0), ("m_features", 2.0), ("max_depth", 8.0), ("min_leaf", 5.0)]
            }
            Family::Ann => &[("hidden", 64.0), ("epochs", 200.0), ("batch", 32.0), ("lr", 0.001)],
            Family::Svr => &[("epsilon", 0.01), ("c", 1.0), ("epochs", 500.0)],
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Family::Bagging | Family::RandomForest | Family::Ann)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rf" => Ok(Family::RandomForest),
            other => Family::ALL
                .into_iter()
                .find(|f| f.name() == other)
                .ok_or_else(|| Error::Config(format!("unknown model family `{other}`"))),
        }
    }
}

/// Declarative model: family, overridden hyperparameters and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub hyperparameters: BTreeMap<String, f64>,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        ModelSpec { family, hyperparameters: BTreeMap::new(), seed }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.hyperparameters.insert(key.to_string(), value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let known = self.family.defaults();
        for (k, v) in &self.hyperparameters {
            if !known.iter().any(|(name, _)| name == k) {
                return Err(Error::Hyperparameter(format!("`{k}` is not a {} hyperparameter", self.family)));
            }
            if !v.is_finite() {
                return Err(Error::Hyperparameter(format!("`{k}` must be finite")));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> f64 {
        self.hyperparameters.get(key).copied().unwrap_or_else(|| {
            self.family
                .defaults()
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .unwrap_or_else(|| panic!("{key} is not a {} hyperparameter", self.family))
        })
    }

    fn count(&self, key: &str) -> Result<usize> {
        let v = self.get(key);
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::Hyperparameter(format!("`{key}` must be a non-negative integer, got {v}")));
        }
        Ok(v as usize)
    }

    /// Fully resolved hyperparameter map (defaults merged with overrides).
    pub fn resolved(&self) -> BTreeMap<String, f64> {
        self.family.defaults().iter().map(|(k, _)| (k.to_string(), self.get(k))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Fitted {
    Ols(Ols),
    Mars(Mars),
    Cart(Tree),
    Bagging(Forest),
    Boosting(Boosted),
    RandomForest(Forest),
    Ann(Mlp),
    Svr(LinearSvr),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub hyperparameters: BTreeMap<String, f64>,
    pub n_features: usize,
    pub parameters: Fitted,
    pub scaler: Option<ScalerParams>,
}

impl TrainedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(text)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!("unsupported model format version {}", m.format_version)));
        }
        Ok(m)
    }
}

fn ensure_cols(x: &Matrix, expected: usize) -> Result<()> {
    if x.cols() != expected {
        return Err(Error::shape(format!("model expects {expected} columns, got {}", x.cols())));
    }
    Ok(())
}

/// Fits `spec` on `data`.
///
/// Families that work in scaled target space (ANN, SVR) use the open
/// extrema of `scaler`, or the observed range of `y` when no scaler is
/// given.
pub fn fit(spec: &ModelSpec, data: &SupervisedSet, scaler: Option<&ScalerParams>) -> Result<TrainedModel> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::Size("no training rows".into()));
    }
    let target = match scaler {
        Some(s) => s.open,
        None => {
            let min = data.y.iter().copied().fold(f64::INFINITY, f64::min);
            let max = data.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max > min {
                MinMax { min, max }
            } else {
                MinMax { min, max: min + 1.0 }
            }
        }
    };
    let tree_params = || -> Result<TreeParams> {
        Ok(TreeParams { max_depth: spec.count("max_depth")?, min_leaf: spec.count("min_leaf")? })
    };
    let seed = spec.seed;
    let parameters = match spec.family {
        Family::Ols => Fitted::Ols(ols::fit_ols(data)?),
        Family::Mars => Fitted::Mars(mars::fit_mars(data, spec.count("max_terms")?)?.model),
        Family::Cart => Fitted::Cart(tree::fit_tree(&data.x, &data.y, tree_params()?, None)),
        Family::Bagging => Fitted::Bagging(ensemble::fit_forest(
            data,
            ForestParams { n_trees: positive(spec, "n_trees")?, tree: tree_params()?, m_features: None, resample: Resample::Bootstrap },
            seed,
        )),
        Family::RandomForest => {
            let m = spec.count("m_features")?;
            if m == 0 || m > data.x.cols() {
                return Err(Error::Hyperparameter(format!("m_features must lie in 1..={}, got {m}", data.x.cols())));
            }
            Fitted::RandomForest(ensemble::fit_forest(
                data,
                ForestParams { n_trees: positive(spec, "n_trees")?, tree: tree_params()?, m_features: Some(m), resample: Resample::Bootstrap },
                seed,
            ))
        }
        Family::Boosting => {
            let params = BoostParams {
                n_rounds: spec.count("n_rounds")?,
                shrinkage: spec.get("shrinkage"),
                tree: TreeParams { max_depth: spec.count("tree_depth")?, min_leaf: spec.count("min_leaf")? },
            };
            Fitted::Boosting(ensemble::fit_boosting(data, params).0)
        }
        Family::Ann => {
            let params = AnnParams {
                hidden: positive(spec, "hidden")?,
                epochs: spec.count("epochs")?,
                batch: positive(spec, "batch")?,
                lr: spec.get("lr"),
            };
            Fitted::Ann(ann::fit_ann(data, params, target, seed)?)
        }
        Family::Svr => {
            let params = SvrParams { epsilon: spec.get("epsilon"), c: spec.get("c"), epochs: spec.count("epochs")? };
            Fitted::Svr(svr::fit_svr(data, params, target)?)
        }
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        hyperparameters: spec.resolved(),
        n_features: data.x.cols(),
        parameters,
        scaler: scaler.copied(),
    })
}

fn positive(spec: &ModelSpec, key: &str) -> Result<usize> {
    match spec.count(key)? {
        0 => Err(Error::Hyperparameter(format!("`{key}` must be at least 1"))),
        v => Ok(v),
    }
}

/// Predictions in index points.
pub fn predict(model: &TrainedModel, x: &Matrix) -> Result<Vec<f64>> {
    ensure_cols(x, model.n_features)?;
    let row_fn: Box<dyn Fn(&[f64]) -> f64 + '_> = match &model.parameters {
        Fitted::Ols(m) => Box::new(|r| m.predict_row(r)),
        Fitted::Mars(m) => Box::new(|r| m.predict_row(r)),
        Fitted::Cart(t) => Box::new(|r| t.predict_row(r)),
        Fitted::Bagging(f) | Fitted::RandomForest(f) => Box::new(|r| f.predict_row(r)),
        Fitted::Boosting(b) => Box::new(|r| b.predict_row(r)),
        Fitted::Ann(m) => Box::new(|r| m.predict_row(r)),
        Fitted::Svr(m) => Box::new(|r| m.predict_row(r)),
    };
    Ok((0..x.rows()).map(|r| row_fn(x.row(r))).collect())
}
