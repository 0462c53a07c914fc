//! Linear ε-insensitive support vector regression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{MinMax, SupervisedSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrParams {
    pub epsilon: f64,
    pub c: f64,
    pub epochs: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams { epsilon: 0.01, c: 1.0, epochs: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvr {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub target: MinMax,
}

impl LinearSvr {
    pub fn predict_scaled(&self, row: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.target.invert(self.predict_scaled(row))
    }
}

/// `½‖w‖² + c Σ max(0, |y - w·x - b| - ε)` over scaled targets.
pub fn svr_objective(data: &SupervisedSet, y_scaled: &[f64], weights: &[f64], bias: f64, p: SvrParams) -> f64 {
    let reg = 0.5 * weights.iter().map(|w| w * w).sum::<f64>();
    reg + p.c * hinge_sum(data, y_scaled, weights, bias, p.epsilon)
}

pub fn hinge_sum(data: &SupervisedSet, y_scaled: &[f64], weights: &[f64], bias: f64, epsilon: f64) -> f64 {
    (0..data.len())
        .map(|r| {
            let pred = bias + weights.iter().zip(data.x.row(r)).map(|(w, x)| w * x).sum::<f64>();
            ((y_scaled[r] - pred).abs() - epsilon).max(0.0)
        })
        .sum()
}

/// Full-batch subgradient descent with step `η₀ / (t + 1)`, where
/// `η₀ = 1 / (1 + c·n)` normalizes the hinge term's subgradient. The best
/// iterate seen is returned, since subgradient steps are not monotone.
pub fn fit_svr(data: &SupervisedSet, params: SvrParams, target: MinMax) -> Result<LinearSvr> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Size(format!("svr needs at least 2 rows, got {n}")));
    }
    if params.c < 0.0 || params.epsilon < 0.0 {
        return Err(Error::Hyperparameter("svr c and epsilon must be non-negative".into()));
    }
    let p = data.x.cols();
    let y: Vec<f64> = data.y.iter().map(|&v| target.scale(v)).collect();
    let eta0 = 1.0 / (1.0 + params.c * n as f64);

    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut best = (svr_objective(data, &y, &w, b, params), w.clone(), b);
    let mut gw = vec![0.0; p];
    for t in 0..params.epochs {
        gw.copy_from_slice(&w);
        let mut gb = 0.0;
        for r in 0..n {
            let row = data.x.row(r);
            let resid = y[r] - b - w.iter().zip(row).map(|(a, x)| a * x).sum::<f64>();
            if resid.abs() > params.epsilon {
                let s = params.c * resid.signum();
                for (g, x) in gw.iter_mut().zip(row) {
                    *g -= s * x;
                }
                gb -= s;
            }
        }
        let eta = eta0 / (t as f64 + 1.0);
        for (a, g) in w.iter_mut().zip(&gw) {
            *a -= eta * g;
        }
        b -= eta * gb;
        let obj = svr_objective(data, &y, &w, b, params);
        if !obj.is_finite() {
            return Err(Error::Divergence { epoch: t, batch: None });
        }
        if obj < best.0 {
            best = (obj, w.clone(), b);
        }
    }
    Ok(LinearSvr { weights: best.1, bias: best.2, target })
}
