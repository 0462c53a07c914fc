//! Single-hidden-layer perceptron: inputs → ReLU hidden → linear output.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{MinMax, SupervisedSet};
use crate::numcore::{gemv_acc, outer_acc, AdamConfig, AdamState, Matrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnParams {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for AnnParams {
    fn default() -> Self {
        AnnParams { hidden: 64, epochs: 200, batch: 32, lr: 0.001 }
    }
}

/// Weights are `[w1 (hidden × inputs), b1 (hidden), w2 (1 × hidden), b2 (1)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    pub tensors: Vec<Matrix>,
    /// Target min-max scale; predictions are mapped back through it.
    pub target: MinMax,
}

impl Mlp {
    pub fn init(inputs: usize, hidden: usize, target: MinMax, seed: u64) -> Self {
        let mut g = rng::seeded(seed);
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
            let a = 1.0 / (fan_in as f64).sqrt();
            Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| g.gen_range(-a..=a)).collect()).unwrap()
        };
        let w1 = uniform(hidden, inputs, inputs);
        let w2 = uniform(1, hidden, hidden);
        Mlp {
            inputs,
            hidden,
            tensors: vec![w1, Matrix::zeros(hidden, 1), w2, Matrix::zeros(1, 1)],
            target,
        }
    }

    /// Output in scaled target space.
    pub fn forward_scaled(&self, row: &[f64]) -> f64 {
        let mut z = self.tensors[1].as_slice().to_vec();
        gemv_acc(self.tensors[0].as_slice(), row, &mut z);
        let w2 = self.tensors[2].as_slice();
        self.tensors[3].as_slice()[0] + z.iter().zip(w2).map(|(&v, w)| v.max(0.0) * w).sum::<f64>()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.target.invert(self.forward_scaled(row))
    }

    /// Mean squared error over `rows` against scaled targets, and its
    /// gradient for every tensor.
    pub fn loss_and_grad(&self, x: &Matrix, rows: &[usize], y_scaled: &[f64]) -> (f64, Vec<Matrix>) {
        let mut grads: Vec<Matrix> = self.tensors.iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect();
        let scale = 1.0 / rows.len() as f64;
        let mut loss = 0.0;
        let w2 = self.tensors[2].as_slice();
        let mut z = vec![0.0; self.hidden];
        let mut dz = vec![0.0; self.hidden];
        for &r in rows {
            let xr = x.row(r);
            z.copy_from_slice(self.tensors[1].as_slice());
            gemv_acc(self.tensors[0].as_slice(), xr, &mut z);
            let out = self.tensors[3].as_slice()[0] + z.iter().zip(w2).map(|(&v, w)| v.max(0.0) * w).sum::<f64>();
            let err = out - y_scaled[r];
            loss += err * err * scale;
            let d_out = 2.0 * err * scale;
            grads[3].as_mut_slice()[0] += d_out;
            for (j, g) in grads[2].as_mut_slice().iter_mut().enumerate() {
                *g += d_out * z[j].max(0.0);
            }
            for j in 0..self.hidden {
                dz[j] = if z[j] > 0.0 { d_out * w2[j] } else { 0.0 };
            }
            outer_acc(&dz, xr, grads[0].as_mut_slice());
            for (g, d) in grads[1].as_mut_slice().iter_mut().zip(&dz) {
                *g += d;
            }
        }
        (loss, grads)
    }
}

pub fn fit_ann(data: &SupervisedSet, params: AnnParams, target: MinMax, seed: u64) -> Result<Mlp> {
    let n = data.len();
    if params.hidden == 0 || params.batch == 0 {
        return Err(Error::Hyperparameter("ann hidden and batch must be positive".into()));
    }
    if n < params.batch {
        return Err(Error::Size(format!("ann needs at least batch={} rows, got {n}", params.batch)));
    }
    let y_scaled: Vec<f64> = data.y.iter().map(|&v| target.scale(v)).collect();
    let mut net = Mlp::init(data.x.cols(), params.hidden, target, seed);
    let mut states: Vec<AdamState> =
        net.tensors.iter().map(|t| AdamState::new(t.len(), AdamConfig::with_lr(params.lr))).collect();
    let mut shuffle_rng = rng::seeded_stream(seed, 1);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..params.epochs {
        order.shuffle(&mut shuffle_rng);
        for (b, batch) in order.chunks(params.batch).enumerate() {
            let (loss, grads) = net.loss_and_grad(&data.x, batch, &y_scaled);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: Some(b) });
            }
            for ((t, g), st) in net.tensors.iter_mut().zip(&grads).zip(&mut states) {
                st.step(t.as_mut_slice(), g.as_slice())?;
            }
        }
        if net.tensors.iter().any(|t| !t.is_finite()) {
            return Err(Error::Divergence { epoch, batch: None });
        }
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{finite_diff_gradient, DEFAULT_FD_STEP};

    fn linear_data(n: usize) -> SupervisedSet {
        let mut g = rng::seeded(3);
        let x = Matrix::from_vec(n, 5, (0..n * 5).map(|_| g.gen_range(0.0..1.0)).collect()).unwrap();
        let y = (0..n).map(|r| 3.0 * x.get(r, 0) + 1.0).collect();
        SupervisedSet::new(x, y, 0).unwrap()
    }

    #[test]
    fn zero_epochs_is_initial_network() {
        let d = linear_data(64);
        let target = MinMax { min: 1.0, max: 4.0 };
        let p = AnnParams { epochs: 0, ..Default::default() };
        let a = fit_ann(&d, p, target, 5).unwrap();
        assert_eq!(a, Mlp::init(5, 64, target, 5));
        assert_eq!(a, fit_ann(&d, p, target, 5).unwrap());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = linear_data(12);
        let target = MinMax { min: 1.0, max: 4.0 };
        let y: Vec<f64> = d.y.iter().map(|&v| target.scale(v)).collect();
        let net = Mlp::init(5, 2, target, 8);
        let rows: Vec<usize> = (0..12).collect();
        let (_, grads) = net.loss_and_grad(&d.x, &rows, &y);
        for k in 0..net.tensors.len() {
            let fd = finite_diff_gradient(
                |p| {
                    let mut probe = net.clone();
                    probe.tensors[k] = p.clone();
                    probe.loss_and_grad(&d.x, &rows, &y).0
                },
                &net.tensors[k],
                DEFAULT_FD_STEP,
            )
            .unwrap();
            for (a, n) in grads[k].as_slice().iter().zip(fd.as_slice()) {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
                assert!(rel < 1e-4, "tensor {k}: {a} vs {n}");
            }
        }
    }

    #[test]
    fn learns_linear_target() {
        let d = linear_data(256);
        let target = MinMax { min: 1.0, max: 4.0 };
        let net = fit_ann(&d, AnnParams::default(), target, 42).unwrap();
        let mean = d.y.iter().sum::<f64>() / d.len() as f64;
        let var = d.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64;
        let mse = (0..d.len()).map(|r| (net.predict_row(d.x.row(r)) - d.y[r]).powi(2)).sum::<f64>() / d.len() as f64;
        assert!(mse < 0.01 * var, "mse {mse} var {var}");
    }

    #[test]
    fn too_few_rows() {
        let d = linear_data(10);
        assert!(matches!(fit_ann(&d, AnnParams::default(), MinMax { min: 0.0, max: 1.0 }, 1), Err(Error::Size(_))));
    }
}
