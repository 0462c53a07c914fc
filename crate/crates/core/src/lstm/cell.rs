use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{gemv_acc, sigmoid, Activation, Matrix};
use crate::rng::Rng;

/// Gate blocks are stacked in the order input, forget, cell candidate,
/// output: `w` is `(4·units × input_dim)`, `u` is `(4·units × units)` and
/// `b` is `(4·units × 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    pub units: usize,
    pub input_dim: usize,
    pub w: Matrix,
    pub u: Matrix,
    pub b: Matrix,
}

pub(crate) const GATE_INPUT: usize = 0;
pub(crate) const GATE_FORGET: usize = 1;
pub(crate) const GATE_CANDIDATE: usize = 2;
pub(crate) const GATE_OUTPUT: usize = 3;

impl LstmWeights {
    pub fn zeros(input_dim: usize, units: usize) -> Self {
        LstmWeights {
            units,
            input_dim,
            w: Matrix::zeros(4 * units, input_dim),
            u: Matrix::zeros(4 * units, units),
            b: Matrix::zeros(4 * units, 1),
        }
    }

    /// Uniform in `±1/√fan_in` for `w` and `u`; zero biases.
    pub fn init(input_dim: usize, units: usize, rng: &mut Rng) -> Self {
        let mut weights = Self::zeros(input_dim, units);
        let a = 1.0 / (input_dim as f64).sqrt();
        weights.w.as_mut_slice().iter_mut().for_each(|v| *v = rng.gen_range(-a..=a));
        let a = 1.0 / (units as f64).sqrt();
        weights.u.as_mut_slice().iter_mut().for_each(|v| *v = rng.gen_range(-a..=a));
        weights
    }

    /// Bias block of one gate.
    pub fn gate_bias_mut(&mut self, gate: usize) -> &mut [f64] {
        let u = self.units;
        &mut self.b.as_mut_slice()[gate * u..(gate + 1) * u]
    }

    pub(crate) fn check(&self) -> Result<()> {
        let (u, d) = (self.units, self.input_dim);
        if self.w.shape() != (4 * u, d) || self.u.shape() != (4 * u, u) || self.b.shape() != (4 * u, 1) {
            return Err(Error::shape(format!("inconsistent LSTM weights for units={u}, input_dim={d}")));
        }
        Ok(())
    }

    pub(crate) fn tensors(&self) -> [&Matrix; 3] {
        [&self.w, &self.u, &self.b]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut Matrix; 3] {
        [&mut self.w, &mut self.u, &mut self.b]
    }
}

/// Post-activation gate values of one step, laid out like the bias.
pub(crate) struct StepOut<'a> {
    pub gates: &'a mut [f64],
    pub pre_candidate: &'a mut [f64],
    pub c: &'a mut [f64],
    pub act_c: &'a mut [f64],
    pub h: &'a mut [f64],
}

/// One recurrence step writing into caller-owned buffers.
pub(crate) fn step_into(
    weights: &LstmWeights,
    act: Activation,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    out: StepOut<'_>,
) {
    let u = weights.units;
    let z = out.gates;
    z.copy_from_slice(weights.b.as_slice());
    gemv_acc(weights.w.as_slice(), x, z);
    gemv_acc(weights.u.as_slice(), h_prev, z);
    out.pre_candidate.copy_from_slice(&z[GATE_CANDIDATE * u..(GATE_CANDIDATE + 1) * u]);
    for j in 0..u {
        let i = sigmoid(z[GATE_INPUT * u + j]);
        let f = sigmoid(z[GATE_FORGET * u + j]);
        let g = act.apply(z[GATE_CANDIDATE * u + j]);
        let o = sigmoid(z[GATE_OUTPUT * u + j]);
        z[GATE_INPUT * u + j] = i;
        z[GATE_FORGET * u + j] = f;
        z[GATE_CANDIDATE * u + j] = g;
        z[GATE_OUTPUT * u + j] = o;
        let c = f * c_prev[j] + i * g;
        out.c[j] = c;
        out.act_c[j] = act.apply(c);
        out.h[j] = o * out.act_c[j];
    }
}

/// `i, f, o = σ(W x + U h + b)`, `g = act(·)`, `c = f⊙c_prev + i⊙g`,
/// `h = o⊙act(c)`. Returns `(h, c)`.
pub fn lstm_cell_step(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    weights: &LstmWeights,
    act: Activation,
) -> Result<(Vec<f64>, Vec<f64>)> {
    weights.check()?;
    let u = weights.units;
    if x.len() != weights.input_dim || h_prev.len() != u || c_prev.len() != u {
        return Err(Error::shape(format!(
            "cell step: x {} (want {}), h {} / c {} (want {u})",
            x.len(),
            weights.input_dim,
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut gates = vec![0.0; 4 * u];
    let mut pre = vec![0.0; u];
    let mut c = vec![0.0; u];
    let mut act_c = vec![0.0; u];
    let mut h = vec![0.0; u];
    step_into(
        weights,
        act,
        x,
        h_prev,
        c_prev,
        StepOut { gates: &mut gates, pre_candidate: &mut pre, c: &mut c, act_c: &mut act_c, h: &mut h },
    );
    Ok((h, c))
}
