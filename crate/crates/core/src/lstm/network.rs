use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::cell::{step_into, LstmWeights, StepOut, GATE_CANDIDATE, GATE_FORGET, GATE_INPUT, GATE_OUTPUT};
use super::{Layer, LstmArchitecture};
use crate::error::{Error, Result};
use crate::numcore::{gemv_acc, gemv_t_acc, outer_acc, Activation, Matrix};
use crate::rng::{self, Rng};
use crate::HORIZON;

/// `w` is `(units × input_dim)`, `b` is `(units × 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseWeights {
    pub w: Matrix,
    pub b: Matrix,
}

impl DenseWeights {
    fn zeros(input_dim: usize, units: usize) -> Self {
        DenseWeights { w: Matrix::zeros(units, input_dim), b: Matrix::zeros(units, 1) }
    }

    fn init(input_dim: usize, units: usize, rng: &mut Rng) -> Self {
        let mut d = Self::zeros(input_dim, units);
        let a = 1.0 / (input_dim as f64).sqrt();
        d.w.as_mut_slice().iter_mut().for_each(|v| *v = rng.gen_range(-a..=a));
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerParams {
    Lstm(LstmWeights),
    Repeat,
    Dense(DenseWeights),
}

impl LayerParams {
    fn tensors(&self) -> Vec<&Matrix> {
        match self {
            LayerParams::Lstm(w) => w.tensors().to_vec(),
            LayerParams::Repeat => vec![],
            LayerParams::Dense(d) => vec![&d.w, &d.b],
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            LayerParams::Lstm(w) => w.tensors_mut().into_iter().collect(),
            LayerParams::Repeat => vec![],
            LayerParams::Dense(d) => vec![&mut d.w, &mut d.b],
        }
    }
}

/// Parameters of a full layer stack, tied to its architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub arch: LstmArchitecture,
    pub layers: Vec<LayerParams>,
}

/// Gradient buffers shaped like a [`Network`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    pub fn tensors(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(LayerParams::tensors).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(LayerParams::tensors_mut).collect()
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.as_mut_slice().iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|t| t.as_slice().iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

impl Network {
    fn build(arch: &LstmArchitecture, mut make: impl FnMut(&Layer, usize) -> LayerParams) -> Result<Network> {
        let shapes = arch.layer_shapes()?;
        let mut input_dim = arch.input_features;
        let mut layers = Vec::with_capacity(arch.layers.len());
        for (layer, shape) in arch.layers.iter().zip(&shapes) {
            layers.push(make(layer, input_dim));
            input_dim = shape.1;
        }
        Ok(Network { arch: arch.clone(), layers })
    }

    pub fn zeros(arch: &LstmArchitecture) -> Result<Network> {
        Self::build(arch, |layer, d| match *layer {
            Layer::Lstm { units, .. } => LayerParams::Lstm(LstmWeights::zeros(d, units)),
            Layer::Repeat { .. } => LayerParams::Repeat,
            Layer::Dense { units, .. } | Layer::TimeDistributed { units, .. } => {
                LayerParams::Dense(DenseWeights::zeros(d, units))
            }
        })
    }

    /// Seeded uniform `±1/√fan_in` weights, zero biases.
    pub fn init(arch: &LstmArchitecture, seed: u64) -> Result<Network> {
        let mut g = rng::seeded(seed);
        Self::build(arch, |layer, d| match *layer {
            Layer::Lstm { units, .. } => LayerParams::Lstm(LstmWeights::init(d, units, &mut g)),
            Layer::Repeat { .. } => LayerParams::Repeat,
            Layer::Dense { units, .. } | Layer::TimeDistributed { units, .. } => {
                LayerParams::Dense(DenseWeights::init(d, units, &mut g))
            }
        })
    }

    pub fn zero_grads(&self) -> Gradients {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                LayerParams::Lstm(w) => LayerParams::Lstm(LstmWeights::zeros(w.input_dim, w.units)),
                LayerParams::Repeat => LayerParams::Repeat,
                LayerParams::Dense(d) => LayerParams::Dense(DenseWeights::zeros(d.w.cols(), d.w.rows())),
            })
            .collect();
        Gradients { layers }
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(LayerParams::tensors).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(LayerParams::tensors_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|t| t.as_slice().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(format!("{} values for {} parameters", flat.len(), self.param_count())));
        }
        let mut at = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.as_mut_slice().copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Order-sensitive FNV-1a hash over the parameter bit patterns.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.flat_params() {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    fn check_window(&self, window: &Matrix) -> Result<()> {
        let want = (self.arch.input_steps, self.arch.input_features);
        if window.shape() != want {
            return Err(Error::shape(format!("{} expects a {want:?} window, got {:?}", self.arch.id, window.shape())));
        }
        Ok(())
    }
}

enum Cache {
    Lstm {
        inputs: Matrix,
        gates: Vec<f64>,
        pre_candidate: Vec<f64>,
        c: Vec<f64>,
        act_c: Vec<f64>,
        h: Vec<f64>,
    },
    Repeat,
    Dense {
        inputs: Matrix,
        pre: Matrix,
        out: Matrix,
    },
}

fn lstm_forward(weights: &LstmWeights, act: Activation, input: &Matrix, return_sequences: bool) -> (Matrix, Cache) {
    let steps = input.rows();
    let u = weights.units;
    let mut gates = vec![0.0; steps * 4 * u];
    let mut pre_candidate = vec![0.0; steps * u];
    let mut c = vec![0.0; steps * u];
    let mut act_c = vec![0.0; steps * u];
    let mut h = vec![0.0; steps * u];
    let zeros = vec![0.0; u];
    for t in 0..steps {
        let (h_done, h_rest) = h.split_at_mut(t * u);
        let (c_done, c_rest) = c.split_at_mut(t * u);
        let h_prev = if t == 0 { &zeros[..] } else { &h_done[(t - 1) * u..] };
        let c_prev = if t == 0 { &zeros[..] } else { &c_done[(t - 1) * u..] };
        step_into(
            weights,
            act,
            input.row(t),
            h_prev,
            c_prev,
            StepOut {
                gates: &mut gates[t * 4 * u..(t + 1) * 4 * u],
                pre_candidate: &mut pre_candidate[t * u..(t + 1) * u],
                c: &mut c_rest[..u],
                act_c: &mut act_c[t * u..(t + 1) * u],
                h: &mut h_rest[..u],
            },
        );
    }
    let output = if return_sequences {
        Matrix::from_vec(steps, u, h.clone()).unwrap()
    } else {
        Matrix::from_vec(1, u, h[(steps - 1) * u..].to_vec()).unwrap()
    };
    (output, Cache::Lstm { inputs: input.clone(), gates, pre_candidate, c, act_c, h })
}

#[allow(clippy::too_many_arguments)]
fn lstm_backward(
    weights: &LstmWeights,
    grads: &mut LstmWeights,
    act: Activation,
    cache: &Cache,
    d_out: &Matrix,
    return_sequences: bool,
    need_input_grad: bool,
) -> Matrix {
    let Cache::Lstm { inputs, gates, pre_candidate, c, act_c, h } = cache else {
        unreachable!("cache kind follows layer kind")
    };
    let steps = inputs.rows();
    let d = inputs.cols();
    let u = weights.units;
    let mut d_input = Matrix::zeros(if need_input_grad { steps } else { 0 }, d);
    let mut dh_next = vec![0.0; u];
    let mut dc_next = vec![0.0; u];
    let mut dz = vec![0.0; 4 * u];
    let zeros = vec![0.0; u];
    for t in (0..steps).rev() {
        let g = &gates[t * 4 * u..(t + 1) * 4 * u];
        let c_prev = if t == 0 { &zeros[..] } else { &c[(t - 1) * u..t * u] };
        let h_prev = if t == 0 { &zeros[..] } else { &h[(t - 1) * u..t * u] };
        let upstream: Option<&[f64]> = if return_sequences {
            Some(d_out.row(t))
        } else if t == steps - 1 {
            Some(d_out.row(0))
        } else {
            None
        };
        for j in 0..u {
            let dh = dh_next[j] + upstream.map_or(0.0, |r| r[j]);
            let i = g[GATE_INPUT * u + j];
            let f = g[GATE_FORGET * u + j];
            let cand = g[GATE_CANDIDATE * u + j];
            let o = g[GATE_OUTPUT * u + j];
            let ac = act_c[t * u + j];
            let dc = dc_next[j] + dh * o * act.derivative(c[t * u + j], ac);
            dz[GATE_INPUT * u + j] = dc * cand * i * (1.0 - i);
            dz[GATE_FORGET * u + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[GATE_CANDIDATE * u + j] = dc * i * act.derivative(pre_candidate[t * u + j], cand);
            dz[GATE_OUTPUT * u + j] = dh * ac * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        outer_acc(&dz, inputs.row(t), grads.w.as_mut_slice());
        outer_acc(&dz, h_prev, grads.u.as_mut_slice());
        for (b, v) in grads.b.as_mut_slice().iter_mut().zip(&dz) {
            *b += v;
        }
        if need_input_grad {
            gemv_t_acc(weights.w.as_slice(), &dz, d_input.row_mut(t));
        }
        dh_next.fill(0.0);
        if t > 0 {
            gemv_t_acc(weights.u.as_slice(), &dz, &mut dh_next);
        }
    }
    d_input
}

fn dense_forward(weights: &DenseWeights, act: Activation, input: &Matrix) -> (Matrix, Cache) {
    let units = weights.w.rows();
    let mut pre = Matrix::zeros(input.rows(), units);
    for t in 0..input.rows() {
        let row = pre.row_mut(t);
        row.copy_from_slice(weights.b.as_slice());
        gemv_acc(weights.w.as_slice(), input.row(t), row);
    }
    let out = pre.map(|v| act.apply(v));
    (out.clone(), Cache::Dense { inputs: input.clone(), pre, out })
}

fn dense_backward(
    weights: &DenseWeights,
    grads: &mut DenseWeights,
    act: Activation,
    cache: &Cache,
    d_out: &Matrix,
    need_input_grad: bool,
) -> Matrix {
    let Cache::Dense { inputs, pre, out } = cache else { unreachable!("cache kind follows layer kind") };
    let mut d_input = Matrix::zeros(if need_input_grad { inputs.rows() } else { 0 }, inputs.cols());
    let mut dz = vec![0.0; weights.w.rows()];
    for t in 0..inputs.rows() {
        for (j, v) in dz.iter_mut().enumerate() {
            *v = d_out.get(t, j) * act.derivative(pre.get(t, j), out.get(t, j));
        }
        outer_acc(&dz, inputs.row(t), grads.w.as_mut_slice());
        for (b, v) in grads.b.as_mut_slice().iter_mut().zip(&dz) {
            *b += v;
        }
        if need_input_grad {
            gemv_t_acc(weights.w.as_slice(), &dz, d_input.row_mut(t));
        }
    }
    d_input
}

impl Network {
    fn forward_cached(&self, window: &Matrix) -> Result<(Vec<Cache>, Matrix)> {
        self.check_window(window)?;
        let mut x = window.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (layer, params) in self.arch.layers.iter().zip(&self.layers) {
            let (y, cache) = match (layer, params) {
                (Layer::Lstm { activation, return_sequences, .. }, LayerParams::Lstm(w)) => {
                    lstm_forward(w, *activation, &x, *return_sequences)
                }
                (Layer::Repeat { n }, LayerParams::Repeat) => {
                    let mut data = Vec::with_capacity(n * x.cols());
                    for _ in 0..*n {
                        data.extend_from_slice(x.row(0));
                    }
                    (Matrix::from_vec(*n, x.cols(), data)?, Cache::Repeat)
                }
                (Layer::Dense { activation, .. } | Layer::TimeDistributed { activation, .. }, LayerParams::Dense(w)) => {
                    dense_forward(w, *activation, &x)
                }
                _ => return Err(Error::shape("layer parameters do not match the architecture")),
            };
            caches.push(cache);
            x = y;
        }
        Ok((caches, x))
    }

    /// Adds `∂L/∂θ` into `grads` given `d_out = ∂L/∂output`.
    fn backward_into(&self, caches: &[Cache], d_out: Matrix, grads: &mut Gradients) {
        let mut d = d_out;
        for k in (0..self.layers.len()).rev() {
            let need_input = k > 0;
            let layer = &self.arch.layers[k];
            d = match (layer, &self.layers[k], &mut grads.layers[k]) {
                (Layer::Lstm { activation, return_sequences, .. }, LayerParams::Lstm(w), LayerParams::Lstm(g)) => {
                    lstm_backward(w, g, *activation, &caches[k], &d, *return_sequences, need_input)
                }
                (Layer::Repeat { .. }, _, _) => {
                    let mut summed = Matrix::zeros(1, d.cols());
                    for t in 0..d.rows() {
                        for (s, v) in summed.row_mut(0).iter_mut().zip(d.row(t)) {
                            *s += v;
                        }
                    }
                    summed
                }
                (
                    Layer::Dense { activation, .. } | Layer::TimeDistributed { activation, .. },
                    LayerParams::Dense(w),
                    LayerParams::Dense(g),
                ) => dense_backward(w, g, *activation, &caches[k], &d, need_input),
                _ => unreachable!("gradient buffers mirror the network"),
            };
        }
    }

    /// Per-sample MSE over the five outputs, accumulating `scale · ∂L/∂θ`.
    pub(crate) fn accumulate(&self, window: &Matrix, target: &[f64; HORIZON], scale: f64, grads: &mut Gradients) -> Result<f64> {
        let (caches, out) = self.forward_cached(window)?;
        let pred = out.as_slice();
        let mut loss = 0.0;
        let mut d_out = Matrix::zeros(out.rows(), out.cols());
        for (k, (p, t)) in pred.iter().zip(target).enumerate() {
            let e = p - t;
            loss += e * e / HORIZON as f64;
            d_out.as_mut_slice()[k] = scale * 2.0 * e / HORIZON as f64;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("network output".into()));
        }
        self.backward_into(&caches, d_out, grads);
        Ok(loss)
    }

    pub fn predict(&self, window: &Matrix) -> Result<[f64; HORIZON]> {
        let (_, out) = self.forward_cached(window)?;
        let v = out.as_slice();
        Ok([v[0], v[1], v[2], v[3], v[4]])
    }

    pub fn loss(&self, window: &Matrix, target: &[f64; HORIZON]) -> Result<f64> {
        let p = self.predict(window)?;
        Ok(p.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / HORIZON as f64)
    }
}

fn ensure_arch(arch: &LstmArchitecture, net: &Network) -> Result<()> {
    if &net.arch != arch {
        return Err(Error::shape(format!(
            "weights belong to {} ({}x{} input), not {} ({}x{} input)",
            net.arch.id, net.arch.input_steps, net.arch.input_features, arch.id, arch.input_steps, arch.input_features
        )));
    }
    Ok(())
}

/// Five scaled open values for `window`.
pub fn forward(arch: &LstmArchitecture, net: &Network, window: &Matrix) -> Result<[f64; HORIZON]> {
    ensure_arch(arch, net)?;
    net.predict(window)
}

/// Loss and exact gradients of the per-sample MSE for every parameter.
pub fn backward(
    arch: &LstmArchitecture,
    net: &Network,
    window: &Matrix,
    target: &[f64; HORIZON],
) -> Result<(f64, Gradients)> {
    ensure_arch(arch, net)?;
    let mut grads = net.zero_grads();
    let loss = net
        .accumulate(window, target, 1.0, &mut grads)
        .map_err(|_| Error::Divergence { epoch: 0, batch: None })?;
    if !grads.is_finite() {
        return Err(Error::Divergence { epoch: 0, batch: None });
    }
    Ok((loss, grads))
}
