//! Dense row-major matrices and the small training kernel shared by the
//! neural models: activations, MSE, ADAM and a central-difference gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged rows"));
        }
        Ok(Matrix { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn column(values: &[f64]) -> Self {
        Matrix { rows: values.len(), cols: 1, data: values.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn same_shape(&self, other: &Matrix, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "{op}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

/// Matrix product. Each entry is a left-to-right dot product, so the
/// summation order is fixed.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(format!("matmul {:?} x {:?}", a.shape(), b.shape())));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let arow = a.row(i);
        for j in 0..b.cols {
            let mut acc = 0.0;
            for (k, &av) in arow.iter().enumerate() {
                acc += av * b.data[k * b.cols + j];
            }
            out.data[i * b.cols + j] = acc;
        }
    }
    Ok(out)
}

/// `y += W x` for row-major `w` of shape `(y.len(), x.len())`.
#[inline]
pub(crate) fn gemv_acc(w: &[f64], x: &[f64], y: &mut [f64]) {
    let n = x.len();
    debug_assert_eq!(w.len(), n * y.len());
    for (yi, wrow) in y.iter_mut().zip(w.chunks_exact(n)) {
        let mut acc = 0.0;
        for (a, b) in wrow.iter().zip(x) {
            acc += a * b;
        }
        *yi += acc;
    }
}

/// `x_grad += Wᵀ dy`.
#[inline]
pub(crate) fn gemv_t_acc(w: &[f64], dy: &[f64], x_grad: &mut [f64]) {
    let n = x_grad.len();
    debug_assert_eq!(w.len(), n * dy.len());
    for (&d, wrow) in dy.iter().zip(w.chunks_exact(n)) {
        if d == 0.0 {
            continue;
        }
        for (g, &wv) in x_grad.iter_mut().zip(wrow) {
            *g += d * wv;
        }
    }
}

/// `W_grad += dy xᵀ`.
#[inline]
pub(crate) fn outer_acc(dy: &[f64], x: &[f64], w_grad: &mut [f64]) {
    let n = x.len();
    for (&d, grow) in dy.iter().zip(w_grad.chunks_exact_mut(n)) {
        if d == 0.0 {
            continue;
        }
        for (g, &xv) in grow.iter_mut().zip(x) {
            *g += d * xv;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and the output `y`.
    /// ReLU'(0) is 0.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activation(kind: Activation, x: &Matrix) -> Matrix {
    x.map(|v| kind.apply(v))
}

pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<f64> {
    pred.same_shape(target, "mse_loss")?;
    if pred.is_empty() {
        return Err(Error::Size("mse of an empty matrix".into()));
    }
    let sum: f64 = pred.data.iter().zip(&target.data).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Default::default() }
    }
}

/// Moment accumulators for one parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0, config }
    }

    /// In-place bias-corrected update of `params` with `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "adam step: state {} params {} grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, epsilon } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

/// Functional form: returns the updated parameters, leaving `params` untouched.
pub fn adam_step(params: &Matrix, grads: &Matrix, state: &mut AdamState) -> Result<Matrix> {
    params.same_shape(grads, "adam_step")?;
    let mut out = params.clone();
    state.step(&mut out.data, &grads.data)?;
    Ok(out)
}

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference gradient `(f(p+h e_i) - f(p-h e_i)) / 2h`.
pub fn finite_diff_gradient<F>(mut loss_fn: F, params: &Matrix, h: f64) -> Result<Matrix>
where
    F: FnMut(&Matrix) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = params.clone();
    let mut grad = Matrix::zeros(params.rows, params.cols);
    for i in 0..params.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + h;
        let up = loss_fn(&probe);
        probe.data[i] = orig - h;
        let down = loss_fn(&probe);
        probe.data[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("loss at coordinate {i}")));
        }
        grad.data[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Householder QR least squares for a tall design, returning the minimizer
/// of `‖A x - b‖²`. Columns whose diagonal of `R` falls below a relative
/// tolerance make the fit singular.
pub fn lstsq(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let (x, aliased) = householder(a, b, false)?;
    debug_assert!(aliased.is_empty());
    Ok(x)
}

/// Least squares that skips columns lying (numerically) in the span of the
/// columns before them. Skipped columns get coefficient zero and are listed
/// in the second return value.
pub fn lstsq_aliased(a: &Matrix, b: &[f64]) -> Result<(Vec<f64>, Vec<usize>)> {
    householder(a, b, true)
}

/// Relative residual-norm tolerance below which a column counts as aliased.
pub const ALIAS_TOL: f64 = 1e-7;

fn householder(a: &Matrix, b: &[f64], drop_aliased: bool) -> Result<(Vec<f64>, Vec<usize>)> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::shape(format!("lstsq: {m} rows but {} targets", b.len())));
    }
    if n == 0 || (m < n && !drop_aliased) {
        return Err(Error::SingularFit);
    }
    // Column-major working copy.
    let mut qr: Vec<Vec<f64>> = (0..n).map(|c| a.col(c)).collect();
    let mut rhs = b.to_vec();
    let norms: Vec<f64> = qr.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let col_scale = norms.iter().copied().fold(0.0f64, f64::max);
    let tol = 1e-10 * col_scale.max(f64::MIN_POSITIVE);

    // kept[i] = column whose Householder reflector sits at row i.
    let mut kept = Vec::with_capacity(n);
    let mut aliased = Vec::new();
    let mut diag = Vec::with_capacity(n);
    for k in 0..n {
        let r = kept.len();
        let norm = if r < m { qr[k][r..].iter().map(|v| v * v).sum::<f64>().sqrt() } else { 0.0 };
        if drop_aliased {
            if norm <= ALIAS_TOL * norms[k] || norm <= tol {
                aliased.push(k);
                continue;
            }
        } else if norm <= tol {
            return Err(Error::SingularFit);
        }
        let alpha = if qr[k][r] > 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in place.
        qr[k][r] -= alpha;
        let vnorm2: f64 = qr[k][r..].iter().map(|v| v * v).sum();
        diag.push(alpha);
        kept.push(k);
        if vnorm2 == 0.0 {
            continue;
        }
        let (head, tail) = qr.split_at_mut(k + 1);
        let v = &head[k][r..];
        for col in tail.iter_mut() {
            let dot: f64 = v.iter().zip(&col[r..]).map(|(a, b)| a * b).sum();
            let s = 2.0 * dot / vnorm2;
            for (c, vi) in col[r..].iter_mut().zip(v) {
                *c -= s * vi;
            }
        }
        let dot: f64 = v.iter().zip(&rhs[r..]).map(|(a, b)| a * b).sum();
        let s = 2.0 * dot / vnorm2;
        for (r, vi) in rhs[r..].iter_mut().zip(v) {
            *r -= s * vi;
        }
    }

    let mut x = vec![0.0; n];
    for i in (0..kept.len()).rev() {
        let mut acc = rhs[i];
        for &j in &kept[i + 1..] {
            acc -= qr[j][i] * x[j];
        }
        x[kept[i]] = acc / diag[i];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularFit);
    }
    Ok((x, aliased))
}
