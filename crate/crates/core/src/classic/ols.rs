use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SupervisedSet;
use crate::numcore::{lstsq_aliased, Matrix};

/// Intercept plus one coefficient per predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ols {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Predictors linearly dependent on earlier ones, fixed at zero.
    #[serde(default)]
    pub aliased: Vec<usize>,
}

impl Ols {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(c, v)| c * v).sum::<f64>()
    }
}

pub(crate) fn with_intercept(x: &Matrix) -> Matrix {
    let mut d = Matrix::zeros(x.rows(), x.cols() + 1);
    for r in 0..x.rows() {
        let row = d.row_mut(r);
        row[0] = 1.0;
        row[1..].copy_from_slice(x.row(r));
    }
    d
}

/// Least squares through Householder QR. A predictor that is an affine
/// combination of earlier ones is aliased out with a zero coefficient; the
/// five derived price variables always contain one such column, since the
/// day range is the high minus the low.
pub fn fit_ols(data: &SupervisedSet) -> Result<Ols> {
    let (n, p) = data.x.shape();
    if n <= p + 1 {
        return Err(Error::Size(format!("ols needs more than {} rows, got {n}", p + 1)));
    }
    let (beta, dropped) = lstsq_aliased(&with_intercept(&data.x), &data.y)?;
    if dropped.first() == Some(&0) {
        return Err(Error::SingularFit);
    }
    Ok(Ols {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        aliased: dropped.into_iter().map(|c| c - 1).collect(),
    })
}
