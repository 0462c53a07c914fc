//! Error metrics and summary statistics.

use serde::{Deserialize, Serialize};

use crate::backtest::ForecastRound;
use crate::error::{Error, Result};
use crate::HORIZON;

fn check_pair(a: &[f64], p: &[f64], min_len: usize) -> Result<()> {
    if a.len() != p.len() {
        return Err(Error::Size(format!("{} actual values but {} predictions", a.len(), p.len())));
    }
    if a.len() < min_len {
        return Err(Error::Size(format!("need at least {min_len} values, got {}", a.len())));
    }
    Ok(())
}

/// Pearson product-moment correlation.
pub fn pearson_correlation(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted, 2)?;
    let n = actual.len() as f64;
    let ma = actual.iter().sum::<f64>() / n;
    let mp = predicted.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut spp) = (0.0, 0.0, 0.0);
    for (a, p) in actual.iter().zip(predicted) {
        let (da, dp) = (a - ma, p - mp);
        sab += da * dp;
        saa += da * da;
        spp += dp * dp;
    }
    if saa == 0.0 || spp == 0.0 {
        let which = if saa == 0.0 { "actual" } else { "predicted" };
        return Err(Error::UndefinedCorrelation(format!("{which} values are constant")));
    }
    Ok((sab / (saa.sqrt() * spp.sqrt())).clamp(-1.0, 1.0))
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted, 1)?;
    let sse: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum();
    Ok((sse / actual.len() as f64).sqrt())
}

/// RMSE at each block position, pooled over rounds.
pub fn per_day_rmse(rounds: &[ForecastRound]) -> Result<[f64; HORIZON]> {
    if rounds.is_empty() {
        return Err(Error::Size("no forecast rounds".into()));
    }
    let mut out = [0.0; HORIZON];
    for (p, slot) in out.iter_mut().enumerate() {
        let sse: f64 = rounds.iter().map(|r| (r.predicted[p] - r.actual[p]).powi(2)).sum();
        *slot = (sse / rounds.len() as f64).sqrt();
    }
    Ok(out)
}

/// RMSE over every prediction in `rounds`.
pub fn rounds_rmse(rounds: &[ForecastRound]) -> Result<f64> {
    let (a, p): (Vec<f64>, Vec<f64>) =
        rounds.iter().flat_map(|r| r.actual.iter().copied().zip(r.predicted.iter().copied())).unzip();
    rmse(&a, &p)
}

pub fn ratio_rmse_mean(rmse_value: f64, mean_open: f64) -> Result<f64> {
    if !(mean_open > 0.0) {
        return Err(Error::Config(format!("mean open must be positive, got {mean_open}")));
    }
    Ok(rmse_value / mean_open)
}

/// Column statistics. `sd` is the sample standard deviation (`n − 1`
/// divisor), zero for a single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub sd: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Size("cannot summarize an empty column".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sd = if values.len() == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(Summary { mean, min, max, sd })
}
