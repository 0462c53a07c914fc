//! Min-max scaling and derived predictor variables.
//!
//! Scalers are fitted on the training partition only. Test-partition
//! features may fall outside `[0, 1]` and are never clamped.

use serde::{Deserialize, Serialize};

use crate::dataio::OhlcvRecord;
use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// Observed extrema of one variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    fn scan(values: impl Iterator<Item = f64>) -> Self {
        values.fold(
            MinMax { min: f64::INFINITY, max: f64::NEG_INFINITY },
            |acc, v| MinMax { min: acc.min.min(v), max: acc.max.max(v) },
        )
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn scale(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, scaled: f64) -> f64 {
        scaled * (self.max - self.min) + self.min
    }
}

/// Per-variable training-set extrema.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub open: MinMax,
    pub high: MinMax,
    pub low: MinMax,
    pub close: MinMax,
    pub volume: MinMax,
    pub range: MinMax,
}

/// The five derived predictors plus the scaled open used as neural target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub high_norm: f64,
    pub low_norm: f64,
    pub close_norm: f64,
    pub volume_norm: f64,
    pub range_norm: f64,
    pub open_scaled: f64,
}

pub const PREDICTOR_NAMES: [&str; 5] = ["high_norm", "low_norm", "close_norm", "volume_norm", "range_norm"];

impl FeatureRow {
    /// Predictor tuple in the fixed column order of [`PREDICTOR_NAMES`].
    pub fn predictors(&self) -> [f64; 5] {
        [self.high_norm, self.low_norm, self.close_norm, self.volume_norm, self.range_norm]
    }

    /// Per-day input for the multivariate network: open, high, low, close, volume.
    pub fn multivariate(&self) -> [f64; 5] {
        [self.open_scaled, self.high_norm, self.low_norm, self.close_norm, self.volume_norm]
    }
}

/// Supervised regression data: `x` holds predictor rows, `y` the raw opens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedSet {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub lag: usize,
}

impl SupervisedSet {
    pub fn new(x: Matrix, y: Vec<f64>, lag: usize) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::shape(format!("{} feature rows but {} targets", x.rows(), y.len())));
        }
        Ok(SupervisedSet { x, y, lag })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Rows selected by `idx`, in that order (used for bootstrap resampling).
    pub fn select(&self, idx: &[usize]) -> SupervisedSet {
        let cols = self.x.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(self.x.row(i));
        }
        SupervisedSet {
            x: Matrix::from_vec(idx.len(), cols, data).expect("row slice shape"),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            lag: self.lag,
        }
    }
}

/// Fits the scaler on training records.
pub fn fit_scaler(train: &[OhlcvRecord]) -> Result<ScalerParams> {
    if train.is_empty() {
        return Err(Error::Size("cannot fit a scaler on zero records".into()));
    }
    let params = ScalerParams {
        open: MinMax::scan(train.iter().map(|r| r.open)),
        high: MinMax::scan(train.iter().map(|r| r.high)),
        low: MinMax::scan(train.iter().map(|r| r.low)),
        close: MinMax::scan(train.iter().map(|r| r.close)),
        volume: MinMax::scan(train.iter().map(|r| r.volume as f64)),
        range: MinMax::scan(train.iter().map(|r| r.range())),
    };
    for (name, mm) in params.named() {
        if !(mm.max > mm.min) {
            return Err(Error::DegenerateScaler(name));
        }
    }
    Ok(params)
}

impl ScalerParams {
    pub fn named(&self) -> [(&'static str, MinMax); 6] {
        [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
            ("volume", self.volume),
            ("range", self.range),
        ]
    }

    pub fn scale_open(&self, open: f64) -> f64 {
        self.open.scale(open)
    }
}

pub fn derive_features(record: &OhlcvRecord, scaler: &ScalerParams) -> Result<FeatureRow> {
    let row = FeatureRow {
        high_norm: scaler.high.scale(record.high),
        low_norm: scaler.low.scale(record.low),
        close_norm: scaler.close.scale(record.close),
        volume_norm: scaler.volume.scale(record.volume as f64),
        range_norm: scaler.range.scale(record.range()),
        open_scaled: scaler.open.scale(record.open),
    };
    if row.predictors().iter().chain([row.open_scaled].iter()).all(|v| v.is_finite()) {
        Ok(row)
    } else {
        Err(Error::NonFinite(format!("features for {}", record.date)))
    }
}

pub fn derive_all(records: &[OhlcvRecord], scaler: &ScalerParams) -> Result<Vec<FeatureRow>> {
    records.iter().map(|r| derive_features(r, scaler)).collect()
}

/// Maps a scaled open back to index points.
pub fn invert_open_scale(value: f64, scaler: &ScalerParams) -> f64 {
    scaler.open.invert(value)
}

/// Builds the regression design.
///
/// With `lag = 1`, row `t` holds day `t-1`'s predictors and `y[t]` is day
/// `t`'s open, so the first record yields no observation.
pub fn build_supervised(records: &[OhlcvRecord], scaler: &ScalerParams, lag: usize) -> Result<SupervisedSet> {
    if lag > 1 {
        return Err(Error::Config(format!("lag must be 0 or 1, got {lag}")));
    }
    if records.len() <= lag {
        return Err(Error::Size(format!(
            "lag {lag} needs at least {} records, got {}",
            lag + 1,
            records.len()
        )));
    }
    let features = derive_all(records, scaler)?;
    let n = records.len() - lag;
    let mut data = Vec::with_capacity(n * 5);
    for f in &features[..n] {
        data.extend_from_slice(&f.predictors());
    }
    let y = records[lag..].iter().map(|r| r.open).collect();
    SupervisedSet::new(Matrix::from_vec(n, 5, data)?, y, lag)
}

/// CSV dump of derived features, one row per record.
pub fn features_csv(records: &[OhlcvRecord], scaler: &ScalerParams) -> Result<String> {
    let mut out = String::from("date,");
    out.push_str(&PREDICTOR_NAMES.join(","));
    out.push_str(",open_scaled\n");
    for (r, f) in records.iter().zip(derive_all(records, scaler)?) {
        let p = f.predictors();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.date, p[0], p[1], p[2], p[3], p[4], f.open_scaled
        ));
    }
    Ok(out)
}
