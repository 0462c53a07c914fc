//! Evaluation protocols.
//!
//! Classical regressors are scored day by day on the training partition
//! (Case I) and on the test partition (Case II). LSTM networks are scored
//! by weekly walk-forward validation: each test week is forecast from the
//! days before it, then its actuals join the history.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classic::{self, ModelSpec, TrainedModel};
use crate::dataio::{DatasetSplit, OhlcvRecord};
use crate::error::{Error, Result};
use crate::features::{derive_all, build_supervised, fit_scaler, invert_open_scale, ScalerParams};
use crate::lstm::{make_windows, train, train_from, window_at, LossHistory, LstmArchitecture, LstmModel, Network, TrainingConfig};
use crate::metrics::{self, Summary};
use crate::HORIZON;

/// Block positions. These label positions inside a five-day block, not
/// calendar weekdays.
pub const POSITION_LABELS: [&str; HORIZON] = ["Mon", "Tue", "Wed", "Thu", "Fri"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastRound {
    pub week_index: usize,
    pub predicted: [f64; HORIZON],
    pub actual: [f64; HORIZON],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub rounds: Vec<ForecastRound>,
    pub rmse_overall: f64,
    pub rmse_per_day: [f64; HORIZON],
    pub wall_time: f64,
    pub seed: u64,
}

impl RunResult {
    pub fn from_rounds(rounds: Vec<ForecastRound>, wall_time: f64, seed: u64) -> Result<Self> {
        let rmse_overall = metrics::rounds_rmse(&rounds)?;
        let rmse_per_day = metrics::per_day_rmse(&rounds)?;
        Ok(RunResult { rounds, rmse_overall, rmse_per_day, wall_time, seed })
    }
}

/// Day-level predictions over one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyEval {
    pub dates: Vec<chrono::NaiveDate>,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
    pub rmse: f64,
    /// `None` when either side is constant.
    pub correlation: Option<f64>,
    /// Week blocks fully covered by predictions, as forecast rounds.
    pub weekly: RunResult,
}

#[derive(Debug, Clone)]
pub struct ClassicEvaluation {
    pub model: TrainedModel,
    pub case_i: DailyEval,
    pub case_ii: DailyEval,
}

fn daily_eval(
    model: &TrainedModel,
    records: &[OhlcvRecord],
    scaler: &ScalerParams,
    lag: usize,
    first_target: usize,
    wall_time: f64,
) -> Result<DailyEval> {
    let data = build_supervised(records, scaler, lag)?;
    let predicted = classic::predict(model, &data.x)?;
    let actual = data.y;
    let dates: Vec<_> = records[lag..].iter().map(|r| r.date).collect();
    let rmse = metrics::rmse(&actual, &predicted)?;
    let correlation = match metrics::pearson_correlation(&actual, &predicted) {
        Ok(r) => Some(r),
        Err(Error::UndefinedCorrelation(_)) => None,
        Err(e) => return Err(e),
    };
    // Prediction j targets record j + lag; block k starts at record
    // first_target + 5k.
    let mut rounds = Vec::new();
    let n_records = records.len() - first_target;
    for week in 0..n_records / HORIZON {
        let start = week * HORIZON + first_target;
        if start < lag {
            continue;
        }
        let j = start - lag;
        if j + HORIZON > predicted.len() {
            break;
        }
        let mut p = [0.0; HORIZON];
        let mut a = [0.0; HORIZON];
        p.copy_from_slice(&predicted[j..j + HORIZON]);
        a.copy_from_slice(&actual[j..j + HORIZON]);
        rounds.push(ForecastRound { week_index: week, predicted: p, actual: a });
    }
    let weekly = RunResult::from_rounds(rounds, wall_time, model.spec.seed)?;
    Ok(DailyEval { dates, actual, predicted, rmse, correlation, weekly })
}

/// Fits once on the train partition and predicts every train day (Case I)
/// and every test day (Case II). With `lag = 1` the first test day uses the
/// last train day's predictors.
pub fn evaluate_classic(spec: &ModelSpec, split: &DatasetSplit, lag: usize) -> Result<ClassicEvaluation> {
    let clock = Instant::now();
    let scaler = fit_scaler(&split.train)?;
    let train_set = build_supervised(&split.train, &scaler, lag)?;
    let model = classic::fit(spec, &train_set, Some(&scaler))?;
    let fit_time = clock.elapsed().as_secs_f64();

    let case_i = daily_eval(&model, &split.train, &scaler, lag, 0, fit_time)?;
    let mut test_records = Vec::with_capacity(split.test.len() + lag);
    if lag == 1 {
        test_records.push(*split.train.last().expect("split has train records"));
    }
    test_records.extend_from_slice(&split.test);
    let case_ii = daily_eval(&model, &test_records, &scaler, lag, lag, clock.elapsed().as_secs_f64())?;
    Ok(ClassicEvaluation { model, case_i, case_ii })
}

#[derive(Debug, Clone)]
pub struct WalkForward {
    pub result: RunResult,
    /// Network as it stood after the last weekly update.
    pub model: LstmModel,
    pub history: LossHistory,
    /// Fingerprint of the weights used for each round.
    pub fingerprints: Vec<u64>,
}

/// Weekly walk-forward validation. The scaler is fit on the training
/// partition only. By default the network is trained once; with
/// `retrain_each_week` it is retrained from scratch, same seed, on the
/// extended history before every week after the first.
pub fn walk_forward(
    arch: &LstmArchitecture,
    split: &DatasetSplit,
    config: &TrainingConfig,
    retrain_each_week: bool,
) -> Result<WalkForward> {
    if split.test_weeks.is_empty() {
        return Err(Error::Size("walk-forward needs at least one test week".into()));
    }
    let need = arch.input_steps / HORIZON + 1;
    if split.train_weeks.len() < need {
        return Err(Error::Size(format!(
            "{} needs at least {need} train weeks, got {}",
            arch.id,
            split.train_weeks.len()
        )));
    }
    let clock = Instant::now();
    let scaler = fit_scaler(&split.train)?;
    let mut all = split.train.clone();
    all.extend_from_slice(&split.test);
    let rows = derive_all(&all, &scaler)?;
    let n_train = split.train.len();

    let trained = train(arch, &make_windows(arch, &rows[..n_train])?, config)?;
    let mut net: Network = trained.network;
    let mut history = trained.history;
    let mut rounds = Vec::with_capacity(split.test_weeks.len());
    let mut fingerprints = Vec::with_capacity(split.test_weeks.len());
    for (w, week) in split.test_weeks.iter().enumerate() {
        let end = n_train + w * HORIZON;
        if retrain_each_week && w > 0 {
            let fresh = Network::init(arch, config.seed)?;
            let out = train_from(fresh, &make_windows(arch, &rows[..end])?, config)?;
            net = out.network;
            history = out.history;
        }
        let scaled = net.predict(&window_at(arch, &rows[..end], end)?)?;
        rounds.push(ForecastRound {
            week_index: w,
            predicted: scaled.map(|v| invert_open_scale(v, &scaler)),
            actual: week.opens(),
        });
        fingerprints.push(net.fingerprint());
    }
    let result = RunResult::from_rounds(rounds, clock.elapsed().as_secs_f64(), config.seed)?;
    Ok(WalkForward { result, model: LstmModel::new(net, config.clone(), scaler), history, fingerprints })
}

/// Runs `task(seed)` for seeds `base_seed .. base_seed + n_rounds`,
/// returning results in round order whatever the execution order.
pub fn run_rounds<T, F>(n_rounds: usize, base_seed: u64, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    if n_rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..n_rounds as u64).map(|i| base_seed.wrapping_add(i)).collect();
    let results: Vec<Result<T>> = if rayon::current_num_threads() > 1 {
        seeds.par_iter().map(|&s| task(s)).collect()
    } else {
        seeds.iter().map(|&s| task(s)).collect()
    };
    results.into_iter().collect()
}

/// Per-column statistics across rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundsSummary {
    pub rmse: Summary,
    pub day_rmse: [Summary; HORIZON],
    pub time: Summary,
    pub ratio_rmse_mean: f64,
}

pub fn summarize_runs(runs: &[RunResult], test_mean_open: f64) -> Result<RoundsSummary> {
    let col = |f: &dyn Fn(&RunResult) -> f64| -> Result<Summary> {
        metrics::summarize(&runs.iter().map(f).collect::<Vec<_>>())
    };
    let rmse = col(&|r| r.rmse_overall)?;
    let mut day_rmse = [rmse; HORIZON];
    for (p, slot) in day_rmse.iter_mut().enumerate() {
        *slot = col(&|r| r.rmse_per_day[p])?;
    }
    Ok(RoundsSummary {
        rmse,
        day_rmse,
        time: col(&|r| r.wall_time)?,
        ratio_rmse_mean: metrics::ratio_rmse_mean(rmse.mean, test_mean_open)?,
    })
}

/// Candidate values per parameter, in declaration order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub params: Vec<(String, Vec<f64>)>,
}

pub type GridPoint = Vec<(String, f64)>;

impl Grid {
    pub fn new() -> Self {
        Grid::default()
    }

    pub fn with(mut self, name: &str, values: &[f64]) -> Self {
        self.params.push((name.to_string(), values.to_vec()));
        self
    }

    /// Cartesian product; the last parameter varies fastest.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out: Vec<GridPoint> = vec![vec![]];
        for (name, values) in &self.params {
            let mut next = Vec::with_capacity(out.len() * values.len());
            for p in &out {
                for v in values {
                    let mut q = p.clone();
                    q.push((name.clone(), *v));
                    next.push(q);
                }
            }
            out = next;
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty() || self.params.iter().any(|(_, v)| v.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub point: GridPoint,
    /// Validation RMSE; infinite when training diverged.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: usize,
    pub trace: Vec<TraceEntry>,
}

impl GridResult {
    pub fn best_point(&self) -> &GridPoint {
        &self.trace[self.best].point
    }
}

/// Holds out the last `fraction` of train weeks (at least one) as a
/// validation test partition.
pub fn validation_split(split: &DatasetSplit, fraction: f64) -> Result<DatasetSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("validation fraction {fraction} outside (0, 1)")));
    }
    let weeks = split.train_weeks.len();
    let held = ((weeks as f64 * fraction).round() as usize).max(1);
    if held >= weeks {
        return Err(Error::Size(format!("{weeks} train weeks leave nothing to fit after holding out {held}")));
    }
    let cut = (weeks - held) * HORIZON;
    DatasetSplit::from_partitions(split.train[..cut].to_vec(), split.train[cut..].to_vec())
}

pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.2;

/// Exhaustive sweep scoring each point with `score` on the validation
/// split. Ties go to the earliest point; divergence scores as infinity.
pub fn grid_search<F>(grid: &Grid, split: &DatasetSplit, validation_fraction: f64, score: F) -> Result<GridResult>
where
    F: Fn(&GridPoint, &DatasetSplit) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::Config("grid has no candidate values".into()));
    }
    let val = validation_split(split, validation_fraction)?;
    let mut trace = Vec::new();
    for point in grid.points() {
        let s = match score(&point, &val) {
            Ok(s) => s,
            Err(Error::Divergence { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        trace.push(TraceEntry { point, score: s });
    }
    let mut best = 0;
    for (i, t) in trace.iter().enumerate() {
        if t.score < trace[best].score {
            best = i;
        }
    }
    Ok(GridResult { best, trace })
}

/// Classical spec with grid values applied as hyperparameters.
pub fn apply_classic(spec: &ModelSpec, point: &GridPoint) -> Result<ModelSpec> {
    let mut s = spec.clone();
    for (k, v) in point {
        s.hyperparameters.insert(k.clone(), *v);
    }
    s.validate()?;
    Ok(s)
}

pub fn grid_search_classic(
    spec: &ModelSpec,
    grid: &Grid,
    split: &DatasetSplit,
    lag: usize,
    validation_fraction: f64,
) -> Result<GridResult> {
    grid_search(grid, split, validation_fraction, |p, val| {
        Ok(evaluate_classic(&apply_classic(spec, p)?, val, lag)?.case_ii.rmse)
    })
}

/// LSTM grid keys: `epochs`, `batch`, `lr`, `units`, `dense_units`.
pub fn apply_lstm(
    arch: &LstmArchitecture,
    config: &TrainingConfig,
    point: &GridPoint,
) -> Result<(LstmArchitecture, TrainingConfig)> {
    let mut c = config.clone();
    let (mut units, mut dense) = lstm_widths(arch);
    let count = |k: &str, v: f64| -> Result<usize> {
        if v < 1.0 || v.fract() != 0.0 {
            return Err(Error::Hyperparameter(format!("`{k}` must be a positive integer, got {v}")));
        }
        Ok(v as usize)
    };
    for (k, v) in point {
        match k.as_str() {
            "epochs" => c.epochs = count(k, *v)?,
            "batch" => c.batch_size = count(k, *v)?,
            "lr" => c.learning_rate = *v,
            "units" => units = count(k, *v)?,
            "dense_units" => dense = count(k, *v)?,
            _ => return Err(Error::Hyperparameter(format!("`{k}` is not an LSTM grid parameter"))),
        }
    }
    c.validate()?;
    let act = match arch.layers[0] {
        crate::lstm::Layer::Lstm { activation, .. } => activation,
        _ => crate::numcore::Activation::Relu,
    };
    Ok((LstmArchitecture::with_activation(arch.id, units, dense, act), c))
}

/// `(lstm units, dense units)` of a standard stack.
pub fn lstm_widths(arch: &LstmArchitecture) -> (usize, usize) {
    use crate::lstm::Layer;
    let units = arch.layers.iter().find_map(|l| match l {
        Layer::Lstm { units, .. } => Some(*units),
        _ => None,
    });
    let dense = arch.layers.iter().find_map(|l| match l {
        Layer::Dense { units, .. } | Layer::TimeDistributed { units, .. } => Some(*units),
        _ => None,
    });
    (units.unwrap_or(0), dense.unwrap_or(0))
}

pub fn grid_search_lstm(
    arch: &LstmArchitecture,
    config: &TrainingConfig,
    grid: &Grid,
    split: &DatasetSplit,
    validation_fraction: f64,
) -> Result<GridResult> {
    grid_search(grid, split, validation_fraction, |p, val| {
        let (a, c) = apply_lstm(arch, config, p)?;
        Ok(walk_forward(&a, val, &c, false)?.result.rmse_overall)
    })
}
