//! Run configuration: a flat `key = value` file with `#` comments and an
//! optional `[grid]` section of `name = v1, v2, ...` lines.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use chrono::NaiveDate;
use sha2::{Digest, Sha256};
use walkcast_core::backtest::{Grid, DEFAULT_VALIDATION_FRACTION};
use walkcast_core::classic::{Family, ModelSpec};
use walkcast_core::dataio::default_boundaries;
use walkcast_core::lstm::{ArchId, LstmArchitecture, TrainingConfig, DEFAULT_DENSE_UNITS, DEFAULT_LSTM_UNITS};
use walkcast_core::numcore::Activation;
use walkcast_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelId {
    Classic(Family),
    Lstm(ArchId),
}

impl ModelId {
    pub fn name(self) -> &'static str {
        match self {
            ModelId::Classic(f) => f.name(),
            ModelId::Lstm(a) => a.name(),
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Ok(a) = s.parse::<ArchId>() {
            return Ok(ModelId::Lstm(a));
        }
        s.parse::<Family>().map(ModelId::Classic).map_err(|_| {
            Error::Config(format!(
                "unknown model `{s}` (ols, mars, cart, bagging, boosting, rf, ann, svr, lstm1-lstm4)"
            ))
        })
    }
}

/// Parsed file contents before interpretation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub values: BTreeMap<String, String>,
    pub grid: Grid,
}

pub fn parse_config(text: &str) -> Result<RawConfig> {
    let mut raw = RawConfig::default();
    let mut in_grid = false;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            match line {
                "[grid]" => in_grid = true,
                _ => return Err(Error::Config(format!("line {line_no}: unknown section {line}"))),
            }
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {line_no}: expected `key = value`")))?;
        let (k, v) = (k.trim().to_string(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {line_no}: empty key")));
        }
        if in_grid {
            if raw.grid.params.iter().any(|(name, _)| *name == k) {
                return Err(Error::Config(format!("line {line_no}: grid parameter `{k}` repeated")));
            }
            let values = v
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("line {line_no}: `{}` is not a number", t.trim())))
                })
                .collect::<Result<Vec<_>>>()?;
            raw.grid.params.push((k, values));
        } else if raw.values.insert(k.clone(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {line_no}: key `{k}` repeated")));
        }
    }
    Ok(raw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_path: Option<PathBuf>,
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    pub model: ModelId,
    pub rounds: usize,
    pub seed: u64,
    pub lag: usize,
    pub retrain_each_week: bool,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub units: Option<usize>,
    pub dense_units: Option<usize>,
    pub activation: Activation,
    /// Classical hyperparameters, from `param.<name>` keys.
    pub params: BTreeMap<String, f64>,
    pub grid: Grid,
    pub validation_fraction: f64,
    pub output_dir: PathBuf,
    pub record_time: bool,
    pub svg_round: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let [a, b, c, d] = default_boundaries();
        RunConfig {
            data_path: None,
            train_start: a,
            train_end: b,
            test_start: c,
            test_end: d,
            model: ModelId::Lstm(ArchId::Lstm1),
            rounds: 10,
            seed: 42,
            lag: 1,
            retrain_each_week: false,
            epochs: None,
            batch: None,
            lr: None,
            units: None,
            dense_units: None,
            activation: Activation::Relu,
            params: BTreeMap::new(),
            grid: Grid::default(),
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            output_dir: PathBuf::from("out"),
            record_time: false,
            svg_round: 1,
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

fn date(key: &str, v: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|_| Error::Config(format!("`{key}`: `{v}` is not YYYY-MM-DD")))
}

pub fn parse_activation(v: &str) -> Result<Activation> {
    match v {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        _ => Err(Error::Config(format!("activation must be relu or tanh, got `{v}`"))),
    }
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Tanh => "tanh",
        _ => "relu",
    }
}

impl RunConfig {
    /// Defaults overlaid with the file's settings.
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let mut c = RunConfig::default();
        for (k, v) in &raw.values {
            c.set(k, v)?;
        }
        c.grid = raw.grid.clone();
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "data" => self.data_path = Some(PathBuf::from(v)),
            "train_start" => self.train_start = date(key, v)?,
            "train_end" => self.train_end = date(key, v)?,
            "test_start" => self.test_start = date(key, v)?,
            "test_end" => self.test_end = date(key, v)?,
            "model" => self.model = v.parse()?,
            "rounds" => self.rounds = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "lag" => self.lag = num(key, v)?,
            "retrain_weekly" => self.retrain_each_week = flag(key, v)?,
            "epochs" => self.epochs = Some(num(key, v)?),
            "batch" => self.batch = Some(num(key, v)?),
            "lr" => self.lr = Some(num(key, v)?),
            "units" => self.units = Some(num(key, v)?),
            "dense_units" => self.dense_units = Some(num(key, v)?),
            "activation" => self.activation = parse_activation(v)?,
            "validation_fraction" => self.validation_fraction = num(key, v)?,
            "out" => self.output_dir = PathBuf::from(v),
            "record_time" => self.record_time = flag(key, v)?,
            "svg_round" => self.svg_round = num(key, v)?,
            _ => match key.strip_prefix("param.") {
                Some(name) if !name.is_empty() => {
                    self.params.insert(name.to_string(), num(key, v)?);
                }
                _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_start > self.train_end || self.train_end >= self.test_start || self.test_start > self.test_end {
            return Err(Error::Config(format!(
                "dates must be ordered: train {}..{}, test {}..{}",
                self.train_start, self.train_end, self.test_start, self.test_end
            )));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.lag > 1 {
            return Err(Error::Config(format!("lag must be 0 or 1, got {}", self.lag)));
        }
        if self.svg_round == 0 || self.svg_round > self.rounds {
            return Err(Error::Config(format!("svg_round {} outside 1..={}", self.svg_round, self.rounds)));
        }
        match self.model {
            ModelId::Classic(_) => {
                self.model_spec(self.seed)?;
            }
            ModelId::Lstm(_) => {
                if !self.params.is_empty() {
                    return Err(Error::Config("param.* keys apply to classical models only".into()));
                }
                self.training(self.seed).validate()?;
                let arch = self.architecture()?;
                arch.layer_shapes()?;
            }
        }
        Ok(())
    }

    pub fn model_spec(&self, seed: u64) -> Result<ModelSpec> {
        let ModelId::Classic(family) = self.model else {
            return Err(Error::Config(format!("{} is not a classical model", self.model)));
        };
        let spec = ModelSpec { family, hyperparameters: self.params.clone(), seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn architecture(&self) -> Result<LstmArchitecture> {
        let ModelId::Lstm(id) = self.model else {
            return Err(Error::Config(format!("{} is not an LSTM model", self.model)));
        };
        let units = self.units.unwrap_or(DEFAULT_LSTM_UNITS);
        let dense = self.dense_units.unwrap_or(DEFAULT_DENSE_UNITS);
        if units == 0 || dense == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(LstmArchitecture::with_activation(id, units, dense, self.activation))
    }

    pub fn training(&self, seed: u64) -> TrainingConfig {
        let d = TrainingConfig::default();
        TrainingConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch.unwrap_or(d.batch_size),
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            seed,
            validation_fraction: 0.0,
        }
    }

    /// Every setting that affects results, one `key=value` per line in
    /// key order. Output location is excluded.
    pub fn canonical(&self, data_sha256: &str) -> String {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            kv.insert(k.to_string(), v);
        };
        put("data_sha256", data_sha256.to_string());
        put("train_start", self.train_start.to_string());
        put("train_end", self.train_end.to_string());
        put("test_start", self.test_start.to_string());
        put("test_end", self.test_end.to_string());
        put("model", self.model.name().to_string());
        put("rounds", self.rounds.to_string());
        put("seed", self.seed.to_string());
        put("lag", self.lag.to_string());
        put("record_time", self.record_time.to_string());
        put("svg_round", self.svg_round.to_string());
        put("validation_fraction", self.validation_fraction.to_string());
        match self.model {
            ModelId::Classic(_) => {
                if let Ok(spec) = self.model_spec(self.seed) {
                    for (k, v) in spec.resolved() {
                        put(&format!("param.{k}"), v.to_string());
                    }
                }
            }
            ModelId::Lstm(_) => {
                let t = self.training(self.seed);
                put("epochs", t.epochs.to_string());
                put("batch", t.batch_size.to_string());
                put("lr", t.learning_rate.to_string());
                put("units", self.units.unwrap_or(DEFAULT_LSTM_UNITS).to_string());
                put("dense_units", self.dense_units.unwrap_or(DEFAULT_DENSE_UNITS).to_string());
                put("activation", activation_name(self.activation).to_string());
                put("retrain_weekly", self.retrain_each_week.to_string());
            }
        }
        for (name, values) in &self.grid.params {
            let vs: Vec<String> = values.iter().map(|v| v.to_string()).collect();
            put(&format!("grid.{name}"), vs.join(","));
        }
        kv.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn digest(&self, data_sha256: &str) -> String {
        sha256_hex(self.canonical(data_sha256).as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
