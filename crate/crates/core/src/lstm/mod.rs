//! LSTM networks with hand-derived backpropagation through time.
//!
//! Four architectures are provided:
//!
//! | id    | input   | stack                                                                 |
//! |-------|---------|-----------------------------------------------------------------------|
//! | LSTM1 | (5, 1)  | lstm(200, relu) → dense(100, relu) → dense(5)                         |
//! | LSTM2 | (10, 1) | as LSTM1                                                              |
//! | LSTM3 | (10, 1) | lstm(200) → repeat(5) → lstm(200, seq) → td(dense(100, relu)) → td(dense(1)) |
//! | LSTM4 | (10, 5) | as LSTM3                                                              |
//!
//! "ReLU" on an LSTM layer replaces the tanh of the cell candidate and of
//! the hidden-state output; gates stay sigmoid. ReLU cells can blow up, in
//! which case training reports a divergence error. All training happens in
//! min-max scaled space.

mod cell;
mod network;
mod train;
mod windows;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classic::MODEL_FORMAT_VERSION;
use crate::error::{Error, Result};
use crate::features::ScalerParams;
use crate::numcore::Activation;
use crate::HORIZON;

pub use cell::{lstm_cell_step, LstmWeights};
pub use network::{backward, forward, DenseWeights, Gradients, LayerParams, Network};
pub use train::{train, train_from, LossHistory, TrainOutcome, TrainingConfig};
pub use windows::{make_windows, window_at, Sample};

pub const DEFAULT_LSTM_UNITS: usize = 200;
pub const DEFAULT_DENSE_UNITS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchId {
    Lstm1,
    Lstm2,
    Lstm3,
    Lstm4,
}

impl ArchId {
    pub const ALL: [ArchId; 4] = [ArchId::Lstm1, ArchId::Lstm2, ArchId::Lstm3, ArchId::Lstm4];

    pub fn name(self) -> &'static str {
        match self {
            ArchId::Lstm1 => "lstm1",
            ArchId::Lstm2 => "lstm2",
            ArchId::Lstm3 => "lstm3",
            ArchId::Lstm4 => "lstm4",
        }
    }

    pub fn input_steps(self) -> usize {
        match self {
            ArchId::Lstm1 => 5,
            _ => 10,
        }
    }

    pub fn input_features(self) -> usize {
        match self {
            ArchId::Lstm4 => 5,
            _ => 1,
        }
    }

    pub fn is_encoder_decoder(self) -> bool {
        matches!(self, ArchId::Lstm3 | ArchId::Lstm4)
    }
}

impl fmt::Display for ArchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchId::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown LSTM architecture `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    /// Emits the whole hidden-state sequence when `return_sequences`, else
    /// only the final hidden state.
    Lstm { units: usize, activation: Activation, return_sequences: bool },
    Repeat { n: usize },
    Dense { units: usize, activation: Activation },
    TimeDistributed { units: usize, activation: Activation },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmArchitecture {
    pub id: ArchId,
    pub input_steps: usize,
    pub input_features: usize,
    pub layers: Vec<Layer>,
}

impl LstmArchitecture {
    /// Default stack: 200 LSTM units, 100 dense units.
    pub fn standard(id: ArchId) -> Self {
        Self::with_widths(id, DEFAULT_LSTM_UNITS, DEFAULT_DENSE_UNITS)
    }

    pub fn with_widths(id: ArchId, lstm_units: usize, dense_units: usize) -> Self {
        Self::with_activation(id, lstm_units, dense_units, Activation::Relu)
    }

    pub fn with_activation(id: ArchId, lstm_units: usize, dense_units: usize, act: Activation) -> Self {
        let layers = if id.is_encoder_decoder() {
            vec![
                Layer::Lstm { units: lstm_units, activation: act, return_sequences: false },
                Layer::Repeat { n: HORIZON },
                Layer::Lstm { units: lstm_units, activation: act, return_sequences: true },
                Layer::TimeDistributed { units: dense_units, activation: Activation::Relu },
                Layer::TimeDistributed { units: 1, activation: Activation::Identity },
            ]
        } else {
            vec![
                Layer::Lstm { units: lstm_units, activation: act, return_sequences: false },
                Layer::Dense { units: dense_units, activation: Activation::Relu },
                Layer::Dense { units: HORIZON, activation: Activation::Identity },
            ]
        };
        LstmArchitecture { id, input_steps: id.input_steps(), input_features: id.input_features(), layers }
    }

    /// `(5,)` for direct multi-output models, `(5, 1)` for encoder-decoders.
    pub fn output_shape(&self) -> Vec<usize> {
        if self.id.is_encoder_decoder() {
            vec![HORIZON, 1]
        } else {
            vec![HORIZON]
        }
    }

    /// Shape `(steps, features)` produced by each layer, checking that the
    /// stack ends in exactly five values.
    pub fn layer_shapes(&self) -> Result<Vec<(usize, usize)>> {
        let mut shape = (self.input_steps, self.input_features);
        let mut out = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            shape = match *layer {
                Layer::Lstm { units, return_sequences, .. } => (if return_sequences { shape.0 } else { 1 }, units),
                Layer::Repeat { n } => {
                    if shape.0 != 1 {
                        return Err(Error::shape(format!("layer {k}: repeat needs a single vector, got {shape:?}")));
                    }
                    (n, shape.1)
                }
                Layer::Dense { units, .. } => {
                    if shape.0 != 1 {
                        return Err(Error::shape(format!("layer {k}: dense needs a single vector, got {shape:?}")));
                    }
                    (1, units)
                }
                Layer::TimeDistributed { units, .. } => (shape.0, units),
            };
            out.push(shape);
        }
        if shape.0 * shape.1 != HORIZON {
            return Err(Error::shape(format!("stack ends in {shape:?}, need {HORIZON} outputs")));
        }
        Ok(out)
    }
}

/// A trained network in the shared versioned model format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub format_version: u32,
    pub family: ArchId,
    pub training: TrainingConfig,
    pub network: Network,
    pub scaler: ScalerParams,
}

impl LstmModel {
    pub fn new(network: Network, training: TrainingConfig, scaler: ScalerParams) -> Self {
        LstmModel { format_version: MODEL_FORMAT_VERSION, family: network.arch.id, training, network, scaler }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: LstmModel = serde_json::from_str(text)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!("unsupported model format version {}", m.format_version)));
        }
        if m.family != m.network.arch.id {
            return Err(Error::Schema(format!("family {} does not match weights for {}", m.family, m.network.arch.id)));
        }
        m.network.arch.layer_shapes()?;
        Ok(m)
    }
}
