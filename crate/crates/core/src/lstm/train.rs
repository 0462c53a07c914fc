use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::Network;
use super::windows::Sample;
use super::LstmArchitecture;
use crate::error::{Error, Result};
use crate::numcore::{AdamConfig, AdamState};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Fraction of the most recent samples held out for validation loss.
    pub validation_fraction: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig { epochs: 70, batch_size: 16, learning_rate: 0.001, seed: 0, validation_fraction: 0.0 }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Hyperparameter("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Hyperparameter(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Hyperparameter(format!("validation fraction {} outside [0, 1)", self.validation_fraction)));
        }
        Ok(())
    }
}

/// Mean per-sample loss for each epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub network: Network,
    pub history: LossHistory,
    /// Optimizer steps applied to each parameter tensor.
    pub steps: u64,
}

/// Mini-batch ADAM from a seeded initialization. Seeds drive both the
/// initial weights and the per-epoch shuffle order.
pub fn train(arch: &LstmArchitecture, samples: &[Sample], config: &TrainingConfig) -> Result<TrainOutcome> {
    let net = Network::init(arch, config.seed)?;
    train_from(net, samples, config)
}

/// Continues training an existing network.
pub fn train_from(mut net: Network, samples: &[Sample], config: &TrainingConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Size("no training samples".into()));
    }
    let held = if config.validation_fraction > 0.0 {
        ((samples.len() as f64 * config.validation_fraction).round() as usize).clamp(1, samples.len() - 1)
    } else {
        0
    };
    if held > 0 && samples.len() < 2 {
        return Err(Error::Size("validation split needs at least two samples".into()));
    }
    let (fit_set, val_set) = samples.split_at(samples.len() - held);

    let adam = AdamConfig::with_lr(config.learning_rate);
    let mut states: Vec<AdamState> = net.tensors().iter().map(|t| AdamState::new(t.len(), adam)).collect();
    let mut shuffle = rng::seeded_stream(config.seed, 1);
    let mut order: Vec<usize> = (0..fit_set.len()).collect();
    let mut history = LossHistory::default();
    let mut steps = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let diverged = || Error::Divergence { epoch, batch: Some(b + 1) };
            let mut grads = net.zero_grads();
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let s = &fit_set[i];
                loss_sum += net.accumulate(&s.window, &s.target, scale, &mut grads).map_err(|_| diverged())?;
            }
            if !grads.is_finite() {
                return Err(diverged());
            }
            let g = grads.tensors();
            for ((p, g), st) in net.tensors_mut().into_iter().zip(g).zip(&mut states) {
                st.step(p.as_mut_slice(), g.as_slice()).map_err(|_| diverged())?;
            }
            if !net.is_finite() {
                return Err(diverged());
            }
            steps += 1;
        }
        let mean = loss_sum / fit_set.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence { epoch, batch: None });
        }
        history.train.push(mean);
        if !val_set.is_empty() {
            let mut v = 0.0;
            for s in val_set {
                v += net.loss(&s.window, &s.target)?;
            }
            history.validation.push(v / val_set.len() as f64);
        }
    }
    Ok(TrainOutcome { network: net, history, steps })
}

#[cfg(test)]
mod tests {
    use super::super::ArchId;
    use super::*;
    use crate::numcore::Matrix;

    fn toy(arch: &LstmArchitecture, n: usize) -> Vec<Sample> {
        (0..n)
            .map(|k| {
                let base = 0.2 + 0.6 * ((k as f64) * 0.37).sin().abs();
                let data = (0..arch.input_steps * arch.input_features).map(|i| base + 0.01 * i as f64).collect();
                Sample {
                    week: k,
                    window: Matrix::from_vec(arch.input_steps, arch.input_features, data).unwrap(),
                    target: [base; 5],
                }
            })
            .collect()
    }

    #[test]
    fn same_seed_same_weights() {
        let arch = LstmArchitecture::with_widths(ArchId::Lstm1, 4, 3);
        let s = toy(&arch, 20);
        let cfg = TrainingConfig { epochs: 3, batch_size: 6, seed: 11, ..Default::default() };
        let a = train(&arch, &s, &cfg).unwrap();
        let b = train(&arch, &s, &cfg).unwrap();
        assert_eq!(a.network.fingerprint(), b.network.fingerprint());
        assert_eq!(a.history, b.history);
        let c = train(&arch, &s, &TrainingConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.network.fingerprint(), c.network.fingerprint());
    }

    #[test]
    fn loss_decreases() {
        for id in ArchId::ALL {
            let arch = LstmArchitecture::with_activation(id, 6, 4, crate::numcore::Activation::Tanh);
            let s = toy(&arch, 24);
            let cfg = TrainingConfig { epochs: 40, batch_size: 8, learning_rate: 0.01, seed: 3, ..Default::default() };
            let h = train(&arch, &s, &cfg).unwrap().history.train;
            assert!(h.last().unwrap() < &h[0], "{id}: {:?}", h);
        }
    }

    #[test]
    fn single_full_batch_is_one_step() {
        let arch = LstmArchitecture::with_widths(ArchId::Lstm3, 3, 3);
        let s = toy(&arch, 6);
        let cfg = TrainingConfig { epochs: 1, batch_size: 6, seed: 5, ..Default::default() };
        let before = Network::init(&arch, 5).unwrap().flat_params();
        let out = train(&arch, &s, &cfg).unwrap();
        assert_eq!(out.steps, 1);
        assert_eq!(out.history.train.len(), 1);
        // A first ADAM step moves each coordinate by at most the learning rate.
        for (a, b) in before.iter().zip(out.network.flat_params()) {
            assert!((a - b).abs() <= cfg.learning_rate * (1.0 + 1e-9));
        }
    }

    #[test]
    fn remainder_forms_last_batch() {
        let arch = LstmArchitecture::with_widths(ArchId::Lstm1, 2, 2);
        let cfg = TrainingConfig { epochs: 3, batch_size: 4, ..Default::default() };
        assert_eq!(train(&arch, &toy(&arch, 10), &cfg).unwrap().steps, 9);
    }

    #[test]
    fn learns_linear_trend() {
        let arch = LstmArchitecture::with_widths(ArchId::Lstm1, 16, 16);
        let series: Vec<f64> = (0..200).map(|i| 0.1 + 0.8 * i as f64 / 199.0).collect();
        let s: Vec<Sample> = (1..40)
            .map(|k| Sample {
                week: k,
                window: Matrix::from_vec(5, 1, series[5 * (k - 1)..5 * k].to_vec()).unwrap(),
                target: series[5 * k..5 * k + 5].try_into().unwrap(),
            })
            .collect();
        let cfg = TrainingConfig { epochs: 100, seed: 42, ..Default::default() };
        let h = train(&arch, &s, &cfg).unwrap().history.train;
        assert_eq!(h.len(), 100);
        assert!(h[99] < 0.01 * h[0], "{} vs {}", h[99], h[0]);
    }

    #[test]
    fn validation_tracked() {
        let arch = LstmArchitecture::with_widths(ArchId::Lstm1, 3, 3);
        let cfg = TrainingConfig { epochs: 2, validation_fraction: 0.2, ..Default::default() };
        let h = train(&arch, &toy(&arch, 10), &cfg).unwrap().history;
        assert_eq!(h.train.len(), 2);
        assert_eq!(h.validation.len(), 2);
    }

    #[test]
    fn exploding_inputs_diverge() {
        let arch = LstmArchitecture::with_widths(ArchId::Lstm1, 3, 3);
        let mut s = toy(&arch, 4);
        s[0].window.as_mut_slice().fill(1e300);
        let err = train(&arch, &s, &TrainingConfig { epochs: 2, ..Default::default() }).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 1, batch: Some(_) }), "{err}");
    }

    #[test]
    fn bad_config() {
        let arch = LstmArchitecture::with_widths(ArchId::Lstm1, 3, 3);
        for cfg in [
            TrainingConfig { epochs: 0, ..Default::default() },
            TrainingConfig { batch_size: 0, ..Default::default() },
            TrainingConfig { learning_rate: -1.0, ..Default::default() },
        ] {
            assert!(matches!(train(&arch, &toy(&arch, 4), &cfg), Err(Error::Hyperparameter(_))));
        }
    }
}
