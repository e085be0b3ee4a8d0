//! Minibatch Adam on the FCDD loss.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::augment::augment;
use super::head::{gradient, DEFAULT_LOSS_EPSILON};
use super::net::NetworkWeights;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::rng::{domain, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub augment_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub loss_clamp_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 30,
            augment_fraction: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            loss_clamp_epsilon: DEFAULT_LOSS_EPSILON,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..=1.0).contains(&self.augment_fraction) {
            return bad("augment_fraction must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_epsilon > 0.0) {
            return bad("Adam moments need beta in [0, 1) and epsilon > 0");
        }
        if !(self.loss_clamp_epsilon > 0.0 && self.loss_clamp_epsilon <= 1e-3) {
            return bad("loss_clamp_epsilon must lie in (0, 1e-3]");
        }
        Ok(())
    }
}

/// Adam state, one moment pair per parameter in [`NetworkWeights::params`]
/// order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            epsilon,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, weights: &mut NetworkWeights, grad: &NetworkWeights) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((w, &g), m), v) in weights
            .params_mut()
            .zip(grad.params())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: NetworkWeights,
    /// Mean minibatch loss per epoch.
    pub loss_trace: Vec<f64>,
}

/// `epoch,loss` CSV with 1-based epochs.
pub fn loss_csv(trace: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in trace.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, l));
    }
    out
}

impl TrainOutcome {
    pub fn loss_csv(&self) -> String {
        loss_csv(&self.loss_trace)
    }

    pub fn write_loss_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.loss_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Trains the default architecture initialized from `config.seed`.
pub fn train(dataset: &[Frame], config: &TrainConfig) -> Result<TrainOutcome> {
    train_from(NetworkWeights::default_init(config.seed), dataset, config)
}

/// Trains `weights` in place on `dataset`.
///
/// Each epoch shuffles the data and, independently per image, replaces it by
/// an augmented copy with probability `augment_fraction`.
pub fn train_from(mut weights: NetworkWeights, dataset: &[Frame], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    weights.validate()?;
    let anomalies = dataset.iter().filter(|f| f.label.is_anomaly()).count();
    if anomalies == 0 || anomalies == dataset.len() {
        return Err(Error::Config(format!(
            "training needs both classes ({} normal, {anomalies} anomalous)",
            dataset.len() - anomalies
        )));
    }
    for f in dataset {
        weights.output_dims(f.height, f.width)?;
    }
    let mut adam = Adam::new(
        weights.num_params(),
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.adam_epsilon,
    );
    let n = dataset.len() as u64;
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs as u64 {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut substream(config.seed, domain::SHUFFLE, epoch));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Frame> = chunk
                .iter()
                .map(|&i| {
                    let draw = epoch * n + i as u64;
                    let mut rng = substream(config.seed, domain::AUGMENT, draw);
                    if rng.random::<f64>() < config.augment_fraction {
                        augment(&dataset[i], rng.random())
                    } else {
                        dataset[i].clone()
                    }
                })
                .collect();
            let (l, g) = gradient(&batch, &weights, config.loss_clamp_epsilon)?;
            epoch_loss += l * batch.len() as f64;
            adam.step(&mut weights, &g);
        }
        trace.push(epoch_loss / dataset.len() as f64);
    }
    Ok(TrainOutcome {
        weights,
        loss_trace: trace,
    })
}
