use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::Tensor;
use super::network::{loss_and_grad, FpnModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub window_s: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window_s: 20.0,
            learning_rate: 1e-3,
            batch_size: 8,
            epochs: 30,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.window_s > 0.0
            && self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && self.batch_size > 0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad training config {self:?}")))
        }
    }
}

/// One training window: standardized inputs, standardized reference
/// waveform on the frame grid and scaled biomarker targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub input: Tensor,
    pub ppg: Vec<f64>,
    pub biomarkers: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(num_params: usize) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Parameters stay representable in single precision after every step.
    fn apply(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let b1t = 1.0 - cfg.beta1.powi(self.step as i32);
        let b2t = 1.0 - cfg.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let upd = cfg.learning_rate * (self.m[i] / b1t) / ((self.v[i] / b2t).sqrt() + cfg.epsilon);
            params[i] = (params[i] - upd) as f32 as f64;
        }
    }
}

/// Mean loss and mean parameter gradient over a batch.
pub fn batch_gradient(model: &FpnModel, batch: &[TrainSample]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let mut grad = vec![0.0; model.num_params()];
    let mut total = 0.0;
    for s in batch {
        let (out, cache) = model.forward_cached(&s.input)?;
        let (l, d_ppg, d_bio) = loss_and_grad(&out, &s.ppg, &s.biomarkers)?;
        let g = model.backward(&cache, &d_ppg, &d_bio);
        total += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((total / n, grad))
}

/// One Adam update on a batch; returns the pre-update loss.
pub fn backward_step(model: &mut FpnModel, adam: &mut Adam, batch: &[TrainSample], cfg: &TrainConfig) -> Result<f64> {
    let (l, grad) = batch_gradient(model, batch)?;
    if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss {
            step: (adam.step + 1) as usize,
            detail: format!("loss {l}"),
        });
    }
    adam.apply(model.params_mut(), &grad, cfg);
    Ok(l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: u64,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
}

pub fn mean_loss(model: &FpnModel, samples: &[TrainSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let out = model.forward(&s.input)?;
        total += super::network::loss(&out, &s.ppg, &s.biomarkers)?;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Shuffled mini-batch training. `on_epoch` sees every record as it is
/// produced.
pub fn train(
    model: &mut FpnModel,
    train_set: &[TrainSample],
    val_set: &[TrainSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InsufficientData("no training windows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.num_params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainSample> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            total += backward_step(model, &mut adam, &batch, cfg)? * chunk.len() as f64;
        }
        let rec = EpochRecord {
            epoch: epoch + 1,
            steps: adam.step_count(),
            train_loss: total / train_set.len() as f64,
            val_loss: if val_set.is_empty() {
                None
            } else {
                Some(mean_loss(model, val_set)?)
            },
        };
        on_epoch(&rec);
        log.push(rec);
    }
    Ok(log)
}
