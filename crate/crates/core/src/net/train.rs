use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::masked_cosine_loss_grad;
use super::model::{NetConfig, Network};
use super::{build_input, Model};
use crate::calibration::IndentationSample;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Multiplicative learning-rate decay applied after every epoch.
    pub lr_decay_per_epoch: f64,
    pub weight_decay: f64,
    /// Samples whose gradients are averaged into one optimizer step.
    pub grad_accum: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 1e-3,
            lr_decay_per_epoch: 0.95,
            weight_decay: 1e-5,
            grad_accum: 32,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grad_accum == 0 || !(self.lr >= 0.0) || !(self.lr_decay_per_epoch > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("training hyper-parameters out of range"));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay_per_epoch.powi(epoch as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

/// Adaptive-moment optimizer with coupled L2 weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
}

impl Adam {
    pub fn new(net: &Model, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Vec<f32>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
        }
    }

    pub fn step(&mut self, net: &mut Model, grads: &[Vec<f32>], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let step = (lr / bc1) as f32;
        let sqrt_bc2 = bc2.sqrt() as f32;
        let (eps, wd) = (self.eps as f32, self.weight_decay as f32);
        for (((p, g), m), v) in net.params_mut().into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let gi = g[i] + wd * p[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                p[i] -= step * m[i] / (v[i].sqrt() / sqrt_bc2 + eps);
            }
        }
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochLoss>,
}

/// Masked-cosine loss and parameter gradients of one sample (training mode).
pub fn sample_loss_grad(net: &mut Model, sample: &IndentationSample) -> Result<(f64, Vec<Vec<f32>>)> {
    let x = build_input(&sample.image, &sample.untouched)?;
    let (out, cache) = net.forward_train(&x)?;
    let (loss, dout) = masked_cosine_loss_grad(&out, &sample.gt_normals, &sample.mask)?;
    Ok((loss, net.backward(&cache, &dout)))
}

/// Trains from a seeded initialization. Samples are visited in a seeded
/// per-epoch shuffle; gradients of `grad_accum` consecutive samples are
/// averaged into one step, and a partial group at the end of an epoch still
/// takes a step.
pub fn train(samples: &[&IndentationSample], net_cfg: NetConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(samples, Network::init(net_cfg, cfg.seed)?, cfg, |_| {})
}

pub fn train_with(
    samples: &[&IndentationSample],
    mut net: Model,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM);
    let mut adam = Adam::new(&net, cfg);
    let mut acc: Vec<Vec<f32>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut pending = 0usize;
        let mut total = 0.0;
        for (j, &idx) in order.iter().enumerate() {
            let (loss, grads) = sample_loss_grad(&mut net, samples[idx])?;
            if !loss.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFiniteLoss { epoch, sample: idx });
            }
            total += loss;
            for (a, g) in acc.iter_mut().zip(&grads) {
                for (x, y) in a.iter_mut().zip(g) {
                    *x += *y;
                }
            }
            pending += 1;
            if pending == cfg.grad_accum || j + 1 == order.len() {
                let scale = 1.0 / pending as f32;
                acc.iter_mut().flatten().for_each(|v| *v *= scale);
                adam.step(&mut net, &acc, lr);
                acc.iter_mut().flatten().for_each(|v| *v = 0.0);
                pending = 0;
            }
        }
        let rec = EpochLoss {
            epoch,
            mean_loss: total / samples.len() as f64,
            lr,
        };
        on_epoch(&rec);
        history.push(rec);
    }
    Ok(TrainOutcome { model: net, history })
}

// Keeps the shuffle stream distinct from the initialization stream.
const SHUFFLE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// Mean masked loss of a model in inference mode.
pub fn evaluate(net: &Model, samples: &[&IndentationSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let mut total = 0.0;
    for s in samples {
        let out = net.forward(&build_input(&s.image, &s.untouched)?)?;
        total += masked_cosine_loss_grad(&out, &s.gt_normals, &s.mask)?.0;
    }
    Ok(total / samples.len() as f64)
}

pub fn write_loss_csv(path: &Path, history: &[EpochLoss]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for rec in history {
        w.serialize(rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
