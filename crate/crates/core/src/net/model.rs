use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::{BatchNorm2d, BnCache, Conv2d};
use super::scalar::{Scalar, Tensor};
use crate::{Error, Result};

/// Channels of the network input: image, untouched image, u, v.
pub const INPUT_CHANNELS: usize = 8;
pub const OUTPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub blocks: usize,
    pub channels_per_block: usize,
    pub kernel: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            blocks: 2,
            channels_per_block: 64,
            kernel: 3,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.channels_per_block == 0 {
            return Err(Error::invalid("network needs at least one block and one channel"));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::invalid(format!("kernel size {} must be odd", self.kernel)));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Conv → BN → ReLU blocks followed by a conv head to three channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub config: NetConfig,
    pub blocks: Vec<(Conv2d<T>, BatchNorm2d<T>)>,
    pub head: Conv2d<T>,
}

/// Activations kept for the backward pass.
pub struct TrainCache<T> {
    /// `acts[0]` is the input, `acts[b + 1]` the output of block `b`.
    acts: Vec<Tensor<T>>,
    bn: Vec<BnCache<T>>,
}

impl<T: Scalar> TrainCache<T> {
    /// Which hidden activations are clipped by the rectifiers.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.acts[1..]
            .iter()
            .flat_map(|a| a.data.iter().map(|&v| v > T::zero()))
            .collect()
    }
}

impl<T: Scalar> Network<T> {
    /// All parameters zero, normalization at its identity state.
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let c = config.channels_per_block;
        let k = config.kernel;
        let blocks = (0..config.blocks)
            .map(|b| {
                let cin = if b == 0 { INPUT_CHANNELS } else { c };
                (Conv2d::zeros(cin, c, k), BatchNorm2d::new(c))
            })
            .collect();
        Ok(Self {
            config,
            blocks,
            head: Conv2d::zeros(c, OUTPUT_CHANNELS, k),
        })
    }

    /// Uniform `±1/sqrt(fan_in)` initialization of kernels and biases.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |conv: &mut Conv2d<T>| {
            let bound = 1.0 / ((conv.cin * conv.k * conv.k) as f64).sqrt();
            for v in conv.weight.iter_mut().chain(conv.bias.iter_mut()) {
                *v = T::of(rng.random_range(-bound..bound));
            }
        };
        for (conv, _) in &mut net.blocks {
            fill(conv);
        }
        fill(&mut net.head);
        Ok(net)
    }

    /// Inference pass using running normalization statistics.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.c != INPUT_CHANNELS {
            return Err(Error::dims(format!("{INPUT_CHANNELS} input channels"), x.c));
        }
        let mut a = x.clone();
        for (conv, bn) in &self.blocks {
            let mut y = bn.forward_eval(&conv.forward(&a));
            relu(&mut y);
            a = y;
        }
        Ok(self.head.forward(&a))
    }

    /// Training pass with batch statistics (updates running estimates).
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, TrainCache<T>)> {
        if x.c != INPUT_CHANNELS {
            return Err(Error::dims(format!("{INPUT_CHANNELS} input channels"), x.c));
        }
        let mut acts = vec![x.clone()];
        let mut bns = Vec::with_capacity(self.blocks.len());
        for (conv, bn) in &mut self.blocks {
            let z = conv.forward(acts.last().expect("input present"));
            let (mut y, cache) = bn.forward_train(&z);
            relu(&mut y);
            bns.push(cache);
            acts.push(y);
        }
        let out = self.head.forward(acts.last().expect("block output"));
        Ok((out, TrainCache { acts, bn: bns }))
    }

    /// Gradients of every parameter, in [`Network::params`] order.
    pub fn backward(&self, cache: &TrainCache<T>, dout: &Tensor<T>) -> Vec<Vec<T>> {
        let mut grads: Vec<Vec<T>> = self.params().iter().map(|p| vec![T::zero(); p.len()]).collect();
        let nb = self.blocks.len();
        let (head_w, head_b) = (4 * nb, 4 * nb + 1);
        let (gw, rest) = grads.split_at_mut(head_b);
        let mut d = self
            .head
            .backward(&cache.acts[nb], dout, &mut gw[head_w], &mut rest[0], true)
            .expect("head input gradient");
        for b in (0..nb).rev() {
            let (conv, bn) = &self.blocks[b];
            let out = &cache.acts[b + 1];
            for (g, &y) in d.data.iter_mut().zip(&out.data) {
                if y <= T::zero() {
                    *g = T::zero();
                }
            }
            let base = 4 * b;
            let (lo, hi) = grads.split_at_mut(base + 2);
            let (gg, gbeta) = hi.split_at_mut(1);
            let dz = bn.backward(&cache.bn[b], &d, &mut gg[0], &mut gbeta[0]);
            let (gw, gb) = lo[base..].split_at_mut(1);
            match conv.backward(&cache.acts[b], &dz, &mut gw[0], &mut gb[0], b > 0) {
                Some(dx) => d = dx,
                None => break,
            }
        }
        grads
    }

    /// Trainable parameters: per block kernel, bias, gamma, beta; then the
    /// head kernel and bias.
    pub fn params(&self) -> Vec<&Vec<T>> {
        let mut v = Vec::with_capacity(4 * self.blocks.len() + 2);
        for (conv, bn) in &self.blocks {
            v.extend([&conv.weight, &conv.bias, &bn.gamma, &bn.beta]);
        }
        v.extend([&self.head.weight, &self.head.bias]);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut v = Vec::with_capacity(4 * self.blocks.len() + 2);
        for (conv, bn) in &mut self.blocks {
            v.push(&mut conv.weight);
            v.push(&mut conv.bias);
            v.push(&mut bn.gamma);
            v.push(&mut bn.beta);
        }
        v.push(&mut self.head.weight);
        v.push(&mut self.head.bias);
        v
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for b in 0..self.blocks.len() {
            for p in ["conv.weight", "conv.bias", "bn.gamma", "bn.beta"] {
                v.push(format!("block{b}.{p}"));
            }
        }
        v.push("head.weight".into());
        v.push("head.bias".into());
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let cv = |v: &Vec<T>| v.iter().map(|x| U::of(x.f64())).collect::<Vec<U>>();
        let conv = |c: &Conv2d<T>| Conv2d {
            cin: c.cin,
            cout: c.cout,
            k: c.k,
            weight: cv(&c.weight),
            bias: cv(&c.bias),
        };
        Network {
            config: self.config,
            blocks: self
                .blocks
                .iter()
                .map(|(c, bn)| {
                    (
                        conv(c),
                        BatchNorm2d {
                            gamma: cv(&bn.gamma),
                            beta: cv(&bn.beta),
                            running_mean: cv(&bn.running_mean),
                            running_var: cv(&bn.running_var),
                            momentum: bn.momentum,
                            eps: bn.eps,
                        },
                    )
                })
                .collect(),
            head: conv(&self.head),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
            && self
                .blocks
                .iter()
                .all(|(_, bn)| bn.running_mean.iter().chain(&bn.running_var).all(|v| v.is_finite()))
    }
}

fn relu<T: Scalar>(t: &mut Tensor<T>) {
    for v in &mut t.data {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}
