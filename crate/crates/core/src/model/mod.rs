//! Mean-pooled document encoder with triplet and masked-token objectives.
//!
//! A document embeds as `P * mean(E[ids]) + b`. The masked-token head scores
//! the vocabulary from the same map applied to the mean of every other
//! position's embedding.

mod grads;
mod train;

use std::path::Path;

use rand::seq::index;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logistic::log_softmax;
use crate::masking::MASK_ID;
use crate::{jsonl, seed};

pub use grads::{
    combined_loss_and_grad, mlm_loss_and_grad, triplet_loss_and_grad, Gradients, ParamKind, TripletLosses,
};
pub use train::{
    epoch_length, load_trace, save_trace, smoothed_combined_loss, train, DocTable, TraceRow, TrainConfig, TrainOutcome,
};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub dim: usize,
    pub vocab_size: usize,
    /// vocab_size x dim, row-major.
    pub embeddings: Vec<f64>,
    /// dim x dim, row-major.
    pub projection: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmHead {
    /// dim x vocab_size, row-major.
    pub output: Vec<f64>,
    pub output_bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub delta_ideo: f64,
    pub delta_story: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            delta_ideo: 0.5,
            delta_story: 1.0,
            beta: 0.25,
            gamma: 0.25,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta < 0.0 || self.gamma < 0.0 || self.beta + self.gamma > 1.0 {
            return Err(Error::Config(format!(
                "beta {} and gamma {} must be non-negative with sum at most 1",
                self.beta, self.gamma
            )));
        }
        if self.delta_ideo < 0.0 || self.delta_story < 0.0 {
            return Err(Error::Config("margins must be non-negative".into()));
        }
        Ok(())
    }

    pub fn mlm_weight(&self) -> f64 {
        1.0 - self.beta - self.gamma
    }
}

pub fn combined_loss(l_ideo: f64, l_story: f64, l_mlm: f64, config: &LossConfig) -> f64 {
    config.beta * l_ideo + config.gamma * l_story + config.mlm_weight() * l_mlm
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `[|a - p| - |a - n| + margin]+`
pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> f64 {
    (euclidean(a, p) - euclidean(a, n) + margin).max(0.0)
}

impl EncoderModel {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        Self {
            dim,
            vocab_size,
            embeddings: vec![0.0; vocab_size * dim],
            projection: vec![0.0; dim * dim],
            bias: vec![0.0; dim],
        }
    }

    /// Gaussian embeddings with standard deviation `INIT_STD`, identity
    /// projection, zero bias.
    pub fn init(vocab_size: usize, dim: usize, seed_value: u64) -> Self {
        let mut m = Self::zeros(vocab_size, dim);
        let mut rng = seed::rng(seed_value, "model/init");
        let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
        m.embeddings.iter_mut().for_each(|x| *x = normal.sample(&mut rng));
        for i in 0..dim {
            m.projection[i * dim + i] = 1.0;
        }
        m
    }

    pub fn embedding(&self, id: u32) -> &[f64] {
        let d = self.dim;
        &self.embeddings[id as usize * d..(id as usize + 1) * d]
    }

    /// Mean of token embeddings.
    pub fn pool(&self, ids: &[u32]) -> Vec<f64> {
        let mut u = vec![0.0; self.dim];
        for &id in ids {
            for (x, e) in u.iter_mut().zip(self.embedding(id)) {
                *x += e;
            }
        }
        let n = ids.len().max(1) as f64;
        u.iter_mut().for_each(|x| *x /= n);
        u
    }

    /// `P * u + b`
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| {
                let row = &self.projection[i * d..(i + 1) * d];
                row.iter().zip(u).map(|(p, x)| p * x).sum::<f64>() + self.bias[i]
            })
            .collect()
    }

    pub fn doc_embed(&self, ids: &[u32]) -> Result<Vec<f64>> {
        if ids.is_empty() {
            return Err(Error::invalid("cannot embed an empty document"));
        }
        Ok(self.project(&self.pool(ids)))
    }

    pub fn is_finite(&self) -> bool {
        self.embeddings
            .iter()
            .chain(&self.projection)
            .chain(&self.bias)
            .all(|x| x.is_finite())
    }
}

impl MlmHead {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        Self {
            output: vec![0.0; dim * vocab_size],
            output_bias: vec![0.0; vocab_size],
        }
    }

    /// `O^T h + ob`
    pub fn logits(&self, h: &[f64]) -> Vec<f64> {
        let v = self.output_bias.len();
        let mut out = self.output_bias.clone();
        for (k, &hk) in h.iter().enumerate() {
            let row = &self.output[k * v..(k + 1) * v];
            for (o, w) in out.iter_mut().zip(row) {
                *o += hk * w;
            }
        }
        out
    }
}

/// Context mean for position `i`: mean embedding of every other position,
/// zero for a single-token sequence.
pub(crate) fn context_mean(model: &EncoderModel, ids: &[u32], sum: &[f64], i: usize) -> Vec<f64> {
    if ids.len() <= 1 {
        return vec![0.0; model.dim];
    }
    let e = model.embedding(ids[i]);
    let n = (ids.len() - 1) as f64;
    sum.iter().zip(e).map(|(s, x)| (s - x) / n).collect()
}

pub(crate) fn embedding_sum(model: &EncoderModel, ids: &[u32]) -> Vec<f64> {
    let mut s = vec![0.0; model.dim];
    for &id in ids {
        for (x, e) in s.iter_mut().zip(model.embedding(id)) {
            *x += e;
        }
    }
    s
}

/// `exp(-mean log p(original))` over up to `n_positions` positions sampled
/// without replacement, each masked alone.
pub fn pseudo_perplexity(
    model: &EncoderModel,
    head: &MlmHead,
    ids: &[u32],
    n_positions: usize,
    seed_value: u64,
    label: &str,
) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::invalid("pseudo-perplexity needs at least one token"));
    }
    let mut rng = seed::rng(seed_value, &format!("ppl/{label}"));
    let mut positions = index::sample(&mut rng, ids.len(), n_positions.min(ids.len())).into_vec();
    positions.sort_unstable();
    let mut masked = ids.to_vec();
    let mut total = 0.0;
    for &i in &positions {
        masked[i] = MASK_ID;
        let sum = embedding_sum(model, &masked);
        let h = model.project(&context_mean(model, &masked, &sum, i));
        total += log_softmax(&head.logits(&h))[ids[i] as usize];
        masked[i] = ids[i];
    }
    Ok((-total / positions.len() as f64).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub vocab_hash: String,
    pub encoder: EncoderModel,
    pub head: MlmHead,
}

impl Checkpoint {
    pub fn new(encoder: EncoderModel, head: MlmHead, vocab_hash: impl Into<String>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            vocab_hash: vocab_hash.into(),
            encoder,
            head,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Checkpoint = jsonl::read_json(path)?;
        let (v, d) = (c.encoder.vocab_size, c.encoder.dim);
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!("unsupported checkpoint version {}", c.version)));
        }
        if c.encoder.embeddings.len() != v * d
            || c.encoder.projection.len() != d * d
            || c.encoder.bias.len() != d
            || c.head.output.len() != d * v
            || c.head.output_bias.len() != v
        {
            return Err(Error::invalid(format!("{}: parameter shapes do not match", path.display())));
        }
        Ok(c)
    }
}
