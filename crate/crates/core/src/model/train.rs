use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::grads::{mlm_loss_and_grad, triplet_loss_and_grad, Gradients};
use super::{EncoderModel, LossConfig, MlmHead};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::masking::{MaskedSequence, Vocabulary};
use crate::seed;
use crate::triplets::{batch_triplets, Triplet};

/// Encoded, truncated token ids per article.
#[derive(Debug, Clone, Default)]
pub struct DocTable {
    docs: HashMap<String, Vec<u32>>,
}

impl DocTable {
    pub fn build(corpus: &Corpus, vocab: &Vocabulary, max_len: usize) -> Self {
        let docs = corpus
            .iter()
            .map(|a| {
                let n = a.tokens().len().min(max_len);
                (a.id.clone(), vocab.encode(&a.tokens()[..n]))
            })
            .collect();
        Self { docs }
    }

    pub fn insert(&mut self, id: impl Into<String>, ids: Vec<u32>) {
        self.docs.insert(id.into(), ids);
    }

    pub fn get(&self, id: &str) -> Result<&[u32]> {
        self.docs
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownArticle(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    #[default]
    Alternating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub mlm_batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub schedule: Schedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            steps: 500,
            batch_size: 32,
            mlm_batch_size: 8,
            learning_rate: 0.1,
            seed: 0,
            schedule: Schedule::Alternating,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.batch_size == 0 || self.mlm_batch_size == 0 {
            return Err(Error::Config("dim and batch sizes must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and non-negative", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub kind: String,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub encoder: EncoderModel,
    pub head: MlmHead,
    pub trace: Vec<TraceRow>,
}

/// Endless reshuffled pass over triplet batches.
struct TripletStream<'a> {
    triplets: &'a [Triplet],
    batch_size: usize,
    seed: u64,
    epoch: u64,
    batches: Vec<Vec<Triplet>>,
    next: usize,
}

impl TripletStream<'_> {
    fn next_batch(&mut self) -> Result<Vec<Triplet>> {
        if self.next >= self.batches.len() {
            let s = seed::derive(self.seed, &format!("train/triplets/{}", self.epoch));
            self.batches = batch_triplets(self.triplets, self.batch_size, s, None)?;
            self.epoch += 1;
            self.next = 0;
        }
        self.next += 1;
        Ok(self.batches[self.next - 1].clone())
    }
}

struct MaskedStream<'a> {
    seqs: Vec<&'a MaskedSequence>,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    next: usize,
}

impl<'a> MaskedStream<'a> {
    fn next_batch(&mut self) -> Vec<MaskedSequence> {
        if self.next >= self.order.len() {
            self.order = (0..self.seqs.len()).collect();
            self.order
                .shuffle(&mut seed::rng(self.seed, &format!("train/mlm/{}", self.epoch)));
            self.epoch += 1;
            self.next = 0;
        }
        let end = (self.next + self.batch_size).min(self.order.len());
        let batch = self.order[self.next..end].iter().map(|&i| self.seqs[i].clone()).collect();
        self.next = end;
        batch
    }
}

/// Alternating fixed-rate gradient descent: odd steps update on a triplet
/// batch, even steps on a masked batch.
pub fn train(
    encoder: EncoderModel,
    head: MlmHead,
    docs: &DocTable,
    triplets: &[Triplet],
    masked: &[MaskedSequence],
    config: &TrainConfig,
    loss_config: &LossConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    loss_config.validate()?;
    let usable: Vec<&MaskedSequence> = masked.iter().filter(|s| !s.targets.is_empty()).collect();
    if triplets.is_empty() {
        return Err(Error::invalid("training needs at least one triplet"));
    }
    if usable.is_empty() {
        return Err(Error::invalid("training needs at least one masked sequence"));
    }
    let mut encoder = encoder;
    let mut head = head;
    let mut trace = Vec::with_capacity(config.steps * 2);
    let mut tstream = TripletStream {
        triplets,
        batch_size: config.batch_size,
        seed: config.seed,
        epoch: 0,
        batches: Vec::new(),
        next: 0,
    };
    let mut mstream = MaskedStream {
        seqs: usable,
        batch_size: config.mlm_batch_size,
        seed: config.seed,
        epoch: 0,
        order: Vec::new(),
        next: 0,
    };
    let mut grad = Gradients::zeros(&encoder);

    for step in 1..=config.steps {
        grad.clear();
        let weighted = if step % 2 == 1 {
            let batch = tstream.next_batch()?;
            let l = triplet_loss_and_grad(&encoder, docs, &batch, loss_config, 1.0, &mut grad)?;
            trace.push(TraceRow { step, kind: "ideology".into(), loss: l.ideology });
            trace.push(TraceRow { step, kind: "story".into(), loss: l.story });
            loss_config.beta * l.ideology + loss_config.gamma * l.story
        } else {
            let batch = mstream.next_batch();
            let w = loss_config.mlm_weight();
            let l = mlm_loss_and_grad(&encoder, &head, &batch, w, &mut grad)?;
            trace.push(TraceRow { step, kind: "mlm".into(), loss: l });
            w * l
        };
        if !weighted.is_finite() || !grad.is_finite() {
            return Err(Error::Diverged { step, loss: weighted });
        }
        if config.learning_rate > 0.0 {
            grad.apply(&mut encoder, &mut head, config.learning_rate);
        }
        if !encoder.is_finite() {
            return Err(Error::Diverged { step, loss: weighted });
        }
    }
    Ok(TrainOutcome { encoder, head, trace })
}

/// Steps in one pass over the triplet batches, counting the interleaved
/// masked steps.
pub fn epoch_length(n_triplets: usize, batch_size: usize) -> usize {
    2 * n_triplets.div_ceil(batch_size.max(1)).max(1)
}

/// Combined loss per epoch of `epoch_steps` steps: the component losses are
/// averaged over the epoch's steps and then mixed with beta and gamma.
/// A trailing partial epoch is dropped.
pub fn smoothed_combined_loss(trace: &[TraceRow], epoch_steps: usize, config: &LossConfig) -> Vec<f64> {
    let last = trace.iter().map(|r| r.step).max().unwrap_or(0);
    let epochs = last / epoch_steps.max(1);
    let mut sums = vec![[0.0f64; 3]; epochs];
    let mut counts = vec![[0usize; 3]; epochs];
    for r in trace {
        let e = (r.step - 1) / epoch_steps;
        if e >= epochs {
            continue;
        }
        let k = match r.kind.as_str() {
            "ideology" => 0,
            "story" => 1,
            _ => 2,
        };
        sums[e][k] += r.loss;
        counts[e][k] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, c)| {
            let mean = |k: usize| if c[k] == 0 { 0.0 } else { s[k] / c[k] as f64 };
            super::combined_loss(mean(0), mean(1), mean(2), config)
        })
        .collect()
}

/// CSV with header `step,kind,loss`.
pub fn save_trace(trace: &[TraceRow], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut out = String::from("step,kind,loss\n");
    for r in trace {
        out.push_str(&format!("{},{},{}\n", r.step, r.kind, r.loss));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let malformed = |m: &str| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: m.to_string(),
        };
        let mut parts = line.split(',');
        let (Some(s), Some(k), Some(l), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(malformed("expected step,kind,loss"));
        };
        rows.push(TraceRow {
            step: s.parse().map_err(|_| malformed("bad step"))?,
            kind: k.to_string(),
            loss: l.parse().map_err(|_| malformed("bad loss"))?,
        });
    }
    Ok(rows)
}
