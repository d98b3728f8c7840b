use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::train::DocTable;
use super::{context_mean, embedding_sum, euclidean, EncoderModel, LossConfig, MlmHead};
use crate::error::{Error, Result};
use crate::logistic::log_softmax;
use crate::masking::MaskedSequence;
use crate::triplets::{Triplet, TripletKind};

/// Gradients with the same shapes as the encoder and head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embeddings: Vec<f64>,
    pub projection: Vec<f64>,
    pub bias: Vec<f64>,
    pub output: Vec<f64>,
    pub output_bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Embeddings,
    Projection,
    Bias,
    Output,
    OutputBias,
}

impl ParamKind {
    pub const ALL: [ParamKind; 5] = [
        ParamKind::Embeddings,
        ParamKind::Projection,
        ParamKind::Bias,
        ParamKind::Output,
        ParamKind::OutputBias,
    ];

    pub fn params_mut<'a>(self, model: &'a mut EncoderModel, head: &'a mut MlmHead) -> &'a mut Vec<f64> {
        match self {
            ParamKind::Embeddings => &mut model.embeddings,
            ParamKind::Projection => &mut model.projection,
            ParamKind::Bias => &mut model.bias,
            ParamKind::Output => &mut head.output,
            ParamKind::OutputBias => &mut head.output_bias,
        }
    }
}

impl Gradients {
    pub fn zeros(model: &EncoderModel) -> Self {
        let (v, d) = (model.vocab_size, model.dim);
        Self {
            embeddings: vec![0.0; v * d],
            projection: vec![0.0; d * d],
            bias: vec![0.0; d],
            output: vec![0.0; d * v],
            output_bias: vec![0.0; v],
        }
    }

    pub fn clear(&mut self) {
        for v in [
            &mut self.embeddings,
            &mut self.projection,
            &mut self.bias,
            &mut self.output,
            &mut self.output_bias,
        ] {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn get(&self, kind: ParamKind) -> &[f64] {
        match kind {
            ParamKind::Embeddings => &self.embeddings,
            ParamKind::Projection => &self.projection,
            ParamKind::Bias => &self.bias,
            ParamKind::Output => &self.output,
            ParamKind::OutputBias => &self.output_bias,
        }
    }

    /// `params -= lr * grad`
    pub fn apply(&self, model: &mut EncoderModel, head: &mut MlmHead, lr: f64) {
        for kind in ParamKind::ALL {
            let g = self.get(kind);
            for (p, gi) in kind.params_mut(model, head).iter_mut().zip(g) {
                *p -= lr * gi;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        ParamKind::ALL.iter().all(|&k| self.get(k).iter().all(|x| x.is_finite()))
    }
}

/// Summed hinge losses of one triplet batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TripletLosses {
    pub ideology: f64,
    pub story: f64,
    pub ideology_count: usize,
    pub story_count: usize,
}

/// Push `gz` (gradient at a document embedding) back through projection and
/// mean pooling.
fn backprop_doc(model: &EncoderModel, ids: &[u32], u: &[f64], gz: &[f64], grad: &mut Gradients) {
    let d = model.dim;
    for i in 0..d {
        grad.bias[i] += gz[i];
        let row = &mut grad.projection[i * d..(i + 1) * d];
        for (g, x) in row.iter_mut().zip(u) {
            *g += gz[i] * x;
        }
    }
    let mut du = vec![0.0; d];
    for i in 0..d {
        let row = &model.projection[i * d..(i + 1) * d];
        for (acc, p) in du.iter_mut().zip(row) {
            *acc += p * gz[i];
        }
    }
    let n = ids.len() as f64;
    for &id in ids {
        let row = &mut grad.embeddings[id as usize * d..(id as usize + 1) * d];
        for (g, x) in row.iter_mut().zip(&du) {
            *g += x / n;
        }
    }
}

/// Unit direction `(a - b) / |a - b|`, zero at zero distance.
fn direction(a: &[f64], b: &[f64], dist: f64) -> Vec<f64> {
    if dist > 0.0 {
        a.iter().zip(b).map(|(x, y)| (x - y) / dist).collect()
    } else {
        vec![0.0; a.len()]
    }
}

/// Summed ideology and story hinge losses for a batch. Adds the gradient of
/// `scale * (beta * ideology + gamma * story)` to `grad`.
pub fn triplet_loss_and_grad(
    model: &EncoderModel,
    docs: &DocTable,
    triplets: &[Triplet],
    config: &LossConfig,
    scale: f64,
    grad: &mut Gradients,
) -> Result<TripletLosses> {
    let mut cache: BTreeMap<&str, (Vec<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for t in triplets {
        for id in [&t.anchor, &t.positive, &t.negative] {
            if !cache.contains_key(id.as_str()) {
                let ids = docs.get(id)?;
                let u = model.pool(ids);
                let z = model.project(&u);
                cache.insert(id, (u, z, vec![0.0; model.dim]));
            }
        }
    }

    let mut losses = TripletLosses::default();
    for t in triplets {
        let (margin, weight) = match t.kind {
            TripletKind::Ideology => (config.delta_ideo, config.beta),
            TripletKind::Story => (config.delta_story, config.gamma),
        };
        let (za, zp, zn) = (&cache[t.anchor.as_str()].1, &cache[t.positive.as_str()].1, &cache[t.negative.as_str()].1);
        let (dap, dan) = (euclidean(za, zp), euclidean(za, zn));
        let value = (dap - dan + margin).max(0.0);
        match t.kind {
            TripletKind::Ideology => {
                losses.ideology += value;
                losses.ideology_count += 1;
            }
            TripletKind::Story => {
                losses.story += value;
                losses.story_count += 1;
            }
        }
        if value <= 0.0 {
            continue;
        }
        let c = scale * weight;
        let up = direction(za, zp, dap);
        let un = direction(za, zn, dan);
        for k in 0..model.dim {
            cache.get_mut(t.anchor.as_str()).unwrap().2[k] += c * (up[k] - un[k]);
            cache.get_mut(t.positive.as_str()).unwrap().2[k] -= c * up[k];
            cache.get_mut(t.negative.as_str()).unwrap().2[k] += c * un[k];
        }
    }

    for (id, (u, _, gz)) in &cache {
        if gz.iter().any(|&g| g != 0.0) {
            backprop_doc(model, docs.get(id)?, u, gz, grad);
        }
    }
    Ok(losses)
}

fn check_sequence(seq: &MaskedSequence, vocab_size: usize) -> Result<()> {
    for (&p, &t) in &seq.targets {
        if p >= seq.input_ids.len() || t as usize >= vocab_size {
            return Err(Error::invalid(format!("{}: target {p} -> {t} out of range", seq.id)));
        }
    }
    if seq.input_ids.iter().any(|&x| x as usize >= vocab_size) {
        return Err(Error::invalid(format!("{}: input id out of range", seq.id)));
    }
    Ok(())
}

/// Mean cross-entropy over every masked position in the batch. Adds the
/// gradient of `scale * loss` to `grad`.
pub fn mlm_loss_and_grad(
    model: &EncoderModel,
    head: &MlmHead,
    seqs: &[MaskedSequence],
    scale: f64,
    grad: &mut Gradients,
) -> Result<f64> {
    let total: usize = seqs.iter().map(|s| s.targets.len()).sum();
    if total == 0 {
        return Err(Error::invalid("masked batch has no targets"));
    }
    let (d, v) = (model.dim, model.vocab_size);
    let c = scale / total as f64;
    let mut loss = 0.0;
    for seq in seqs {
        check_sequence(seq, v)?;
        let ids = &seq.input_ids;
        let sum = embedding_sum(model, ids);
        let denom = ids.len().saturating_sub(1) as f64;
        let mut shared = vec![0.0; d];
        let mut own: Vec<(usize, Vec<f64>)> = Vec::with_capacity(seq.targets.len());
        for (&i, &target) in &seq.targets {
            let ctx = context_mean(model, ids, &sum, i);
            let h = model.project(&ctx);
            let logp = log_softmax(&head.logits(&h));
            loss -= logp[target as usize];

            let mut g: Vec<f64> = logp.iter().map(|lp| c * lp.exp()).collect();
            g[target as usize] -= c;
            let mut dh = vec![0.0; d];
            for k in 0..d {
                let w = &head.output[k * v..(k + 1) * v];
                let gw = &mut grad.output[k * v..(k + 1) * v];
                let mut acc = 0.0;
                for j in 0..v {
                    gw[j] += h[k] * g[j];
                    acc += w[j] * g[j];
                }
                dh[k] = acc;
            }
            for (ob, gj) in grad.output_bias.iter_mut().zip(&g) {
                *ob += gj;
            }
            let dctx = backprop_projection_only(model, &ctx, &dh, grad);
            if denom == 0.0 {
                continue;
            }
            let scaled: Vec<f64> = dctx.iter().map(|x| x / denom).collect();
            for (s, x) in shared.iter_mut().zip(&scaled) {
                *s += x;
            }
            own.push((i, scaled));
        }
        if denom == 0.0 {
            continue;
        }
        // every position receives the shared term except from its own context
        for &id in ids {
            let row = &mut grad.embeddings[id as usize * d..(id as usize + 1) * d];
            for (g, s) in row.iter_mut().zip(&shared) {
                *g += s;
            }
        }
        for (i, scaled) in own {
            let id = ids[i] as usize;
            let row = &mut grad.embeddings[id * d..(id + 1) * d];
            for (g, s) in row.iter_mut().zip(&scaled) {
                *g -= s;
            }
        }
    }
    Ok(loss / total as f64)
}

/// Gradient through `h = P x + b` for P and b; returns `P^T dh`.
fn backprop_projection_only(model: &EncoderModel, x: &[f64], dh: &[f64], grad: &mut Gradients) -> Vec<f64> {
    let d = model.dim;
    let mut dx = vec![0.0; d];
    for i in 0..d {
        grad.bias[i] += dh[i];
        let grow = &mut grad.projection[i * d..(i + 1) * d];
        let prow = &model.projection[i * d..(i + 1) * d];
        for j in 0..d {
            grow[j] += dh[i] * x[j];
            dx[j] += prow[j] * dh[i];
        }
    }
    dx
}

/// `beta * ideology + gamma * story + (1 - beta - gamma) * mlm` over one
/// triplet batch and one masked batch, with its gradient.
pub fn combined_loss_and_grad(
    model: &EncoderModel,
    head: &MlmHead,
    docs: &DocTable,
    triplets: &[Triplet],
    seqs: &[MaskedSequence],
    config: &LossConfig,
) -> Result<(f64, Gradients)> {
    let mut grad = Gradients::zeros(model);
    let t = triplet_loss_and_grad(model, docs, triplets, config, 1.0, &mut grad)?;
    let mlm = mlm_loss_and_grad(model, head, seqs, config.mlm_weight(), &mut grad)?;
    Ok((super::combined_loss(t.ideology, t.story, mlm, config), grad))
}
