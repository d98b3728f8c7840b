//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use newsalign::alignment::AlignConfig;
use newsalign::annotate::AnnotationSet;
use newsalign::model::{EncoderModel, LossConfig, MlmHead};
use newsalign::masking::MaskedSequence;
use newsalign::text::{self, TokenizerConfig};
use newsalign::triplets::{Triplet, TripletKind};
use newsalign::{Article, Corpus, Ideology};

/// Title tokens plus the tokens of the first `n` body sentences, computed
/// from the raw text.
pub fn scope_tokens(a: &Article, n: usize) -> Vec<String> {
    let cfg = TokenizerConfig::default();
    let mut out = text::tokenize(&a.title, &cfg);
    let mut left = n;
    for p in &a.paragraphs {
        for s in text::split_sentences(p) {
            if left == 0 {
                return out;
            }
            out.extend(text::tokenize(s, &cfg));
            left -= 1;
        }
    }
    out
}

/// Dense TF-IDF vectors (smoothed idf, L2-normalized, stopwords removed)
/// and entity-word multisets for every article.
pub struct DenseOracle {
    pub vectors: Vec<Vec<f64>>,
    pub bags: Vec<BTreeMap<String, u32>>,
}

impl DenseOracle {
    pub fn build(corpus: &Corpus, ann: &AnnotationSet, cfg: &AlignConfig) -> Self {
        let scopes: Vec<Vec<String>> = corpus
            .iter()
            .map(|a| {
                scope_tokens(a, cfg.sim_scope_sentences)
                    .into_iter()
                    .filter(|t| !text::is_stopword(t))
                    .collect()
            })
            .collect();
        let vocab: Vec<String> = scopes.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let n = corpus.len() as f64;
        let idf: Vec<f64> = vocab
            .iter()
            .map(|t| {
                let df = scopes.iter().filter(|s| s.contains(t)).count() as f64;
                ((1.0 + n) / (1.0 + df)).ln() + 1.0
            })
            .collect();
        let vectors = scopes
            .iter()
            .map(|s| {
                let mut v: Vec<f64> = vocab
                    .iter()
                    .zip(&idf)
                    .map(|(t, w)| s.iter().filter(|x| *x == t).count() as f64 * w)
                    .collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                }
                v
            })
            .collect();
        let bags = corpus
            .iter()
            .map(|a| {
                let end = scope_tokens(a, cfg.sim_scope_sentences).len();
                let mut b = BTreeMap::new();
                for s in ann.entities_for(&a.id) {
                    if s.start_token < end {
                        for w in &a.tokens()[s.start_token..s.end_token] {
                            if !text::is_stopword(w) {
                                *b.entry(w.clone()).or_insert(0) += 1;
                            }
                        }
                    }
                }
                b
            })
            .collect();
        Self { vectors, bags }
    }

    pub fn similarity(&self, i: usize, j: usize, alpha: f64) -> f64 {
        let cos: f64 = self.vectors[i].iter().zip(&self.vectors[j]).map(|(x, y)| x * y).sum();
        alpha * cos + (1.0 - alpha) * multiset_jaccard(&self.bags[i], &self.bags[j])
    }
}

pub fn multiset_jaccard(a: &BTreeMap<String, u32>, b: &BTreeMap<String, u32>) -> f64 {
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for k in keys {
        let (x, y) = (*a.get(k).unwrap_or(&0) as f64, *b.get(k).unwrap_or(&0) as f64);
        num += x.min(y);
        den += x.max(y);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Every ordered (anchor, positive, negative) over distinct members: anchor
/// and positive share Left or Right, negative holds the opposite side.
pub fn enumerate_ideology_triplets(members: &[(String, Ideology)]) -> BTreeSet<(String, String, String)> {
    let mut out = BTreeSet::new();
    for (a, ia) in members {
        for (p, ip) in members {
            for (n, ineg) in members {
                let side = matches!(ia, Ideology::Left | Ideology::Right);
                let opposite = matches!(
                    (ia, ineg),
                    (Ideology::Left, Ideology::Right) | (Ideology::Right, Ideology::Left)
                );
                if a != p && side && ia == ip && opposite {
                    out.insert((a.clone(), p.clone(), n.clone()));
                }
            }
        }
    }
    out
}

/// Unit-cost edit distance by the full dynamic-programming table.
pub fn edit_distance(a: &[char], b: &[char]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in t.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        t[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = t[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            t[i][j] = sub.min(t[i - 1][j] + 1).min(t[i][j - 1] + 1);
        }
    }
    t[a.len()][b.len()]
}

pub fn oracle_embed(m: &EncoderModel, ids: &[u32]) -> Vec<f64> {
    let d = m.dim;
    let mut mean = vec![0.0; d];
    for &id in ids {
        for k in 0..d {
            mean[k] += m.embeddings[id as usize * d + k] / ids.len() as f64;
        }
    }
    (0..d)
        .map(|i| (0..d).map(|j| m.projection[i * d + j] * mean[j]).sum::<f64>() + m.bias[i])
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Summed hinge losses `(ideology, story)` of a batch.
pub fn oracle_triplet_losses(
    m: &EncoderModel,
    docs: &BTreeMap<String, Vec<u32>>,
    batch: &[Triplet],
    cfg: &LossConfig,
) -> (f64, f64) {
    let (mut ideo, mut story) = (0.0, 0.0);
    for t in batch {
        let a = oracle_embed(m, &docs[&t.anchor]);
        let p = oracle_embed(m, &docs[&t.positive]);
        let n = oracle_embed(m, &docs[&t.negative]);
        match t.kind {
            TripletKind::Ideology => ideo += f64::max(0.0, dist(&a, &p) - dist(&a, &n) + cfg.delta_ideo),
            TripletKind::Story => story += f64::max(0.0, dist(&a, &p) - dist(&a, &n) + cfg.delta_story),
        }
    }
    (ideo, story)
}

/// Hinge arguments within `eps` of a kink, or distinct documents at
/// (near) zero distance.
pub fn near_kink(
    m: &EncoderModel,
    docs: &BTreeMap<String, Vec<u32>>,
    batch: &[Triplet],
    cfg: &LossConfig,
    eps: f64,
) -> bool {
    batch.iter().any(|t| {
        let a = oracle_embed(m, &docs[&t.anchor]);
        let p = oracle_embed(m, &docs[&t.positive]);
        let n = oracle_embed(m, &docs[&t.negative]);
        let margin = match t.kind {
            TripletKind::Ideology => cfg.delta_ideo,
            TripletKind::Story => cfg.delta_story,
        };
        let (dap, dan) = (dist(&a, &p), dist(&a, &n));
        (dap - dan + margin).abs() < eps || (dap < eps && t.anchor != t.positive) || (dan < eps && t.anchor != t.negative)
    })
}

/// Log-probability of `target` given the mean embedding of every position
/// of `ids` other than `pos`.
pub fn oracle_log_prob(m: &EncoderModel, h: &MlmHead, ids: &[u32], pos: usize, target: u32) -> f64 {
    let (d, v) = (m.dim, m.vocab_size);
    let mut ctx = vec![0.0; d];
    if ids.len() > 1 {
        for (q, &id) in ids.iter().enumerate() {
            if q != pos {
                for k in 0..d {
                    ctx[k] += m.embeddings[id as usize * d + k] / (ids.len() - 1) as f64;
                }
            }
        }
    }
    let hid: Vec<f64> = (0..d)
        .map(|i| (0..d).map(|j| m.projection[i * d + j] * ctx[j]).sum::<f64>() + m.bias[i])
        .collect();
    let logits: Vec<f64> = (0..v)
        .map(|j| (0..d).map(|k| h.output[k * v + j] * hid[k]).sum::<f64>() + h.output_bias[j])
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits[target as usize] - lse
}

/// Mean cross-entropy over every masked position in the batch.
pub fn oracle_mlm_loss(m: &EncoderModel, h: &MlmHead, batch: &[MaskedSequence]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for s in batch {
        for (&pos, &target) in &s.targets {
            total -= oracle_log_prob(m, h, &s.input_ids, pos, target);
            count += 1;
        }
    }
    total / count as f64
}

/// Pseudo-perplexity scoring every position.
pub fn oracle_full_ppl(m: &EncoderModel, h: &MlmHead, ids: &[u32]) -> f64 {
    let total: f64 = (0..ids.len()).map(|i| oracle_log_prob(m, h, ids, i, ids[i])).sum();
    (-total / ids.len() as f64).exp()
}

/// Central-difference derivative of `f` along every coordinate of every
/// parameter block; returns the worst relative error against `analytic`.
pub fn worst_fd_error(
    model: &EncoderModel,
    head: &MlmHead,
    analytic: [&[f64]; 5],
    f: impl Fn(&EncoderModel, &MlmHead) -> f64,
) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (block, grad) in analytic.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let eval = |delta: f64| {
                let (mut m, mut hd) = (model.clone(), head.clone());
                let p = match block {
                    0 => &mut m.embeddings,
                    1 => &mut m.projection,
                    2 => &mut m.bias,
                    3 => &mut hd.output,
                    _ => &mut hd.output_bias,
                };
                p[i] += delta;
                f(&m, &hd)
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let scale = a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    worst
}
