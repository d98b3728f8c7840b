//! Vocabulary and upsampled mask sampling for the masked-token objective.
//!
//! Entity spans and sentiment tokens are selected first with an elevated
//! probability; the remaining budget of `total_rate * L` positions is filled
//! uniformly. Each masked position is then replaced by `[MASK]`, a random
//! token, or kept, in the configured ratio.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotate::AnnotationSet;
use crate::corpus::{Article, Corpus};
use crate::error::{Error, Result};
use crate::{jsonl, seed};

pub const MASK_TOKEN: &str = "[MASK]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const PAD_TOKEN: &str = "[PAD]";
pub const MASK_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_ID: u32 = 2;
pub const RESERVED: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED
            || tokens[0] != MASK_TOKEN
            || tokens[1] != UNK_TOKEN
            || tokens[2] != PAD_TOKEN
        {
            return Err(Error::invalid("vocabulary must start with [MASK], [UNK], [PAD]"));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(Error::invalid(format!("vocabulary repeats token {t:?}")));
            }
        }
        Ok(Self { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t).unwrap_or(UNK_ID)).collect()
    }

    /// SHA-256 of the serialized token list.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.tokens).expect("strings serialize");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write_json(path, &self.tokens)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tokens(jsonl::read_json(path)?)
    }
}

/// Tokens seen at least `min_count` times, ordered by count descending then
/// token, after the three reserved entries.
pub fn build_vocab(corpus: &Corpus, min_count: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::invalid("cannot build a vocabulary from an empty corpus"));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for a in corpus {
        for t in a.tokens() {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let reserved = [MASK_TOKEN, UNK_TOKEN, PAD_TOKEN];
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count && !reserved.contains(t))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let tokens = reserved
        .iter()
        .map(|s| s.to_string())
        .chain(kept.into_iter().map(|(t, _)| t.to_string()))
        .collect();
    Vocabulary::from_tokens(tokens)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    pub upsample_prob: f64,
    pub total_rate: f64,
    /// mask : random : keep
    pub replace_ratio: [f64; 3],
    pub max_len: usize,
    pub max_span: usize,
    pub seed: u64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            upsample_prob: 0.30,
            total_rate: 0.15,
            replace_ratio: [8.0, 1.0, 1.0],
            max_len: 512,
            max_span: 5,
            seed: 0,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.upsample_prob) {
            return Err(Error::Config(format!("upsample probability {} outside [0, 1]", self.upsample_prob)));
        }
        if !(self.total_rate > 0.0 && self.total_rate < 1.0) {
            return Err(Error::Config(format!("mask rate {} outside (0, 1)", self.total_rate)));
        }
        if self.replace_ratio.iter().any(|r| !r.is_finite() || *r < 0.0)
            || self.replace_ratio.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::Config("replace ratio must be non-negative with a positive sum".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        Ok(())
    }

    /// Masked positions for a sequence of length `len`.
    pub fn budget(&self, len: usize) -> usize {
        ((self.total_rate * len as f64).round() as usize).max(1).min(len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MaskAction {
    Mask,
    Random,
    Keep,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSequence {
    pub id: String,
    pub input_ids: Vec<u32>,
    pub targets: BTreeMap<usize, u32>,
    pub actions: BTreeMap<usize, MaskAction>,
}

impl MaskedSequence {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    /// Original ids: inputs with targets restored.
    pub fn original_ids(&self) -> Vec<u32> {
        let mut ids = self.input_ids.clone();
        for (&p, &t) in &self.targets {
            ids[p] = t;
        }
        ids
    }
}

/// Selectable units: eligible entity spans, then sentiment tokens outside
/// them. Each unit is a half-open position range.
fn units(article: &Article, annotations: &AnnotationSet, len: usize, max_span: usize) -> Vec<(usize, usize)> {
    let mut covered = vec![false; len];
    let mut out = Vec::new();
    for s in annotations.entities_for(&article.id) {
        if !s.is_empty() && s.len() <= max_span && s.end_token <= len {
            covered[s.start_token..s.end_token].iter_mut().for_each(|c| *c = true);
            out.push((s.start_token, s.end_token));
        }
    }
    if let Some(sentiment) = annotations.sentiment_for(&article.id) {
        for &p in sentiment.range(..len) {
            if !covered[p] {
                out.push((p, p + 1));
            }
        }
    }
    out
}

pub fn sample_mask(
    article: &Article,
    annotations: &AnnotationSet,
    vocab: &Vocabulary,
    config: &MaskConfig,
) -> Result<MaskedSequence> {
    if article.tokens().is_empty() {
        return Err(Error::invalid(format!("article {} has no tokens", article.id)));
    }
    let len = article.tokens().len().min(config.max_len);
    let original = vocab.encode(&article.tokens()[..len]);
    let budget = config.budget(len);
    let mut rng = seed::rng(config.seed, &format!("mask/{}", article.id));

    let all_units = units(article, annotations, len, config.max_span);
    let mut selected: Vec<(usize, usize)> = all_units
        .into_iter()
        .filter(|_| rng.random_bool(config.upsample_prob))
        .collect();

    let mut state = vec![0u8; len]; // 0 free, 1 masked, 2 dropped
    let selected_len: usize = selected.iter().map(|(s, e)| e - s).sum();
    let mut used = 0;
    if selected_len > budget {
        selected.shuffle(&mut rng);
    }
    for (s, e) in selected {
        let fill = if used + (e - s) <= budget { 1 } else { 2 };
        if fill == 1 {
            used += e - s;
        }
        state[s..e].iter_mut().for_each(|x| *x = fill);
    }

    let mut remaining = budget - used;
    for pool_kind in [0u8, 2u8] {
        if remaining == 0 {
            break;
        }
        let pool: Vec<usize> = (0..len).filter(|&p| state[p] == pool_kind).collect();
        let take = remaining.min(pool.len());
        let mut picks = index::sample(&mut rng, pool.len(), take).into_vec();
        picks.sort_unstable();
        for j in picks {
            state[pool[j]] = 1;
        }
        remaining -= take;
    }

    let total: f64 = config.replace_ratio.iter().sum();
    let (p_mask, p_random) = (config.replace_ratio[0] / total, config.replace_ratio[1] / total);
    let mut input_ids = original.clone();
    let mut targets = BTreeMap::new();
    let mut actions = BTreeMap::new();
    for p in (0..len).filter(|&p| state[p] == 1) {
        let u: f64 = rng.random();
        let action = if u < p_mask {
            MaskAction::Mask
        } else if u < p_mask + p_random {
            MaskAction::Random
        } else {
            MaskAction::Keep
        };
        input_ids[p] = match action {
            MaskAction::Mask => MASK_ID,
            MaskAction::Random if vocab.len() > RESERVED => rng.random_range(RESERVED as u32..vocab.len() as u32),
            MaskAction::Random => MASK_ID,
            MaskAction::Keep => original[p],
        };
        targets.insert(p, original[p]);
        actions.insert(p, action);
    }
    Ok(MaskedSequence {
        id: article.id.clone(),
        input_ids,
        targets,
        actions,
    })
}

/// One masked sequence per article, in corpus order.
pub fn mask_corpus(
    corpus: &Corpus,
    annotations: &AnnotationSet,
    vocab: &Vocabulary,
    config: &MaskConfig,
) -> Result<Vec<MaskedSequence>> {
    config.validate()?;
    corpus
        .articles()
        .par_iter()
        .map(|a| sample_mask(a, annotations, vocab, config))
        .collect()
}

pub fn save_masked(seqs: &[MaskedSequence], path: &Path) -> Result<()> {
    jsonl::write(path, seqs)
}

pub fn load_masked(path: &Path) -> Result<Vec<MaskedSequence>> {
    jsonl::read(path)
}
