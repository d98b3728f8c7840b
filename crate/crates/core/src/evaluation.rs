//! Linear probe, pseudo-perplexity by ideology, masking statistics and
//! stance prompt rendering.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::AnnotationSet;
use crate::corpus::{Corpus, Ideology};
use crate::error::{Error, Result};
use crate::logistic::{dense_row, GdOptions, SoftmaxModel};
use crate::masking::{MaskAction, MaskedSequence, Vocabulary};
use crate::model::{pseudo_perplexity, EncoderModel, MlmHead};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub accuracy: f64,
    pub per_class_f1: BTreeMap<Ideology, f64>,
    pub macro_f1: f64,
    pub n_train: usize,
    pub n_test: usize,
}

pub fn probe_options() -> GdOptions {
    GdOptions {
        learning_rate: 0.5,
        epochs: 300,
        l2: 1e-4,
    }
}

fn standardize(rows: &mut [Vec<f64>], train: &[usize]) {
    let d = rows.first().map_or(0, Vec::len);
    for j in 0..d {
        let n = train.len() as f64;
        let mean = train.iter().map(|&i| rows[i][j]).sum::<f64>() / n;
        let var = train.iter().map(|&i| (rows[i][j] - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for r in rows.iter_mut() {
            r[j] = (r[j] - mean) / sd;
        }
    }
}

/// Multinomial logistic regression on a seeded 80/20 split of standardized
/// embeddings. Only ids present in both maps are used.
pub fn linear_probe(
    embeddings: &BTreeMap<String, Vec<f64>>,
    labels: &BTreeMap<String, Ideology>,
    seed_value: u64,
    opts: &GdOptions,
) -> Result<ProbeResult> {
    let mut ids: Vec<&String> = embeddings.keys().filter(|id| labels.contains_key(*id)).collect();
    if ids.len() < 10 {
        return Err(Error::invalid(format!("probe needs at least 10 labelled embeddings, got {}", ids.len())));
    }
    let present: HashSet<Ideology> = ids.iter().map(|id| labels[*id]).collect();
    if present.len() < 2 {
        return Err(Error::invalid("probe needs at least two classes"));
    }
    let dim = embeddings[ids[0]].len();
    if ids.iter().any(|id| embeddings[*id].len() != dim) {
        return Err(Error::invalid("embeddings differ in dimension"));
    }
    ids.shuffle(&mut seed::rng(seed_value, "probe/split"));
    let n_test = ((ids.len() as f64 * 0.2).round() as usize).max(1);
    let n_train = ids.len() - n_test;

    let mut rows: Vec<Vec<f64>> = ids.iter().map(|id| embeddings[*id].clone()).collect();
    let train_idx: Vec<usize> = (n_test..ids.len()).collect();
    standardize(&mut rows, &train_idx);
    let y: Vec<usize> = ids.iter().map(|id| labels[*id].index()).collect();

    let train_rows: Vec<_> = train_idx.iter().map(|&i| dense_row(&rows[i])).collect();
    let train_y: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
    let model = SoftmaxModel::fit(&train_rows, &train_y, Ideology::ALL.len(), dim, opts);

    let mut confusion = [[0usize; 3]; 3];
    for i in 0..n_test {
        let pred = model.predict(&dense_row(&rows[i]));
        confusion[y[i]][pred] += 1;
    }
    let correct: usize = (0..3).map(|c| confusion[c][c]).sum();
    let mut per_class_f1 = BTreeMap::new();
    for ideo in Ideology::ALL.into_iter().filter(|i| present.contains(i)) {
        let c = ideo.index();
        let tp = confusion[c][c] as f64;
        let predicted: usize = (0..3).map(|r| confusion[r][c]).sum();
        let actual: usize = confusion[c].iter().sum();
        let f1 = if predicted + actual == 0 {
            0.0
        } else {
            2.0 * tp / (predicted + actual) as f64
        };
        per_class_f1.insert(ideo, f1);
    }
    let macro_f1 = per_class_f1.values().sum::<f64>() / per_class_f1.len() as f64;
    Ok(ProbeResult {
        accuracy: correct as f64 / n_test as f64,
        per_class_f1,
        macro_f1,
        n_train,
        n_test,
    })
}

/// Document embeddings for every article of `corpus` with at least one
/// token.
pub fn embed_corpus(
    encoder: &EncoderModel,
    corpus: &Corpus,
    vocab: &Vocabulary,
    max_len: usize,
) -> BTreeMap<String, Vec<f64>> {
    corpus
        .articles()
        .par_iter()
        .filter(|a| !a.tokens().is_empty())
        .map(|a| {
            let n = a.tokens().len().min(max_len);
            let ids = vocab.encode(&a.tokens()[..n]);
            (a.id.clone(), encoder.project(&encoder.pool(&ids)))
        })
        .collect()
}

pub fn ideology_labels(corpus: &Corpus) -> BTreeMap<String, Ideology> {
    corpus.iter().map(|a| (a.id.clone(), a.ideology)).collect()
}

/// Mean pseudo-perplexity per ideology over the articles of `corpus`.
pub fn ppl_by_ideology(
    encoder: &EncoderModel,
    head: &MlmHead,
    corpus: &Corpus,
    vocab: &Vocabulary,
    n_positions: usize,
    max_len: usize,
    seed_value: u64,
) -> Result<BTreeMap<Ideology, f64>> {
    let scored: Vec<(Ideology, f64)> = corpus
        .articles()
        .par_iter()
        .filter(|a| !a.tokens().is_empty())
        .map(|a| {
            let n = a.tokens().len().min(max_len);
            let ids = vocab.encode(&a.tokens()[..n]);
            pseudo_perplexity(encoder, head, &ids, n_positions, seed_value, &a.id).map(|p| (a.ideology, p))
        })
        .collect::<Result<_>>()?;
    let mut sums: BTreeMap<Ideology, (f64, usize)> = BTreeMap::new();
    for (ideo, p) in scored {
        let e = sums.entry(ideo).or_default();
        e.0 += p;
        e.1 += 1;
    }
    Ok(sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub pattern: String,
    /// Label to verbalized token.
    pub verbalizer: BTreeMap<String, String>,
}

fn verbalizer(against: &str, favor: &str) -> BTreeMap<String, String> {
    [("against", against), ("favor", favor)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::suffix("The stance towards {target} is [MASK] .", verbalizer("negative", "positive"))
    }
}

impl PromptTemplate {
    /// `{p} [SEP] ` followed by `suffix`.
    pub fn suffix(suffix: &str, verbalizer: BTreeMap<String, String>) -> Self {
        Self {
            pattern: format!("{{p}} [SEP] {suffix}"),
            verbalizer,
        }
    }

    /// The published stance prompt set.
    pub fn catalogue() -> Vec<PromptTemplate> {
        let np = || verbalizer("negative", "positive");
        vec![
            Self::default(),
            Self::suffix("It reveals a [MASK] stance on {target} .", np()),
            Self::suffix("The speaker holds a [MASK] attitude towards {target} .", np()),
            Self::suffix("What is the stance on {target} ? [MASK] .", verbalizer("Negative", "Positive")),
            Self::suffix("The previous passage [MASK] {target} .", verbalizer("opposes", "favors")),
            Self::suffix("The stance on {target} is [MASK] .", np()),
            Self::suffix("The stance towards {target} : [MASK] .", np()),
            Self::suffix("The author [MASK] {target} .", verbalizer("opposes", "favors")),
            Self::suffix("[MASK] {target}", verbalizer("oppose", "favor")),
            Self::suffix("[MASK]. {target}", verbalizer("No", "Yes")),
            Self::suffix("[MASK] {target}", verbalizer("No", "Yes")),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for ph in ["{p}", "{target}"] {
            let n = self.pattern.matches(ph).count();
            if n != 1 {
                return Err(Error::invalid(format!("template must contain {ph} exactly once, found {n}")));
            }
        }
        Ok(())
    }
}

/// Substitute `{p}` and `{target}` in one left-to-right pass, so neither
/// value is itself scanned for placeholders.
pub fn render_prompt(p: &str, target: &str, template: &PromptTemplate) -> Result<String> {
    template.validate()?;
    if target.trim().is_empty() {
        return Err(Error::invalid("missing target"));
    }
    let mut out = String::with_capacity(template.pattern.len() + p.len() + target.len());
    let mut rest = template.pattern.as_str();
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix("{p}") {
            out.push_str(p);
            rest = r;
        } else if let Some(r) = rest.strip_prefix("{target}") {
            out.push_str(target);
            rest = r;
        } else {
            let c = rest.chars().next().unwrap();
            out.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskReport {
    pub sequences: usize,
    pub tokens: usize,
    pub masked: usize,
    pub entity_tokens: usize,
    pub entity_masked: usize,
    pub plain_tokens: usize,
    pub plain_masked: usize,
    pub mask_actions: usize,
    pub random_actions: usize,
    pub keep_actions: usize,
    pub masked_rate: f64,
    pub entity_rate: f64,
    pub plain_rate: f64,
    pub mask_share: f64,
    pub random_share: f64,
    pub keep_share: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Exact counts of masked positions, split by entity membership and action.
pub fn mask_report(seqs: &[MaskedSequence], annotations: &AnnotationSet) -> Result<MaskReport> {
    if seqs.is_empty() {
        return Err(Error::invalid("mask report needs at least one sequence"));
    }
    let mut r = MaskReport {
        sequences: seqs.len(),
        ..Default::default()
    };
    for s in seqs {
        let len = s.input_ids.len();
        let mut entity = vec![false; len];
        for span in annotations.entities_for(&s.id) {
            for p in span.start_token..span.end_token.min(len) {
                entity[p] = true;
            }
        }
        r.tokens += len;
        r.masked += s.targets.len();
        let n_entity = entity.iter().filter(|&&e| e).count();
        r.entity_tokens += n_entity;
        r.plain_tokens += len - n_entity;
        for &p in s.targets.keys() {
            if entity[p] {
                r.entity_masked += 1;
            } else {
                r.plain_masked += 1;
            }
        }
        for a in s.actions.values() {
            match a {
                MaskAction::Mask => r.mask_actions += 1,
                MaskAction::Random => r.random_actions += 1,
                MaskAction::Keep => r.keep_actions += 1,
            }
        }
    }
    r.masked_rate = ratio(r.masked, r.tokens);
    r.entity_rate = ratio(r.entity_masked, r.entity_tokens);
    r.plain_rate = ratio(r.plain_masked, r.plain_tokens);
    let actions = r.mask_actions + r.random_actions + r.keep_actions;
    r.mask_share = ratio(r.mask_actions, actions);
    r.random_share = ratio(r.random_actions, actions);
    r.keep_share = ratio(r.keep_actions, actions);
    Ok(r)
}
