use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::AnnotationSet;
use crate::corpus::{Article, Corpus};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub alpha: f64,
    pub theta: f64,
    pub window_days: u32,
    pub sim_scope_sentences: usize,
    pub entity_constraint_sentences: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            theta: 0.23,
            window_days: 3,
            sim_scope_sentences: 5,
            entity_constraint_sentences: 3,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(crate::Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(crate::Error::Config(format!("theta {} outside (0, 1]", self.theta)));
        }
        Ok(())
    }
}

/// `alpha * text + (1 - alpha) * entity`.
pub fn mix_similarity(alpha: f64, text_sim: f64, entity_sim: f64) -> f64 {
    alpha * text_sim + (1.0 - alpha) * entity_sim
}

/// Sparse vector with strictly increasing term ids.
pub type SparseVec = Vec<(u32, f64)>;

pub fn sparse_dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// Count-weighted Jaccard: sum of minimum counts over sum of maximum counts;
/// 0 when both bags are empty.
pub fn weighted_jaccard(a: &BTreeMap<String, u32>, b: &BTreeMap<String, u32>) -> f64 {
    let mut num = 0u64;
    let mut den = 0u64;
    let mut ia = a.iter().peekable();
    let mut ib = b.iter().peekable();
    loop {
        match (ia.peek(), ib.peek()) {
            (Some((ka, &ca)), Some((kb, &cb))) => match ka.cmp(kb) {
                std::cmp::Ordering::Less => {
                    den += ca as u64;
                    ia.next();
                }
                std::cmp::Ordering::Greater => {
                    den += cb as u64;
                    ib.next();
                }
                std::cmp::Ordering::Equal => {
                    num += ca.min(cb) as u64;
                    den += ca.max(cb) as u64;
                    ia.next();
                    ib.next();
                }
            },
            (Some((_, &ca)), None) => {
                den += ca as u64;
                ia.next();
            }
            (None, Some((_, &cb))) => {
                den += cb as u64;
                ib.next();
            }
            (None, None) => break,
        }
    }
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Entity words of the spans that start inside `scope_end`: span tokens with
/// stopwords removed.
fn entity_words<'a>(
    article: &'a Article,
    annotations: &'a AnnotationSet,
    scope_end: usize,
) -> impl Iterator<Item = &'a String> + 'a {
    annotations
        .entities_for(&article.id)
        .iter()
        .filter(move |s| s.start_token < scope_end)
        .flat_map(move |s| &article.tokens()[s.start_token..s.end_token.min(article.tokens().len())])
        .filter(|w| !text::is_stopword(w))
}

struct DocFeatures {
    term_counts: BTreeMap<String, u32>,
    entity_bag: BTreeMap<String, u32>,
    constraint_words: BTreeSet<String>,
}

fn doc_features(article: &Article, annotations: &AnnotationSet, config: &AlignConfig) -> DocFeatures {
    let ranges = article.sentence_token_ranges();
    let scope_end = |n: usize| ranges[..ranges.len().min(n + 1)].last().map(|r| r.end).unwrap_or(0);
    let sim_end = scope_end(config.sim_scope_sentences);
    let constraint_end = scope_end(config.entity_constraint_sentences);

    let mut term_counts = BTreeMap::new();
    for t in &article.tokens()[..sim_end] {
        if !text::is_stopword(t) {
            *term_counts.entry(t.clone()).or_insert(0u32) += 1;
        }
    }
    let mut entity_bag = BTreeMap::new();
    for w in entity_words(article, annotations, sim_end) {
        *entity_bag.entry(w.clone()).or_insert(0u32) += 1;
    }
    let constraint_words = entity_words(article, annotations, constraint_end).cloned().collect();
    DocFeatures {
        term_counts,
        entity_bag,
        constraint_words,
    }
}

/// TF-IDF vectors, entity bags and date-sorted outlet lists for one corpus.
#[derive(Debug, Clone)]
pub struct TfIdfIndex {
    pub vocabulary: HashMap<String, u32>,
    pub idf: Vec<f64>,
    ids: Vec<String>,
    positions: HashMap<String, usize>,
    outlets: Vec<String>,
    dates: Vec<NaiveDate>,
    vectors: Vec<SparseVec>,
    entity_bags: Vec<BTreeMap<String, u32>>,
    constraint_words: Vec<BTreeSet<String>>,
    by_outlet_date: BTreeMap<String, Vec<usize>>,
}

impl TfIdfIndex {
    /// Unigram TF-IDF over the title and first `sim_scope_sentences`
    /// sentences, smoothed idf `ln((1 + N) / (1 + df)) + 1`, L2-normalized.
    pub fn build(corpus: &Corpus, annotations: &AnnotationSet, config: &AlignConfig) -> Self {
        let features: Vec<DocFeatures> = corpus
            .articles()
            .par_iter()
            .map(|a| doc_features(a, annotations, config))
            .collect();

        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for f in &features {
            for term in f.term_counts.keys() {
                *df.entry(term.as_str()).or_default() += 1;
            }
        }
        let n = corpus.len() as f64;
        let vocabulary: HashMap<String, u32> = df
            .keys()
            .enumerate()
            .map(|(i, t)| (t.to_string(), i as u32))
            .collect();
        let idf: Vec<f64> = df
            .values()
            .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
            .collect();

        let vectors: Vec<SparseVec> = features
            .par_iter()
            .map(|f| {
                // BTreeMap order is term order, which is also id order
                let mut v: SparseVec = f
                    .term_counts
                    .iter()
                    .map(|(t, &c)| {
                        let id = vocabulary[t];
                        (id, c as f64 * idf[id as usize])
                    })
                    .collect();
                let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|(_, x)| *x /= norm);
                }
                v
            })
            .collect();

        let mut by_outlet_date: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, a) in corpus.iter().enumerate() {
            by_outlet_date.entry(a.outlet.clone()).or_default().push(i);
        }
        let articles = corpus.articles();
        for list in by_outlet_date.values_mut() {
            list.sort_by(|&x, &y| {
                (articles[x].published, &articles[x].id).cmp(&(articles[y].published, &articles[y].id))
            });
        }

        let mut entity_bags = Vec::with_capacity(features.len());
        let mut constraint_words = Vec::with_capacity(features.len());
        for f in features {
            entity_bags.push(f.entity_bag);
            constraint_words.push(f.constraint_words);
        }

        TfIdfIndex {
            vocabulary,
            idf,
            ids: articles.iter().map(|a| a.id.clone()).collect(),
            positions: articles.iter().enumerate().map(|(i, a)| (a.id.clone(), i)).collect(),
            outlets: articles.iter().map(|a| a.outlet.clone()).collect(),
            dates: articles.iter().map(|a| a.published).collect(),
            vectors,
            entity_bags,
            constraint_words,
            by_outlet_date,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn id(&self, doc: usize) -> &str {
        &self.ids[doc]
    }

    pub fn outlet(&self, doc: usize) -> &str {
        &self.outlets[doc]
    }

    pub fn date(&self, doc: usize) -> NaiveDate {
        self.dates[doc]
    }

    pub fn vector(&self, doc: usize) -> &SparseVec {
        &self.vectors[doc]
    }

    pub fn entity_bag(&self, doc: usize) -> &BTreeMap<String, u32> {
        &self.entity_bags[doc]
    }

    pub fn constraint_words(&self, doc: usize) -> &BTreeSet<String> {
        &self.constraint_words[doc]
    }

    pub fn outlets(&self) -> impl Iterator<Item = &str> {
        self.by_outlet_date.keys().map(String::as_str)
    }

    pub fn outlet_docs(&self, outlet: &str) -> &[usize] {
        self.by_outlet_date.get(outlet).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn cosine(&self, a: usize, b: usize) -> f64 {
        sparse_dot(&self.vectors[a], &self.vectors[b])
    }

    pub fn entity_similarity(&self, a: usize, b: usize) -> f64 {
        weighted_jaccard(&self.entity_bags[a], &self.entity_bags[b])
    }

    pub fn story_similarity(&self, a: usize, b: usize, config: &AlignConfig) -> f64 {
        mix_similarity(config.alpha, self.cosine(a, b), self.entity_similarity(a, b))
    }

    fn shares_entity_word(&self, a: usize, b: usize) -> bool {
        let (x, y) = (&self.constraint_words[a], &self.constraint_words[b]);
        let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
        small.iter().any(|w| large.contains(w))
    }

    /// Docs of other outlets published within the window that share an
    /// entity word (title or leading sentences) with the anchor. Grouped by
    /// outlet, each list in (date, id) order.
    pub fn candidates(&self, anchor: usize, config: &AlignConfig) -> BTreeMap<&str, Vec<usize>> {
        let mut out = BTreeMap::new();
        if self.constraint_words[anchor].is_empty() {
            return out;
        }
        let day = self.dates[anchor];
        let window = chrono::Days::new(config.window_days as u64);
        let lo = day.checked_sub_days(window).unwrap_or(NaiveDate::MIN);
        let hi = day.checked_add_days(window).unwrap_or(NaiveDate::MAX);
        for (outlet, docs) in &self.by_outlet_date {
            if *outlet == self.outlets[anchor] {
                continue;
            }
            let first = docs.partition_point(|&d| self.dates[d] < lo);
            let picked: Vec<usize> = docs[first..]
                .iter()
                .copied()
                .take_while(|&d| self.dates[d] <= hi)
                .filter(|&d| self.shares_entity_word(anchor, d))
                .collect();
            if !picked.is_empty() {
                out.insert(outlet.as_str(), picked);
            }
        }
        out
    }
}
