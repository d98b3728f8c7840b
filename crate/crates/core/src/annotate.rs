//! Named-entity spans and sentiment-word positions.
//!
//! Spans come either from a sidecar JSONL file produced by an external tagger
//! or from a capitalization heuristic with an optional gazetteer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Article, Corpus};
use crate::error::{Error, Result};
use crate::jsonl;

/// Longest span considered for masking and kept at ingestion.
pub const MAX_SPAN_TOKENS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityType {
    Person,
    Norp,
    Org,
    Gpe,
    Event,
}

impl EntityType {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PERSON" => Some(Self::Person),
            "NORP" => Some(Self::Norp),
            "ORG" => Some(Self::Org),
            "GPE" => Some(Self::Gpe),
            "EVENT" => Some(Self::Event),
            _ => None,
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Person => "PERSON",
            Self::Norp => "NORP",
            Self::Org => "ORG",
            Self::Gpe => "GPE",
            Self::Event => "EVENT",
        };
        f.write_str(s)
    }
}

/// Half-open token span `[start, end)`. Serialized with the sidecar field
/// names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub article_id: String,
    #[serde(rename = "start")]
    pub start_token: usize,
    #[serde(rename = "end")]
    pub end_token: usize,
    pub etype: EntityType,
    pub surface: String,
}

impl EntitySpan {
    pub fn len(&self) -> usize {
        self.end_token - self.start_token
    }

    pub fn is_empty(&self) -> bool {
        self.end_token <= self.start_token
    }

    fn overlaps(&self, other: &EntitySpan) -> bool {
        self.start_token < other.end_token && other.start_token < self.end_token
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentLexicon {
    pub entries: BTreeSet<String>,
    pub source_tag: String,
}

impl SentimentLexicon {
    pub fn new<I, S>(words: I, source_tag: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let entries = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        Self {
            entries,
            source_tag: source_tag.into(),
        }
    }

    /// One word per line; blank lines and `#` comments skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let tag = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self::new(words, tag))
    }

    pub fn union(&self, other: &SentimentLexicon) -> SentimentLexicon {
        SentimentLexicon {
            entries: self.entries.union(&other.entries).cloned().collect(),
            source_tag: format!("{}+{}", self.source_tag, other.source_tag),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains(word)
    }
}

/// Entity spans (sorted, non-overlapping per article) and sentiment token
/// positions, keyed by article id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationSet {
    entities: BTreeMap<String, Vec<EntitySpan>>,
    sentiment: BTreeMap<String, BTreeSet<usize>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub lines: usize,
    pub kept: usize,
    pub dropped_overlap: usize,
    pub dropped_long: usize,
}

/// Keep the longer span on overlap, then the earlier one. Output sorted by
/// start.
pub fn resolve_overlaps(mut spans: Vec<EntitySpan>) -> (Vec<EntitySpan>, usize) {
    spans.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then(a.start_token.cmp(&b.start_token))
            .then(a.end_token.cmp(&b.end_token))
    });
    let mut kept: Vec<EntitySpan> = Vec::with_capacity(spans.len());
    let mut dropped = 0;
    for s in spans {
        if kept.iter().any(|k| k.overlaps(&s)) {
            dropped += 1;
        } else {
            kept.push(s);
        }
    }
    kept.sort_by_key(|s| (s.start_token, s.end_token));
    (kept, dropped)
}

impl AnnotationSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replace the spans of one article, resolving overlaps.
    pub fn set_entities(&mut self, article_id: &str, spans: Vec<EntitySpan>) -> usize {
        let (kept, dropped) = resolve_overlaps(spans);
        if kept.is_empty() {
            self.entities.remove(article_id);
        } else {
            self.entities.insert(article_id.to_string(), kept);
        }
        dropped
    }

    pub fn set_sentiment(&mut self, article_id: &str, positions: BTreeSet<usize>) {
        if positions.is_empty() {
            self.sentiment.remove(article_id);
        } else {
            self.sentiment.insert(article_id.to_string(), positions);
        }
    }

    pub fn entities_for(&self, article_id: &str) -> &[EntitySpan] {
        self.entities.get(article_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn sentiment_for(&self, article_id: &str) -> Option<&BTreeSet<usize>> {
        self.sentiment.get(article_id)
    }

    /// All spans, ordered by article id then start.
    pub fn entities(&self) -> impl Iterator<Item = &EntitySpan> {
        self.entities.values().flatten()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.sentiment.is_empty()
    }

    pub fn sentiment_map(&self) -> &BTreeMap<String, BTreeSet<usize>> {
        &self.sentiment
    }

    pub fn save_entities(&self, path: &Path) -> Result<()> {
        jsonl::write(path, self.entities())
    }

    pub fn save_sentiment(&self, path: &Path) -> Result<()> {
        let rows: Vec<SentimentRecord> = self
            .sentiment
            .iter()
            .map(|(id, pos)| SentimentRecord {
                article_id: id.clone(),
                positions: pos.iter().copied().collect(),
            })
            .collect();
        jsonl::write(path, &rows)
    }

    /// Load a sentiment file written by `save_sentiment` into this set.
    pub fn load_sentiment(&mut self, path: &Path, corpus: &Corpus) -> Result<()> {
        jsonl::for_each(path, |_, rec: SentimentRecord| {
            let article = corpus
                .get(&rec.article_id)
                .ok_or_else(|| Error::UnknownArticle(rec.article_id.clone()))?;
            let n = article.tokens().len();
            if let Some(&bad) = rec.positions.iter().find(|&&p| p >= n) {
                return Err(Error::SpanOutOfBounds {
                    article_id: rec.article_id,
                    start: bad,
                    end: bad + 1,
                    len: n,
                });
            }
            self.set_sentiment(&rec.article_id, rec.positions.into_iter().collect());
            Ok(())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SentimentRecord {
    article_id: String,
    positions: Vec<usize>,
}

/// Read a sidecar span file and validate it against `corpus`. Spans longer
/// than `MAX_SPAN_TOKENS` are dropped; overlaps are resolved per article.
pub fn ingest_annotations(path: &Path, corpus: &Corpus) -> Result<(AnnotationSet, IngestReport)> {
    let mut report = IngestReport::default();
    let mut per_article: BTreeMap<String, Vec<EntitySpan>> = BTreeMap::new();
    jsonl::for_each(path, |_, span: EntitySpan| {
        report.lines += 1;
        let article = corpus
            .get(&span.article_id)
            .ok_or_else(|| Error::UnknownArticle(span.article_id.clone()))?;
        let len = article.tokens().len();
        if span.start_token >= span.end_token || span.end_token > len {
            return Err(Error::SpanOutOfBounds {
                article_id: span.article_id,
                start: span.start_token,
                end: span.end_token,
                len,
            });
        }
        if span.len() > MAX_SPAN_TOKENS {
            report.dropped_long += 1;
            return Ok(());
        }
        per_article.entry(span.article_id.clone()).or_default().push(span);
        Ok(())
    })?;
    let mut set = AnnotationSet::new();
    for (id, spans) in per_article {
        report.dropped_overlap += set.set_entities(&id, spans);
    }
    report.kept = set.entity_count();
    Ok((set, report))
}

/// Lowercased phrase (space-joined tokens) to entity type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gazetteer {
    entries: BTreeMap<Vec<String>, EntityType>,
    longest: usize,
}

impl Gazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, phrase: &str, etype: EntityType) {
        let key: Vec<String> = crate::text::tokenize(phrase, &Default::default());
        if key.is_empty() || key.len() > MAX_SPAN_TOKENS {
            return;
        }
        self.longest = self.longest.max(key.len());
        self.entries.insert(key, etype);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup(&self, tokens: &[String]) -> Option<EntityType> {
        self.entries.get(tokens).copied()
    }

    /// Tab-separated `phrase<TAB>TYPE` lines; `#` comments allowed.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut g = Gazetteer::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (phrase, etype) = line.rsplit_once('\t').ok_or_else(|| Error::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected phrase<TAB>TYPE".into(),
            })?;
            let etype = EntityType::parse(etype).ok_or_else(|| Error::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("unknown entity type {etype}"),
            })?;
            g.insert(phrase, etype);
        }
        Ok(g)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = String::new();
        for (k, t) in &self.entries {
            body.push_str(&k.join(" "));
            body.push('\t');
            body.push_str(&t.to_string());
            body.push('\n');
        }
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

fn is_capitalized(s: &str) -> bool {
    s.chars().next().is_some_and(char::is_uppercase)
}

/// Heuristic tagger: gazetteer matches plus maximal runs of capitalized
/// tokens of length at most five. A run of one token at a sentence start is
/// ignored. Runs default to PERSON unless the gazetteer knows the phrase.
pub fn heuristic_tag_entities(article: &Article, gazetteer: &Gazetteer) -> Vec<EntitySpan> {
    let detailed = article.detailed_tokens();
    let tokens = article.tokens();
    let mut spans = Vec::new();
    let mk = |start: usize, end: usize, etype: EntityType| EntitySpan {
        article_id: article.id.clone(),
        start_token: start,
        end_token: end,
        etype,
        surface: detailed[start..end]
            .iter()
            .map(|t| t.cased.as_str())
            .collect::<Vec<_>>()
            .join(" "),
    };

    if !gazetteer.is_empty() {
        for start in 0..tokens.len() {
            for len in (1..=gazetteer.longest.min(tokens.len() - start)).rev() {
                if let Some(etype) = gazetteer.lookup(&tokens[start..start + len]) {
                    spans.push(mk(start, start + len, etype));
                    break;
                }
            }
        }
    }

    let mut i = 0;
    while i < detailed.len() {
        if !is_capitalized(&detailed[i].cased) || detailed[i].text.starts_with('[') {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i + 1;
        while end < detailed.len()
            && is_capitalized(&detailed[end].cased)
            && !detailed[end].sentence_start
            && !detailed[end].text.starts_with('[')
        {
            end += 1;
        }
        let run = end - start;
        let lone_sentence_start = run == 1 && detailed[start].sentence_start;
        if run <= MAX_SPAN_TOKENS && !lone_sentence_start {
            let etype = gazetteer
                .lookup(&tokens[start..end])
                .unwrap_or(EntityType::Person);
            spans.push(mk(start, end, etype));
        }
        i = end;
    }
    resolve_overlaps(spans).0
}

/// Positions whose lowercase token is in the lexicon.
pub fn tag_sentiment(article: &Article, lexicon: &SentimentLexicon) -> BTreeSet<usize> {
    article
        .tokens()
        .iter()
        .enumerate()
        .filter(|(_, t)| lexicon.contains(&t.to_lowercase()))
        .map(|(i, _)| i)
        .collect()
}

/// Tag every article with the heuristic tagger and the lexicon.
pub fn annotate_corpus(
    corpus: &Corpus,
    gazetteer: &Gazetteer,
    lexicon: &SentimentLexicon,
) -> AnnotationSet {
    use rayon::prelude::*;
    let per: Vec<(Vec<EntitySpan>, BTreeSet<usize>)> = corpus
        .articles()
        .par_iter()
        .map(|a| (heuristic_tag_entities(a, gazetteer), tag_sentiment(a, lexicon)))
        .collect();
    let mut set = AnnotationSet::new();
    for (a, (spans, sentiment)) in corpus.iter().zip(per) {
        set.set_entities(&a.id, spans);
        set.set_sentiment(&a.id, sentiment);
    }
    set
}

/// Add sentiment positions to an existing set (e.g. after sidecar ingestion).
pub fn add_sentiment(set: &mut AnnotationSet, corpus: &Corpus, lexicon: &SentimentLexicon) {
    for a in corpus {
        set.set_sentiment(&a.id, tag_sentiment(a, lexicon));
    }
}
