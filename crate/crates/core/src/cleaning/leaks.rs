//! Removal of outlet-identifying text.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Article, Corpus};
use crate::error::Result;
use crate::jsonl;
use crate::text;

pub const MASK_LITERAL: &str = "[MASK]";
pub const DEFAULT_MIN_COUNT: usize = 100;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutletLeaks {
    pub self_mention_phrases: Vec<String>,
    /// Normalized sentences (see `text::normalize_sentence`).
    pub frequent_sentences: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakPatternTable {
    pub outlets: BTreeMap<String, OutletLeaks>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakReport {
    pub masked_phrases: usize,
    pub removed_paragraphs: usize,
    pub dropped_articles: usize,
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(char::is_alphanumeric)
}

fn lower_eq(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}

/// Byte length of `phrase` matched case-insensitively at the start of `s`.
fn match_at(s: &str, phrase: &str) -> Option<usize> {
    let mut it = s.char_indices();
    for pc in phrase.chars() {
        let (_, sc) = it.next()?;
        if !lower_eq(sc, pc) {
            return None;
        }
    }
    Some(it.next().map(|(i, _)| i).unwrap_or(s.len()))
}

/// Replace whole-word, case-insensitive occurrences of any phrase with
/// `[MASK]`. Longer phrases win at the same position. Returns the count.
pub fn mask_phrases(text: &str, phrases: &[String]) -> (String, usize) {
    let mut sorted: Vec<&String> = phrases.iter().filter(|p| !p.is_empty()).collect();
    sorted.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then(a.cmp(b)));
    let mut out = String::with_capacity(text.len());
    let mut count = 0;
    let mut i = 0;
    let mut prev: Option<char> = None;
    while i < text.len() {
        let rest = &text[i..];
        let hit = if is_word_char(prev) {
            None
        } else {
            sorted.iter().find_map(|p| {
                let len = match_at(rest, p)?;
                (!is_word_char(rest[len..].chars().next())).then_some(len)
            })
        };
        match hit {
            Some(len) => {
                out.push_str(MASK_LITERAL);
                count += 1;
                prev = rest[..len].chars().last();
                i += len;
            }
            None => {
                let c = rest.chars().next().unwrap();
                out.push(c);
                prev = Some(c);
                i += c.len_utf8();
            }
        }
    }
    (out, count)
}

impl LeakPatternTable {
    /// Count normalized sentences per outlet (after self-mention masking) and
    /// keep those seen more than `min_count` times.
    pub fn mine(
        corpus: &Corpus,
        self_mentions: &BTreeMap<String, Vec<String>>,
        min_count: usize,
    ) -> Self {
        let mut counts: BTreeMap<&str, HashMap<String, usize>> = BTreeMap::new();
        let empty = Vec::new();
        for a in corpus {
            let phrases = self_mentions.get(&a.outlet).unwrap_or(&empty);
            let per_outlet = counts.entry(a.outlet.as_str()).or_default();
            for p in &a.paragraphs {
                let (masked, _) = mask_phrases(p, phrases);
                for s in text::split_sentences(&masked) {
                    *per_outlet.entry(text::normalize_sentence(s)).or_default() += 1;
                }
            }
        }
        let mut outlets = BTreeMap::new();
        for (outlet, sentences) in counts {
            let frequent: BTreeSet<String> = sentences
                .into_iter()
                .filter(|&(_, c)| c > min_count)
                .map(|(s, _)| s)
                .collect();
            outlets.insert(
                outlet.to_string(),
                OutletLeaks {
                    self_mention_phrases: self_mentions.get(outlet).cloned().unwrap_or_default(),
                    frequent_sentences: frequent,
                },
            );
        }
        for (outlet, phrases) in self_mentions {
            outlets.entry(outlet.clone()).or_insert_with(|| OutletLeaks {
                self_mention_phrases: phrases.clone(),
                frequent_sentences: BTreeSet::new(),
            });
        }
        Self { outlets }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        jsonl::read_json(path)
    }
}

fn strip_article(article: &Article, leaks: &OutletLeaks, report: &mut LeakReport) -> Option<Article> {
    let mut paragraphs: Vec<String> = article
        .paragraphs
        .iter()
        .map(|p| {
            let (masked, n) = mask_phrases(p, &leaks.self_mention_phrases);
            report.masked_phrases += n;
            masked
        })
        .collect();
    let (title, n) = mask_phrases(&article.title, &leaks.self_mention_phrases);
    report.masked_phrases += n;
    let total = paragraphs.len();
    let mut idx = 0;
    paragraphs.retain(|p| {
        let i = idx;
        idx += 1;
        let eligible = i < 2 || i + 2 >= total;
        let leaky = eligible
            && text::split_sentences(p)
                .into_iter()
                .any(|s| leaks.frequent_sentences.contains(&text::normalize_sentence(s)));
        if leaky {
            report.removed_paragraphs += 1;
        }
        !leaky
    });
    if paragraphs.is_empty() {
        log::warn!("article {} has no paragraphs left after leak removal; dropped", article.id);
        report.dropped_articles += 1;
        return None;
    }
    Some(Article::new(
        article.id.clone(),
        article.outlet.clone(),
        article.ideology,
        article.published,
        article.url.clone(),
        title,
        paragraphs,
    ))
}

/// Mask self-mentions, then remove any of the first two or last two
/// paragraphs that contains a frequent sentence of the article's outlet.
pub fn strip_media_leaks(corpus: &Corpus, table: &LeakPatternTable) -> (Corpus, LeakReport) {
    let mut report = LeakReport::default();
    let empty = OutletLeaks::default();
    let kept: Vec<Article> = corpus
        .iter()
        .filter_map(|a| strip_article(a, table.outlets.get(&a.outlet).unwrap_or(&empty), &mut report))
        .collect();
    let corpus = Corpus::from_articles(kept).expect("subset of a valid corpus has unique ids");
    (corpus, report)
}
