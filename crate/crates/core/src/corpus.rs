//! Article data model and JSONL persistence.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::text::{self, TokenInfo, TokenizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Ideology {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "C")]
    Center,
    #[serde(rename = "R")]
    Right,
}

impl Ideology {
    pub const ALL: [Ideology; 3] = [Ideology::Left, Ideology::Center, Ideology::Right];

    pub fn code(self) -> &'static str {
        match self {
            Ideology::Left => "L",
            Ideology::Center => "C",
            Ideology::Right => "R",
        }
    }

    /// Left and Right are each other's opposite; Center has none.
    pub fn opposite(self) -> Option<Ideology> {
        match self {
            Ideology::Left => Some(Ideology::Right),
            Ideology::Right => Some(Ideology::Left),
            Ideology::Center => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Ideology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// On-disk article record. Field order here is the serialized field order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ArticleRecord {
    id: String,
    outlet: String,
    ideology: Ideology,
    published: NaiveDate,
    url: String,
    title: String,
    paragraphs: Vec<String>,
}

/// One news article. `tokens` is derived from title and paragraphs and is
/// never serialized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "ArticleRecord", into = "ArticleRecord")]
pub struct Article {
    pub id: String,
    pub outlet: String,
    pub ideology: Ideology,
    pub published: NaiveDate,
    pub url: String,
    pub title: String,
    pub paragraphs: Vec<String>,
    tokens: Vec<String>,
}

impl From<ArticleRecord> for Article {
    fn from(r: ArticleRecord) -> Self {
        Article::new(r.id, r.outlet, r.ideology, r.published, r.url, r.title, r.paragraphs)
    }
}

impl From<Article> for ArticleRecord {
    fn from(a: Article) -> Self {
        ArticleRecord {
            id: a.id,
            outlet: a.outlet,
            ideology: a.ideology,
            published: a.published,
            url: a.url,
            title: a.title,
            paragraphs: a.paragraphs,
        }
    }
}

impl Article {
    pub fn new(
        id: impl Into<String>,
        outlet: impl Into<String>,
        ideology: Ideology,
        published: NaiveDate,
        url: impl Into<String>,
        title: impl Into<String>,
        paragraphs: Vec<String>,
    ) -> Self {
        let mut article = Article {
            id: id.into(),
            outlet: outlet.into(),
            ideology,
            published,
            url: url.into(),
            title: title.into(),
            paragraphs,
            tokens: Vec::new(),
        };
        article.retokenize();
        article
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Re-derive `tokens` after editing title or paragraphs.
    pub fn retokenize(&mut self) {
        self.tokens = text::tokenize(&self.full_text(), &TokenizerConfig::default());
    }

    /// Title and paragraphs joined by newlines.
    pub fn full_text(&self) -> String {
        let mut s = self.title.clone();
        for p in &self.paragraphs {
            s.push('\n');
            s.push_str(p);
        }
        s
    }

    /// Tokens with surface case and sentence-start flags. Title and each
    /// paragraph begin a new sentence. Aligned index-for-index with `tokens`.
    pub fn detailed_tokens(&self) -> Vec<TokenInfo> {
        let cfg = TokenizerConfig::default();
        std::iter::once(self.title.as_str())
            .chain(self.paragraphs.iter().map(String::as_str))
            .flat_map(|seg| text::tokenize_detailed(seg, &cfg))
            .collect()
    }

    /// Token ranges of the title (element 0) followed by every body sentence
    /// in order.
    pub fn sentence_token_ranges(&self) -> Vec<Range<usize>> {
        let cfg = TokenizerConfig::default();
        let mut ranges = Vec::new();
        let mut pos = 0;
        let title_len = text::tokenize(&self.title, &cfg).len();
        ranges.push(pos..pos + title_len);
        pos += title_len;
        for p in &self.paragraphs {
            for s in text::split_sentences(p) {
                let n = text::tokenize(s, &cfg).len();
                ranges.push(pos..pos + n);
                pos += n;
            }
        }
        debug_assert_eq!(pos, self.tokens.len());
        ranges
    }

    /// Token range covering the title and the first `n` body sentences.
    pub fn leading_scope(&self, n: usize) -> Range<usize> {
        let ranges = self.sentence_token_ranges();
        let end = ranges[..ranges.len().min(n + 1)]
            .last()
            .map(|r| r.end)
            .unwrap_or(0);
        0..end
    }
}

/// Articles in file order with an id index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    articles: Vec<Article>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build from articles; fails on the first repeated id.
    pub fn from_articles(articles: Vec<Article>) -> Result<Self> {
        let mut corpus = Corpus {
            articles: Vec::with_capacity(articles.len()),
            index: HashMap::with_capacity(articles.len()),
        };
        for (i, a) in articles.into_iter().enumerate() {
            corpus.push_at_line(a, i + 1)?;
        }
        Ok(corpus)
    }

    pub fn push(&mut self, article: Article) -> Result<()> {
        let line = self.articles.len() + 1;
        self.push_at_line(article, line)
    }

    fn push_at_line(&mut self, article: Article, line: usize) -> Result<()> {
        if self.index.contains_key(&article.id) {
            return Err(Error::DuplicateId {
                id: article.id,
                line,
            });
        }
        self.index.insert(article.id.clone(), self.articles.len());
        self.articles.push(article);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Article> {
        self.articles.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Article> {
        self.index.get(id).map(|&i| &self.articles[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Keep articles for which `keep` holds, preserving order.
    pub fn filtered<F: FnMut(&Article) -> bool>(&self, mut keep: F) -> Corpus {
        let kept: Vec<Article> = self.articles.iter().filter(|a| keep(a)).cloned().collect();
        Corpus::from_articles(kept).expect("subset of a valid corpus has unique ids")
    }

    pub fn into_articles(self) -> Vec<Article> {
        self.articles
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Article;
    type IntoIter = std::slice::Iter<'a, Article>;

    fn into_iter(self) -> Self::IntoIter {
        self.articles.iter()
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let mut corpus = Corpus::new();
    jsonl::for_each(path, |line, article: Article| corpus.push_at_line(article, line))?;
    Ok(corpus)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    jsonl::write(path, corpus.articles())
}
