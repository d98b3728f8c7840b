//! Politics/non-politics page classifier on unigram+bigram TF-IDF features.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Article, Corpus};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::logistic::{BinaryModel, GdOptions, SparseRow};
use crate::text::{self, TokenizerConfig};

/// URL keywords that label training pages as politics.
pub const POLITICS_URL_KEYWORDS: &[&str] = &[
    "/politics/",
    "/political/",
    "/policy/",
    "/election/",
    "/elections/",
    "/allpolitics/",
];

/// URL keywords that label training pages as non-politics.
pub const NON_POLITICS_URL_KEYWORDS: &[&str] = &[
    "/travel/",
    "/sports/",
    "/life/",
    "/movie/",
    "/entertainment/",
    "/science/",
    "/music/",
    "/plated/",
    "/leisure/",
    "/showbiz/",
    "/lifestyle/",
    "/fashion/",
    "/art/",
    "/sport/",
];

/// Weak label from the URL: `Some(true)` politics, `Some(false)`
/// non-politics, `None` when neither (or both) keyword lists match.
pub fn label_from_url(url: &str) -> Option<bool> {
    let url = url.to_lowercase();
    let pos = POLITICS_URL_KEYWORDS.iter().any(|k| url.contains(k));
    let neg = NON_POLITICS_URL_KEYWORDS.iter().any(|k| url.contains(k));
    match (pos, neg) {
        (true, false) => Some(true),
        (false, true) => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOptions {
    pub min_df: usize,
    /// Terms in more than `max_df_ratio * |D|` documents are dropped.
    pub max_df_ratio: f64,
    pub gd: GdOptions,
}

impl Default for ClassifierOptions {
    fn default() -> Self {
        Self {
            min_df: 5,
            max_df_ratio: 0.7,
            gd: GdOptions {
                learning_rate: 2.0,
                epochs: 200,
                l2: 1e-4,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoliticsClassifier {
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn ngrams(article: &Article) -> Vec<String> {
    let toks = text::tokenize(&article.full_text(), &TokenizerConfig::default());
    let mut grams: Vec<String> = toks.clone();
    grams.extend(toks.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    grams
}

fn featurize(grams: &[String], vocabulary: &BTreeMap<String, usize>, idf: &[f64]) -> SparseRow {
    let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
    for g in grams {
        if let Some(&j) = vocabulary.get(g) {
            *tf.entry(j).or_default() += 1.0;
        }
    }
    let mut row: SparseRow = tf.into_iter().map(|(j, c)| (j, c * idf[j])).collect();
    let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        row.iter_mut().for_each(|(_, v)| *v /= norm);
    }
    row
}

impl PoliticsClassifier {
    pub fn train(labeled: &[(&Article, bool)], opts: &ClassifierOptions) -> Result<Self> {
        if labeled.len() < 2 {
            return Err(Error::invalid("politics classifier needs at least 2 examples"));
        }
        let positives = labeled.iter().filter(|(_, y)| *y).count();
        if positives == 0 || positives == labeled.len() {
            return Err(Error::invalid("politics classifier needs both labels"));
        }
        let docs: Vec<Vec<String>> = labeled.iter().map(|(a, _)| ngrams(a)).collect();
        let mut df: HashMap<&str, usize> = HashMap::new();
        for d in &docs {
            let mut seen: Vec<&str> = d.iter().map(String::as_str).collect();
            seen.sort_unstable();
            seen.dedup();
            for g in seen {
                *df.entry(g).or_default() += 1;
            }
        }
        let n = docs.len() as f64;
        let max_df = opts.max_df_ratio * n;
        let mut kept: Vec<(&str, usize)> = df
            .into_iter()
            .filter(|&(_, c)| c >= opts.min_df && (c as f64) <= max_df)
            .collect();
        kept.sort_unstable();
        let vocabulary: BTreeMap<String, usize> =
            kept.iter().enumerate().map(|(i, (g, _))| (g.to_string(), i)).collect();
        let idf: Vec<f64> = kept
            .iter()
            .map(|&(_, c)| ((1.0 + n) / (1.0 + c as f64)).ln() + 1.0)
            .collect();
        let rows: Vec<SparseRow> = docs.iter().map(|d| featurize(d, &vocabulary, &idf)).collect();
        let labels: Vec<bool> = labeled.iter().map(|(_, y)| *y).collect();
        let model = BinaryModel::fit(&rows, &labels, vocabulary.len(), &opts.gd);
        Ok(Self {
            vocabulary,
            idf,
            weights: model.weights,
            bias: model.bias,
        })
    }

    /// Train, then add unlabeled pages scored at least `p_pos` as politics or
    /// at most `1 - p_neg` as non-politics, and train once more.
    pub fn self_train(
        labeled: &[(&Article, bool)],
        unlabeled: &[&Article],
        p_pos: f64,
        p_neg: f64,
        opts: &ClassifierOptions,
    ) -> Result<Self> {
        let first = Self::train(labeled, opts)?;
        let mut augmented = labeled.to_vec();
        for &a in unlabeled {
            let p = first.probability(a);
            if p >= p_pos {
                augmented.push((a, true));
            } else if p <= 1.0 - p_neg {
                augmented.push((a, false));
            }
        }
        Self::train(&augmented, opts)
    }

    pub fn probability(&self, article: &Article) -> f64 {
        let row = featurize(&ngrams(article), &self.vocabulary, &self.idf);
        BinaryModel {
            weights: self.weights.clone(),
            bias: self.bias,
        }
        .probability(&row)
    }

    pub fn is_politics(&self, article: &Article) -> bool {
        self.probability(article) >= 0.5
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Self = jsonl::read_json(path)?;
        if c.idf.len() != c.vocabulary.len() || c.weights.len() != c.vocabulary.len() {
            return Err(Error::invalid(format!(
                "{}: classifier dimensions disagree with vocabulary size",
                path.display()
            )));
        }
        Ok(c)
    }
}

pub fn filter_politics(corpus: &Corpus, classifier: &PoliticsClassifier) -> Corpus {
    corpus.filtered(|a| classifier.is_politics(a))
}

/// Weakly labeled pages from URL keywords plus the remaining unlabeled pages.
pub fn url_training_split(corpus: &Corpus) -> (Vec<(&Article, bool)>, Vec<&Article>) {
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for a in corpus {
        match label_from_url(&a.url) {
            Some(y) => labeled.push((a, y)),
            None => unlabeled.push(a),
        }
    }
    (labeled, unlabeled)
}
