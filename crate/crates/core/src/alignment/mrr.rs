use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::index::{AlignConfig, TfIdfIndex};
use crate::error::{Error, Result};
use crate::jsonl;

/// Articles known to cover the same story.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldGroup {
    pub story_id: String,
    pub article_ids: Vec<String>,
}

pub fn load_gold(path: &Path) -> Result<Vec<GoldGroup>> {
    jsonl::read(path)
}

pub fn save_gold(groups: &[GoldGroup], path: &Path) -> Result<()> {
    jsonl::write(path, groups)
}

/// Reciprocal rank per gold anchor, in gold-file order. Each article of a
/// group with at least two members is an anchor; its constraint-passing
/// candidates with score at least theta are ranked by score (ties by id) and
/// the first same-story hit gives `1 / rank`, or 0 when none is reachable.
pub fn reciprocal_ranks(
    gold: &[GoldGroup],
    index: &TfIdfIndex,
    config: &AlignConfig,
) -> Result<Vec<(String, f64)>> {
    let mut anchors: Vec<(usize, BTreeSet<usize>)> = Vec::new();
    for group in gold {
        let mut docs = Vec::with_capacity(group.article_ids.len());
        for id in &group.article_ids {
            docs.push(index.position(id).ok_or_else(|| Error::UnknownArticle(id.clone()))?);
        }
        if docs.len() < 2 {
            continue;
        }
        for &d in &docs {
            let partners: BTreeSet<usize> = docs.iter().copied().filter(|&p| p != d).collect();
            anchors.push((d, partners));
        }
    }
    Ok(anchors
        .par_iter()
        .map(|(anchor, partners)| {
            let mut scored: Vec<(f64, &str, usize)> = index
                .candidates(*anchor, config)
                .values()
                .flatten()
                .map(|&d| (index.story_similarity(*anchor, d, config), index.id(d), d))
                .filter(|(s, _, _)| *s >= config.theta)
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
            let rr = scored
                .iter()
                .position(|(_, _, d)| partners.contains(d))
                .map(|r| 1.0 / (r + 1) as f64)
                .unwrap_or(0.0);
            (index.id(*anchor).to_string(), rr)
        })
        .collect())
}

pub fn evaluate_mrr(gold: &[GoldGroup], index: &TfIdfIndex, config: &AlignConfig) -> Result<f64> {
    let rr = reciprocal_ranks(gold, index, config)?;
    Ok(mean_reciprocal_rank(rr.iter().map(|(_, r)| *r)))
}

/// Mean of reciprocal ranks; 0 for an empty sequence.
pub fn mean_reciprocal_rank(rr: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = rr.into_iter().fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrrGridRow {
    pub alpha: f64,
    pub theta: f64,
    pub mrr: f64,
}

/// MRR over an (alpha, theta) grid. The index does not depend on either.
pub fn mrr_grid(
    gold: &[GoldGroup],
    index: &TfIdfIndex,
    base: &AlignConfig,
    alphas: &[f64],
    thetas: &[f64],
) -> Result<Vec<MrrGridRow>> {
    let mut rows = Vec::with_capacity(alphas.len() * thetas.len());
    for &alpha in alphas {
        for &theta in thetas {
            let cfg = AlignConfig { alpha, theta, ..*base };
            rows.push(MrrGridRow {
                alpha,
                theta,
                mrr: evaluate_mrr(gold, index, &cfg)?,
            });
        }
    }
    Ok(rows)
}
