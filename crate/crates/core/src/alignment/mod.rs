//! Same-story alignment across outlets.
//!
//! Every article serves as an anchor. For each other outlet, the candidate
//! with the highest story similarity joins the anchor's cluster when its
//! score reaches `theta`. Story similarity mixes TF-IDF cosine and weighted
//! entity-word Jaccard with weight `alpha`; candidates must fall within the
//! date window and share an entity word with the anchor.

mod index;
mod mrr;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::AnnotationSet;
use crate::cleaning::{DedupKey, DEFAULT_DEDUPE_THRESHOLD};
use crate::corpus::Corpus;
use crate::error::Result;
use crate::jsonl;

pub use index::{mix_similarity, sparse_dot, weighted_jaccard, AlignConfig, SparseVec, TfIdfIndex};
pub use mrr::{evaluate_mrr, load_gold, mean_reciprocal_rank, mrr_grid, reciprocal_ranks, save_gold, GoldGroup, MrrGridRow};

/// An anchor plus its best match from each other matched outlet.
#[derive(Debug, Clone, PartialEq)]
pub struct StoryCluster {
    pub anchor_id: String,
    /// Anchor first, then matches in outlet order.
    pub member_ids: Vec<String>,
    /// Scores of the non-anchor members.
    pub scores: BTreeMap<String, f64>,
}

impl StoryCluster {
    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }

    pub fn matches(&self) -> impl Iterator<Item = &String> {
        self.member_ids.iter().skip(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MemberRecord {
    id: String,
    score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClusterRecord {
    anchor: String,
    members: Vec<MemberRecord>,
}

pub fn save_clusters(clusters: &[StoryCluster], path: &Path) -> Result<()> {
    let records: Vec<ClusterRecord> = clusters
        .iter()
        .map(|c| ClusterRecord {
            anchor: c.anchor_id.clone(),
            members: c
                .matches()
                .map(|id| MemberRecord {
                    id: id.clone(),
                    score: c.scores[id],
                })
                .collect(),
        })
        .collect();
    jsonl::write(path, &records)
}

pub fn load_clusters(path: &Path) -> Result<Vec<StoryCluster>> {
    let records: Vec<ClusterRecord> = jsonl::read(path)?;
    Ok(records
        .into_iter()
        .map(|r| {
            let mut member_ids = vec![r.anchor.clone()];
            let mut scores = BTreeMap::new();
            for m in r.members {
                member_ids.push(m.id.clone());
                scores.insert(m.id, m.score);
            }
            StoryCluster {
                anchor_id: r.anchor,
                member_ids,
                scores,
            }
        })
        .collect())
}

/// Best candidate per outlet with score at least theta; ties go to the
/// smaller id.
fn best_matches(index: &TfIdfIndex, anchor: usize, config: &AlignConfig) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for docs in index.candidates(anchor, config).values() {
        let mut best: Option<(usize, f64)> = None;
        for &d in docs {
            let s = index.story_similarity(anchor, d, config);
            let better = match best {
                None => true,
                Some((b, bs)) => s > bs || (s == bs && index.id(d) < index.id(b)),
            };
            if better {
                best = Some((d, s));
            }
        }
        if let Some((d, s)) = best {
            if s >= config.theta {
                out.push((d, s));
            }
        }
    }
    out
}

/// Drop members that near-duplicate the anchor or an earlier-published
/// member. The anchor itself always stays.
fn dedupe_members(corpus: &Corpus, anchor: &str, members: Vec<(String, f64)>) -> Vec<(String, f64)> {
    let anchor_key = DedupKey::new(corpus.get(anchor).expect("anchor in corpus"));
    let mut ordered: Vec<(String, f64)> = members;
    ordered.sort_by(|a, b| {
        let (x, y) = (corpus.get(&a.0).unwrap(), corpus.get(&b.0).unwrap());
        (x.published, &x.id).cmp(&(y.published, &y.id))
    });
    let mut kept: Vec<((String, f64), DedupKey)> = Vec::new();
    for m in ordered {
        let key = DedupKey::new(corpus.get(&m.0).unwrap());
        let dup = key.is_duplicate(&anchor_key, DEFAULT_DEDUPE_THRESHOLD)
            || kept.iter().any(|(_, k)| k.is_duplicate(&key, DEFAULT_DEDUPE_THRESHOLD));
        if !dup {
            kept.push((m, key));
        }
    }
    kept.into_iter().map(|(m, _)| m).collect()
}

/// Clusters for every anchor that gained at least one match, in corpus
/// order.
pub fn align_with_index(corpus: &Corpus, index: &TfIdfIndex, config: &AlignConfig) -> Vec<StoryCluster> {
    (0..index.len())
        .into_par_iter()
        .filter_map(|anchor| {
            let matches = best_matches(index, anchor, config);
            if matches.is_empty() {
                return None;
            }
            let anchor_id = index.id(anchor).to_string();
            let members: Vec<(String, f64)> = matches
                .into_iter()
                .map(|(d, s)| (index.id(d).to_string(), s))
                .collect();
            let mut kept = dedupe_members(corpus, &anchor_id, members);
            if kept.is_empty() {
                return None;
            }
            kept.sort_by(|a, b| {
                let oa = index.outlet(index.position(&a.0).unwrap());
                let ob = index.outlet(index.position(&b.0).unwrap());
                oa.cmp(ob)
            });
            let mut member_ids = vec![anchor_id.clone()];
            let mut scores = BTreeMap::new();
            for (id, s) in kept {
                member_ids.push(id.clone());
                scores.insert(id, s);
            }
            Some(StoryCluster {
                anchor_id,
                member_ids,
                scores,
            })
        })
        .collect()
}

pub fn align(corpus: &Corpus, annotations: &AnnotationSet, config: &AlignConfig) -> Vec<StoryCluster> {
    if corpus.is_empty() {
        return Vec::new();
    }
    let index = TfIdfIndex::build(corpus, annotations, config);
    align_with_index(corpus, &index, config)
}
