//! Ideology and story triplets built from story clusters.
//!
//! Within a cluster, a Left or Right anchor pairs with every same-ideology
//! member as positive. Ideology triplets take every opposite-ideology member
//! as negative. Story triplets reuse the same pairs with negatives drawn from
//! the anchor's own outlet on other stories. Center articles never appear.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::StoryCluster;
use crate::corpus::{Corpus, Ideology};
use crate::error::{Error, Result};
use crate::{jsonl, seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripletKind {
    Ideology,
    Story,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub kind: TripletKind,
    pub anchor: String,
    pub positive: String,
    pub negative: String,
}

impl Triplet {
    fn new(kind: TripletKind, anchor: &str, positive: &str, negative: &str) -> Self {
        Self {
            kind,
            anchor: anchor.to_string(),
            positive: positive.to_string(),
            negative: negative.to_string(),
        }
    }
}

/// Which kinds a build emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindSelection {
    #[default]
    Both,
    Ideology,
    Story,
}

impl KindSelection {
    pub fn includes(self, kind: TripletKind) -> bool {
        match self {
            KindSelection::Both => true,
            KindSelection::Ideology => kind == TripletKind::Ideology,
            KindSelection::Story => kind == TripletKind::Story,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TripletConfig {
    pub kind: KindSelection,
    pub neg_k: usize,
    pub max_per_cluster: Option<usize>,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self {
            kind: KindSelection::Both,
            neg_k: 1,
            max_per_cluster: None,
        }
    }
}

fn member_ideologies<'a>(cluster: &'a StoryCluster, corpus: &Corpus) -> Result<Vec<(&'a str, Ideology)>> {
    cluster
        .member_ids
        .iter()
        .map(|id| {
            corpus
                .get(id)
                .map(|a| (id.as_str(), a.ideology))
                .ok_or_else(|| Error::UnknownArticle(id.clone()))
        })
        .collect()
}

/// Ordered (anchor, positive) pairs: distinct members sharing Left or Right.
pub fn ideology_pairs(cluster: &StoryCluster, corpus: &Corpus) -> Result<Vec<(String, String)>> {
    let members = member_ideologies(cluster, corpus)?;
    let mut pairs = Vec::new();
    for &(a, ia) in &members {
        if ia == Ideology::Center {
            continue;
        }
        for &(p, ip) in &members {
            if p != a && ip == ia {
                pairs.push((a.to_string(), p.to_string()));
            }
        }
    }
    Ok(pairs)
}

pub fn build_ideology_triplets(cluster: &StoryCluster, corpus: &Corpus) -> Result<Vec<Triplet>> {
    let members = member_ideologies(cluster, corpus)?;
    let mut out = Vec::new();
    for (a, p) in ideology_pairs(cluster, corpus)? {
        let opposite = corpus.get(&a).and_then(|x| x.ideology.opposite());
        for &(n, ino) in &members {
            if Some(ino) == opposite {
                out.push(Triplet::new(TripletKind::Ideology, &a, &p, n));
            }
        }
    }
    Ok(out)
}

/// Clustered articles grouped by outlet, each list sorted by id.
#[derive(Debug, Clone, Default)]
pub struct NegativePool {
    by_outlet: BTreeMap<String, Vec<String>>,
}

impl NegativePool {
    pub fn from_clusters(clusters: &[StoryCluster], corpus: &Corpus) -> Result<Self> {
        let mut sets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for c in clusters {
            for id in &c.member_ids {
                let a = corpus.get(id).ok_or_else(|| Error::UnknownArticle(id.clone()))?;
                sets.entry(a.outlet.clone()).or_default().insert(id.clone());
            }
        }
        Ok(Self {
            by_outlet: sets.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
        })
    }

    pub fn from_lists(by_outlet: BTreeMap<String, Vec<String>>) -> Self {
        let by_outlet = by_outlet
            .into_iter()
            .map(|(k, mut v)| {
                v.sort();
                v.dedup();
                (k, v)
            })
            .collect();
        Self { by_outlet }
    }

    pub fn outlet(&self, outlet: &str) -> &[String] {
        self.by_outlet.get(outlet).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Story triplets for one cluster and the number of pairs skipped for an
/// empty pool.
pub fn build_story_triplets(
    cluster: &StoryCluster,
    corpus: &Corpus,
    pool: &NegativePool,
    neg_k: usize,
    seed_value: u64,
) -> Result<(Vec<Triplet>, usize)> {
    let members: HashSet<&str> = cluster.member_ids.iter().map(String::as_str).collect();
    let mut rng = seed::rng(seed_value, &format!("story/{}", cluster.anchor_id));
    let mut out = Vec::new();
    let mut skipped = 0;
    for (a, p) in ideology_pairs(cluster, corpus)? {
        let outlet = &corpus.get(&a).expect("resolved above").outlet;
        let eligible: Vec<&String> = pool
            .outlet(outlet)
            .iter()
            .filter(|id| !members.contains(id.as_str()))
            .collect();
        if eligible.is_empty() {
            skipped += 1;
            continue;
        }
        for j in index::sample(&mut rng, eligible.len(), neg_k.min(eligible.len())) {
            out.push(Triplet::new(TripletKind::Story, &a, &p, eligible[j]));
        }
    }
    Ok((out, skipped))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
    pub skipped_story_pairs: usize,
    pub duplicates_removed: usize,
}

fn cap(mut items: Vec<Triplet>, limit: Option<usize>, seed_value: u64, label: &str) -> Vec<Triplet> {
    match limit {
        Some(m) if items.len() > m => {
            let mut rng = seed::rng(seed_value, label);
            let mut keep: Vec<usize> = index::sample(&mut rng, items.len(), m).into_vec();
            keep.sort_unstable();
            let mut slots: Vec<Option<Triplet>> = items.drain(..).map(Some).collect();
            keep.into_iter().map(|i| slots[i].take().unwrap()).collect()
        }
        _ => items,
    }
}

/// Triplets for every cluster, in cluster order. Overlapping clusters can
/// emit the same triplet (or the same story pair) more than once; only the
/// first occurrence is kept.
pub fn build_triplets(
    clusters: &[StoryCluster],
    corpus: &Corpus,
    config: &TripletConfig,
    seed_value: u64,
) -> Result<TripletSet> {
    let pool = NegativePool::from_clusters(clusters, corpus)?;
    let per_cluster: Vec<(Vec<Triplet>, usize)> = clusters
        .par_iter()
        .map(|c| -> Result<(Vec<Triplet>, usize)> {
            let mut out = Vec::new();
            let mut skipped = 0;
            if config.kind.includes(TripletKind::Ideology) {
                let t = build_ideology_triplets(c, corpus)?;
                out.extend(cap(t, config.max_per_cluster, seed_value, &format!("cap/ideology/{}", c.anchor_id)));
            }
            if config.kind.includes(TripletKind::Story) {
                let (t, s) = build_story_triplets(c, corpus, &pool, config.neg_k, seed_value)?;
                out.extend(cap(t, config.max_per_cluster, seed_value, &format!("cap/story/{}", c.anchor_id)));
                skipped = s;
            }
            Ok((out, skipped))
        })
        .collect::<Result<_>>()?;

    let mut set = TripletSet::default();
    let mut seen_triplets: HashSet<Triplet> = HashSet::new();
    let mut seen_story_pairs: HashSet<(String, String)> = HashSet::new();
    let mut pair_owner: HashSet<(String, String, usize)> = HashSet::new();
    for (ci, (triplets, skipped)) in per_cluster.into_iter().enumerate() {
        set.skipped_story_pairs += skipped;
        for t in triplets {
            let fresh = match t.kind {
                TripletKind::Ideology => !seen_triplets.contains(&t),
                TripletKind::Story => {
                    let key = (t.anchor.clone(), t.positive.clone());
                    // all k negatives of a pair come from the first cluster
                    // that produced it
                    if seen_story_pairs.insert(key.clone()) {
                        pair_owner.insert((key.0, key.1, ci));
                        true
                    } else {
                        pair_owner.contains(&(key.0, key.1, ci)) && !seen_triplets.contains(&t)
                    }
                }
            };
            if fresh {
                seen_triplets.insert(t.clone());
                set.triplets.push(t);
            } else {
                set.duplicates_removed += 1;
            }
        }
    }
    Ok(set)
}

/// Shuffle under `seed` and cut into batches of `batch_size`. With a kind
/// filter, batches holding none of that kind are skipped.
pub fn batch_triplets(
    triplets: &[Triplet],
    batch_size: usize,
    seed_value: u64,
    kind: Option<TripletKind>,
) -> Result<Vec<Vec<Triplet>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    order.shuffle(&mut seed::rng(seed_value, "batches"));
    Ok(order
        .chunks(batch_size)
        .map(|chunk| chunk.iter().map(|&i| triplets[i].clone()).collect::<Vec<_>>())
        .filter(|b| kind.is_none_or(|k| b.iter().any(|t| t.kind == k)))
        .collect())
}

pub fn save_triplets(triplets: &[Triplet], path: &Path) -> Result<()> {
    jsonl::write(path, triplets)
}

pub fn load_triplets(path: &Path) -> Result<Vec<Triplet>> {
    jsonl::read(path)
}

/// Type invariant of a single triplet against the corpus and its cluster.
pub fn is_valid_ideology_triplet(t: &Triplet, cluster: &StoryCluster, corpus: &Corpus) -> bool {
    let get = |id: &str| corpus.get(id).map(|a| a.ideology);
    let in_cluster = |id: &String| cluster.member_ids.contains(id);
    let (Some(a), Some(p), Some(n)) = (get(&t.anchor), get(&t.positive), get(&t.negative)) else {
        return false;
    };
    t.kind == TripletKind::Ideology
        && t.anchor != t.positive
        && t.anchor != t.negative
        && t.positive != t.negative
        && a != Ideology::Center
        && p == a
        && Some(n) == a.opposite()
        && in_cluster(&t.anchor)
        && in_cluster(&t.positive)
        && in_cluster(&t.negative)
}
