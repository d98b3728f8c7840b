use std::collections::BTreeSet;

use rand::seq::index;

use crate::corpus::{Corpus, Ideology};
use crate::error::{Error, Result};
use crate::seed;

/// Downsample every ideology to the smallest ideology's count, uniformly
/// without replacement. Survivors keep their original order.
pub fn balance_by_ideology(corpus: &Corpus, seed_value: u64) -> Result<Corpus> {
    let mut buckets: [Vec<usize>; 3] = Default::default();
    for (i, a) in corpus.iter().enumerate() {
        buckets[a.ideology.index()].push(i);
    }
    for ideo in Ideology::ALL {
        if buckets[ideo.index()].is_empty() {
            return Err(Error::MissingIdeology(format!("{ideo:?}")));
        }
    }
    let target = buckets.iter().map(Vec::len).min().unwrap_or(0);
    let mut keep = BTreeSet::new();
    for ideo in Ideology::ALL {
        let bucket = &buckets[ideo.index()];
        let mut rng = seed::rng(seed_value, &format!("balance/{}", ideo.code()));
        for j in index::sample(&mut rng, bucket.len(), target) {
            keep.insert(bucket[j]);
        }
    }
    let mut pos = 0;
    Ok(corpus.filtered(|_| {
        let k = keep.contains(&pos);
        pos += 1;
        k
    }))
}
