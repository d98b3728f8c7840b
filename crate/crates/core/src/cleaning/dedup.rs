//! Character-level near-duplicate detection.
//!
//! `diff(a, b) = levenshtein(a, b) / max(len(a), len(b))` over the article's
//! title and paragraphs. Pairs with `diff < threshold` are duplicates and
//! the earlier-published article wins.
//!
//! The all-pairs scan is pruned with two lower bounds on the edit distance
//! before any dynamic programming runs: the length difference, and the
//! q-gram lemma (strings within distance `k` share at least
//! `max(|a|, |b|) - q + 1 - k*q` q-grams). Surviving pairs go through a
//! banded DP whose band is wide enough to decide `diff < threshold` exactly.

use rayon::prelude::*;

use crate::corpus::{Article, Corpus};

const QGRAM: usize = 3;

/// Unit-cost Levenshtein distance, two-row DP.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance if it is at most `k`, otherwise `None`.
pub fn bounded_levenshtein(a: &[char], b: &[char], k: usize) -> Option<usize> {
    let (n, m) = (a.len(), b.len());
    if n.abs_diff(m) > k {
        return None;
    }
    if n == 0 || m == 0 {
        return Some(n.max(m));
    }
    const INF: usize = usize::MAX / 2;
    let mut prev = vec![INF; m + 1];
    let mut cur = vec![INF; m + 1];
    for (j, slot) in prev.iter_mut().enumerate().take(k.min(m) + 1) {
        *slot = j;
    }
    for i in 1..=n {
        let lo = i.saturating_sub(k).max(1);
        let hi = (i + k).min(m);
        cur.fill(INF);
        if i <= k {
            cur[0] = i;
        }
        let mut row_min = cur[0];
        for j in lo..=hi {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            let v = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
            cur[j] = v;
            row_min = row_min.min(v);
        }
        if row_min > k {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[m];
    (d <= k).then_some(d)
}

/// The character sequence compared for duplicates.
pub fn dedup_text(article: &Article) -> Vec<char> {
    article.full_text().chars().collect()
}

/// Normalized edit distance in `[0, 1]`; two empty texts have difference 0.
pub fn near_duplicate_diff(a: &Article, b: &Article) -> f64 {
    char_diff(&dedup_text(a), &dedup_text(b))
}

pub fn char_diff(a: &[char], b: &[char]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(a, b) as f64 / longest as f64
}

/// Precomputed text and sorted q-gram hashes for one article.
pub struct DedupKey {
    chars: Vec<char>,
    qgrams: Vec<u64>,
}

impl DedupKey {
    pub fn new(article: &Article) -> Self {
        Self::from_chars(dedup_text(article))
    }

    pub fn from_chars(chars: Vec<char>) -> Self {
        let mut qgrams: Vec<u64> = chars
            .windows(QGRAM)
            .map(|w| {
                w.iter()
                    .fold(0xcbf29ce484222325u64, |h, &c| (h ^ c as u64).wrapping_mul(0x100000001b3))
            })
            .collect();
        qgrams.sort_unstable();
        Self { chars, qgrams }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    fn shared_qgrams(&self, other: &DedupKey) -> usize {
        let (mut i, mut j, mut shared) = (0, 0, 0);
        while i < self.qgrams.len() && j < other.qgrams.len() {
            match self.qgrams[i].cmp(&other.qgrams[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    shared += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        shared
    }

    /// Exactly `char_diff(self, other) < threshold`.
    pub fn is_duplicate(&self, other: &DedupKey, threshold: f64) -> bool {
        let longest = self.len().max(other.len());
        if longest == 0 {
            return 0.0 < threshold;
        }
        // Any distance d with d / longest < threshold satisfies d <= k.
        let k = (threshold * longest as f64).ceil() as usize;
        if self.len().abs_diff(other.len()) > k {
            return false;
        }
        let needed = (longest + 1).saturating_sub(QGRAM).saturating_sub(k * QGRAM);
        if needed > 0 && self.shared_qgrams(other) < needed {
            return false;
        }
        match bounded_levenshtein(&self.chars, &other.chars, k) {
            Some(d) => (d as f64) / (longest as f64) < threshold,
            None => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DedupeScope {
    /// Compare only articles from the same outlet.
    WithinOutlet,
    /// Compare every pair in the given corpus (used on one story cluster).
    WithinCluster,
}

/// For `group` (indices into `articles`), flag the ones to drop: an article
/// goes if some article published earlier (ties broken by smaller id) is a
/// duplicate of it.
pub fn duplicate_flags(articles: &[&Article], threshold: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..articles.len()).collect();
    order.sort_by(|&x, &y| {
        (articles[x].published, &articles[x].id).cmp(&(articles[y].published, &articles[y].id))
    });
    let keys: Vec<DedupKey> = order.par_iter().map(|&i| DedupKey::new(articles[i])).collect();
    let dropped_sorted: Vec<bool> = (0..order.len())
        .into_par_iter()
        .map(|pos| (0..pos).any(|earlier| keys[earlier].is_duplicate(&keys[pos], threshold)))
        .collect();
    let mut flags = vec![false; articles.len()];
    for (pos, &i) in order.iter().enumerate() {
        flags[i] = dropped_sorted[pos];
    }
    flags
}

pub fn dedupe(corpus: &Corpus, threshold: f64, scope: DedupeScope) -> Corpus {
    let mut drop = vec![false; corpus.len()];
    match scope {
        DedupeScope::WithinCluster => {
            let refs: Vec<&Article> = corpus.iter().collect();
            drop = duplicate_flags(&refs, threshold);
        }
        DedupeScope::WithinOutlet => {
            let mut groups: std::collections::BTreeMap<&str, Vec<usize>> = Default::default();
            for (i, a) in corpus.iter().enumerate() {
                groups.entry(a.outlet.as_str()).or_default().push(i);
            }
            for members in groups.values() {
                let refs: Vec<&Article> = members.iter().map(|&i| &corpus.articles()[i]).collect();
                for (flag, &i) in duplicate_flags(&refs, threshold).into_iter().zip(members) {
                    drop[i] = flag;
                }
            }
        }
    }
    let mut it = drop.into_iter();
    corpus.filtered(|_| !it.next().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{article, article_at};
    use crate::corpus::Ideology;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Full-matrix DP, kept separate from the two-row and banded versions.
    fn oracle_distance(a: &[char], b: &[char]) -> usize {
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            }
        }
        d[a.len()][b.len()]
    }

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn small_cases() {
        assert_eq!(char_diff(&chars("abc"), &chars("abd")), 1.0 / 3.0);
        assert_eq!(char_diff(&chars(""), &chars("")), 0.0);
        assert_eq!(char_diff(&chars(""), &chars("ab")), 1.0);
        let a = article("a", "Same title", &["Same body."]);
        assert_eq!(near_duplicate_diff(&a, &a.clone()), 0.0);
    }

    #[test]
    fn long_texts_match_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let base: Vec<char> = (0..5000).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
        let mut other = base.clone();
        for _ in 0..300 {
            let i = rng.random_range(0..other.len());
            other[i] = rng.random_range(b'a'..=b'z') as char;
        }
        let expected = oracle_distance(&base, &other);
        assert_eq!(levenshtein(&base, &other), expected);
        assert_eq!(char_diff(&base, &other), expected as f64 / 5000.0);
    }

    #[test]
    fn threshold_is_strict() {
        // distance 1 over length 10 gives exactly 0.1
        let a = DedupKey::from_chars(chars("abcdefghij"));
        let b = DedupKey::from_chars(chars("abcdefghiX"));
        assert!(!a.is_duplicate(&b, 0.1));
        assert!(a.is_duplicate(&b, 0.11));
    }

    #[test]
    fn earlier_article_survives() {
        let late = article_at("b", "o", Ideology::Left, 5, "Senate vote", &["The Senate voted today."]);
        let early = article_at("a", "o", Ideology::Left, 1, "Senate vote", &["The Senate voted today."]);
        let corpus = Corpus::from_articles(vec![late, early]).unwrap();
        let out = dedupe(&corpus, 0.1, DedupeScope::WithinOutlet);
        let ids: Vec<_> = out.iter().map(|a| a.id.as_str()).collect();
        assert_eq!(ids, ["a"]);
    }

    #[test]
    fn outlets_are_separate_scopes() {
        let a = article_at("a", "o1", Ideology::Left, 1, "Senate vote", &["The Senate voted."]);
        let b = article_at("b", "o2", Ideology::Left, 2, "Senate vote", &["The Senate voted."]);
        let corpus = Corpus::from_articles(vec![a, b]).unwrap();
        assert_eq!(dedupe(&corpus, 0.1, DedupeScope::WithinOutlet).len(), 2);
        assert_eq!(dedupe(&corpus, 0.1, DedupeScope::WithinCluster).len(), 1);
    }

    proptest! {
        #[test]
        fn bounded_agrees_with_oracle(a in "[ab ]{0,40}", b in "[ab ]{0,40}", k in 0usize..12) {
            let (a, b) = (chars(&a), chars(&b));
            let d = oracle_distance(&a, &b);
            prop_assert_eq!(levenshtein(&a, &b), d);
            let expected = if d <= k { Some(d) } else { None };
            prop_assert_eq!(bounded_levenshtein(&a, &b, k), expected);
        }

        #[test]
        fn pruned_decision_equals_plain_diff(a in "[abc ]{0,60}", b in "[abc ]{0,60}", t in 0.01f64..0.6) {
            let (ca, cb) = (chars(&a), chars(&b));
            let plain = char_diff(&ca, &cb) < t;
            let pruned = DedupKey::from_chars(ca).is_duplicate(&DedupKey::from_chars(cb), t);
            prop_assert_eq!(plain, pruned);
        }

        #[test]
        fn diff_is_symmetric_and_bounded(a in "[a-d]{0,30}", b in "[a-d]{0,30}") {
            let (ca, cb) = (chars(&a), chars(&b));
            let d = char_diff(&ca, &cb);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, char_diff(&cb, &ca));
            prop_assert_eq!(char_diff(&ca, &ca), 0.0);
        }
    }
}
