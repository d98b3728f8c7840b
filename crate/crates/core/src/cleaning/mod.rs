//! Corpus cleaning: non-article and non-US filters, near-duplicate removal,
//! politics classification, media-leak removal and ideology balancing.

mod balance;
mod dedup;
mod leaks;
mod patterns;
mod politics;

pub use balance::balance_by_ideology;
pub use dedup::{
    bounded_levenshtein, char_diff, dedup_text, dedupe, duplicate_flags, levenshtein,
    near_duplicate_diff, DedupKey, DedupeScope,
};
pub use leaks::{
    mask_phrases, strip_media_leaks, LeakPatternTable, LeakReport, OutletLeaks, DEFAULT_MIN_COUNT,
    MASK_LITERAL,
};
pub use patterns::{
    filter_non_articles, filter_non_us, read_pattern_file, FilterPatternSet, NONUS_URL_FILE,
    TITLE_PATTERNS_FILE, URL_PATTERNS_FILE, US_TEXT_FILE,
};
pub use politics::{
    filter_politics, label_from_url, url_training_split, ClassifierOptions, PoliticsClassifier,
    NON_POLITICS_URL_KEYWORDS, POLITICS_URL_KEYWORDS,
};

pub const DEFAULT_DEDUPE_THRESHOLD: f64 = 0.1;
