//! Deterministic word-level tokenizer and sentence splitter.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    #[serde(default)]
    pub stopwords: BTreeSet<String>,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punctuation: true,
            stopwords: BTreeSet::new(),
        }
    }
}

impl TokenizerConfig {
    /// Default config with the built-in English stopword list removed.
    pub fn without_stopwords() -> Self {
        Self {
            stopwords: english_stopwords(),
            ..Self::default()
        }
    }
}

/// One token with its surface form before lowercasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenInfo {
    pub text: String,
    pub cased: String,
    /// First token of a segment or after a chunk ending in `.`, `!` or `?`.
    pub sentence_start: bool,
}

pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    tokenize_detailed(text, config)
        .into_iter()
        .map(|t| t.text)
        .collect()
}

pub fn tokenize_detailed(text: &str, config: &TokenizerConfig) -> Vec<TokenInfo> {
    let normalized: String = text.nfc().collect();
    let mut out = Vec::new();
    let mut pending_start = true;
    for chunk in normalized.split_whitespace() {
        let ends_sentence = chunk_ends_sentence(chunk);
        let cased = if config.strip_punctuation {
            strip_chunk(chunk)
        } else {
            chunk.to_string()
        };
        if !cased.is_empty() {
            let text = if config.lowercase && !is_special(&cased) {
                let lowered: String = cased.to_lowercase().nfc().collect();
                if config.strip_punctuation {
                    strip_chunk(&lowered)
                } else {
                    lowered
                }
            } else {
                cased.clone()
            };
            if !text.is_empty() && !config.stopwords.contains(&text) {
                out.push(TokenInfo {
                    text,
                    cased,
                    sentence_start: pending_start,
                });
                pending_start = false;
            }
        }
        if ends_sentence {
            pending_start = true;
        }
    }
    out
}

/// `[MASK]`-style placeholders survive tokenization verbatim.
fn is_special(token: &str) -> bool {
    token.len() > 2
        && token.starts_with('[')
        && token.ends_with(']')
        && token[1..token.len() - 1]
            .chars()
            .all(|c| c.is_ascii_uppercase())
}

fn strip_chunk(chunk: &str) -> String {
    let bracketed = chunk.trim_matches(|c: char| !c.is_alphanumeric() && c != '[' && c != ']');
    if is_special(bracketed) {
        return bracketed.to_string();
    }
    chunk
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

fn chunk_ends_sentence(chunk: &str) -> bool {
    let trimmed = chunk.trim_end_matches(['"', '\'', ')', ']', '\u{2019}', '\u{201d}']);
    matches!(trimmed.chars().last(), Some('.' | '!' | '?'))
}

/// Split on `.`, `!` or `?` followed by whitespace. Pieces are trimmed and
/// never empty; every split point lies on whitespace, so tokenizing the
/// pieces one by one yields the same tokens as tokenizing the whole text.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            if let Some(&(j, next)) = chars.peek() {
                if next.is_whitespace() {
                    let piece = text[start..i + c.len_utf8()].trim();
                    if !piece.is_empty() {
                        out.push(piece);
                    }
                    start = j;
                }
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Lowercase, whitespace-collapsed form used for sentence pattern matching.
pub fn normalize_sentence(sentence: &str) -> String {
    let lowered: String = sentence.nfc().collect::<String>().to_lowercase();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just",
    "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once",
    "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "said", "same",
    "says", "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs",
    "them", "themselves", "then", "there", "these", "they", "this", "those", "through", "to",
    "too", "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
];

pub fn english_stopwords() -> BTreeSet<String> {
    STOPWORDS.iter().map(|s| s.to_string()).collect()
}

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.binary_search(&word).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_has_no_tokens() {
        assert!(tokenize("", &TokenizerConfig::default()).is_empty());
        assert!(tokenize("   \n\t", &TokenizerConfig::default()).is_empty());
    }

    #[test]
    fn lowercases_and_strips() {
        let toks = tokenize("Trump tests positive.", &TokenizerConfig::default());
        assert_eq!(toks, vec!["trump", "tests", "positive"]);
    }

    #[test]
    fn keeps_inner_punctuation_and_special_tokens() {
        let toks = tokenize("the U.S. said [MASK], \"really\"", &TokenizerConfig::default());
        assert_eq!(toks, vec!["the", "u.s", "said", "[MASK]", "really"]);
    }

    #[test]
    fn stopwords_are_caller_selected() {
        let plain = tokenize("the deal is off", &TokenizerConfig::default());
        assert_eq!(plain.len(), 4);
        let filtered = tokenize("the deal is off", &TokenizerConfig::without_stopwords());
        assert_eq!(filtered, vec!["deal"]);
    }

    #[test]
    fn raw_mode_keeps_chunks() {
        let cfg = TokenizerConfig {
            lowercase: false,
            strip_punctuation: false,
            stopwords: BTreeSet::new(),
        };
        assert_eq!(tokenize("Hi, there.", &cfg), vec!["Hi,", "there."]);
    }

    #[test]
    fn sentence_starts_are_flagged() {
        let info = tokenize_detailed("The cat sat. Dogs ran! — Birds", &TokenizerConfig::default());
        let starts: Vec<_> = info.iter().map(|t| t.sentence_start).collect();
        assert_eq!(starts, vec![true, false, false, true, false, true]);
        assert_eq!(info[3].cased, "Dogs");
    }

    #[test]
    fn sentence_splitting() {
        let s = split_sentences("One two. Three? Four!Five six.  ");
        assert_eq!(s, vec!["One two.", "Three?", "Four!Five six."]);
        assert!(split_sentences("   ").is_empty());
    }

    #[test]
    fn stopword_table_is_sorted() {
        let mut sorted = STOPWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, STOPWORDS);
        assert!(is_stopword("the"));
        assert!(!is_stopword("senate"));
    }

    #[test]
    fn large_document_is_deterministic() {
        let para = "Senators met Tuesday. The vote, however, failed! Why? Nobody knows... ";
        let doc: String = para.repeat((1 << 20) / para.len() + 1);
        assert!(doc.len() >= 1 << 20);
        let cfg = TokenizerConfig::default();
        assert_eq!(tokenize(&doc, &cfg), tokenize(&doc, &cfg));
    }

    proptest! {
        #[test]
        fn retokenizing_joined_tokens_is_identity(text in "[a-zA-Z0-9éÅ .,;:!?'\"()\\-\\[\\]]{0,200}") {
            let cfg = TokenizerConfig::default();
            let once = tokenize(&text, &cfg);
            let twice = tokenize(&once.join(" "), &cfg);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn sentence_pieces_tokenize_like_the_whole(text in "[a-zA-Z .!?\n]{0,200}") {
            let cfg = TokenizerConfig::default();
            let whole = tokenize(&text, &cfg);
            let pieces: Vec<String> = split_sentences(&text)
                .into_iter()
                .flat_map(|s| tokenize(s, &cfg))
                .collect();
            prop_assert_eq!(whole, pieces);
        }
    }
}
