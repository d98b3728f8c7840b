use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Lowercase substring patterns for the page filters.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterPatternSet {
    pub url_patterns: Vec<String>,
    pub title_patterns: Vec<String>,
    pub nonus_url_keywords: Vec<String>,
    pub us_text_keywords: Vec<String>,
}

pub const URL_PATTERNS_FILE: &str = "url_patterns.txt";
pub const TITLE_PATTERNS_FILE: &str = "title_patterns.txt";
pub const NONUS_URL_FILE: &str = "nonus_url_keywords.txt";
pub const US_TEXT_FILE: &str = "us_text_keywords.txt";

fn owned(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_lowercase()).collect()
}

impl FilterPatternSet {
    /// The published sample patterns for non-article and non-US pages.
    pub fn published() -> Self {
        Self {
            url_patterns: owned(&["/video/", "/gallery/", "/slideshow/"]),
            title_patterns: owned(&[
                "weekly digest",
                "10 sites you should know",
                "day's end roundup",
                "photos of the week",
                "5 things you need to know",
            ]),
            nonus_url_keywords: owned(&[
                "/world/",
                "/international/",
                "/europe/",
                "/africa/",
                "/asia/",
                "/latin-america/",
                "/middle-east/",
            ]),
            us_text_keywords: owned(&[
                "U.S.",
                "United States",
                "Obama",
                "Trump",
                "Bush",
                "Biden",
                "Pompeo",
                "Clinton",
                "Pence",
            ]),
        }
    }

    /// Read the four pattern files from `dir`. A missing file yields an empty
    /// list.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "pattern directory not found"),
            ));
        }
        let read = |name: &str| -> Result<Vec<String>> {
            let path = dir.join(name);
            if path.exists() {
                read_pattern_file(&path)
            } else {
                Ok(Vec::new())
            }
        };
        Ok(Self {
            url_patterns: read(URL_PATTERNS_FILE)?,
            title_patterns: read(TITLE_PATTERNS_FILE)?,
            nonus_url_keywords: read(NONUS_URL_FILE)?,
            us_text_keywords: read(US_TEXT_FILE)?,
        })
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, items) in [
            (URL_PATTERNS_FILE, &self.url_patterns),
            (TITLE_PATTERNS_FILE, &self.title_patterns),
            (NONUS_URL_FILE, &self.nonus_url_keywords),
            (US_TEXT_FILE, &self.us_text_keywords),
        ] {
            let path = dir.join(name);
            let mut body = String::new();
            for item in items {
                body.push_str(item);
                body.push('\n');
            }
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// One pattern per line; blank lines and `#` comments are skipped.
pub fn read_pattern_file(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect())
}

fn contains_any(haystack: &str, patterns: &[String]) -> bool {
    patterns.iter().any(|p| haystack.contains(p.as_str()))
}

/// Drop pages whose URL or title contains a non-article pattern.
pub fn filter_non_articles(corpus: &Corpus, patterns: &FilterPatternSet) -> Corpus {
    corpus.filtered(|a| {
        !(contains_any(&a.url.to_lowercase(), &patterns.url_patterns)
            || contains_any(&a.title.to_lowercase(), &patterns.title_patterns))
    })
}

/// Drop a page iff its URL has a non-US keyword and its text has no US
/// keyword.
pub fn filter_non_us(corpus: &Corpus, patterns: &FilterPatternSet) -> Corpus {
    corpus.filtered(|a| {
        if !contains_any(&a.url.to_lowercase(), &patterns.nonus_url_keywords) {
            return true;
        }
        contains_any(&a.full_text().to_lowercase(), &patterns.us_text_keywords)
    })
}
