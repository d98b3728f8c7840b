//! Small builders shared by unit tests.

use chrono::NaiveDate;

use crate::corpus::{Article, Ideology};

pub fn date(day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(day as u64)
}

pub fn article(id: &str, title: &str, paragraphs: &[&str]) -> Article {
    Article::new(
        id,
        "outlet",
        Ideology::Left,
        date(0),
        format!("https://example.com/{id}"),
        title,
        paragraphs.iter().map(|s| s.to_string()).collect(),
    )
}

pub fn article_at(
    id: &str,
    outlet: &str,
    ideology: Ideology,
    day: u32,
    title: &str,
    paragraphs: &[&str],
) -> Article {
    Article::new(
        id,
        outlet,
        ideology,
        date(day),
        format!("https://{outlet}.example.com/politics/{id}"),
        title,
        paragraphs.iter().map(|s| s.to_string()).collect(),
    )
}
