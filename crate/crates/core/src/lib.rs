//! Corpus engineering and contrastive pretraining for ideology-aware news
//! representations.

pub mod alignment;
pub mod annotate;
pub mod cleaning;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod jsonl;
pub mod logistic;
pub mod masking;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod synth;
pub mod text;
pub mod triplets;

#[cfg(test)]
pub(crate) mod fixtures;

pub use corpus::{load_corpus, save_corpus, Article, Corpus, Ideology};
pub use error::{Error, Result};
