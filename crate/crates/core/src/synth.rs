//! Synthetic news corpus with known story groups, planted entities and
//! ideology marker words.
//!
//! Every story gets one article per outlet. Articles of a story share
//! story-specific content words and entity names; Left and Right articles
//! also carry marker words from their side's lexicon. Distractor articles
//! cover stories no other outlet reports.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::GoldGroup;
use crate::annotate::{AnnotationSet, EntitySpan, EntityType, Gazetteer, SentimentLexicon};
use crate::corpus::{Article, Corpus, Ideology};
use crate::error::{Error, Result};
use crate::{jsonl, seed, text};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutletSpec {
    pub name: String,
    pub display: String,
    pub ideology: Ideology,
}

impl OutletSpec {
    pub fn new(name: &str, display: &str, ideology: Ideology) -> Self {
        Self {
            name: name.into(),
            display: display.into(),
            ideology,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_stories: usize,
    pub outlets: Vec<OutletSpec>,
    pub n_distractors: usize,
    pub n_near_duplicates: usize,
    pub story_words: usize,
    pub entities_per_story: usize,
    pub common_entities: usize,
    pub filler_vocab: usize,
    pub marker_vocab: usize,
    pub markers_per_article: usize,
    pub sentiment_vocab: usize,
    pub sentiment_rate: f64,
    /// Probability that a story word or entity mention is swapped for one
    /// from another story.
    pub noise_rate: f64,
    pub paragraphs: usize,
    pub sentences_per_paragraph: usize,
    pub boilerplate: bool,
    pub span_days: u32,
    pub start: NaiveDate,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_stories: 150,
            outlets: default_outlets(),
            n_distractors: 60,
            n_near_duplicates: 0,
            story_words: 6,
            entities_per_story: 2,
            common_entities: 12,
            filler_vocab: 400,
            marker_vocab: 40,
            markers_per_article: 16,
            sentiment_vocab: 60,
            sentiment_rate: 0.3,
            noise_rate: 0.1,
            paragraphs: 3,
            sentences_per_paragraph: 4,
            boilerplate: false,
            span_days: 365,
            start: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            seed: 0,
        }
    }
}

pub fn default_outlets() -> Vec<OutletSpec> {
    vec![
        OutletSpec::new("ledger", "The Ledger", Ideology::Left),
        OutletSpec::new("beacon", "Daily Beacon", Ideology::Left),
        OutletSpec::new("courier", "Metro Courier", Ideology::Center),
        OutletSpec::new("gazette", "Valley Gazette", Ideology::Center),
        OutletSpec::new("sentinel", "The Sentinel", Ideology::Right),
        OutletSpec::new("herald", "Evening Herald", Ideology::Right),
    ]
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outlets.is_empty() {
            return Err(Error::Config("synth needs at least one outlet".into()));
        }
        let names: HashSet<&str> = self.outlets.iter().map(|o| o.name.as_str()).collect();
        if names.len() != self.outlets.len() {
            return Err(Error::Config("outlet names must be unique".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) || !(0.0..=1.0).contains(&self.sentiment_rate) {
            return Err(Error::Config("rates must lie in [0, 1]".into()));
        }
        if self.paragraphs == 0 || self.sentences_per_paragraph == 0 || self.story_words == 0 || self.entities_per_story == 0 {
            return Err(Error::Config("paragraphs, sentences, story words and entities must be at least 1".into()));
        }
        if !(10..=600).contains(&self.filler_vocab) || self.span_days == 0 {
            return Err(Error::Config("filler_vocab must lie in [10, 600] and span_days be at least 1".into()));
        }
        let topics = self.n_stories + self.n_distractors;
        let three = topics * (self.story_words + 2 * self.entities_per_story)
            + 2 * self.common_entities
            + 2 * self.marker_vocab
            + self.sentiment_vocab;
        if three > 20_000 {
            return Err(Error::Config(format!("{topics} stories need more distinct words than the generator offers")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub corpus: Corpus,
    pub gold: Vec<GoldGroup>,
    pub spans: Vec<EntitySpan>,
    pub gazetteer: Gazetteer,
    pub lexicon: SentimentLexicon,
    pub self_mentions: BTreeMap<String, Vec<String>>,
    pub left_markers: Vec<String>,
    pub right_markers: Vec<String>,
}

impl SynthOutput {
    /// The planted spans as an annotation set.
    pub fn annotations(&self) -> AnnotationSet {
        let mut per: BTreeMap<&str, Vec<EntitySpan>> = BTreeMap::new();
        for s in &self.spans {
            per.entry(s.article_id.as_str()).or_default().push(s.clone());
        }
        let mut set = AnnotationSet::new();
        for (id, spans) in per {
            set.set_entities(id, spans);
        }
        set
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        crate::save_corpus(&self.corpus, &dir.join(CORPUS_FILE))?;
        crate::alignment::save_gold(&self.gold, &dir.join(GOLD_FILE))?;
        jsonl::write(&dir.join(SPANS_FILE), &self.spans)?;
        self.gazetteer.save(&dir.join(GAZETTEER_FILE))?;
        let lex: String = self.lexicon.entries.iter().map(|w| format!("{w}\n")).collect();
        let path = dir.join(LEXICON_FILE);
        std::fs::write(&path, lex).map_err(|e| Error::io(&path, e))?;
        jsonl::write_json(&dir.join(SELF_MENTIONS_FILE), &self.self_mentions)
    }
}

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const GOLD_FILE: &str = "gold.jsonl";
pub const SPANS_FILE: &str = "entities.jsonl";
pub const GAZETTEER_FILE: &str = "gazetteer.tsv";
pub const LEXICON_FILE: &str = "sentiment.txt";
pub const SELF_MENTIONS_FILE: &str = "self_mentions.json";

const SYLLABLES: &[&str] = &[
    "ba", "ce", "di", "fo", "gu", "ka", "le", "mi", "no", "pu", "ra", "se", "ti", "vo", "zu", "bre", "cla", "dro",
    "fli", "gro", "plo", "shi", "tra", "vel", "mor", "nek", "sal", "tor", "qui", "jan",
];

/// Unique pseudo-words across every category.
struct WordGen {
    used: HashSet<String>,
}

impl WordGen {
    fn word(&mut self, rng: &mut ChaCha8Rng, syllables: usize) -> String {
        loop {
            let w: String = (0..syllables).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
            if w.len() >= 4 && !text::is_stopword(&w) && self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words(&mut self, rng: &mut ChaCha8Rng, n: usize, syllables: usize) -> Vec<String> {
        (0..n).map(|_| self.word(rng, syllables)).collect()
    }

    fn name(&mut self, rng: &mut ChaCha8Rng, tokens: usize) -> Vec<String> {
        (0..tokens).map(|_| capitalize(&self.word(rng, 3))).collect()
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

#[derive(Debug, Clone)]
struct Entity {
    tokens: Vec<String>,
    etype: EntityType,
}

#[derive(Debug, Clone)]
struct Topic {
    words: Vec<String>,
    entities: Vec<Entity>,
}

#[derive(Debug, Clone)]
enum Piece {
    Word(String),
    Entity(Entity),
    Plain(Vec<String>),
}

struct World {
    fillers: Vec<String>,
    topics: Vec<Topic>,
    common: Vec<Entity>,
    left: Vec<String>,
    right: Vec<String>,
    sentiment: Vec<String>,
}

const ENTITY_TYPES: [EntityType; 4] = [EntityType::Org, EntityType::Gpe, EntityType::Event, EntityType::Norp];

fn build_world(config: &SynthConfig, n_topics: usize, rng: &mut ChaCha8Rng) -> World {
    let mut gen = WordGen { used: HashSet::new() };
    let fillers = gen.words(rng, config.filler_vocab, 2);
    let left = gen.words(rng, config.marker_vocab, 3);
    let right = gen.words(rng, config.marker_vocab, 3);
    let sentiment = gen.words(rng, config.sentiment_vocab, 3);
    let entity = |gen: &mut WordGen, rng: &mut ChaCha8Rng, k: usize| {
        let etype = if k == 0 { EntityType::Person } else { ENTITY_TYPES[k % ENTITY_TYPES.len()] };
        Entity {
            tokens: gen.name(rng, 2),
            etype,
        }
    };
    let common = (0..config.common_entities).map(|k| entity(&mut gen, rng, k)).collect();
    let topics = (0..n_topics)
        .map(|_| Topic {
            words: gen.words(rng, config.story_words, 3),
            entities: (0..config.entities_per_story).map(|k| entity(&mut gen, rng, k)).collect(),
        })
        .collect();
    World {
        fillers,
        topics,
        common,
        left,
        right,
        sentiment,
    }
}

struct Writer<'a> {
    world: &'a World,
    config: &'a SynthConfig,
    topic: usize,
}

impl Writer<'_> {
    fn story_word(&self, rng: &mut ChaCha8Rng) -> String {
        let w = &self.world;
        if rng.random_bool(self.config.noise_rate) && w.topics.len() > 1 {
            let other = w.topics.choose(rng).unwrap();
            other.words.choose(rng).unwrap().clone()
        } else {
            w.topics[self.topic].words.choose(rng).unwrap().clone()
        }
    }

    fn story_entity(&self, rng: &mut ChaCha8Rng, k: usize) -> Entity {
        let w = &self.world;
        if rng.random_bool(self.config.noise_rate) && w.topics.len() > 1 {
            w.topics.choose(rng).unwrap().entities.choose(rng).unwrap().clone()
        } else {
            let ents = &w.topics[self.topic].entities;
            ents[k % ents.len()].clone()
        }
    }

    fn filler(&self, rng: &mut ChaCha8Rng) -> String {
        self.world.fillers.choose(rng).unwrap().clone()
    }

    /// A sentence: capitalized filler, lowercase filler, then a mix of story
    /// words and fillers, with an optional entity mention.
    fn sentence(&self, rng: &mut ChaCha8Rng, entity: Option<Entity>) -> Vec<Piece> {
        let mut s = vec![Piece::Word(capitalize(&self.filler(rng))), Piece::Word(self.filler(rng))];
        let body = rng.random_range(6..10);
        for _ in 0..body {
            if rng.random_bool(0.35) {
                s.push(Piece::Word(self.story_word(rng)));
            } else {
                s.push(Piece::Word(self.filler(rng)));
            }
        }
        if let Some(e) = entity {
            let at = rng.random_range(2..=s.len());
            s.insert(at, Piece::Entity(e));
            // keep a lowercase word after the mention so runs stay separate
            s.insert(at + 1, Piece::Word(self.filler(rng)));
        }
        if rng.random_bool(self.config.sentiment_rate) && !self.world.sentiment.is_empty() {
            let at = rng.random_range(2..=s.len());
            s.insert(at, Piece::Word(self.world.sentiment.choose(rng).unwrap().clone()));
        }
        s
    }

    fn title(&self, rng: &mut ChaCha8Rng) -> Vec<Piece> {
        let mut t = vec![Piece::Entity(self.story_entity(rng, 0)), Piece::Word(self.filler(rng))];
        for _ in 0..3 {
            t.push(Piece::Word(self.story_word(rng)));
        }
        t
    }
}

fn insert_markers(paragraphs: &mut [Vec<Vec<Piece>>], markers: &[String], n: usize, rng: &mut ChaCha8Rng) {
    for _ in 0..n {
        let p = rng.random_range(0..paragraphs.len());
        let s = rng.random_range(0..paragraphs[p].len());
        let sentence = &mut paragraphs[p][s];
        let at = rng.random_range(2..=sentence.len());
        sentence.insert(at, Piece::Word(markers.choose(rng).unwrap().clone()));
    }
}

/// Render pieces to text and record entity spans by token position.
fn render(pieces: &[Piece], offset: &mut usize, spans: &mut Vec<(usize, usize, Entity)>, sentence_end: bool) -> String {
    let mut words: Vec<String> = Vec::new();
    for piece in pieces {
        match piece {
            Piece::Word(w) => words.push(w.clone()),
            Piece::Plain(ws) => words.extend(ws.iter().cloned()),
            Piece::Entity(e) => {
                spans.push((*offset + words.len(), *offset + words.len() + e.tokens.len(), e.clone()));
                words.extend(e.tokens.iter().cloned());
            }
        }
    }
    *offset += words.len();
    let mut out = words.join(" ");
    if sentence_end {
        out.push('.');
    }
    out
}

struct Draft {
    id: String,
    outlet: usize,
    day: u32,
    topic: usize,
}

pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = seed::rng(config.seed, "synth/world");
    let n_topics = config.n_stories + config.n_distractors;
    let world = build_world(config, n_topics, &mut rng);

    let mut drafts = Vec::new();
    let mut gold = Vec::new();
    let mut plan_rng = seed::rng(config.seed, "synth/plan");
    for s in 0..config.n_stories {
        let day = plan_rng.random_range(0..config.span_days);
        let mut ids = Vec::new();
        for (o, outlet) in config.outlets.iter().enumerate() {
            let id = format!("{}-{s:04}", outlet.name);
            drafts.push(Draft {
                id: id.clone(),
                outlet: o,
                day: day + plan_rng.random_range(0..=1),
                topic: s,
            });
            ids.push(id);
        }
        gold.push(GoldGroup {
            story_id: format!("s{s:04}"),
            article_ids: ids,
        });
    }
    for x in 0..config.n_distractors {
        let o = plan_rng.random_range(0..config.outlets.len());
        drafts.push(Draft {
            id: format!("{}-x{x:04}", config.outlets[o].name),
            outlet: o,
            day: plan_rng.random_range(0..config.span_days),
            topic: config.n_stories + x,
        });
    }

    let mut articles = Vec::with_capacity(drafts.len() + config.n_near_duplicates);
    let mut spans = Vec::new();
    for d in &drafts {
        let (article, s) = write_article(config, &world, d)?;
        articles.push(article);
        spans.extend(s);
    }

    let mut dup_rng = seed::rng(config.seed, "synth/duplicates");
    let story_articles = config.n_stories * config.outlets.len();
    for k in 0..config.n_near_duplicates.min(story_articles) {
        let src = articles[dup_rng.random_range(0..story_articles)].clone();
        if src.id.ends_with("-copy") || articles.iter().any(|a| a.id == format!("{}-copy", src.id)) {
            continue;
        }
        let mut copy = src.clone();
        copy.id = format!("{}-copy", src.id);
        copy.url = format!("{}-copy", src.url);
        copy.published = src.published + chrono::Days::new(1 + k as u64 % 2);
        // flip a few vowels inside the last paragraph
        if let Some(last) = copy.paragraphs.last_mut() {
            let mut chars: Vec<char> = last.chars().collect();
            for _ in 0..3 {
                let i = dup_rng.random_range(0..chars.len());
                if chars[i].is_ascii_lowercase() {
                    chars[i] = if chars[i] == 'a' { 'e' } else { 'a' };
                }
            }
            *last = chars.into_iter().collect();
        }
        copy.retokenize();
        articles.push(copy);
    }

    let mut gazetteer = Gazetteer::new();
    for t in &world.topics {
        for e in &t.entities {
            gazetteer.insert(&e.tokens.join(" "), e.etype);
        }
    }
    for e in &world.common {
        gazetteer.insert(&e.tokens.join(" "), e.etype);
    }
    let self_mentions = config
        .outlets
        .iter()
        .map(|o| (o.name.clone(), vec![o.display.clone()]))
        .collect();
    Ok(SynthOutput {
        corpus: Corpus::from_articles(articles)?,
        gold,
        spans,
        gazetteer,
        lexicon: SentimentLexicon::new(&world.sentiment, "synthetic"),
        self_mentions,
        left_markers: world.left.clone(),
        right_markers: world.right.clone(),
    })
}

fn write_article(config: &SynthConfig, world: &World, d: &Draft) -> Result<(Article, Vec<EntitySpan>)> {
    let mut rng = seed::rng(config.seed, &format!("synth/article/{}", d.id));
    let outlet = &config.outlets[d.outlet];
    let writer = Writer {
        world,
        config,
        topic: d.topic,
    };
    let title = writer.title(&mut rng);
    let mut paragraphs: Vec<Vec<Vec<Piece>>> = Vec::new();
    for p in 0..config.paragraphs {
        let mut sentences = Vec::new();
        for s in 0..config.sentences_per_paragraph {
            let entity = if p == 0 {
                Some(writer.story_entity(&mut rng, s))
            } else if rng.random_bool(0.15) && !world.common.is_empty() {
                Some(world.common.choose(&mut rng).unwrap().clone())
            } else if rng.random_bool(0.4) {
                Some(writer.story_entity(&mut rng, s))
            } else {
                None
            };
            sentences.push(writer.sentence(&mut rng, entity));
        }
        paragraphs.push(sentences);
    }
    let markers = match outlet.ideology {
        Ideology::Left => &world.left,
        Ideology::Right => &world.right,
        Ideology::Center => &Vec::new(),
    };
    if !markers.is_empty() {
        insert_markers(&mut paragraphs, markers, config.markers_per_article, &mut rng);
    }
    if config.boilerplate {
        if rng.random_bool(0.3) {
            let p = rng.random_range(0..paragraphs.len());
            let display: Vec<String> = outlet.display.split_whitespace().map(String::from).collect();
            let sentence = &mut paragraphs[p][0];
            let at = rng.random_range(2..=sentence.len());
            sentence.insert(at, Piece::Plain(display));
            sentence.insert(at, Piece::Word("reports".into()));
        }
        let tail: Vec<Piece> = format!("Subscribe to {} for more coverage", outlet.display)
            .split_whitespace()
            .map(|w| Piece::Word(w.to_string()))
            .collect();
        paragraphs.push(vec![tail]);
    }

    let mut offset = 0;
    let mut raw = Vec::new();
    let title_text = render(&title, &mut offset, &mut raw, false);
    let mut body = Vec::new();
    for para in &paragraphs {
        let rendered: Vec<String> = para.iter().map(|s| render(s, &mut offset, &mut raw, true)).collect();
        body.push(rendered.join(" "));
    }
    let date = config.start + chrono::Days::new(d.day as u64);
    let article = Article::new(
        d.id.clone(),
        outlet.name.clone(),
        outlet.ideology,
        date,
        format!("https://{}.example.com/politics/{}/{}", outlet.name, date.format("%Y/%m/%d"), d.id),
        title_text,
        body,
    );
    let spans = raw
        .into_iter()
        .map(|(s, e, ent)| EntitySpan {
            article_id: d.id.clone(),
            start_token: s,
            end_token: e,
            etype: ent.etype,
            surface: ent.tokens.join(" "),
        })
        .collect();
    Ok((article, spans))
}
