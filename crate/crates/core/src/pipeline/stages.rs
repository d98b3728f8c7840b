use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{manifest_path, sibling, timings_path, FileRecord, Manifest, RunConfig, Timings};
use crate::alignment::{
    self, evaluate_mrr, load_clusters, load_gold, mrr_grid, save_clusters, GoldGroup, MrrGridRow, TfIdfIndex,
};
use crate::annotate::{
    add_sentiment, annotate_corpus, ingest_annotations, AnnotationSet, Gazetteer, SentimentLexicon,
};
use crate::cleaning::{
    balance_by_ideology, dedupe, filter_non_articles, filter_non_us, filter_politics, strip_media_leaks,
    url_training_split, ClassifierOptions, DedupeScope, FilterPatternSet, LeakPatternTable, PoliticsClassifier,
};
use crate::corpus::{load_corpus, save_corpus, Corpus, Ideology};
use crate::error::{Error, Result};
use crate::evaluation::{embed_corpus, ideology_labels, linear_probe, mask_report, ppl_by_ideology, MaskReport, ProbeResult};
use crate::jsonl;
use crate::masking::{build_vocab, load_masked, mask_corpus, save_masked, Vocabulary};
use crate::model::{
    epoch_length, save_trace, smoothed_combined_loss, train as train_model, Checkpoint, DocTable, EncoderModel,
    MlmHead,
};
use crate::synth::{self, SynthOutput};
use crate::triplets::{build_triplets, load_triplets, save_triplets, TripletKind};

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub seconds: f64,
}

struct Recorder {
    stage: &'static str,
    start: Instant,
    inputs: Vec<FileRecord>,
}

impl Recorder {
    fn new(stage: &'static str) -> Self {
        Self {
            stage,
            start: Instant::now(),
            inputs: Vec::new(),
        }
    }

    fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.push(FileRecord::input(role, path)?);
        Ok(())
    }

    fn finish(
        self,
        cfg: &RunConfig,
        config: serde_json::Value,
        outputs: &[(&str, &Path)],
        summary: serde_json::Value,
    ) -> Result<StageOutcome> {
        let primary = outputs.first().expect("stage has an output").1;
        let manifest = Manifest {
            stage: self.stage.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            config,
            inputs: self.inputs,
            outputs: outputs
                .iter()
                .map(|(role, p)| FileRecord::output(role, p))
                .collect::<Result<_>>()?,
            summary,
        };
        let path = manifest_path(primary);
        jsonl::write_json(&path, &manifest)?;
        let seconds = self.start.elapsed().as_secs_f64();
        let timings = Timings {
            stage: self.stage.to_string(),
            seconds,
            threads: rayon::current_num_threads(),
        };
        jsonl::write_json(&timings_path(primary), &timings)?;
        log::info!("{}: {:.2}s, manifest {}", self.stage, seconds, path.display());
        Ok(StageOutcome {
            manifest,
            manifest_path: path,
            seconds,
        })
    }
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

fn ideology_counts(corpus: &Corpus) -> BTreeMap<Ideology, usize> {
    let mut m = BTreeMap::new();
    for a in corpus {
        *m.entry(a.ideology).or_insert(0) += 1;
    }
    m
}

/// Generate the synthetic corpus, gold groups and planted annotations into
/// `out_dir`.
pub fn synth(cfg: &RunConfig, out_dir: &Path) -> Result<(StageOutcome, SynthOutput)> {
    let cfg = cfg.clone().seeded();
    let rec = Recorder::new("synth");
    let out = synth::generate(&cfg.synth)?;
    out.write_dir(out_dir)?;
    let files: Vec<(&str, PathBuf)> = [
        ("corpus", synth::CORPUS_FILE),
        ("gold", synth::GOLD_FILE),
        ("entities", synth::SPANS_FILE),
        ("gazetteer", synth::GAZETTEER_FILE),
        ("lexicon", synth::LEXICON_FILE),
        ("self_mentions", synth::SELF_MENTIONS_FILE),
    ]
    .into_iter()
    .map(|(role, f)| (role, out_dir.join(f)))
    .collect();
    let outputs: Vec<(&str, &Path)> = files.iter().map(|(r, p)| (*r, p.as_path())).collect();
    let summary = json!({
        "articles": out.corpus.len(),
        "gold_groups": out.gold.len(),
        "entity_spans": out.spans.len(),
        "ideologies": ideology_counts(&out.corpus),
    });
    let outcome = rec.finish(&cfg, to_value(&cfg.synth), &outputs, summary)?;
    Ok((outcome, out))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CleanInputs {
    pub corpus: PathBuf,
    pub output: PathBuf,
    /// Directory of pattern files; the published lists when absent.
    pub patterns: Option<PathBuf>,
    pub politics_model: Option<PathBuf>,
    /// Train a politics model from URL-labelled pages and save it here.
    pub train_politics: Option<PathBuf>,
    /// JSON map outlet -> self-mention phrases.
    pub self_mentions: Option<PathBuf>,
}

/// Filters, politics classification, within-outlet dedupe, media-leak
/// stripping and optional balancing, in that order.
pub fn clean(cfg: &RunConfig, io: &CleanInputs) -> Result<StageOutcome> {
    let cc = &cfg.clean;
    let mut rec = Recorder::new("clean");
    rec.input("corpus", &io.corpus)?;
    let mut corpus = load_corpus(&io.corpus)?;
    let mut steps: Vec<(&str, usize)> = vec![("input", corpus.len())];

    let patterns = match &io.patterns {
        Some(dir) => {
            for f in [
                crate::cleaning::URL_PATTERNS_FILE,
                crate::cleaning::TITLE_PATTERNS_FILE,
                crate::cleaning::NONUS_URL_FILE,
                crate::cleaning::US_TEXT_FILE,
            ] {
                let p = dir.join(f);
                if p.is_file() {
                    rec.input("patterns", &p)?;
                }
            }
            FilterPatternSet::load_dir(dir)?
        }
        None => FilterPatternSet::published(),
    };
    if cc.non_articles {
        corpus = filter_non_articles(&corpus, &patterns);
        steps.push(("non_articles", corpus.len()));
    }
    if cc.non_us {
        corpus = filter_non_us(&corpus, &patterns);
        steps.push(("non_us", corpus.len()));
    }

    let mut extra_outputs: Vec<(&str, PathBuf)> = Vec::new();
    let classifier = match (&io.politics_model, &io.train_politics) {
        (Some(_), Some(_)) => {
            return Err(Error::Config("give either a politics model or a path to train one, not both".into()))
        }
        (Some(p), None) => {
            rec.input("politics_model", p)?;
            Some(PoliticsClassifier::load(p)?)
        }
        (None, Some(out)) => {
            let (labeled, unlabeled) = url_training_split(&corpus);
            let opts = ClassifierOptions::default();
            let model = match cc.self_train {
                Some([pp, pn]) => PoliticsClassifier::self_train(&labeled, &unlabeled, pp, pn, &opts)?,
                None => PoliticsClassifier::train(&labeled, &opts)?,
            };
            ensure_parent(out)?;
            model.save(out)?;
            extra_outputs.push(("politics_model", out.clone()));
            Some(model)
        }
        (None, None) => None,
    };
    if let Some(c) = &classifier {
        corpus = filter_politics(&corpus, c);
        steps.push(("politics", corpus.len()));
    }

    corpus = dedupe(&corpus, cc.dedupe_threshold, DedupeScope::WithinOutlet);
    steps.push(("dedupe", corpus.len()));

    let self_mentions: BTreeMap<String, Vec<String>> = match &io.self_mentions {
        Some(p) => {
            rec.input("self_mentions", p)?;
            jsonl::read_json(p)?
        }
        None => BTreeMap::new(),
    };
    let table = LeakPatternTable::mine(&corpus, &self_mentions, cc.leak_min_count);
    let (stripped, leaks) = strip_media_leaks(&corpus, &table);
    corpus = stripped;

    if cc.balance {
        corpus = balance_by_ideology(&corpus, cfg.seed)?;
        steps.push(("balance", corpus.len()));
    }

    save_corpus(&corpus, &io.output)?;
    let leaks_path = sibling(&io.output, "leaks.json");
    table.save(&leaks_path)?;
    let mut outputs: Vec<(&str, &Path)> = vec![("corpus", io.output.as_path()), ("leaks", leaks_path.as_path())];
    outputs.extend(extra_outputs.iter().map(|(r, p)| (*r, p.as_path())));
    let summary = json!({
        "steps": steps.iter().map(|(s, n)| json!({"step": s, "articles": n})).collect::<Vec<_>>(),
        "leaks": to_value(&leaks),
        "ideologies": ideology_counts(&corpus),
    });
    rec.finish(cfg, to_value(cc), &outputs, summary)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotateInputs {
    pub corpus: PathBuf,
    pub output: PathBuf,
    pub sidecar: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
}

/// Entity spans go to `output`; sentiment positions to
/// `<stem>.sentiment.jsonl` beside it.
pub fn annotate(cfg: &RunConfig, io: &AnnotateInputs) -> Result<StageOutcome> {
    let mut rec = Recorder::new("annotate");
    rec.input("corpus", &io.corpus)?;
    let corpus = load_corpus(&io.corpus)?;
    let lexicon = match &io.lexicon {
        Some(p) => {
            rec.input("lexicon", p)?;
            SentimentLexicon::load(p)?
        }
        None => SentimentLexicon::new(Vec::<String>::new(), "empty"),
    };
    let (set, mode, ingest) = match (&io.sidecar, &io.gazetteer) {
        (Some(side), None) => {
            rec.input("sidecar", side)?;
            let (mut set, report) = ingest_annotations(side, &corpus)?;
            add_sentiment(&mut set, &corpus, &lexicon);
            (set, "sidecar", Some(report))
        }
        (None, Some(gaz)) => {
            rec.input("gazetteer", gaz)?;
            let g = Gazetteer::load(gaz)?;
            (annotate_corpus(&corpus, &g, &lexicon), "heuristic", None)
        }
        _ => return Err(Error::Config("annotate needs exactly one of a sidecar file or a gazetteer".into())),
    };
    ensure_parent(&io.output)?;
    set.save_entities(&io.output)?;
    let sentiment_path = sibling(&io.output, "sentiment.jsonl");
    set.save_sentiment(&sentiment_path)?;
    let sentiment_tokens: usize = set.sentiment_map().values().map(BTreeSet::len).sum();
    let summary = json!({
        "mode": mode,
        "entity_spans": set.entity_count(),
        "sentiment_tokens": sentiment_tokens,
        "ingest": ingest.map(|r| to_value(&r)),
    });
    rec.finish(
        cfg,
        json!({ "mode": mode }),
        &[("entities", io.output.as_path()), ("sentiment", sentiment_path.as_path())],
        summary,
    )
}

/// Entity spans from `entities` plus the sentiment file beside it, if any.
pub fn load_annotations(entities: &Path, corpus: &Corpus) -> Result<AnnotationSet> {
    let (mut set, _) = ingest_annotations(entities, corpus)?;
    let sentiment = sibling(entities, "sentiment.jsonl");
    if sentiment.is_file() {
        set.load_sentiment(&sentiment, corpus)?;
    }
    Ok(set)
}

fn annotations_input(rec: &mut Recorder, entities: &Path, corpus: &Corpus) -> Result<AnnotationSet> {
    rec.input("entities", entities)?;
    let sentiment = sibling(entities, "sentiment.jsonl");
    if sentiment.is_file() {
        rec.input("sentiment", &sentiment)?;
    }
    load_annotations(entities, corpus)
}

pub fn align(cfg: &RunConfig, corpus_path: &Path, entities: &Path, output: &Path) -> Result<StageOutcome> {
    cfg.align.validate()?;
    let mut rec = Recorder::new("align");
    rec.input("corpus", corpus_path)?;
    let corpus = load_corpus(corpus_path)?;
    let ann = annotations_input(&mut rec, entities, &corpus)?;
    let clusters = alignment::align(&corpus, &ann, &cfg.align);
    save_clusters(&clusters, output)?;
    let matched = clusters.iter().filter(|c| c.len() > 1).count();
    let members: usize = clusters.iter().map(|c| c.len()).sum();
    let summary = json!({
        "clusters": clusters.len(),
        "clusters_with_matches": matched,
        "mean_size": if clusters.is_empty() { 0.0 } else { members as f64 / clusters.len() as f64 },
    });
    rec.finish(cfg, to_value(&cfg.align), &[("clusters", output)], summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrrReport {
    pub mrr: f64,
    pub gold_groups: usize,
    pub pruned_ids: usize,
    pub dropped_groups: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid: Vec<MrrGridRow>,
}

/// Drop gold ids missing from `corpus`, then groups left with fewer than two
/// articles.
fn prune_gold(gold: Vec<GoldGroup>, corpus: &Corpus) -> (Vec<GoldGroup>, usize, usize) {
    let mut pruned = 0;
    let mut dropped = 0;
    let mut kept = Vec::new();
    for mut g in gold {
        let before = g.article_ids.len();
        g.article_ids.retain(|id| corpus.contains(id));
        pruned += before - g.article_ids.len();
        if g.article_ids.len() >= 2 {
            kept.push(g);
        } else {
            dropped += 1;
        }
    }
    (kept, pruned, dropped)
}

#[allow(clippy::too_many_arguments)]
pub fn eval_mrr(
    cfg: &RunConfig,
    gold_path: &Path,
    corpus_path: &Path,
    entities: &Path,
    output: &Path,
    grid: bool,
    prune: bool,
) -> Result<(StageOutcome, MrrReport)> {
    cfg.align.validate()?;
    let mut rec = Recorder::new("eval-mrr");
    rec.input("gold", gold_path)?;
    rec.input("corpus", corpus_path)?;
    let corpus = load_corpus(corpus_path)?;
    let ann = annotations_input(&mut rec, entities, &corpus)?;
    let gold = load_gold(gold_path)?;
    let (gold, pruned_ids, dropped_groups) = if prune { prune_gold(gold, &corpus) } else { (gold, 0, 0) };
    let index = TfIdfIndex::build(&corpus, &ann, &cfg.align);
    let mrr = evaluate_mrr(&gold, &index, &cfg.align)?;
    let grid_rows = if grid {
        mrr_grid(&gold, &index, &cfg.align, &cfg.eval.grid_alphas, &cfg.eval.grid_thetas)?
    } else {
        Vec::new()
    };
    let report = MrrReport {
        mrr,
        gold_groups: gold.len(),
        pruned_ids,
        dropped_groups,
        grid: grid_rows,
    };
    ensure_parent(output)?;
    jsonl::write_json(output, &report)?;
    let config = json!({ "align": to_value(&cfg.align), "grid": grid, "prune_gold": prune,
        "grid_alphas": cfg.eval.grid_alphas, "grid_thetas": cfg.eval.grid_thetas });
    let outcome = rec.finish(cfg, config, &[("report", output)], to_value(&report))?;
    Ok((outcome, report))
}

pub fn triplets(cfg: &RunConfig, corpus_path: &Path, clusters_path: &Path, output: &Path) -> Result<StageOutcome> {
    let mut rec = Recorder::new("triplets");
    rec.input("corpus", corpus_path)?;
    rec.input("clusters", clusters_path)?;
    let corpus = load_corpus(corpus_path)?;
    let clusters = load_clusters(clusters_path)?;
    let set = build_triplets(&clusters, &corpus, &cfg.triplets, cfg.seed)?;
    save_triplets(&set.triplets, output)?;
    let ideology = set.triplets.iter().filter(|t| t.kind == TripletKind::Ideology).count();
    let summary = json!({
        "triplets": set.triplets.len(),
        "ideology": ideology,
        "story": set.triplets.len() - ideology,
        "skipped_story_pairs": set.skipped_story_pairs,
        "duplicates_removed": set.duplicates_removed,
    });
    rec.finish(cfg, to_value(&cfg.triplets), &[("triplets", output)], summary)
}

/// Masked sequences go to `output`; the vocabulary to `<stem>.vocab.json`.
pub fn mask(cfg: &RunConfig, corpus_path: &Path, entities: &Path, output: &Path) -> Result<StageOutcome> {
    let cfg = cfg.clone().seeded();
    let mut rec = Recorder::new("mask");
    rec.input("corpus", corpus_path)?;
    let corpus = load_corpus(corpus_path)?;
    let ann = annotations_input(&mut rec, entities, &corpus)?;
    let vocab = build_vocab(&corpus, cfg.vocab.min_count)?;
    let seqs = mask_corpus(&corpus, &ann, &vocab, &cfg.mask)?;
    save_masked(&seqs, output)?;
    let vocab_path = sibling(output, "vocab.json");
    vocab.save(&vocab_path)?;
    let report = mask_report(&seqs, &ann)?;
    let summary = json!({
        "sequences": seqs.len(),
        "vocab_size": vocab.len(),
        "masked_rate": report.masked_rate,
        "entity_rate": report.entity_rate,
        "plain_rate": report.plain_rate,
    });
    let config = json!({ "mask": to_value(&cfg.mask), "vocab": to_value(&cfg.vocab) });
    rec.finish(&cfg, config, &[("masked", output), ("vocab", vocab_path.as_path())], summary)
}

/// Train from a fresh initialization; the checkpoint goes to `output` and
/// the loss trace to `<stem>.trace.csv`.
pub fn train(
    cfg: &RunConfig,
    corpus_path: &Path,
    triplets_path: &Path,
    masked_path: &Path,
    vocab_path: &Path,
    output: &Path,
) -> Result<StageOutcome> {
    let cfg = cfg.clone().seeded();
    let mut rec = Recorder::new("train");
    for (role, p) in [
        ("corpus", corpus_path),
        ("triplets", triplets_path),
        ("masked", masked_path),
        ("vocab", vocab_path),
    ] {
        rec.input(role, p)?;
    }
    let corpus = load_corpus(corpus_path)?;
    let triplets = load_triplets(triplets_path)?;
    let masked = load_masked(masked_path)?;
    let vocab = Vocabulary::load(vocab_path)?;
    let docs = DocTable::build(&corpus, &vocab, cfg.mask.max_len);
    let encoder = EncoderModel::init(vocab.len(), cfg.train.dim, cfg.seed);
    let head = MlmHead::zeros(vocab.len(), cfg.train.dim);
    let outcome = train_model(encoder, head, &docs, &triplets, &masked, &cfg.train, &cfg.loss)?;
    ensure_parent(output)?;
    Checkpoint::new(outcome.encoder, outcome.head, vocab.hash()).save(output)?;
    let trace_path = sibling(output, "trace.csv");
    save_trace(&outcome.trace, &trace_path)?;
    let epoch = epoch_length(triplets.len(), cfg.train.batch_size);
    let smoothed = smoothed_combined_loss(&outcome.trace, epoch, &cfg.loss);
    let summary = json!({
        "steps": cfg.train.steps,
        "triplets": triplets.len(),
        "sequences": masked.len(),
        "epoch_steps": epoch,
        "smoothed_loss": smoothed,
    });
    let config = json!({
        "train": to_value(&cfg.train),
        "loss": to_value(&cfg.loss),
        "max_len": cfg.mask.max_len,
    });
    rec.finish(&cfg, config, &[("checkpoint", output), ("trace", trace_path.as_path())], summary)
}

fn load_model(rec: &mut Recorder, checkpoint: &Path, vocab_path: &Path) -> Result<(Checkpoint, Vocabulary)> {
    rec.input("checkpoint", checkpoint)?;
    rec.input("vocab", vocab_path)?;
    let ck = Checkpoint::load(checkpoint)?;
    let vocab = Vocabulary::load(vocab_path)?;
    if ck.vocab_hash != vocab.hash() {
        return Err(Error::invalid(format!(
            "{} was trained with a different vocabulary than {}",
            checkpoint.display(),
            vocab_path.display()
        )));
    }
    Ok((ck, vocab))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub initial: ProbeResult,
    pub trained: ProbeResult,
}

/// Ideology probe on the trained encoder and on the initialization it was
/// trained from.
pub fn eval_probe(
    cfg: &RunConfig,
    corpus_path: &Path,
    checkpoint: &Path,
    vocab_path: &Path,
    output: &Path,
) -> Result<(StageOutcome, ProbeReport)> {
    let mut rec = Recorder::new("eval-probe");
    rec.input("corpus", corpus_path)?;
    let corpus = load_corpus(corpus_path)?;
    let (ck, vocab) = load_model(&mut rec, checkpoint, vocab_path)?;
    let labels = ideology_labels(&corpus);
    let max_len = cfg.mask.max_len;
    let init = EncoderModel::init(vocab.len(), ck.encoder.dim, cfg.seed);
    let report = ProbeReport {
        initial: linear_probe(&embed_corpus(&init, &corpus, &vocab, max_len), &labels, cfg.seed, &cfg.eval.probe)?,
        trained: linear_probe(&embed_corpus(&ck.encoder, &corpus, &vocab, max_len), &labels, cfg.seed, &cfg.eval.probe)?,
    };
    ensure_parent(output)?;
    jsonl::write_json(output, &report)?;
    let config = json!({ "probe": to_value(&cfg.eval.probe), "max_len": max_len });
    let outcome = rec.finish(cfg, config, &[("report", output)], to_value(&report))?;
    Ok((outcome, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PplReport {
    pub positions: usize,
    pub vocab_size: usize,
    pub by_ideology: BTreeMap<Ideology, f64>,
}

pub fn eval_ppl(
    cfg: &RunConfig,
    corpus_path: &Path,
    checkpoint: &Path,
    vocab_path: &Path,
    output: &Path,
) -> Result<(StageOutcome, PplReport)> {
    let mut rec = Recorder::new("eval-ppl");
    rec.input("corpus", corpus_path)?;
    let corpus = load_corpus(corpus_path)?;
    let (ck, vocab) = load_model(&mut rec, checkpoint, vocab_path)?;
    let by_ideology = ppl_by_ideology(
        &ck.encoder,
        &ck.head,
        &corpus,
        &vocab,
        cfg.eval.ppl_positions,
        cfg.mask.max_len,
        cfg.seed,
    )?;
    let report = PplReport {
        positions: cfg.eval.ppl_positions,
        vocab_size: vocab.len(),
        by_ideology,
    };
    ensure_parent(output)?;
    jsonl::write_json(output, &report)?;
    let config = json!({ "ppl_positions": cfg.eval.ppl_positions, "max_len": cfg.mask.max_len });
    let outcome = rec.finish(cfg, config, &[("report", output)], to_value(&report))?;
    Ok((outcome, report))
}

pub fn eval_mask_report(
    cfg: &RunConfig,
    masked_path: &Path,
    corpus_path: &Path,
    entities: &Path,
    output: &Path,
) -> Result<(StageOutcome, MaskReport)> {
    let mut rec = Recorder::new("eval-mask-report");
    rec.input("masked", masked_path)?;
    rec.input("corpus", corpus_path)?;
    let corpus = load_corpus(corpus_path)?;
    let ann = annotations_input(&mut rec, entities, &corpus)?;
    let seqs = load_masked(masked_path)?;
    let report = mask_report(&seqs, &ann)?;
    ensure_parent(output)?;
    jsonl::write_json(output, &report)?;
    let outcome = rec.finish(cfg, json!({}), &[("report", output)], to_value(&report))?;
    Ok((outcome, report))
}
