mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use newsalign::alignment::{evaluate_mrr, AlignConfig, StoryCluster, TfIdfIndex};
use newsalign::annotate::{AnnotationSet, EntitySpan, EntityType};
use newsalign::cleaning::{balance_by_ideology, char_diff, dedup_text, dedupe, levenshtein, near_duplicate_diff, DedupeScope};
use newsalign::masking::{build_vocab, mask_corpus, MaskAction, MaskConfig, MaskedSequence};
use newsalign::model::{
    combined_loss_and_grad, epoch_length, load_trace, mlm_loss_and_grad, pseudo_perplexity, smoothed_combined_loss,
    triplet_loss_and_grad, DocTable, EncoderModel, Gradients, LossConfig, MlmHead,
};
use newsalign::pipeline::{self as pl, AnnotateInputs, CleanInputs, RunConfig};
use newsalign::synth::{self, generate, OutletSpec, SynthConfig};
use newsalign::triplets::{build_ideology_triplets, build_triplets, load_triplets, KindSelection, Triplet, TripletConfig, TripletKind};
use newsalign::{Article, Corpus, Ideology};

use common::*;

#[derive(Default)]
struct Report {
    checks: Vec<(bool, String)>,
}

impl Report {
    fn check(&mut self, ok: bool, detail: impl Into<String>) {
        self.checks.push((ok, detail.into()));
    }

    fn passed(&self) -> bool {
        self.checks.iter().all(|(ok, _)| *ok)
    }
}

type Outcome = Result<Report, BoxError>;
type BoxError = Box<dyn std::error::Error + Send + Sync>;
type Criterion = fn() -> Outcome;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 10] = [
        ("indexed story similarity equals dense oracle", similarity_oracle),
        ("synthetic alignment MRR", alignment_mrr),
        ("ideology triplet enumeration", triplet_enumeration),
        ("masking statistics", masking_statistics),
        ("gradient checks", gradient_checks),
        ("end-to-end learning", end_to_end_learning),
        ("near-duplicate removal", dedupe_correctness),
        ("pseudo-perplexity", pseudo_perplexity_checks),
        ("pipeline determinism", pipeline_determinism),
        ("balanced downsampling", balanced_downsampling),
    ];
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, checks) = match run() {
            Ok(r) => (r.passed(), r.checks),
            Err(e) => (false, vec![(false, format!("error: {e}"))]),
        };
        let status = if ok { "PASS" } else { "FAIL" };
        println!("{status} criterion {}: {name} ({:.2}s)", n + 1, start.elapsed().as_secs_f64());
        for (c_ok, detail) in checks {
            println!("    [{}] {detail}", if c_ok { "ok" } else { "FAILED" });
        }
        failed += usize::from(!ok);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn four_outlets() -> Vec<OutletSpec> {
    vec![
        OutletSpec::new("ledger", "The Ledger", Ideology::Left),
        OutletSpec::new("courier", "Metro Courier", Ideology::Center),
        OutletSpec::new("sentinel", "The Sentinel", Ideology::Right),
        OutletSpec::new("herald", "Evening Herald", Ideology::Right),
    ]
}

fn similarity_oracle() -> Outcome {
    let mut r = Report::default();
    let out = generate(&SynthConfig {
        n_stories: 5,
        n_distractors: 0,
        outlets: four_outlets(),
        seed: 11,
        ..Default::default()
    })?;
    let ann = out.annotations();
    r.check(out.corpus.len() == 20, format!("{} documents", out.corpus.len()));

    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut entity_pairs = 0;
    for alpha in [0.0, 0.4, 1.0] {
        let cfg = AlignConfig { alpha, ..Default::default() };
        let index = TfIdfIndex::build(&out.corpus, &ann, &cfg);
        let oracle = DenseOracle::build(&out.corpus, &ann, &cfg);
        for (i, a) in out.corpus.iter().enumerate() {
            for (j, b) in out.corpus.iter().enumerate() {
                let (x, y) = (index.position(&a.id).unwrap(), index.position(&b.id).unwrap());
                let got = index.story_similarity(x, y, &cfg);
                worst = worst.max((got - oracle.similarity(i, j, alpha)).abs());
                if alpha == 0.0 && i != j && got > 0.0 {
                    entity_pairs += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    r.check(worst <= 1e-9, format!("max |indexed - oracle| = {worst:.2e} over all ordered pairs at alpha 0, 0.4, 1 (tol 1e-9)"));
    r.check(entity_pairs > 0, format!("{entity_pairs} pairs with non-zero entity overlap"));
    r.check(secs < 1.0, format!("index and comparisons took {secs:.3}s (limit 1s)"));
    Ok(r)
}

fn alignment_mrr() -> Outcome {
    let mut r = Report::default();
    let start = Instant::now();
    let out = generate(&SynthConfig {
        n_stories: 200,
        n_distractors: 400,
        noise_rate: 0.1,
        outlets: four_outlets(),
        seed: 21,
        ..Default::default()
    })?;
    let ann = out.annotations();
    let cfg = AlignConfig {
        alpha: 0.4,
        theta: 0.23,
        ..Default::default()
    };
    let index = TfIdfIndex::build(&out.corpus, &ann, &cfg);
    let mrr = evaluate_mrr(&out.gold, &index, &cfg)?;
    let strict = AlignConfig { theta: 0.9, ..cfg };
    let mrr_strict = evaluate_mrr(&out.gold, &index, &strict)?;
    let secs = start.elapsed().as_secs_f64();
    let groups = out.gold.iter().filter(|g| g.article_ids.len() >= 2).count();
    r.check(out.corpus.len() == 1200, format!("{} articles, {groups} multi-outlet gold groups", out.corpus.len()));
    r.check(mrr >= 0.90, format!("MRR {mrr:.4} at alpha 0.4, theta 0.23 (need >= 0.90)"));
    r.check(mrr_strict <= 0.5, format!("MRR {mrr_strict:.4} at theta 0.9 (need <= 0.5)"));
    r.check(secs < 10.0, format!("generation, indexing and both evaluations took {secs:.2}s (limit 10s)"));
    Ok(r)
}

fn day(n: u64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 3, 1).unwrap() + Days::new(n)
}

fn stub(id: &str, ideology: Ideology) -> Article {
    Article::new(id, format!("outlet-{id}"), ideology, day(0), format!("https://x.example/{id}"), "t", vec!["p".into()])
}

fn cluster(ids: &[&str]) -> StoryCluster {
    StoryCluster {
        anchor_id: ids[0].to_string(),
        member_ids: ids.iter().map(|s| s.to_string()).collect(),
        scores: ids[1..].iter().map(|s| (s.to_string(), 0.5)).collect(),
    }
}

fn as_keys(ts: &[Triplet]) -> Vec<(String, String, String)> {
    let mut v: Vec<_> = ts
        .iter()
        .filter(|t| t.kind == TripletKind::Ideology)
        .map(|t| (t.anchor.clone(), t.positive.clone(), t.negative.clone()))
        .collect();
    v.sort();
    v
}

fn triplet_enumeration() -> Outcome {
    use Ideology::{Center as C, Left as L, Right as R};
    let mut r = Report::default();
    let labels = [
        ("l1", L), ("l2", L), ("r1", R), ("c1", C),
        ("l3", L), ("r2", R), ("r3", R), ("r4", R), ("c2", C),
        ("c3", C), ("c4", C), ("l4", L),
    ];
    let corpus = Corpus::from_articles(labels.iter().map(|(id, i)| stub(id, *i)).collect())?;
    let clusters = vec![
        cluster(&["l1", "r1", "c1", "l2"]),
        cluster(&["r2", "l3", "c2", "r3", "r4"]),
        cluster(&["c3", "l4", "c4"]),
    ];
    let ideology_of: BTreeMap<&str, Ideology> = labels.iter().copied().collect();
    let mut expected = BTreeSet::new();
    for c in &clusters {
        let members: Vec<(String, Ideology)> = c.member_ids.iter().map(|m| (m.clone(), ideology_of[m.as_str()])).collect();
        expected.extend(enumerate_ideology_triplets(&members));
    }
    let cfg = TripletConfig {
        kind: KindSelection::Ideology,
        ..Default::default()
    };
    let emitted = as_keys(&build_triplets(&clusters, &corpus, &cfg, 3)?.triplets);
    let emitted_set: BTreeSet<_> = emitted.iter().cloned().collect();
    r.check(
        emitted_set == expected && emitted.len() == expected.len(),
        format!("fixture: {} emitted, {} by brute force, sets equal: {}", emitted.len(), expected.len(), emitted_set == expected),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut formula_ok, mut oracle_ok, trials) = (0, 0, 300);
    for trial in 0..trials {
        let (l, rr, c) = (rng.random_range(0..=6usize), rng.random_range(0..=6usize), rng.random_range(0..=3usize));
        let mut members: Vec<(String, Ideology)> = Vec::new();
        for (count, ideo) in [(l, L), (rr, R), (c, C)] {
            for k in 0..count {
                members.push((format!("t{trial}-{}{k}", ideo.code()), ideo));
            }
        }
        if members.is_empty() {
            members.push((format!("t{trial}-solo"), C));
        }
        members.shuffle(&mut rng);
        let corpus = Corpus::from_articles(members.iter().map(|(id, i)| stub(id, *i)).collect())?;
        let ids: Vec<&str> = members.iter().map(|(id, _)| id.as_str()).collect();
        let got = build_ideology_triplets(&cluster(&ids), &corpus)?;
        formula_ok += usize::from(got.len() == l * (l.saturating_sub(1)) * rr + rr * (rr.saturating_sub(1)) * l);
        let keys = as_keys(&got);
        let set: BTreeSet<_> = keys.iter().cloned().collect();
        oracle_ok += usize::from(set.len() == keys.len() && set == enumerate_ideology_triplets(&members));
    }
    r.check(formula_ok == trials, format!("count formula l(l-1)r + r(r-1)l held on {formula_ok}/{trials} random clusters"));
    r.check(oracle_ok == trials, format!("brute force matched on {oracle_ok}/{trials} random clusters"));
    Ok(r)
}

fn masking_statistics() -> Outcome {
    let mut r = Report::default();
    let start = Instant::now();
    let (n_seqs, len, entity_tokens) = (10_000usize, 200usize, 40usize);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut articles = Vec::with_capacity(n_seqs);
    let mut ann = AnnotationSet::new();
    for s in 0..n_seqs {
        let id = format!("m{s}");
        let words: Vec<String> = (0..len).map(|_| format!("w{}", rng.random_range(0..500))).collect();
        let mut lengths = Vec::new();
        let mut left = entity_tokens;
        while left > 0 {
            let l = rng.random_range(1..=3usize).min(left);
            lengths.push(l);
            left -= l;
        }
        // distribute plain tokens over the gaps between spans
        let gaps = lengths.len() + 1;
        let mut cuts: Vec<usize> = (0..gaps - 1).map(|_| rng.random_range(0..=len - entity_tokens)).collect();
        cuts.sort_unstable();
        let mut spans = Vec::new();
        let (mut pos, mut prev) = (0, 0);
        for (k, l) in lengths.iter().enumerate() {
            pos += cuts[k] - prev;
            prev = cuts[k];
            spans.push(EntitySpan {
                article_id: id.clone(),
                start_token: pos,
                end_token: pos + l,
                etype: EntityType::Person,
                surface: words[pos..pos + l].join(" "),
            });
            pos += l;
        }
        ann.set_entities(&id, spans);
        articles.push(Article::new(&id, "o", Ideology::Center, day(0), format!("https://x.example/{id}"), "", vec![words.join(" ")]));
    }
    let corpus = Corpus::from_articles(articles)?;
    let vocab = build_vocab(&corpus, 1)?;
    let cfg = MaskConfig { seed: 42, ..Default::default() };
    let seqs = mask_corpus(&corpus, &ann, &vocab, &cfg)?;
    let secs = start.elapsed().as_secs_f64();

    let covered: usize = ann.entities().map(|s| s.end_token - s.start_token).sum();
    r.check(covered == n_seqs * entity_tokens, format!("entity density {:.3}", covered as f64 / (n_seqs * len) as f64));
    let worst_rate_gap = seqs
        .iter()
        .map(|s| (s.targets.len() as f64 / s.len() as f64 - 0.15).abs())
        .fold(0.0, f64::max);
    let all_full = seqs.iter().all(|s| s.len() == len);
    r.check(
        all_full && worst_rate_gap <= 0.005,
        format!("{} sequences of {len} tokens, worst per-sequence |rate - 0.15| = {worst_rate_gap:.4} (tol 0.005)", seqs.len()),
    );
    let (mut ent_masked, mut plain_masked) = (0usize, 0usize);
    let mut actions = [0usize; 3];
    for s in &seqs {
        let mut is_entity = vec![false; s.len()];
        for sp in ann.entities_for(&s.id) {
            is_entity[sp.start_token..sp.end_token].iter_mut().for_each(|x| *x = true);
        }
        for (&p, a) in &s.actions {
            if is_entity[p] {
                ent_masked += 1;
            } else {
                plain_masked += 1;
            }
            actions[match a {
                MaskAction::Mask => 0,
                MaskAction::Random => 1,
                MaskAction::Keep => 2,
            }] += 1;
        }
    }
    let ent_rate = ent_masked as f64 / covered as f64;
    let plain_rate = plain_masked as f64 / (n_seqs * len - covered) as f64;
    r.check(
        ent_rate / plain_rate >= 1.5,
        format!("entity rate {ent_rate:.4}, plain rate {plain_rate:.4}, ratio {:.3} (need >= 1.5)", ent_rate / plain_rate),
    );
    let total = actions.iter().sum::<usize>() as f64;
    let shares: Vec<f64> = actions.iter().map(|&a| a as f64 / total).collect();
    let within = shares.iter().zip([0.8, 0.1, 0.1]).all(|(s, t)| (s - t).abs() <= 0.01);
    r.check(
        within,
        format!("actions MASK {:.4} RANDOM {:.4} KEEP {:.4} (80/10/10 +- 1pp)", shares[0], shares[1], shares[2]),
    );
    r.check(secs < 30.0, format!("building and masking took {secs:.2}s (limit 30s)"));
    Ok(r)
}

struct GradInstance {
    model: EncoderModel,
    head: MlmHead,
    docs: BTreeMap<String, Vec<u32>>,
    table: DocTable,
    triplets: Vec<Triplet>,
    seqs: Vec<MaskedSequence>,
}

fn random_instance(rng: &mut ChaCha8Rng, kinds: &[TripletKind]) -> GradInstance {
    let (v, d) = (7usize, 3usize);
    let normal = Normal::new(0.0, 0.7).unwrap();
    let draw = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| normal.sample(rng)).collect() };
    let model = EncoderModel {
        dim: d,
        vocab_size: v,
        embeddings: draw(v * d, rng),
        projection: draw(d * d, rng),
        bias: draw(d, rng),
    };
    let head = MlmHead {
        output: draw(d * v, rng),
        output_bias: draw(v, rng),
    };
    let mut docs = BTreeMap::new();
    let mut table = DocTable::default();
    for k in 0..5 {
        let ids: Vec<u32> = (0..rng.random_range(2..=5)).map(|_| rng.random_range(0..v as u32)).collect();
        table.insert(format!("d{k}"), ids.clone());
        docs.insert(format!("d{k}"), ids);
    }
    let triplets = (0..3)
        .map(|_| {
            let mut pick: Vec<usize> = (0..5).collect();
            pick.shuffle(rng);
            Triplet {
                kind: kinds[rng.random_range(0..kinds.len())],
                anchor: format!("d{}", pick[0]),
                positive: format!("d{}", pick[1]),
                negative: format!("d{}", pick[2]),
            }
        })
        .collect();
    let seqs = (0..2)
        .map(|k| {
            let n = rng.random_range(3..=6);
            let input_ids: Vec<u32> = (0..n).map(|_| rng.random_range(0..v as u32)).collect();
            let mut targets = BTreeMap::new();
            let mut actions = BTreeMap::new();
            for _ in 0..rng.random_range(1..=2) {
                let p = rng.random_range(0..n);
                targets.insert(p, rng.random_range(0..v as u32));
                actions.insert(p, MaskAction::Mask);
            }
            MaskedSequence {
                id: format!("s{k}"),
                input_ids,
                targets,
                actions,
            }
        })
        .collect();
    GradInstance {
        model,
        head,
        docs,
        table,
        triplets,
        seqs,
    }
}

fn blocks(g: &Gradients) -> [&[f64]; 5] {
    [&g.embeddings, &g.projection, &g.bias, &g.output, &g.output_bias]
}

fn gradient_checks() -> Outcome {
    let mut r = Report::default();
    let start = Instant::now();
    let cfg = LossConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let wanted = 50;
    let names = ["ideology triplet", "story triplet", "masked-token cross-entropy", "combined"];
    for (which, name) in names.iter().enumerate() {
        let kinds: &[TripletKind] = match which {
            0 => &[TripletKind::Ideology],
            1 => &[TripletKind::Story],
            _ => &[TripletKind::Ideology, TripletKind::Story],
        };
        let (mut accepted, mut skipped) = (0, 0);
        let (mut worst_grad, mut worst_value): (f64, f64) = (0.0, 0.0);
        while accepted < wanted {
            let inst = random_instance(&mut rng, kinds);
            if which != 2 && near_kink(&inst.model, &inst.docs, &inst.triplets, &cfg, 1e-3) {
                skipped += 1;
                continue;
            }
            accepted += 1;
            let mut g = Gradients::zeros(&inst.model);
            let (value, oracle_value, err) = match which {
                0 | 1 => {
                    let l = triplet_loss_and_grad(&inst.model, &inst.table, &inst.triplets, &cfg, 1.0, &mut g)?;
                    let f = |m: &EncoderModel, _: &MlmHead| {
                        let (i, s) = oracle_triplet_losses(m, &inst.docs, &inst.triplets, &cfg);
                        cfg.beta * i + cfg.gamma * s
                    };
                    let err = worst_fd_error(&inst.model, &inst.head, blocks(&g), f);
                    (cfg.beta * l.ideology + cfg.gamma * l.story, f(&inst.model, &inst.head), err)
                }
                2 => {
                    let l = mlm_loss_and_grad(&inst.model, &inst.head, &inst.seqs, 1.0, &mut g)?;
                    let f = |m: &EncoderModel, h: &MlmHead| oracle_mlm_loss(m, h, &inst.seqs);
                    let err = worst_fd_error(&inst.model, &inst.head, blocks(&g), f);
                    (l, f(&inst.model, &inst.head), err)
                }
                _ => {
                    let (l, g) = combined_loss_and_grad(&inst.model, &inst.head, &inst.table, &inst.triplets, &inst.seqs, &cfg)?;
                    let f = |m: &EncoderModel, h: &MlmHead| {
                        let (i, s) = oracle_triplet_losses(m, &inst.docs, &inst.triplets, &cfg);
                        cfg.beta * i + cfg.gamma * s + cfg.mlm_weight() * oracle_mlm_loss(m, h, &inst.seqs)
                    };
                    let err = worst_fd_error(&inst.model, &inst.head, blocks(&g), f);
                    (l, f(&inst.model, &inst.head), err)
                }
            };
            worst_grad = worst_grad.max(err);
            worst_value = worst_value.max((value - oracle_value).abs());
        }
        r.check(
            worst_grad <= 1e-4 && worst_value <= 1e-9,
            format!(
                "{name}: {accepted} instances ({skipped} near kinks skipped), worst relative gradient error {worst_grad:.2e} (tol 1e-4), worst loss mismatch {worst_value:.2e}"
            ),
        );
    }
    let secs = start.elapsed().as_secs_f64();
    r.check(secs < 10.0, format!("all checks took {secs:.2}s (limit 10s)"));
    Ok(r)
}

struct PipelinePaths {
    clean: std::path::PathBuf,
    ann: std::path::PathBuf,
    clusters: std::path::PathBuf,
    triplets: std::path::PathBuf,
    masked: std::path::PathBuf,
    vocab: std::path::PathBuf,
    checkpoint: std::path::PathBuf,
}

/// synth, clean, annotate, align, triplets, mask; returns the manifests
/// written and the paths for later stages.
fn prepare(cfg: &RunConfig, dir: &Path) -> newsalign::Result<(Vec<pl::StageOutcome>, PipelinePaths)> {
    let data = dir.join("synth");
    let p = PipelinePaths {
        clean: dir.join("clean.jsonl"),
        ann: dir.join("entities.jsonl"),
        clusters: dir.join("clusters.jsonl"),
        triplets: dir.join("triplets.jsonl"),
        masked: dir.join("masked.jsonl"),
        vocab: dir.join("masked.vocab.json"),
        checkpoint: dir.join("model.json"),
    };
    let mut outcomes = vec![pl::synth(cfg, &data)?.0];
    outcomes.push(pl::clean(
        cfg,
        &CleanInputs {
            corpus: data.join(synth::CORPUS_FILE),
            output: p.clean.clone(),
            self_mentions: Some(data.join(synth::SELF_MENTIONS_FILE)),
            ..Default::default()
        },
    )?);
    outcomes.push(pl::annotate(
        cfg,
        &AnnotateInputs {
            corpus: p.clean.clone(),
            output: p.ann.clone(),
            gazetteer: Some(data.join(synth::GAZETTEER_FILE)),
            lexicon: Some(data.join(synth::LEXICON_FILE)),
            ..Default::default()
        },
    )?);
    outcomes.push(pl::align(cfg, &p.clean, &p.ann, &p.clusters)?);
    outcomes.push(pl::eval_mrr(cfg, &data.join(synth::GOLD_FILE), &p.clean, &p.ann, &dir.join("mrr.json"), true, true)?.0);
    outcomes.push(pl::triplets(cfg, &p.clean, &p.clusters, &p.triplets)?);
    outcomes.push(pl::mask(cfg, &p.clean, &p.ann, &p.masked)?);
    Ok((outcomes, p))
}

fn end_to_end_learning() -> Outcome {
    let mut r = Report::default();
    let dir = tempfile::tempdir()?;
    let cfg = RunConfig::default();
    let (_, p) = prepare(&cfg, dir.path())?;
    let start = Instant::now();
    let trained = pl::train(&cfg, &p.clean, &p.triplets, &p.masked, &p.vocab, &p.checkpoint)?;
    let train_secs = start.elapsed().as_secs_f64();
    let (_, probe) = pl::eval_probe(&cfg, &p.clean, &p.checkpoint, &p.vocab, &dir.path().join("probe.json"))?;
    let total_secs = start.elapsed().as_secs_f64();

    let n_triplets = load_triplets(&p.triplets)?.len();
    let trace = load_trace(&pl::sibling(&p.checkpoint, "trace.csv"))?;
    let epoch = epoch_length(n_triplets, cfg.train.batch_size);
    let smoothed = smoothed_combined_loss(&trace, epoch, &cfg.loss);
    let monotone = smoothed.windows(2).all(|w| w[1] <= w[0]);
    let shown: Vec<String> = smoothed.iter().map(|x| format!("{x:.3}")).collect();
    r.check(
        trained.manifest.summary["steps"] == 500 && cfg.loss == LossConfig::default(),
        format!("{} steps, {n_triplets} triplets, epoch of {epoch} steps, default loss weights", trained.manifest.summary["steps"]),
    );
    r.check(
        monotone && smoothed.len() >= 2,
        format!("epoch-smoothed combined loss [{}] non-increasing", shown.join(", ")),
    );
    r.check(probe.trained.accuracy >= 0.95, format!("probe accuracy after training {:.4} (need >= 0.95)", probe.trained.accuracy));
    r.check(probe.initial.accuracy <= 0.60, format!("probe accuracy at initialization {:.4} (need <= 0.60)", probe.initial.accuracy));
    r.check(
        total_secs < 60.0,
        format!("training took {train_secs:.2}s, training plus probes {total_secs:.2}s (limit 60s)"),
    );
    Ok(r)
}

/// Replace a few characters of the last paragraph.
fn perturb(a: &Article, rng: &mut ChaCha8Rng, edits: usize) -> Vec<String> {
    let mut paragraphs = a.paragraphs.clone();
    let last = paragraphs.last_mut().unwrap();
    let mut chars: Vec<char> = last.chars().collect();
    for _ in 0..edits {
        let i = rng.random_range(0..chars.len());
        chars[i] = if chars[i] == 'x' { 'q' } else { 'x' };
    }
    *last = chars.into_iter().collect();
    paragraphs
}

fn dedupe_correctness() -> Outcome {
    let mut r = Report::default();
    let out = generate(&SynthConfig {
        n_stories: 40,
        n_distractors: 10,
        seed: 71,
        ..Default::default()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    let mut originals: Vec<&Article> = out.corpus.iter().collect();
    originals.shuffle(&mut rng);
    let mut articles: Vec<Article> = out.corpus.articles().to_vec();
    let mut planted = Vec::new();
    let mut max_diff: f64 = 0.0;
    for (k, src) in originals.iter().take(40).enumerate() {
        let shift = Days::new(rng.random_range(1..=3));
        let edits = rng.random_range(1..=8);
        let earlier = k % 2 == 0;
        let published = if earlier { src.published - shift } else { src.published + shift };
        let copy = Article::new(
            format!("{}-dup", src.id),
            &src.outlet,
            src.ideology,
            published,
            format!("{}-dup", src.url),
            &src.title,
            perturb(src, &mut rng, edits),
        );
        max_diff = max_diff.max(near_duplicate_diff(src, &copy));
        let kept = if earlier { copy.id.clone() } else { src.id.clone() };
        let dropped = if earlier { src.id.clone() } else { copy.id.clone() };
        planted.push((kept, dropped));
        articles.push(copy);
    }
    let corpus = Corpus::from_articles(articles)?;
    r.check(max_diff < 0.1, format!("{} planted pairs, largest character diff {max_diff:.4}", planted.len()));

    let once = dedupe(&corpus, 0.1, DedupeScope::WithinOutlet);
    let right = planted.iter().filter(|(k, d)| once.contains(k) && !once.contains(d)).count();
    let earlier_copies = planted.iter().filter(|(k, _)| k.ends_with("-dup")).count();
    r.check(
        right == planted.len(),
        format!("{right}/{} pairs keep the earlier article ({earlier_copies} copies were dated earlier)", planted.len()),
    );
    r.check(
        once.len() == corpus.len() - planted.len(),
        format!("{} -> {} articles, nothing else removed", corpus.len(), once.len()),
    );
    let twice = dedupe(&once, 0.1, DedupeScope::WithinOutlet);
    r.check(twice == once, "second pass changes nothing");

    let all = corpus.articles();
    let (mut exact, trials) = (0, 100);
    for t in 0..trials {
        let (a, b) = if t % 2 == 0 {
            let (k, d) = &planted[t / 2 % planted.len()];
            (corpus.get(k).unwrap(), corpus.get(d).unwrap())
        } else {
            (&all[rng.random_range(0..all.len())], &all[rng.random_range(0..all.len())])
        };
        let (x, y) = (dedup_text(a), dedup_text(b));
        let dist = edit_distance(&x, &y);
        let oracle = dist as f64 / x.len().max(y.len()).max(1) as f64;
        exact += usize::from(levenshtein(&x, &y) == dist && char_diff(&x, &y) == oracle);
    }
    r.check(exact == trials, format!("diff equals the DP oracle exactly on {exact}/{trials} pairs"));
    Ok(r)
}

fn pseudo_perplexity_checks() -> Outcome {
    let mut r = Report::default();
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    let mut worst_uniform: f64 = 0.0;
    for v in [5usize, 37, 400] {
        let (m, h) = (EncoderModel::zeros(v, 4), MlmHead::zeros(v, 4));
        let ids: Vec<u32> = (0..30).map(|_| rng.random_range(0..v as u32)).collect();
        let ppl = pseudo_perplexity(&m, &h, &ids, 10, 1, "uniform")?;
        worst_uniform = worst_uniform.max((ppl - v as f64).abs());
    }
    r.check(worst_uniform <= 1e-6, format!("uniform model: max |ppl - |V|| = {worst_uniform:.2e} (tol 1e-6)"));

    let normal = Normal::new(0.0, 0.7).unwrap();
    let mut worst_rel: f64 = 0.0;
    for t in 0..20 {
        let (v, d) = (11usize, 4usize);
        let mut m = EncoderModel::init(v, d, t);
        m.embeddings.iter_mut().for_each(|x| *x = normal.sample(&mut rng));
        m.bias.iter_mut().for_each(|x| *x = normal.sample(&mut rng));
        let mut h = MlmHead::zeros(v, d);
        h.output.iter_mut().for_each(|x| *x = normal.sample(&mut rng));
        let len = rng.random_range(1..=12);
        let ids: Vec<u32> = (0..len).map(|_| rng.random_range(0..v as u32)).collect();
        let oracle = oracle_full_ppl(&m, &h, &ids);
        for n in [len, len + 5] {
            let got = pseudo_perplexity(&m, &h, &ids, n, t, "exhaustive")?;
            worst_rel = worst_rel.max((got - oracle).abs() / oracle);
        }
    }
    r.check(worst_rel <= 1e-9, format!("n >= L matches the every-position oracle, worst relative gap {worst_rel:.2e}"));
    Ok(r)
}

fn full_run(cfg: &RunConfig, dir: &Path) -> Result<Vec<(String, Vec<u8>)>, BoxError> {
    let (mut outcomes, p) = prepare(cfg, dir)?;
    outcomes.push(pl::train(cfg, &p.clean, &p.triplets, &p.masked, &p.vocab, &p.checkpoint)?);
    outcomes.push(pl::eval_probe(cfg, &p.clean, &p.checkpoint, &p.vocab, &dir.join("probe.json"))?.0);
    outcomes.push(pl::eval_ppl(cfg, &p.clean, &p.checkpoint, &p.vocab, &dir.join("ppl.json"))?.0);
    outcomes.push(pl::eval_mask_report(cfg, &p.masked, &p.clean, &p.ann, &dir.join("maskrep.json"))?.0);
    outcomes
        .into_iter()
        .map(|o| Ok((o.manifest.stage.clone(), std::fs::read(&o.manifest_path)?)))
        .collect()
}

fn pipeline_determinism() -> Outcome {
    let mut r = Report::default();
    let mut cfg = RunConfig {
        seed: 91,
        synth: SynthConfig {
            n_stories: 40,
            n_distractors: 10,
            n_near_duplicates: 4,
            ..Default::default()
        },
        ..Default::default()
    };
    cfg.clean.balance = true;
    cfg.train.steps = 60;
    cfg.train.dim = 16;
    cfg.eval.ppl_positions = 30;
    let mut runs = Vec::new();
    for threads in [1, 1, 8] {
        let dir = tempfile::tempdir()?;
        let manifests = pl::with_threads(Some(threads), || full_run(&cfg, dir.path()))??;
        runs.push((threads, manifests));
    }
    let stages: Vec<&str> = runs[0].1.iter().map(|(s, _)| s.as_str()).collect();
    r.check(stages.len() == 11, format!("{} manifests: {}", stages.len(), stages.join(", ")));
    r.check(runs[0].1 == runs[1].1, "two single-thread runs give byte-identical manifests");
    r.check(runs[0].1 == runs[2].1, "1 and 8 threads give byte-identical manifests");
    Ok(r)
}

fn balanced_downsampling() -> Outcome {
    let mut r = Report::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut equal, mut subset, trials) = (0, 0, 100);
    for t in 0..trials {
        let mut labels: Vec<Ideology> = Vec::new();
        for ideo in Ideology::ALL {
            labels.extend(std::iter::repeat_n(ideo, rng.random_range(1..=60)));
        }
        labels.shuffle(&mut rng);
        let articles: Vec<Article> = labels.iter().enumerate().map(|(i, &ideo)| stub(&format!("b{t}-{i}"), ideo)).collect();
        let corpus = Corpus::from_articles(articles)?;
        let min = Ideology::ALL.iter().map(|&i| labels.iter().filter(|&&l| l == i).count()).min().unwrap();
        let out = balance_by_ideology(&corpus, rng.random())?;
        let counts: Vec<usize> = Ideology::ALL.iter().map(|&i| out.iter().filter(|a| a.ideology == i).count()).collect();
        equal += usize::from(counts.iter().all(|&c| c == min));
        let positions: Vec<usize> = out.iter().map(|a| corpus.position(&a.id).unwrap()).collect();
        subset += usize::from(positions.windows(2).all(|w| w[0] < w[1]));
    }
    r.check(equal == trials, format!("per-ideology counts equal the smallest class in {equal}/{trials} random corpora"));
    r.check(subset == trials, format!("survivors keep input order in {subset}/{trials} corpora"));
    Ok(r)
}
