mod args;
mod report;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use newsalign::evaluation::{render_prompt, PromptTemplate};
use newsalign::pipeline::{self as pl, RunConfig, StageOutcome};
use newsalign::Error;
use serde::Serialize;

use args::{Cli, Command, EvalCommand};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            })
        }
    }
}

fn config(cli: &Cli) -> newsalign::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cli.apply(&mut cfg);
    cfg.validate()?;
    if let Some(p) = &cli.save_config {
        cfg.save(p)?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> newsalign::Result<()> {
    let cfg = config(cli)?;
    pl::with_threads(cli.threads, || dispatch(cli, &cfg))?
}

fn announce(o: &StageOutcome) {
    println!("{}", report::stage_line(&o.manifest, &o.manifest_path));
}

fn emit<T: Serialize>(o: &StageOutcome, value: &T, table: String) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
    print!("{table}");
    println!("{}: manifest {}", o.manifest.stage, o.manifest_path.display());
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> newsalign::Result<()> {
    match &cli.command {
        Command::Synth(a) => announce(&pl::synth(cfg, &a.out)?.0),
        Command::Clean(a) => {
            let io = pl::CleanInputs {
                corpus: a.input.clone(),
                output: a.output.clone(),
                patterns: a.patterns.clone(),
                politics_model: a.politics_model.clone(),
                train_politics: a.train_politics.clone(),
                self_mentions: a.self_mentions.clone(),
            };
            announce(&pl::clean(cfg, &io)?);
        }
        Command::Annotate(a) => {
            let io = pl::AnnotateInputs {
                corpus: a.corpus.clone(),
                output: a.output.clone(),
                sidecar: a.sidecar.clone(),
                gazetteer: a.gazetteer.clone(),
                lexicon: a.lexicon.clone(),
            };
            announce(&pl::annotate(cfg, &io)?);
        }
        Command::Align(a) => announce(&pl::align(cfg, &a.corpus, &a.annotations, &a.output)?),
        Command::EvalMrr(a) => {
            let (o, r) = pl::eval_mrr(cfg, &a.gold, &a.corpus, &a.annotations, &a.output, a.grid, a.prune_gold)?;
            emit(&o, &r, report::mrr_table(&r));
        }
        Command::Triplets(a) => announce(&pl::triplets(cfg, &a.corpus, &a.clusters, &a.output)?),
        Command::Mask(a) => announce(&pl::mask(cfg, &a.corpus, &a.annotations, &a.output)?),
        Command::Train(a) => {
            let vocab = a.vocab.clone().unwrap_or_else(|| pl::sibling(&a.masked, "vocab.json"));
            announce(&pl::train(cfg, &a.corpus, &a.triplets, &a.masked, &vocab, &a.output)?);
        }
        Command::Eval { command } => match command {
            EvalCommand::Probe(i) => {
                let (o, r) = pl::eval_probe(cfg, &i.corpus, &i.checkpoint, &i.vocab, &i.output)?;
                emit(&o, &r, report::probe_table(&r));
            }
            EvalCommand::Ppl { inputs: i, .. } => {
                let (o, r) = pl::eval_ppl(cfg, &i.corpus, &i.checkpoint, &i.vocab, &i.output)?;
                emit(&o, &r, report::ppl_table(&r));
            }
            EvalCommand::MaskReport {
                masked,
                corpus,
                annotations,
                output,
            } => {
                let (o, r) = pl::eval_mask_report(cfg, masked, corpus, annotations, output)?;
                emit(&o, &r, report::mask_table(&r));
            }
            EvalCommand::Prompt {
                text,
                target,
                template,
                pattern,
                list,
            } => {
                let catalogue = PromptTemplate::catalogue();
                if *list {
                    for (i, t) in catalogue.iter().enumerate() {
                        println!("{i:>2}  {}", t.pattern);
                    }
                    return Ok(());
                }
                let t = match (template, pattern) {
                    (_, Some(p)) => PromptTemplate {
                        pattern: p.clone(),
                        verbalizer: PromptTemplate::default().verbalizer,
                    },
                    (Some(i), None) => catalogue
                        .get(*i)
                        .cloned()
                        .ok_or_else(|| Error::Config(format!("template {i} out of range 0..{}", catalogue.len())))?,
                    (None, None) => PromptTemplate::default(),
                };
                let text = text.as_deref().unwrap_or_default();
                let target = target.as_deref().unwrap_or_default();
                println!("{}", render_prompt(text, target, &t)?);
            }
        },
    }
    Ok(())
}
