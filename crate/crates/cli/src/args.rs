use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use newsalign::pipeline::RunConfig;
use newsalign::triplets::KindSelection;

#[derive(Debug, Parser)]
#[command(name = "newsalign", version, about = "News corpus cleaning, story alignment and contrastive pretraining")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Write the effective configuration to this file before running.
    #[arg(long, global = true)]
    pub save_config: Option<PathBuf>,

    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-outlet corpus with gold story groups.
    Synth(SynthArgs),
    /// Filter, deduplicate, strip media leaks and balance a corpus.
    Clean(CleanArgs),
    /// Produce entity and sentiment annotations.
    Annotate(AnnotateArgs),
    /// Align same-story articles across outlets.
    Align(AlignArgs),
    /// Mean reciprocal rank of the alignment against gold story groups.
    EvalMrr(EvalMrrArgs),
    /// Build ideology and story triplets from story clusters.
    Triplets(TripletArgs),
    /// Sample masked-token training sequences.
    Mask(MaskArgs),
    /// Train the encoder with alternating triplet and masked-token updates.
    Train(TrainArgs),
    /// Evaluate a trained model or masked data.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub stories: Option<usize>,
    #[arg(long)]
    pub distractors: Option<usize>,
    #[arg(long)]
    pub near_duplicates: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Add outlet self-mentions and a recurring subscription line.
    #[arg(long)]
    pub boilerplate: bool,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Directory with url_patterns.txt, title_patterns.txt,
    /// nonus_url_keywords.txt and us_text_keywords.txt.
    #[arg(long)]
    pub patterns: Option<PathBuf>,
    #[arg(long)]
    pub dedupe_threshold: Option<f64>,
    #[arg(long, conflicts_with = "train_politics")]
    pub politics_model: Option<PathBuf>,
    /// Train a politics classifier from URL-labelled pages and save it here.
    #[arg(long)]
    pub train_politics: Option<PathBuf>,
    #[arg(long, num_args = 2, value_names = ["P_POS", "P_NEG"])]
    pub self_train: Option<Vec<f64>>,
    /// JSON map of outlet to self-mention phrases.
    #[arg(long)]
    pub self_mentions: Option<PathBuf>,
    #[arg(long)]
    pub leak_min_count: Option<usize>,
    #[arg(long)]
    pub balance: bool,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, conflicts_with_all = ["heuristic", "gazetteer"])]
    pub sidecar: Option<PathBuf>,
    #[arg(long, requires = "gazetteer")]
    pub heuristic: bool,
    #[arg(long, requires = "heuristic")]
    pub gazetteer: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AlignFlags {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Date window in days.
    #[arg(long)]
    pub window: Option<u32>,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub align: AlignFlags,
}

#[derive(Debug, Args)]
pub struct EvalMrrArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Also report MRR over the configured alpha/theta grid.
    #[arg(long)]
    pub grid: bool,
    /// Drop gold ids missing from the corpus before scoring.
    #[arg(long)]
    pub prune_gold: bool,
    #[command(flatten)]
    pub align: AlignFlags,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Both,
    Ideology,
    Story,
}

impl From<KindArg> for KindSelection {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Both => KindSelection::Both,
            KindArg::Ideology => KindSelection::Ideology,
            KindArg::Story => KindSelection::Story,
        }
    }
}

#[derive(Debug, Args)]
pub struct TripletArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub clusters: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long)]
    pub neg_k: Option<usize>,
    #[arg(long)]
    pub max_per_cluster: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub upsample: Option<f64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub min_count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub triplets: PathBuf,
    #[arg(long)]
    pub masked: PathBuf,
    /// Defaults to the vocabulary written beside the masked file.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub mlm_batch_size: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta_ideo: Option<f64>,
    #[arg(long)]
    pub delta_story: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ModelInputs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Ideology linear probe on document embeddings, before and after training.
    Probe(ModelInputs),
    /// Pseudo-perplexity per ideology.
    Ppl {
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long)]
        positions: Option<usize>,
    },
    /// Masking statistics of a masked-sequence file.
    MaskReport {
        #[arg(long)]
        masked: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Render a stance-detection prompt.
    Prompt {
        #[arg(long, required_unless_present = "list")]
        text: Option<String>,
        #[arg(long, required_unless_present = "list")]
        target: Option<String>,
        /// Index into the built-in template list.
        #[arg(long, conflicts_with = "pattern")]
        template: Option<usize>,
        /// Custom pattern containing {p} and {target}.
        #[arg(long)]
        pattern: Option<String>,
        /// List the built-in templates instead of rendering.
        #[arg(long)]
        list: bool,
    },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl AlignFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.align.alpha, self.alpha);
        set(&mut cfg.align.theta, self.theta);
        set(&mut cfg.align.window_days, self.window);
    }
}

impl Cli {
    /// Apply command-line flags on top of `cfg`.
    pub fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.seed, self.seed);
        match &self.command {
            Command::Synth(a) => {
                set(&mut cfg.synth.n_stories, a.stories);
                set(&mut cfg.synth.n_distractors, a.distractors);
                set(&mut cfg.synth.n_near_duplicates, a.near_duplicates);
                set(&mut cfg.synth.noise_rate, a.noise);
                cfg.synth.boilerplate |= a.boilerplate;
            }
            Command::Clean(a) => {
                set(&mut cfg.clean.dedupe_threshold, a.dedupe_threshold);
                set(&mut cfg.clean.leak_min_count, a.leak_min_count);
                if let Some(v) = &a.self_train {
                    cfg.clean.self_train = Some([v[0], v[1]]);
                }
                cfg.clean.balance |= a.balance;
            }
            Command::Annotate(_) => {}
            Command::Align(a) => a.align.apply(cfg),
            Command::EvalMrr(a) => a.align.apply(cfg),
            Command::Triplets(a) => {
                set(&mut cfg.triplets.kind, a.kind.map(Into::into));
                set(&mut cfg.triplets.neg_k, a.neg_k);
                if a.max_per_cluster.is_some() {
                    cfg.triplets.max_per_cluster = a.max_per_cluster;
                }
            }
            Command::Mask(a) => {
                set(&mut cfg.mask.total_rate, a.rate);
                set(&mut cfg.mask.upsample_prob, a.upsample);
                set(&mut cfg.mask.max_len, a.max_len);
                set(&mut cfg.vocab.min_count, a.min_count);
            }
            Command::Train(a) => {
                set(&mut cfg.train.dim, a.dim);
                set(&mut cfg.train.steps, a.steps);
                set(&mut cfg.train.learning_rate, a.lr);
                set(&mut cfg.train.batch_size, a.batch_size);
                set(&mut cfg.train.mlm_batch_size, a.mlm_batch_size);
                set(&mut cfg.loss.beta, a.beta);
                set(&mut cfg.loss.gamma, a.gamma);
                set(&mut cfg.loss.delta_ideo, a.delta_ideo);
                set(&mut cfg.loss.delta_story, a.delta_story);
            }
            Command::Eval { command } => {
                if let EvalCommand::Ppl { positions, .. } = command {
                    set(&mut cfg.eval.ppl_positions, *positions);
                }
            }
        }
    }
}
