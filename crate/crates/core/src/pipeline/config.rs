use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::AlignConfig;
use crate::cleaning::{DEFAULT_DEDUPE_THRESHOLD, DEFAULT_MIN_COUNT};
use crate::error::{Error, Result};
use crate::evaluation::probe_options;
use crate::logistic::GdOptions;
use crate::masking::MaskConfig;
use crate::model::{LossConfig, TrainConfig};
use crate::synth::SynthConfig;
use crate::triplets::TripletConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanConfig {
    pub non_articles: bool,
    pub non_us: bool,
    pub dedupe_threshold: f64,
    /// Sentences seen more than this many times in one outlet are stripped.
    pub leak_min_count: usize,
    /// `[p_pos, p_neg]` for one self-training round of the politics model.
    pub self_train: Option<[f64; 2]>,
    pub balance: bool,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            non_articles: true,
            non_us: true,
            dedupe_threshold: DEFAULT_DEDUPE_THRESHOLD,
            leak_min_count: DEFAULT_MIN_COUNT,
            self_train: None,
            balance: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabConfig {
    pub min_count: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self { min_count: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ppl_positions: usize,
    pub probe: GdOptions,
    pub grid_alphas: Vec<f64>,
    pub grid_thetas: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ppl_positions: 200,
            probe: probe_options(),
            grid_alphas: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            grid_thetas: vec![0.1, 0.23, 0.4, 0.6, 0.9],
        }
    }
}

/// Every stage's parameters plus the root seed. Paths are not part of the
/// configuration; manifests record inputs and outputs by name and hash.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub clean: CleanConfig,
    pub align: AlignConfig,
    pub triplets: TripletConfig,
    pub vocab: VocabConfig,
    pub mask: MaskConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_toml_string()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Copy the root seed into every stage section that carries one.
    pub fn seeded(mut self) -> Self {
        self.synth.seed = self.seed;
        self.mask.seed = self.seed;
        self.train.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.align.validate()?;
        self.mask.validate()?;
        self.train.validate()?;
        self.loss.validate()?;
        if !(0.0..=1.0).contains(&self.clean.dedupe_threshold) {
            return Err(Error::Config(format!(
                "dedupe threshold {} outside [0, 1]",
                self.clean.dedupe_threshold
            )));
        }
        if let Some([p, n]) = self.clean.self_train {
            if !(0.5..=1.0).contains(&p) || !(0.5..=1.0).contains(&n) {
                return Err(Error::Config("self-training thresholds must lie in [0.5, 1]".into()));
            }
        }
        if self.triplets.neg_k == 0 {
            return Err(Error::Config("neg_k must be at least 1".into()));
        }
        if self.eval.ppl_positions == 0 {
            return Err(Error::Config("ppl_positions must be at least 1".into()));
        }
        Ok(())
    }
}
