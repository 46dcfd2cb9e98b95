use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyConfig;
use crate::seeds;
use crate::simworld::SkillId;
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    /// Query prompts with the instruction embedding alone.
    pub text_only_query: bool,
    /// Use simulator flow instead of the block-matching estimate during
    /// rollouts.
    pub ground_truth_flow: bool,
    /// Component counts visited by `sweep-prompts` when `--counts` is not
    /// given.
    pub prompt_count_sweep: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory of `<skill>.ppld` files.
    pub data: Option<PathBuf>,
    /// Directory for checkpoints and metrics written by multi-stage runs.
    pub out: Option<PathBuf>,
}

/// Whole-run configuration; a single JSON file per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every stage derives its own seed from it by name.
    pub seed: u64,
    pub policy: PolicyConfig,
    pub train: TrainConfig,
    /// Epochs per new skill (lifelong, baselines, single-skill reference);
    /// `train.epochs` when absent.
    pub adapt_epochs: Option<usize>,
    /// Skills learned one after another after pre-training.
    pub lifelong_skills: Vec<SkillId>,
    pub demos_per_skill: usize,
    pub eval_episodes: usize,
    pub paths: Paths,
    pub ablations: Ablations,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            policy: PolicyConfig::default(),
            train: TrainConfig::default(),
            adapt_epochs: None,
            lifelong_skills: SkillId::LIFELONG.to_vec(),
            demos_per_skill: 50,
            eval_episodes: 15,
            paths: Paths::default(),
            ablations: Ablations::default(),
        }
    }
}

impl RunConfig {
    /// Parses and validates; any failure is reported as a config error.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.train.seed = seeds::stage(cfg.seed, "train");
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        self.train.validate()?;
        if self.train.skills.is_empty() {
            return Err(Error::Config("train.skills must list at least one skill".into()));
        }
        if self.adapt_epochs == Some(0) {
            return Err(Error::Config("adapt_epochs must be at least 1".into()));
        }
        if self.demos_per_skill == 0 || self.eval_episodes == 0 {
            return Err(Error::Config("demos_per_skill and eval_episodes must be positive".into()));
        }
        let mut all = self.train.skills.clone();
        all.extend(&self.lifelong_skills);
        let n = all.len();
        all.sort();
        all.dedup();
        if all.len() != n {
            return Err(Error::Config("a skill appears twice in the roster".into()));
        }
        if self.ablations.prompt_count_sweep.contains(&0) {
            return Err(Error::Config("prompt counts must be positive".into()));
        }
        Ok(())
    }

    /// Training settings for learning one new skill.
    pub fn adapt_train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.adapt_epochs.unwrap_or(self.train.epochs),
            ..self.train.clone()
        }
    }

    /// Pre-training skills followed by lifelong skills.
    pub fn roster(&self) -> Vec<SkillId> {
        let mut r = self.train.skills.clone();
        r.extend(&self.lifelong_skills);
        r
    }

    pub fn data_seed(&self, skill: SkillId) -> u64 {
        seeds::stage(self.seed, &format!("data.{}", skill.name()))
    }

    pub fn init_seed(&self) -> u64 {
        seeds::stage(self.seed, "policy")
    }

    pub fn eval_seed(&self) -> u64 {
        seeds::stage(self.seed, "eval")
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
