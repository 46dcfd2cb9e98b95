//! Diffusion-transformer policy with prefix-prompted attention.

mod attention;
mod diffusion;
mod net;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::promptpool::PromptSpec;

pub use attention::AttentionLayer;
pub use diffusion::{NoiseSchedule, ScheduleKind};
pub use net::{
    patches, proprio_features, timestep_embedding, Observation, PolicyNet, QueryInput,
    TrainItem, ACTION_DIM, ACTION_SCALE, PATCHES_PER_FRAME, PATCH_LEN, PATCH_SIDE,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub prompt_len: usize,
    /// Pre-training prompt components M.
    pub components: usize,
    pub obs_history: usize,
    pub horizon: usize,
    pub exec_horizon: usize,
    pub diffusion_steps: usize,
    pub schedule: ScheduleKind,
    pub text_dim: usize,
    pub flow_dim: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            layers: 4,
            heads: 4,
            prompt_len: 8,
            components: 16,
            obs_history: 2,
            horizon: 8,
            exec_horizon: 4,
            diffusion_steps: 50,
            schedule: ScheduleKind::Linear,
            text_dim: 32,
            flow_dim: 32,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("layers", self.layers),
            ("heads", self.heads),
            ("components", self.components),
            ("obs_history", self.obs_history),
            ("horizon", self.horizon),
            ("exec_horizon", self.exec_horizon),
            ("diffusion_steps", self.diffusion_steps),
            ("text_dim", self.text_dim),
            ("flow_dim", self.flow_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.exec_horizon > self.horizon {
            return Err(Error::Config("exec_horizon cannot exceed horizon".into()));
        }
        self.prompt_spec().validate()
    }

    pub fn prompt_spec(&self) -> PromptSpec {
        PromptSpec {
            prompt_len: self.prompt_len,
            dim: self.d_model,
            components: self.components,
            layers: self.layers,
        }
    }

    /// Sequence length: per history step one proprio token and the frame
    /// patches, then the diffusion-step token and `horizon` action tokens.
    pub fn token_count(&self) -> usize {
        self.obs_history * (1 + PATCHES_PER_FRAME) + 1 + self.horizon
    }
}
