#![allow(dead_code)]

use ppl_core::policy::{PolicyConfig, PolicyNet, ScheduleKind};
use ppl_core::simworld::{generate_demos, SkillId, SkillTask};
use ppl_core::trainer::{prepare_skill, QueryMode, SkillData, TrainConfig};

pub fn tiny_policy() -> PolicyConfig {
    PolicyConfig {
        d_model: 8,
        layers: 1,
        heads: 2,
        prompt_len: 2,
        components: 3,
        obs_history: 1,
        horizon: 2,
        exec_horizon: 2,
        diffusion_steps: 5,
        schedule: ScheduleKind::Cosine,
        text_dim: 4,
        flow_dim: 4,
    }
}

pub fn tiny_train(epochs: usize) -> TrainConfig {
    let mut t = TrainConfig {
        epochs,
        batch_size: 8,
        seed: 11,
        eval_every: 1,
        lifelong_components: 2,
        ..Default::default()
    };
    t.optimizer.lr = 1e-2;
    t
}

pub fn skill_data(net: &PolicyNet<f64>, skill: SkillId, demos: usize, seed: u64, mode: QueryMode) -> SkillData<f64> {
    let d = generate_demos(&SkillTask::new(skill), demos, seed).unwrap();
    prepare_skill(skill, &d, &net.cfg, net.text_encoder(), mode).unwrap()
}
