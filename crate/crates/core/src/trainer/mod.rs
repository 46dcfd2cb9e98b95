//! Training stages: joint multi-skill pre-training, lifelong prompt
//! acquisition, and the sequential and replay finetuning baselines.

mod checkpoint;
mod data;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Adam, AdamConfig, Graph, Scalar};
use crate::policy::PolicyNet;
use crate::promptpool::PRETRAIN_OWNER;
use crate::querycoders::QUERY_PARAM_NAMES;
use crate::seeds;
use crate::simworld::SkillId;

pub use checkpoint::{
    decode_pplc, encode_pplc, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta,
    PPLC_MAGIC, PPLC_VERSION,
};
pub use data::{
    action_chunk, draw_mixed, draw_replay, observation_at, pooled_flow_at, prepare_skill, Draw,
    Example, QueryMode, SkillData,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    #[default]
    Pretrain,
    Lifelong,
    SequentialBaseline,
    ReplayBaseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: Stage,
    pub epochs: usize,
    pub batch_size: usize,
    /// Derived from the run's root seed rather than read from config files.
    #[serde(skip)]
    pub seed: u64,
    /// Evaluation cadence E (epochs) for best-checkpoint selection.
    pub eval_every: usize,
    pub skills: Vec<SkillId>,
    pub replay_fraction: f64,
    /// Components M_new appended per lifelong task.
    pub lifelong_components: usize,
    /// Also update the backbone during lifelong training (off: only the
    /// new prompt components train).
    pub lifelong_update_backbone: bool,
    pub optimizer: AdamConfig,
    /// Minibatches per epoch; 0 means one pass worth of examples.
    pub steps_per_epoch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: Stage::Pretrain,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            eval_every: 5,
            skills: SkillId::PRETRAIN.to_vec(),
            replay_fraction: 0.5,
            lifelong_components: 4,
            lifelong_update_backbone: false,
            optimizer: AdamConfig::default(),
            steps_per_epoch: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("epochs, batch_size and eval_every must be at least 1".into()));
        }
        if self.lifelong_components == 0 {
            return Err(Error::Config("lifelong_components must be at least 1".into()));
        }
        if !(self.replay_fraction > 0.0 && self.replay_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "replay_fraction must lie in (0, 1], got {}",
                self.replay_fraction
            )));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// One evaluation made during training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalPoint {
    pub epoch: usize,
    pub success_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub evals: Vec<EvalPoint>,
    /// Epoch of the returned weights (best evaluation, or the last epoch
    /// when no evaluator was given).
    pub selected_epoch: usize,
}

/// Success-rate probe called every `eval_every` epochs and after the last.
pub type Evaluator<'a, S> = dyn FnMut(usize, &PolicyNet<S>) -> Result<f64> + 'a;

enum Sampler<'a, S> {
    Mixed(&'a BTreeMap<SkillId, SkillData<S>>),
    Replay {
        new: &'a SkillData<S>,
        old: Vec<&'a SkillData<S>>,
        fraction: f64,
    },
}

impl<S: Scalar> Sampler<'_, S> {
    fn draw(&self, batch: usize, rng: &mut ChaCha8Rng) -> Draw {
        match self {
            Sampler::Mixed(d) => draw_mixed(d, batch, rng),
            Sampler::Replay { new, old, fraction } => draw_replay(new, old, *fraction, batch, rng),
        }
    }

    fn example(&self, skill: SkillId, i: usize) -> &Example<S> {
        match self {
            Sampler::Mixed(d) => &d[&skill].examples[i],
            Sampler::Replay { new, old, .. } => {
                if new.skill == skill {
                    &new.examples[i]
                } else {
                    &old.iter().find(|d| d.skill == skill).expect("drawn skill present").examples[i]
                }
            }
        }
    }

    fn total(&self) -> usize {
        match self {
            Sampler::Mixed(d) => d.values().map(|s| s.len()).sum(),
            Sampler::Replay { new, .. } => new.len(),
        }
    }
}

/// Shared optimization loop. Only parameters the store marks trainable
/// are updated; the returned net holds the best-evaluated weights.
fn train_loop<S: Scalar>(
    mut net: PolicyNet<S>,
    cfg: &TrainConfig,
    sampler: &Sampler<'_, S>,
    stage: &str,
    mut eval: Option<&mut Evaluator<'_, S>>,
) -> Result<(PolicyNet<S>, TrainReport)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::stage(cfg.seed, stage));
    let mut adam = Adam::new(cfg.optimizer);
    let steps = if cfg.steps_per_epoch > 0 {
        cfg.steps_per_epoch
    } else {
        sampler.total().div_ceil(cfg.batch_size)
    };
    let mut report = TrainReport::default();
    let mut best: Option<(f64, PolicyNet<S>)> = None;
    for epoch in 1..=cfg.epochs {
        let mut total = 0.0;
        for _ in 0..steps {
            let draw = sampler.draw(cfg.batch_size, &mut rng);
            let items: Vec<_> = draw.iter().map(|&(s, i)| sampler.example(s, i).item()).collect();
            let (loss, grads) = {
                let mut g = Graph::new(&net.store);
                let l = net.diffusion_loss(&mut g, &items, true, &mut rng)?;
                (g.value(l)[0].as_f64(), g.backward(l)?)
            };
            if !loss.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            total += loss;
            net.store.zero_grad();
            net.store.accumulate(&grads)?;
            adam.step(&mut net.store)?;
        }
        report.epoch_losses.push(total / steps as f64);
        if let Some(ev) = eval.as_deref_mut() {
            if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
                let rate = ev(epoch, &net)?;
                report.evals.push(EvalPoint {
                    epoch,
                    success_rate: rate,
                });
                if best.as_ref().map_or(true, |(b, _)| rate > *b) {
                    best = Some((rate, net.clone()));
                    report.selected_epoch = epoch;
                }
            }
        }
    }
    net.store.zero_grad();
    match best {
        Some((_, mut b)) => {
            b.store.zero_grad();
            Ok((b, report))
        }
        None => {
            report.selected_epoch = cfg.epochs;
            Ok((net, report))
        }
    }
}

/// Parameters of the flow branch get no gradient under text-only queries
/// and are held fixed.
fn freeze_unused<S: Scalar>(net: &mut PolicyNet<S>, mode: QueryMode) -> Result<()> {
    if mode == QueryMode::TextOnly {
        for name in &QUERY_PARAM_NAMES[..2] {
            let id = net.store.id(name)?;
            net.store.set_frozen(id, true);
        }
    }
    Ok(())
}

/// Joint optimization of every parameter over mixed-skill batches.
pub fn pretrain<S: Scalar>(
    net: PolicyNet<S>,
    cfg: &TrainConfig,
    data: &BTreeMap<SkillId, SkillData<S>>,
    mode: QueryMode,
    eval: Option<&mut Evaluator<'_, S>>,
) -> Result<(PolicyNet<S>, TrainReport)> {
    if data.is_empty() {
        return Err(Error::Invalid("pre-training needs at least one skill dataset".into()));
    }
    let mut net = net;
    freeze_unused(&mut net, mode)?;
    train_loop(net, cfg, &Sampler::Mixed(data), "trainer.pretrain", eval)
}

/// Freezes the backbone and all existing components, appends
/// `lifelong_components` new ones owned by `data.skill` and trains only
/// those.
pub fn lifelong_step<S: Scalar>(
    net: PolicyNet<S>,
    cfg: &TrainConfig,
    data: &SkillData<S>,
    mode: QueryMode,
    eval: Option<&mut Evaluator<'_, S>>,
) -> Result<(PolicyNet<S>, TrainReport)> {
    let mut net = net;
    let owner = data.skill.name();
    if owner == PRETRAIN_OWNER || net.pool.owns(owner) {
        return Err(Error::SkillAlreadyOwned(owner.to_string()));
    }
    net.store.freeze_all();
    let seed = seeds::stage(cfg.seed, &format!("trainer.expand.{owner}"));
    net.pool.expand(&mut net.store, cfg.lifelong_components, owner, seed)?;
    if cfg.lifelong_update_backbone {
        for id in net.backbone_ids() {
            net.store.set_frozen(id, false);
        }
        freeze_unused(&mut net, mode)?;
    }
    let mut single = BTreeMap::new();
    single.insert(data.skill, data.clone());
    let stage = format!("trainer.lifelong.{owner}");
    train_loop(net, cfg, &Sampler::Mixed(&single), &stage, eval)
}

/// Full-network finetuning on the new skill alone.
pub fn sequential_baseline<S: Scalar>(
    net: PolicyNet<S>,
    cfg: &TrainConfig,
    data: &SkillData<S>,
    mode: QueryMode,
    eval: Option<&mut Evaluator<'_, S>>,
) -> Result<(PolicyNet<S>, TrainReport)> {
    let mut net = net;
    for id in net.store.ids().collect::<Vec<_>>() {
        net.store.set_frozen(id, false);
    }
    freeze_unused(&mut net, mode)?;
    let mut single = BTreeMap::new();
    single.insert(data.skill, data.clone());
    let stage = format!("trainer.sequential.{}", data.skill.name());
    train_loop(net, cfg, &Sampler::Mixed(&single), &stage, eval)
}

/// Full-network finetuning on batches that mix new-task examples with a
/// `replay_fraction` share of old-task examples.
pub fn replay_baseline<S: Scalar>(
    net: PolicyNet<S>,
    cfg: &TrainConfig,
    data: &SkillData<S>,
    old: &[&SkillData<S>],
    mode: QueryMode,
    eval: Option<&mut Evaluator<'_, S>>,
) -> Result<(PolicyNet<S>, TrainReport)> {
    if old.iter().all(|d| d.is_empty()) {
        return Err(Error::Invalid("replay needs at least one old-task dataset".into()));
    }
    let mut net = net;
    for id in net.store.ids().collect::<Vec<_>>() {
        net.store.set_frozen(id, false);
    }
    freeze_unused(&mut net, mode)?;
    let sampler = Sampler::Replay {
        new: data,
        old: old.to_vec(),
        fraction: cfg.replay_fraction,
    };
    let stage = format!("trainer.replay.{}", data.skill.name());
    train_loop(net, cfg, &sampler, &stage, eval)
}
