use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::Scalar;
use crate::policy::{Observation, PolicyConfig, QueryInput, TrainItem, ACTION_SCALE};
use crate::querycoders::{estimate_flow, FlowField, TextEncoder};
use crate::simworld::{Demonstration, SkillId};

/// How the flow half of the prompt query is produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryMode {
    TextFlow,
    TextOnly,
}

/// One timestep of one demonstration, ready for the policy.
#[derive(Clone, Debug)]
pub struct Example<S> {
    pub obs: Observation,
    pub query: QueryInput<S>,
    pub actions: Vec<S>,
}

impl<S: Scalar> Example<S> {
    pub fn item(&self) -> TrainItem<'_, S> {
        TrainItem {
            obs: &self.obs,
            query: &self.query,
            actions: &self.actions,
        }
    }
}

/// All examples of one skill, in (episode, timestep) order.
#[derive(Clone, Debug)]
pub struct SkillData<S> {
    pub skill: SkillId,
    pub examples: Vec<Example<S>>,
    /// `(episode, timestep)` of each example, for bookkeeping checks.
    pub index: Vec<(usize, usize)>,
}

impl<S: Scalar> SkillData<S> {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// History window ending at `t`, padded at the episode start by repeating
/// the first observation.
pub fn observation_at(frames: &[Vec<u8>], proprio: &[[f32; 4]], t: usize, history: usize) -> Observation {
    let idx = |k: usize| (t + k + 1).saturating_sub(history);
    Observation {
        frames: (0..history).map(|k| frames[idx(k)].clone()).collect(),
        proprio: (0..history).map(|k| proprio[idx(k)]).collect(),
    }
}

/// Normalized chunk `actions[t .. t+H]`, padded with the final action.
pub fn action_chunk<S: Scalar>(actions: &[[f32; 3]], t: usize, horizon: usize) -> Vec<S> {
    let last = actions.len() - 1;
    (0..horizon)
        .flat_map(|k| {
            let a = actions[(t + k).min(last)];
            [
                S::lit(a[0] as f64 / ACTION_SCALE),
                S::lit(a[1] as f64 / ACTION_SCALE),
                S::lit(a[2] as f64),
            ]
        })
        .collect()
}

/// Pooled estimated flow between consecutive frames; zero at `t = 0`.
pub fn pooled_flow_at(frames: &[Vec<u8>], t: usize) -> Result<Vec<f64>> {
    if t == 0 {
        return Ok(FlowField::zeros().pooled());
    }
    Ok(estimate_flow(&frames[t - 1], &frames[t])?.pooled())
}

pub fn prepare_skill<S: Scalar>(
    skill: SkillId,
    demos: &[Demonstration],
    cfg: &PolicyConfig,
    text: &TextEncoder<S>,
    mode: QueryMode,
) -> Result<SkillData<S>> {
    let mut examples = Vec::new();
    let mut index = Vec::new();
    for (e, demo) in demos.iter().enumerate() {
        if demo.skill != skill {
            return Err(Error::Invalid(format!(
                "demonstration {e} is for {}, expected {}",
                demo.skill, skill
            )));
        }
        if demo.is_empty() {
            continue;
        }
        let text_vec = text.embed(&demo.instruction)?;
        for t in 0..demo.len() {
            let flow = match mode {
                QueryMode::TextFlow => Some(
                    pooled_flow_at(&demo.frames, t)?
                        .into_iter()
                        .map(S::lit)
                        .collect(),
                ),
                QueryMode::TextOnly => None,
            };
            examples.push(Example {
                obs: observation_at(&demo.frames, &demo.proprio, t, cfg.obs_history),
                query: QueryInput {
                    text: text_vec.clone(),
                    flow,
                },
                actions: action_chunk(&demo.actions, t, cfg.horizon),
            });
            index.push((e, t));
        }
    }
    if examples.is_empty() {
        return Err(Error::Invalid(format!("no training examples for {skill}")));
    }
    Ok(SkillData {
        skill,
        examples,
        index,
    })
}

/// A draw of `(skill, example index)` pairs for one batch.
pub type Draw = Vec<(SkillId, usize)>;

/// Uniform skill, then uniform example. Skills are visited in id order
/// whatever order the caller listed them in.
pub fn draw_mixed<S, R: Rng>(data: &BTreeMap<SkillId, SkillData<S>>, batch: usize, rng: &mut R) -> Draw {
    let skills: Vec<&SkillData<S>> = data.values().collect();
    (0..batch)
        .map(|_| {
            let d = skills[rng.gen_range(0..skills.len())];
            (d.skill, rng.gen_range(0..d.examples.len()))
        })
        .collect()
}

/// Each slot is an old-task sample with probability `fraction` (uniform
/// over all pooled old examples), otherwise a new-task sample.
pub fn draw_replay<S, R: Rng>(
    new: &SkillData<S>,
    old: &[&SkillData<S>],
    fraction: f64,
    batch: usize,
    rng: &mut R,
) -> Draw {
    let old_total: usize = old.iter().map(|d| d.examples.len()).sum();
    (0..batch)
        .map(|_| {
            if old_total > 0 && rng.gen_bool(fraction) {
                let mut k = rng.gen_range(0..old_total);
                for d in old {
                    if k < d.examples.len() {
                        return (d.skill, k);
                    }
                    k -= d.examples.len();
                }
                unreachable!("index within pooled total")
            } else {
                (new.skill, rng.gen_range(0..new.examples.len()))
            }
        })
        .collect()
}
