use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numcore::Scalar;
use crate::policy::{Observation, PolicyNet, ACTION_SCALE};
use crate::querycoders::{estimate_flow, FlowField};
use crate::seeds;
use crate::simworld::{render, reset, scripted_expert, step, success, true_flow, Action, Frame, SkillTask, WorldState};

/// Where the flow half of a learned policy's query comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowSource {
    /// Block-matching estimate between consecutive rendered frames.
    Estimated,
    /// Simulator displacement field.
    GroundTruth,
    /// No flow: the text-only query.
    None,
}

/// Closed-loop decision maker for one episode at a time.
pub trait Controller {
    fn begin(&mut self, task: &SkillTask, episode_seed: u64) -> Result<()>;
    /// Chooses the action for `state`; `prev` is the previous state, if any.
    fn act(&mut self, state: &WorldState, prev: Option<&WorldState>) -> Result<Action>;
    /// Per-layer prompt weights used at the last `act`, if the controller
    /// has any.
    fn last_alphas(&self) -> Option<&[Vec<f64>]> {
        None
    }
}

pub struct ExpertController {
    task: Option<SkillTask>,
}

impl ExpertController {
    pub fn new() -> Self {
        Self { task: None }
    }
}

impl Default for ExpertController {
    fn default() -> Self {
        Self::new()
    }
}

impl Controller for ExpertController {
    fn begin(&mut self, task: &SkillTask, _: u64) -> Result<()> {
        self.task = Some(task.clone());
        Ok(())
    }

    fn act(&mut self, state: &WorldState, _: Option<&WorldState>) -> Result<Action> {
        let task = self.task.as_ref().ok_or_else(|| Error::Invalid("controller not started".into()))?;
        Ok(scripted_expert(task, state))
    }
}

/// Uniform actions over the full action box.
pub struct RandomController {
    rng: ChaCha8Rng,
}

impl RandomController {
    pub fn new() -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Default for RandomController {
    fn default() -> Self {
        Self::new()
    }
}

impl Controller for RandomController {
    fn begin(&mut self, _: &SkillTask, episode_seed: u64) -> Result<()> {
        self.rng = ChaCha8Rng::seed_from_u64(seeds::stage(episode_seed, "random-controller"));
        Ok(())
    }

    fn act(&mut self, _: &WorldState, _: Option<&WorldState>) -> Result<Action> {
        let r = &mut self.rng;
        Ok(Action::new(
            r.gen_range(-ACTION_SCALE..=ACTION_SCALE),
            r.gen_range(-ACTION_SCALE..=ACTION_SCALE),
            r.gen_range(-1.0..=1.0),
        ))
    }
}

/// Receding-horizon diffusion policy: samples an action chunk, executes
/// its first `exec_horizon` actions, then replans. Prompt weights are
/// recomputed from the current query at every step.
pub struct LearnedController<'a, S: Scalar> {
    net: &'a PolicyNet<S>,
    flow: FlowSource,
    text: Vec<S>,
    frames: Vec<Frame>,
    proprio: Vec<[f32; 4]>,
    queue: std::collections::VecDeque<Action>,
    rng: ChaCha8Rng,
    alphas: Vec<Vec<f64>>,
}

impl<'a, S: Scalar> LearnedController<'a, S> {
    pub fn new(net: &'a PolicyNet<S>, flow: FlowSource) -> Self {
        Self {
            net,
            flow,
            text: Vec::new(),
            frames: Vec::new(),
            proprio: Vec::new(),
            queue: Default::default(),
            rng: ChaCha8Rng::seed_from_u64(0),
            alphas: Vec::new(),
        }
    }

    fn observation(&self) -> Observation {
        let h = self.net.cfg.obs_history;
        let n = self.frames.len();
        let idx = |k: usize| (n + k).saturating_sub(h);
        Observation {
            frames: (0..h).map(|k| self.frames[idx(k)].clone()).collect(),
            proprio: (0..h).map(|k| self.proprio[idx(k)]).collect(),
        }
    }
}

impl<S: Scalar> Controller for LearnedController<'_, S> {
    fn begin(&mut self, task: &SkillTask, episode_seed: u64) -> Result<()> {
        self.text = self.net.text_encoder().embed(&task.instruction)?;
        self.frames.clear();
        self.proprio.clear();
        self.queue.clear();
        self.alphas.clear();
        self.rng = ChaCha8Rng::seed_from_u64(seeds::stage(episode_seed, "policy-sampler"));
        Ok(())
    }

    fn act(&mut self, state: &WorldState, prev: Option<&WorldState>) -> Result<Action> {
        let frame = render(state);
        let pooled = match (self.flow, prev, self.frames.last()) {
            (FlowSource::None, _, _) => None,
            (FlowSource::GroundTruth, Some(p), _) => Some(true_flow(p, state).pooled()),
            (FlowSource::Estimated, Some(_), Some(last)) => Some(estimate_flow(last, &frame)?.pooled()),
            _ => Some(FlowField::zeros().pooled()),
        };
        self.frames.push(frame);
        self.proprio.push(state.proprio());

        let query = crate::policy::QueryInput {
            text: self.text.clone(),
            flow: pooled.map(|p| p.into_iter().map(S::lit).collect()),
        };
        let qvec = self.net.query_vector(&query)?;
        let alphas = self.net.alphas(&qvec)?;
        self.alphas = alphas.iter().map(|a| a.iter().map(|v| v.as_f64()).collect()).collect();

        if self.queue.is_empty() {
            let prompts = self.net.prompts(&alphas)?;
            let obs = self.observation();
            let chunk = self.net.sample_actions(&obs, Some(&prompts), &mut self.rng)?;
            for a in chunk.chunks(3).take(self.net.cfg.exec_horizon) {
                self.queue.push_back(Action::new(
                    a[0].as_f64() * ACTION_SCALE,
                    a[1].as_f64() * ACTION_SCALE,
                    a[2].as_f64(),
                ));
            }
        }
        Ok(self.queue.pop_front().expect("chunk has at least one action"))
    }

    fn last_alphas(&self) -> Option<&[Vec<f64>]> {
        Some(&self.alphas)
    }
}

/// Result of one episode. `alphas[t][layer][component]` is empty for
/// controllers without prompts.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub success: bool,
    pub steps: usize,
    /// Whether any object's position changed during the episode.
    pub objects_moved: bool,
    pub alphas: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult {
    pub episodes: Vec<EpisodeOutcome>,
}

impl RolloutResult {
    pub fn successes(&self) -> usize {
        self.episodes.iter().filter(|e| e.success).count()
    }

    pub fn success_rate(&self) -> f64 {
        self.successes() as f64 / self.episodes.len() as f64
    }

    pub fn rate(&self) -> num_rational::Ratio<i64> {
        num_rational::Ratio::new(self.successes() as i64, self.episodes.len() as i64)
    }
}

/// Seed of evaluation episode `i`; disjoint in derivation from the
/// demonstration seeds.
pub fn episode_seed(seed: u64, task: &SkillTask, i: usize) -> u64 {
    seeds::mix(seeds::stage(seed, &format!("eval.{}", task.skill.name())), i as u64)
}

pub fn run_episode(task: &SkillTask, seed: u64, ctl: &mut dyn Controller) -> Result<EpisodeOutcome> {
    ctl.begin(task, seed)?;
    let mut state = reset(task, seed);
    let start: Vec<_> = state.objects.iter().map(|o| o.pos).collect();
    let mut prev: Option<WorldState> = None;
    let mut alphas = Vec::new();
    let mut moved = false;
    let mut done = false;
    let mut steps = 0;
    while steps < task.max_len {
        let action = ctl.act(&state, prev.as_ref())?;
        if let Some(a) = ctl.last_alphas() {
            alphas.push(a.to_vec());
        }
        let next = step(&state, action);
        steps += 1;
        moved |= next.objects.iter().zip(&start).any(|(o, s)| o.pos != *s);
        prev = Some(std::mem::replace(&mut state, next));
        if success(task, &state) {
            done = true;
            break;
        }
    }
    Ok(EpisodeOutcome {
        seed,
        success: done,
        steps,
        objects_moved: moved,
        alphas,
    })
}

/// Runs `episodes` seeded episodes in index order.
pub fn rollout(task: &SkillTask, episodes: usize, seed: u64, ctl: &mut dyn Controller) -> Result<RolloutResult> {
    if episodes == 0 {
        return Err(Error::Invalid("rollout needs at least one episode".into()));
    }
    let episodes = (0..episodes)
        .map(|i| run_episode(task, episode_seed(seed, task, i), ctl))
        .collect::<Result<_>>()?;
    Ok(RolloutResult { episodes })
}
