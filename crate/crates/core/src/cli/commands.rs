use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evalkit::{
    compute_bwt, compute_fwt, export_weight_trace, rollout, write_metrics_csv, FlowSource,
    LearnedController, MetricRow, RolloutResult,
};
use crate::policy::{PolicyConfig, PolicyNet};
use crate::seeds;
use crate::simworld::{generate_demos, read_ppld, write_ppld, SkillId, SkillTask};
use crate::trainer::{
    lifelong_step, load_checkpoint, pretrain, prepare_skill, replay_baseline, save_checkpoint,
    sequential_baseline, Checkpoint, QueryMode, SkillData, Stage, TrainConfig, TrainReport,
};

use super::config::RunConfig;

type Net = PolicyNet<f64>;

/// How a checkpoint is adapted to a new skill.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Lifelong,
    Sequential,
    Replay,
}

impl Method {
    fn stage(self) -> Stage {
        match self {
            Method::Lifelong => Stage::Lifelong,
            Method::Sequential => Stage::SequentialBaseline,
            Method::Replay => Stage::ReplayBaseline,
        }
    }
}

fn stage_name(stage: Stage) -> String {
    serde_json::to_value(stage)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Metrics written by a training command sit next to its checkpoint.
pub fn metrics_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("csv")
}

pub fn parse_skills(list: &str) -> Result<Vec<SkillId>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse())
        .collect::<Result<Vec<_>>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(Error::Config("empty skill list".into()))
            } else {
                Ok(v)
            }
        })
}

pub fn parse_counts(list: &str) -> Result<Vec<usize>> {
    let counts = list
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .ok()
                .filter(|&c| c > 0)
                .ok_or_else(|| Error::Config(format!("bad prompt count `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if counts.is_empty() {
        return Err(Error::Config("empty prompt count list".into()));
    }
    Ok(counts)
}

fn query_mode(cfg: &RunConfig) -> QueryMode {
    if cfg.ablations.text_only_query {
        QueryMode::TextOnly
    } else {
        QueryMode::TextFlow
    }
}

fn flow_source(cfg: &RunConfig) -> FlowSource {
    if cfg.ablations.text_only_query {
        FlowSource::None
    } else if cfg.ablations.ground_truth_flow {
        FlowSource::GroundTruth
    } else {
        FlowSource::Estimated
    }
}

fn data_file(dir: &Path, skill: SkillId) -> PathBuf {
    dir.join(format!("{}.ppld", skill.name()))
}

/// Writes `<skill>.ppld` for every skill in the roster.
pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    cfg.roster()
        .into_iter()
        .map(|skill| {
            let demos = generate_demos(&SkillTask::new(skill), cfg.demos_per_skill, cfg.data_seed(skill))?;
            let path = data_file(out, skill);
            write_ppld(&path, &demos)?;
            Ok(path)
        })
        .collect()
}

pub fn load_skill_data(dir: &Path, skill: SkillId, net: &Net, mode: QueryMode) -> Result<SkillData<f64>> {
    let demos = read_ppld(&data_file(dir, skill))?;
    if let Some(d) = demos.iter().find(|d| d.skill != skill) {
        return Err(Error::Invalid(format!(
            "{} holds a `{}` episode",
            data_file(dir, skill).display(),
            d.skill
        )));
    }
    prepare_skill(skill, &demos, &net.cfg, net.text_encoder(), mode)
}

/// Success of `net` on `skill` over `episodes` seeded episodes.
pub fn evaluate(net: &Net, skill: SkillId, episodes: usize, seed: u64, flow: FlowSource) -> Result<RolloutResult> {
    let mut ctl = LearnedController::new(net, flow);
    rollout(&SkillTask::new(skill), episodes, seed, &mut ctl)
}

fn mean_success(net: &Net, skills: &[SkillId], cfg: &RunConfig) -> Result<f64> {
    let mut total = 0.0;
    for &s in skills {
        total += evaluate(net, s, cfg.eval_episodes, cfg.eval_seed(), flow_source(cfg))?.success_rate();
    }
    Ok(total / skills.len() as f64)
}

fn row(skill: SkillId, stage: Stage, epoch: usize, r: &RolloutResult) -> MetricRow {
    MetricRow {
        task_id: skill.name().to_string(),
        stage: stage_name(stage),
        checkpoint_epoch: epoch,
        success_rate: r.success_rate(),
        episodes: r.episodes.len(),
        fwt: None,
        bwt: None,
    }
}

fn pretrain_net(cfg: &RunConfig, policy: PolicyConfig, data: &Path) -> Result<(Net, TrainReport)> {
    let net = Net::new(policy, cfg.init_seed())?;
    let mode = query_mode(cfg);
    let mut sets = BTreeMap::new();
    for &s in &cfg.train.skills {
        sets.insert(s, load_skill_data(data, s, &net, mode)?);
    }
    let skills = cfg.train.skills.clone();
    let mut eval = |_: usize, n: &Net| mean_success(n, &skills, cfg);
    let tc = TrainConfig {
        stage: Stage::Pretrain,
        ..cfg.train.clone()
    };
    pretrain(net, &tc, &sets, mode, Some(&mut eval))
}

/// Joint pre-training on `train.skills`; writes the checkpoint and its
/// metrics CSV.
pub fn pretrain_run(cfg: &RunConfig, data: &Path, out: &Path) -> Result<Vec<MetricRow>> {
    let (net, report) = pretrain_net(cfg, cfg.policy.clone(), data)?;
    let mut rows = Vec::new();
    let mut reference = BTreeMap::new();
    for &s in &cfg.train.skills {
        let r = evaluate(&net, s, cfg.eval_episodes, cfg.eval_seed(), flow_source(cfg))?;
        reference.insert(s.name().to_string(), r.success_rate());
        rows.push(row(s, Stage::Pretrain, report.selected_epoch, &r));
    }
    let names = cfg.train.skills.iter().map(|s| s.name().to_string()).collect();
    let mut ckpt = Checkpoint::new(net, Stage::Pretrain, names, cfg.seed, cfg.to_value());
    ckpt.meta.epoch = report.selected_epoch;
    ckpt.meta.fwt = reference;
    save_checkpoint(&ckpt, out)?;
    write_metrics_csv(&metrics_path(out), &rows)?;
    Ok(rows)
}

/// Adapts a checkpoint to one new skill with the chosen method, then
/// measures forward transfer on the new skill and backward transfer over
/// every skill learned before it.
pub fn adapt(cfg: &RunConfig, method: Method, ckpt_path: &Path, skill: SkillId, data: &Path, out: &Path) -> Result<Vec<MetricRow>> {
    let ckpt: Checkpoint<f64> = load_checkpoint(ckpt_path)?;
    let known: Vec<SkillId> = ckpt.meta.skills.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    if known.contains(&skill) {
        return Err(Error::SkillAlreadyOwned(skill.name().to_string()));
    }
    let mode = query_mode(cfg);
    let flow = flow_source(cfg);
    let net = ckpt.net;
    let new_data = load_skill_data(data, skill, &net, mode)?;
    let tc = TrainConfig {
        stage: method.stage(),
        seed: seeds::stage(cfg.train.seed, skill.name()),
        ..cfg.adapt_train()
    };
    let mut eval = |_: usize, n: &Net| Ok(evaluate(n, skill, cfg.eval_episodes, cfg.eval_seed(), flow)?.success_rate());
    let (net, report) = match method {
        Method::Lifelong => lifelong_step(net, &tc, &new_data, mode, Some(&mut eval))?,
        Method::Sequential => sequential_baseline(net, &tc, &new_data, mode, Some(&mut eval))?,
        Method::Replay => {
            let old = known
                .iter()
                .map(|&s| load_skill_data(data, s, &net, mode))
                .collect::<Result<Vec<_>>>()?;
            let old: Vec<&SkillData<f64>> = old.iter().collect();
            replay_baseline(net, &tc, &new_data, &old, mode, Some(&mut eval))?
        }
    };
    let history: Vec<f64> = report.evals.iter().map(|e| e.success_rate).collect();
    let fwt = compute_fwt(&history)?;

    let stage = method.stage();
    let mut rows = Vec::new();
    let mut before = Vec::new();
    let mut after = Vec::new();
    for &old in &known {
        let r = evaluate(&net, old, cfg.eval_episodes, cfg.eval_seed(), flow)?;
        let f = *ckpt.meta.fwt.get(old.name()).ok_or_else(|| {
            Error::Invalid(format!("checkpoint has no reference success for `{old}`"))
        })?;
        before.push(f);
        after.push(r.success_rate());
        let mut x = row(old, stage, report.selected_epoch, &r);
        x.fwt = Some(f);
        rows.push(x);
    }
    let bwt = if before.is_empty() { None } else { Some(compute_bwt(&before, &after)?) };
    rows.push(MetricRow {
        task_id: skill.name().to_string(),
        stage: stage_name(stage),
        checkpoint_epoch: report.selected_epoch,
        success_rate: fwt,
        episodes: cfg.eval_episodes,
        fwt: Some(fwt),
        bwt,
    });

    let mut skills = ckpt.meta.skills.clone();
    skills.push(skill.name().to_string());
    let mut reference = ckpt.meta.fwt.clone();
    reference.insert(skill.name().to_string(), fwt);
    let mut next = Checkpoint::new(net, stage, skills, cfg.seed, cfg.to_value());
    next.meta.epoch = report.selected_epoch;
    next.meta.fwt = reference;
    save_checkpoint(&next, out)?;
    write_metrics_csv(&metrics_path(out), &rows)?;
    Ok(rows)
}

fn checkpoint_flow(ckpt: &Checkpoint<f64>) -> FlowSource {
    serde_json::from_value::<RunConfig>(ckpt.meta.config.clone())
        .map(|c| flow_source(&c))
        .unwrap_or(FlowSource::Estimated)
}

/// Evaluates a checkpoint; the flow source defaults to the one its run
/// config implies.
pub fn run_eval(
    ckpt_path: &Path,
    skills: &[SkillId],
    episodes: usize,
    seed: Option<u64>,
    flow: Option<FlowSource>,
    csv: &Path,
) -> Result<Vec<MetricRow>> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be at least 1".into()));
    }
    let ckpt: Checkpoint<f64> = load_checkpoint(ckpt_path)?;
    let seed = seed.unwrap_or_else(|| seeds::stage(ckpt.meta.root_seed, "eval"));
    let flow = flow.unwrap_or_else(|| checkpoint_flow(&ckpt));
    let mut rows = Vec::new();
    for &s in skills {
        let r = evaluate(&ckpt.net, s, episodes, seed, flow)?;
        let mut x = row(s, ckpt.meta.stage, ckpt.meta.epoch, &r);
        x.fwt = ckpt.meta.fwt.get(s.name()).copied();
        rows.push(x);
    }
    write_metrics_csv(csv, &rows)?;
    Ok(rows)
}

/// Rolls out a checkpoint and writes its per-step prompt weights plus the
/// per-episode summary. Returns both paths.
pub fn export_weights(
    ckpt_path: &Path,
    skill: SkillId,
    episodes: usize,
    seed: Option<u64>,
    flow: Option<FlowSource>,
    csv: &Path,
) -> Result<(PathBuf, PathBuf)> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be at least 1".into()));
    }
    let ckpt: Checkpoint<f64> = load_checkpoint(ckpt_path)?;
    let seed = seed.unwrap_or_else(|| seeds::stage(ckpt.meta.root_seed, "export"));
    let flow = flow.unwrap_or_else(|| checkpoint_flow(&ckpt));
    let r = evaluate(&ckpt.net, skill, episodes, seed, flow)?;
    let summary = export_weight_trace(&r.episodes, csv)?;
    Ok((csv.to_path_buf(), summary))
}

/// Pre-trains one policy per component count and reports the mean success
/// over the pre-training skills, one row per count.
pub fn sweep_prompts(cfg: &RunConfig, counts: &[usize], data: &Path, out: &Path) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for &m in counts {
        let policy = PolicyConfig {
            components: m,
            ..cfg.policy.clone()
        };
        policy.validate()?;
        let (net, report) = pretrain_net(cfg, policy, data)?;
        let mut successes = 0;
        let mut episodes = 0;
        for &s in &cfg.train.skills {
            let r = evaluate(&net, s, cfg.eval_episodes, cfg.eval_seed(), flow_source(cfg))?;
            successes += r.successes();
            episodes += r.episodes.len();
        }
        rows.push(MetricRow {
            task_id: "pretrain-skills".into(),
            stage: format!("sweep-m{m}"),
            checkpoint_epoch: report.selected_epoch,
            success_rate: successes as f64 / episodes as f64,
            episodes,
            fwt: None,
            bwt: None,
        });
    }
    write_metrics_csv(out, &rows)?;
    Ok(rows)
}

/// Forward transfer of a fresh policy trained on `skill` alone with the
/// per-skill budget: the reference a lifelong learner is compared with.
pub fn scratch_fwt(cfg: &RunConfig, skill: SkillId, data: &Path) -> Result<f64> {
    let net = Net::new(cfg.policy.clone(), seeds::stage(cfg.seed, &format!("scratch.{}", skill.name())))?;
    let mode = query_mode(cfg);
    let mut sets = BTreeMap::new();
    sets.insert(skill, load_skill_data(data, skill, &net, mode)?);
    let flow = flow_source(cfg);
    let mut eval = |_: usize, n: &Net| Ok(evaluate(n, skill, cfg.eval_episodes, cfg.eval_seed(), flow)?.success_rate());
    let tc = TrainConfig {
        seed: seeds::stage(cfg.train.seed, &format!("scratch.{}", skill.name())),
        ..cfg.adapt_train()
    };
    let (_, report) = pretrain(net, &tc, &sets, mode, Some(&mut eval))?;
    let history: Vec<f64> = report.evals.iter().map(|e| e.success_rate).collect();
    compute_fwt(&history)
}
