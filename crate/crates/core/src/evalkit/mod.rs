//! Rollouts, success rates, transfer metrics and prompt-weight traces.

mod metrics;
mod rollout;
mod trace;

pub use metrics::{compute_bwt, compute_fwt, write_metrics_csv, MetricRow, METRICS_HEADER};
pub use rollout::{
    episode_seed, rollout, run_episode, Controller, EpisodeOutcome, ExpertController, FlowSource,
    LearnedController, RandomController, RolloutResult,
};
pub use trace::{alpha_std, export_weight_trace, max_alpha_std, summary_path, trace_similarity};
