//! Command implementations behind the `ppl` binary. Each command is a pure
//! function of its config, seed and input files.

mod commands;
mod config;

pub use commands::{
    adapt, evaluate, export_weights, gen_data, load_skill_data, metrics_path, parse_counts,
    parse_skills, pretrain_run, run_eval, scratch_fwt, sweep_prompts, Method,
};
pub use config::{Ablations, Paths, RunConfig};
