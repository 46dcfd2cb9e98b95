use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ppl_core::cli::{self, Method, RunConfig};
use ppl_core::evalkit::FlowSource;
use ppl_core::simworld::SkillId;
use ppl_core::Error;

#[derive(Parser)]
#[command(name = "ppl", version, about = "Prompt-pool diffusion policies on a 2D desk world")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineMode {
    Sequential,
    Replay,
}

#[derive(Clone, Copy, ValueEnum)]
enum Flow {
    Estimated,
    GroundTruth,
    None,
}

impl From<Flow> for FlowSource {
    fn from(f: Flow) -> Self {
        match f {
            Flow::Estimated => FlowSource::Estimated,
            Flow::GroundTruth => FlowSource::GroundTruth,
            Flow::None => FlowSource::None,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate expert demonstrations for every skill in the roster.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Jointly pre-train on the configured pre-training skills.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn one new skill with frozen old prompts and fresh components.
    Lifelong {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        skill: SkillId,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn one new skill by full finetuning, optionally with replay.
    Baseline {
        #[arg(long, value_enum)]
        mode: BaselineMode,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        skill: SkillId,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out a checkpoint and write a metrics CSV.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Comma-separated skill names.
        #[arg(long)]
        skills: String,
        #[arg(long, default_value_t = 15)]
        episodes: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        flow: Option<Flow>,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Write per-step prompt weights of rollouts and their summary.
    ExportWeights {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        skill: SkillId,
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        flow: Option<Flow>,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Pre-train once per prompt component count.
    SweepPrompts {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated counts; defaults to the config's sweep list.
        #[arg(long)]
        counts: Option<String>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn data_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> ppl_core::Result<PathBuf> {
    flag.or_else(|| cfg.paths.data.clone())
        .ok_or_else(|| Error::Config("no dataset directory: pass --data or set paths.data".into()))
}

fn load(path: &Path) -> ppl_core::Result<RunConfig> {
    RunConfig::load(path)
}

fn run(cmd: Cmd) -> ppl_core::Result<()> {
    match cmd {
        Cmd::GenData { config, out } => {
            let cfg = load(&config)?;
            for p in cli::gen_data(&cfg, &out)? {
                println!("wrote {}", p.display());
            }
        }
        Cmd::Pretrain { config, data, out } => {
            let cfg = load(&config)?;
            let data = data_dir(data, &cfg)?;
            cli::pretrain_run(&cfg, &data, &out)?;
            println!("wrote {} and {}", out.display(), cli::metrics_path(&out).display());
        }
        Cmd::Lifelong { config, ckpt, skill, data, out } => {
            let cfg = load(&config)?;
            let data = data_dir(data, &cfg)?;
            cli::adapt(&cfg, Method::Lifelong, &ckpt, skill, &data, &out)?;
            println!("wrote {} and {}", out.display(), cli::metrics_path(&out).display());
        }
        Cmd::Baseline { mode, config, ckpt, skill, data, out } => {
            let cfg = load(&config)?;
            let data = data_dir(data, &cfg)?;
            let method = match mode {
                BaselineMode::Sequential => Method::Sequential,
                BaselineMode::Replay => Method::Replay,
            };
            cli::adapt(&cfg, method, &ckpt, skill, &data, &out)?;
            println!("wrote {} and {}", out.display(), cli::metrics_path(&out).display());
        }
        Cmd::Eval { ckpt, skills, episodes, seed, flow, csv } => {
            let skills = cli::parse_skills(&skills)?;
            cli::run_eval(&ckpt, &skills, episodes, seed, flow.map(Into::into), &csv)?;
            println!("wrote {}", csv.display());
        }
        Cmd::ExportWeights { ckpt, skill, episodes, seed, flow, csv } => {
            let (trace, summary) = cli::export_weights(&ckpt, skill, episodes, seed, flow.map(Into::into), &csv)?;
            println!("wrote {} and {}", trace.display(), summary.display());
        }
        Cmd::SweepPrompts { config, counts, data, out } => {
            let cfg = load(&config)?;
            let data = data_dir(data, &cfg)?;
            let counts = match counts {
                Some(c) => cli::parse_counts(&c)?,
                None if !cfg.ablations.prompt_count_sweep.is_empty() => cfg.ablations.prompt_count_sweep.clone(),
                None => return Err(Error::Config("no prompt counts: pass --counts or set ablations.prompt_count_sweep".into())),
            };
            cli::sweep_prompts(&cfg, &counts, &data, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ppl: {e}");
            match e {
                Error::Config(_) | Error::UnknownSkill(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
