use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use pret::bench::{self, FlopsScenario};
use pret::config::Config;
use pret::env::{generate_environment, sample_episode, write_env_file, Vocab};
use pret::model::Model;
use pret::planner::{run_episode, Policy};
use pret::tensor::checkpoint;
use pret::trace::write_trace;
use pret::train::{build_corpus, evaluate, pretrain_model, train_with_selection};
use pret::{PretError, Result};

#[derive(Parser)]
#[command(name = "pret", version, about = "Trajectory-stack navigation planner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Configuration file (key = value with [model]/[env]/[train] sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in profile used when no config file is given.
    #[arg(long, default_value = "desk", value_parser = ["desk", "paper-faithful"])]
    profile: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Common {
    fn config(&self) -> Result<Config> {
        let cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::by_profile(&self.profile)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an environment plus sampled episodes and write them to a file.
    GenEnv {
        #[command(flatten)]
        common: Common,
        /// Output environment file.
        #[arg(long)]
        out: PathBuf,
        /// Number of episodes to sample.
        #[arg(long, default_value_t = 8)]
        episodes: usize,
    },
    /// Masked-token pretraining of the text pathway; writes a checkpoint.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Output directory for checkpoint and log.
        #[arg(long)]
        out: PathBuf,
        /// Optimizer steps (defaults to the configured mlm_steps).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Mixed imitation training; writes a checkpoint, log, and eval report.
    Train {
        #[command(flatten)]
        common: Common,
        /// Output directory for checkpoint, log, and report.
        #[arg(long)]
        out: PathBuf,
        /// Optional checkpoint to initialize from (e.g. a pretrain output).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Training episodes (defaults to the configured count).
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate a checkpoint on held-out episodes.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate (required).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Optional file for a machine-readable metrics report.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
    },
    /// Analytic per-step FLOP report for incremental vs naive planning.
    BenchFlops {
        #[command(flatten)]
        common: Common,
    },
    /// Run one greedy episode and export a replayable trace file.
    Trace {
        #[command(flatten)]
        common: Common,
        /// Output trace file.
        #[arg(long)]
        out: PathBuf,
        /// Optional checkpoint to load; otherwise seed-initialized weights.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn load_into(model: &mut Model<f32>, cfg: &Config, path: &Path) -> Result<()> {
    let stored = checkpoint::load(&mut model.store, path)?;
    if stored != cfg.hash() {
        return Err(PretError::Integrity(format!(
            "checkpoint {} was written under config hash {stored}, expected {}",
            path.display(),
            cfg.hash()
        )));
    }
    Ok(())
}

fn write_log(path: &Path, rows: &[(usize, f64)]) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "step\tloss")?;
    for (s, l) in rows {
        writeln!(f, "{s}\t{l:.6}")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenEnv {
            common,
            out,
            episodes,
        } => {
            let cfg = common.config()?;
            let env = generate_environment(common.seed, &cfg.gen_params())?;
            let vocab = Vocab::navigation(cfg.env.landmark_count);
            let eps = (0..episodes)
                .map(|k| {
                    sample_episode(&env, &vocab, common.seed + 10_000 + k as u64, &cfg.episode_params())
                })
                .collect::<Result<Vec<_>>>()?;
            write_env_file(&env, &eps, &out)?;
            println!(
                "wrote {} ({} nodes, {} episodes)",
                out.display(),
                env.n_nodes(),
                eps.len()
            );
        }
        Cmd::Pretrain { common, out, steps } => {
            let cfg = common.config()?;
            std::fs::create_dir_all(&out)?;
            let steps = steps.unwrap_or(cfg.train.mlm_steps);
            let mut model: Model<f32> = Model::new(&cfg, common.seed)?;
            let corpus = build_corpus(&cfg, common.seed, 4, 4 * cfg.train.batch.max(1))?;
            let mut log = Vec::new();
            pretrain_model(&mut model, &corpus, &cfg, common.seed, steps, |s, l| {
                log.push((s, l));
                if s % 50 == 0 || s + 1 == steps {
                    println!("pretrain step {s:>5}  loss {l:.4}");
                }
            })?;
            write_log(&out.join("pretrain_log.tsv"), &log)?;
            checkpoint::save(&model.store, &cfg.hash(), &out.join("pretrain.ckpt"))?;
            println!("wrote {}", out.join("pretrain.ckpt").display());
        }
        Cmd::Train {
            common,
            out,
            checkpoint: ckpt,
            episodes,
        } => {
            let cfg = common.config()?;
            std::fs::create_dir_all(&out)?;
            let mut model: Model<f32> = Model::new(&cfg, common.seed)?;
            if let Some(p) = &ckpt {
                load_into(&mut model, &cfg, p)?;
            }
            let n_eps = episodes.unwrap_or(cfg.train.episodes);
            let epochs = cfg.train.epochs.max(1);
            let per_epoch = (n_eps / epochs).max(1);
            let corpus = build_corpus(&cfg, common.seed, 32, per_epoch)?;
            let val = build_corpus(&cfg, common.seed + 500_000, 2, 50)?;
            let mut log = Vec::new();
            train_with_selection(&mut model, &corpus, &val, &cfg, common.seed, |e, l, r| {
                log.push((e, l));
                println!("epoch {e}  loss {l:.4}  val SR {:.3} SPL {:.3}", r.sr, r.spl);
            })?;
            write_log(&out.join("train_log.tsv"), &log)?;
            checkpoint::save(&model.store, &cfg.hash(), &out.join("model.ckpt"))?;

            let held = build_corpus(&cfg, common.seed + 1_000_000, 2, 50)?;
            let (report, _) = evaluate(&model, &held.pairs(), &Policy::Greedy, cfg.train.max_steps)?;
            println!("{}", report.table());
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| PretError::Parse(e.to_string()))?;
            std::fs::write(out.join("metrics.json"), json)?;
            println!("wrote {}", out.join("model.ckpt").display());
        }
        Cmd::Eval {
            common,
            checkpoint: ckpt,
            out,
            episodes,
        } => {
            let cfg = common.config()?;
            let path = ckpt.ok_or_else(|| {
                PretError::Config("eval requires --checkpoint PATH".into())
            })?;
            let mut model: Model<f32> = Model::new(&cfg, common.seed)?;
            load_into(&mut model, &cfg, &path)?;
            let held = build_corpus(&cfg, common.seed + 1_000_000, 2, episodes)?;
            let (report, _) = evaluate(&model, &held.pairs(), &Policy::Greedy, cfg.train.max_steps)?;
            println!("{}", report.table());
            if let Some(p) = out {
                let json = serde_json::to_string_pretty(&report)
                    .map_err(|e| PretError::Parse(e.to_string()))?;
                std::fs::write(&p, json)?;
                println!("wrote {}", p.display());
            }
        }
        Cmd::BenchFlops { common } => {
            let cfg = common.config()?;
            print!("{}", bench::report(&cfg, &FlopsScenario::default())?);
        }
        Cmd::Trace {
            common,
            out,
            checkpoint: ckpt,
        } => {
            let cfg = common.config()?;
            let mut model: Model<f32> = Model::new(&cfg, common.seed)?;
            if let Some(p) = &ckpt {
                load_into(&mut model, &cfg, p)?;
            }
            let env = generate_environment(common.seed, &cfg.gen_params())?;
            let vocab = Vocab::navigation(cfg.env.landmark_count);
            let ep = sample_episode(&env, &vocab, common.seed + 10_000, &cfg.episode_params())?;
            let run = run_episode(&model, &env, &ep, &Policy::Greedy, cfg.train.max_steps)?;
            write_trace(&out, &cfg.hash(), &env, &ep, &run)?;
            println!(
                "wrote {} ({} steps, final node {})",
                out.display(),
                run.steps.len(),
                run.final_node()
            );
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
