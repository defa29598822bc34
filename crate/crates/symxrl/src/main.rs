use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use symxrl::commands::{self, ExplainOutputs};
use symxrl::config::{load_intent_file, RunConfig, SchemaKind};
use symxrl::io;
use symxrl_core::explain::Normalization;
use symxrl_core::steering::SteeringMode;
use symxrl_core::store::ExperienceStore;
use symxrl_core::symbolizer::Tolerance;
use symxrl_core::{Schema, SchemaA1};

#[derive(Parser)]
#[command(name = "symxrl", version, about = "Symbolize, explain and steer RL agent traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one JSONL trace per seed.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Drive the playground with this agent instead of a random policy.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train the playground agent; writes checkpoints, training.csv and store.json.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        checkpoints: Option<Vec<u32>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a trace into symbolic JSONL and optionally append it to a store.
    Symbolize {
        #[arg(long, value_enum, default_value = "a2")]
        schema: SchemaKind,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value_t = Tolerance::default().relative)]
        eps_rel: f64,
        /// Supplies the A2 group layout.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Distributions, density map and knowledge graph of a symbolic trace.
    Explain {
        #[arg(long = "in")]
        input: PathBuf,
        /// `.json` for JSON, DOT otherwise.
        #[arg(long)]
        kg: Option<PathBuf>,
        /// Effect distribution CSV.
        #[arg(long)]
        dist: Option<PathBuf>,
        /// Action distribution CSV.
        #[arg(long)]
        actions: Option<PathBuf>,
        #[arg(long)]
        density: Option<PathBuf>,
        #[arg(long, default_value = "joint")]
        normalize: String,
        /// Group index (A2) or slice name (A1) to restrict terms to.
        #[arg(long)]
        group: Option<String>,
    },
    /// Steered against unsteered episodes over several seeds.
    Steer {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Experience store; empty when omitted.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        intent: Option<PathBuf>,
        #[arg(long)]
        start_frac: Option<f64>,
        /// Number of seeds, counted from the environment seed.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Join two run directories into delta and relative-reward tables.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => {
            let mut cfg = RunConfig::default();
            cfg.apply_seed_override(std::env::var(symxrl::config::SEED_VAR).ok().as_deref())?;
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, checkpoint } => {
            let cfg = load_config(config.as_deref())?;
            let agent = checkpoint.as_deref().map(io::load_checkpoint).transpose()?.map(|c| c.agent);
            let out = out.unwrap_or_else(|| cfg.out_dir.clone());
            for path in commands::simulate(&cfg, agent.as_ref(), &out)? {
                println!("{}", path.display());
            }
        }
        Command::Train { config, checkpoints, out } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(c) = checkpoints {
                cfg.train.checkpoints = c;
                cfg.train.episodes = cfg.train.checkpoints.iter().copied().max().unwrap_or(0).max(cfg.train.episodes);
            }
            cfg.validate()?;
            let out = out.unwrap_or_else(|| cfg.out_dir.clone());
            let outcome = commands::train(&cfg, &out)?;
            for ck in &outcome.checkpoints {
                println!("checkpoint {} -> {}", ck.episodes, out.join(format!("checkpoint-{}.json", ck.episodes)).display());
            }
        }
        Command::Symbolize { schema, input, out, store, eps_rel, config } => {
            let cfg = load_config(config.as_deref())?;
            let schema = match schema {
                SchemaKind::A1 => Schema::A1(SchemaA1),
                SchemaKind::A2 => Schema::A2(cfg.env.schema()),
            };
            let tolerance = Tolerance { relative: eps_rel, ..cfg.symbolizer.tolerance() };
            let records = commands::symbolize(&schema, &input, &out, store.as_deref(), tolerance)?;
            println!("{} records -> {}", records.len(), out.display());
        }
        Command::Explain { input, kg, dist, actions, density, normalize, group } => {
            let normalization: Normalization = normalize.parse()?;
            let outputs = ExplainOutputs { kg, dist, actions, density };
            commands::explain(&input, &outputs, normalization, group.as_deref())?;
        }
        Command::Steer { config, mode, checkpoint, store, intent, start_frac, seeds, delta, out } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(m) = mode {
                cfg.steering.mode = m.parse::<SteeringMode>()?;
            }
            if let Some(f) = start_frac {
                cfg.steering.start_fraction = f;
            }
            if let Some(d) = delta {
                cfg.steering.delta = d;
            }
            if let Some(n) = seeds {
                cfg.seeds = (cfg.env.seed..cfg.env.seed + n).collect();
            }
            cfg.validate()?;
            let mut steering = cfg.steering_config()?;
            if let Some(path) = intent {
                steering.intents.extend(load_intent_file(&path, &cfg.env.schema())?);
            }
            // Conflicting intents are reported here, before any episode runs.
            steering.validate()?;
            let agent = io::load_checkpoint(&checkpoint)?.agent;
            let store = match store {
                Some(p) => io::load_store(&p)?,
                None => ExperienceStore::new(),
            };
            let out = out.unwrap_or_else(|| cfg.out_dir.clone());
            let summaries = commands::steer(&cfg, &agent, &store, &steering, &out)?;
            let imps: Vec<f64> = summaries.iter().map(|s| s.improvement()).collect();
            println!(
                "{} seeds, median improvement {:.4} -> {}",
                summaries.len(),
                symxrl::experiment::median(&imps),
                out.join("summary.csv").display()
            );
        }
        Command::Compare { run_a, run_b, out } => {
            commands::compare(&run_a, &run_b, &out).context("compare failed")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
