use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use acro_core::harness::{self, parse_maneuvers};
use acro_core::pilots::Ablation;
use acro_core::trajectory::Maneuver;
use acro_core::AppConfig;

/// Desk-scale quadrotor acrobatics: trajectories, privileged MPC, and
/// sensorimotor policy distillation.
#[derive(Parser)]
#[command(name = "acro", version, about)]
struct Cli {
    /// JSON configuration; defaults are used for anything omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dump the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a maneuver reference and export it as CSV.
    GenTrajectory {
        maneuver: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fly the privileged expert over seeded perturbed runs.
    RunExpert {
        maneuver: String,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        /// Benchmark-row CSV.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Observation log (JSONL) of one sensor-instrumented run.
        #[arg(long)]
        obs_log: Option<PathBuf>,
    },
    /// Run the collect-and-train loop and write a checkpoint directory.
    Train {
        maneuver: String,
        #[arg(long, default_value = "none")]
        ablation: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Persist the aggregated dataset incrementally per round.
        #[arg(long)]
        dataset_dir: Option<PathBuf>,
    },
    /// Method-by-maneuver benchmark over checkpoints plus baselines.
    Evaluate {
        /// Checkpoint directories (repeatable).
        #[arg(long = "ckpt", required = true)]
        ckpts: Vec<PathBuf>,
        #[arg(long, default_value = "all")]
        maneuvers: String,
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = false)]
        no_expert: bool,
        #[arg(long, default_value_t = false)]
        no_drift: bool,
    },
    /// Repeated-roll endurance curves for checkpoints.
    Endurance {
        #[arg(long = "ckpt", required = true)]
        ckpts: Vec<PathBuf>,
        #[arg(long, default_value_t = 20.0)]
        seconds: f64,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Evaluate a feature-track student on freshly seeded scenes.
    Transfer {
        #[arg(long)]
        ckpt: PathBuf,
        /// Total scene count including the training scene.
        #[arg(long, default_value_t = 3)]
        scenes: usize,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Sliced Wasserstein distance between two observation logs.
    Wasserstein {
        #[arg(long)]
        obs_a: PathBuf,
        #[arg(long)]
        obs_b: PathBuf,
    },
}

fn load_config(path: &Option<PathBuf>) -> anyhow::Result<AppConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            Ok(AppConfig::from_json(&text)?)
        }
        None => Ok(AppConfig::default()),
    }
}

fn parse_maneuver(name: &str) -> anyhow::Result<Maneuver> {
    Ok(name.parse::<Maneuver>()?)
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli.config)?;
    if cli.print_config {
        println!("{}", cfg.to_json_pretty());
        return Ok(());
    }
    let Some(command) = cli.command else {
        bail!("no subcommand given (try --help)");
    };

    match command {
        Command::GenTrajectory { maneuver, out } => {
            let m = parse_maneuver(&maneuver)?;
            let rows = harness::cmd_gen_trajectory(&cfg, m, &out)?;
            println!("wrote {} samples to {}", rows, out.display());
        }
        Command::RunExpert { maneuver, runs, table, obs_log } => {
            let m = parse_maneuver(&maneuver)?;
            let r = harness::cmd_run_expert(&cfg, m, runs, table.as_deref(), obs_log.as_deref())?;
            println!(
                "expert on {}: success {:.1}% over {} runs, rmse {} cm",
                r.maneuver,
                r.success_rate,
                r.runs,
                r.rmse_mean_cm.map_or("inf".into(), |v| format!("{v:.2}")),
            );
        }
        Command::Train { maneuver, ablation, out, seed, dataset_dir } => {
            let m = parse_maneuver(&maneuver)?;
            let ab: Ablation = ablation.parse()?;
            let summary = harness::cmd_train(&cfg, m, ab, seed, &out, dataset_dir.as_deref())?;
            for round in &summary.rounds {
                println!(
                    "round {}: threshold {} rollouts {} crashes {} train_loss {:.4} holdout {:.4}",
                    round.round,
                    round.threshold,
                    round.dataset_rollouts,
                    round.crashes_this_round,
                    round.final_train_loss,
                    round.holdout_loss
                );
            }
            println!("checkpoint written to {}", out.display());
        }
        Command::Evaluate { ckpts, maneuvers, table, no_expert, no_drift } => {
            let ms = parse_maneuvers(&maneuvers)?;
            let results =
                harness::cmd_evaluate(&cfg, &ckpts, &ms, !no_expert, !no_drift, table.as_deref())?;
            let mut buf = Vec::new();
            acro_core::eval::write_benchmark_csv(&results, &mut buf)?;
            print!("{}", String::from_utf8_lossy(&buf));
        }
        Command::Endurance { ckpts, seconds, table } => {
            let curves = harness::cmd_endurance(&cfg, &ckpts, seconds, table.as_deref())?;
            let mut buf = Vec::new();
            acro_core::eval::write_endurance_csv(&curves, &mut buf)?;
            print!("{}", String::from_utf8_lossy(&buf));
        }
        Command::Transfer { ckpt, scenes, table } => {
            let results = harness::cmd_transfer(&cfg, &ckpt, scenes, table.as_deref())?;
            let mut buf = Vec::new();
            acro_core::eval::write_transfer_csv(&results, &mut buf)?;
            print!("{}", String::from_utf8_lossy(&buf));
        }
        Command::Wasserstein { obs_a, obs_b } => {
            let d = harness::cmd_wasserstein(&cfg, &obs_a, &obs_b)?;
            println!("{d:.6}");
        }
    }
    Ok(())
}
