//! High-level commands behind the CLI; the acceptance suite drives the same
//! entry points.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::config::AppConfig;
use crate::dagger::{run_dagger, RoundMetrics, TrainSchedule};
use crate::error::{Error, Result};
use crate::eval::{
    endurance_test, run_benchmark, transfer_test, write_benchmark_csv, write_endurance_csv,
    write_transfer_csv, BenchmarkResult, EnduranceCurve, MethodSpec,
};
use crate::pilots::Ablation;
use crate::policy::{checkpoint, CheckpointMeta, PolicyNet};
use crate::sim::{run_closed_loop, ExpertPilot, ObsEvent, RunOptions};
use crate::trajectory::{build_endurance_roll, build_maneuver, Maneuver, ReferenceTrajectory};

/// Reference trajectory for a maneuver under the current config.
pub fn make_trajectory(cfg: &AppConfig, maneuver: Maneuver) -> Result<ReferenceTrajectory> {
    build_maneuver(maneuver, &cfg.maneuvers)
}

/// `gen-trajectory`: build and export the 50 Hz reference as CSV.
pub fn cmd_gen_trajectory(cfg: &AppConfig, maneuver: Maneuver, out: &Path) -> Result<usize> {
    let traj = make_trajectory(cfg, maneuver)?;
    let mut file = fs::File::create(out)?;
    traj.to_csv(&mut file)?;
    Ok(traj.len())
}

/// `run-expert`: closed-loop privileged MPC over seeded perturbed runs.
/// Optionally writes the benchmark row CSV and an observation log (JSONL,
/// first run only).
pub fn cmd_run_expert(
    cfg: &AppConfig,
    maneuver: Maneuver,
    runs: usize,
    table_out: Option<&Path>,
    obs_log_out: Option<&Path>,
) -> Result<BenchmarkResult> {
    let traj = make_trajectory(cfg, maneuver)?;
    let ctx = cfg.stack_context();
    let mut bench = cfg.benchmark_config();
    bench.runs = runs;
    let mut results =
        run_benchmark(&[MethodSpec::Expert], &[(maneuver, &traj)], &ctx, &bench)?;
    let result = results.remove(0);
    if let Some(path) = table_out {
        let mut f = fs::File::create(path)?;
        write_benchmark_csv(std::slice::from_ref(&result), &mut f)?;
    }
    if let Some(path) = obs_log_out {
        let mut events = Vec::new();
        let mut pilot = ExpertPilot::new(ctx.mpc, ctx.nominal);
        let start = traj.states[0];
        run_closed_loop(
            &traj,
            &ctx.nominal,
            start,
            &mut pilot,
            &ctx.sensors,
            &RunOptions { sensor_seed: bench.base_seed, imu_biases: None, log_observations: true },
            Some(&mut events),
        )?;
        write_obs_log(path, &events)?;
    }
    Ok(result)
}

pub fn write_obs_log(path: &Path, events: &[ObsEvent]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for e in events {
        writeln!(f, "{}", serde_json::to_string(e)?)?;
    }
    Ok(())
}

pub fn read_obs_log(path: &Path) -> Result<Vec<ObsEvent>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Camera events of an observation log as flattened track vectors.
pub fn camera_observations(events: &[ObsEvent]) -> Vec<Vec<f64>> {
    events
        .iter()
        .filter_map(|e| match e {
            ObsEvent::Camera { tracks, .. } => {
                Some(tracks.iter().flatten().map(|v| *v as f64).collect())
            }
            _ => None,
        })
        .collect()
}

/// Training summary persisted next to the checkpoint.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct TrainSummary {
    pub maneuver: String,
    pub ablation: String,
    pub seed: u64,
    pub rounds: Vec<RoundMetrics>,
}

/// `train`: run the collect-and-train loop and write the checkpoint
/// directory (plus round metrics and, optionally, the dataset).
pub fn cmd_train(
    cfg: &AppConfig,
    maneuver: Maneuver,
    ablation: Ablation,
    seed: u64,
    out_dir: &Path,
    dataset_dir: Option<&Path>,
) -> Result<TrainSummary> {
    let traj = make_trajectory(cfg, maneuver)?;
    let ctx = cfg.stack_context();
    let master = crate::exec::mix_seed(seed, cfg.network.init_seed);
    let out = run_dagger(&traj, maneuver, ablation, &ctx, &cfg.schedule, master, dataset_dir)?;
    let meta = CheckpointMeta {
        ablation: ablation.name().into(),
        maneuver: maneuver.name().into(),
        seed,
        rounds: out.metrics.len(),
    };
    checkpoint::save(out_dir, &out.net, &meta)?;
    let summary = TrainSummary {
        maneuver: maneuver.name().into(),
        ablation: ablation.name().into(),
        seed,
        rounds: out.metrics.clone(),
    };
    fs::write(out_dir.join("metrics.json"), serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}

/// Load a checkpoint and derive its method label from the stored metadata.
pub fn load_student(path: &Path) -> Result<(PolicyNet<f32>, Ablation, CheckpointMeta)> {
    let (net, meta) = checkpoint::load(path)?;
    let ablation: Ablation = meta.ablation.parse()?;
    Ok((net, ablation, meta))
}

/// `evaluate`: the method-by-maneuver grid over every given checkpoint plus
/// the expert and drift-MPC baselines.
pub fn cmd_evaluate(
    cfg: &AppConfig,
    ckpts: &[PathBuf],
    maneuvers: &[Maneuver],
    include_expert: bool,
    include_drift: bool,
    table_out: Option<&Path>,
) -> Result<Vec<BenchmarkResult>> {
    let ctx = cfg.stack_context();
    let bench = cfg.benchmark_config();
    let trajs: Vec<(Maneuver, ReferenceTrajectory)> = maneuvers
        .iter()
        .map(|m| make_trajectory(cfg, *m).map(|t| (*m, t)))
        .collect::<Result<_>>()?;
    let pairs: Vec<(Maneuver, &ReferenceTrajectory)> =
        trajs.iter().map(|(m, t)| (*m, t)).collect();

    let students: Vec<(PolicyNet<f32>, Ablation, CheckpointMeta)> = ckpts
        .iter()
        .map(|p| load_student(p))
        .collect::<Result<_>>()?;
    let mut methods: Vec<MethodSpec<'_>> = Vec::new();
    if include_expert {
        methods.push(MethodSpec::Expert);
    }
    if include_drift {
        methods.push(MethodSpec::DriftMpc(cfg.benchmark.drift));
    }
    for (net, ablation, _) in &students {
        methods.push(MethodSpec::Student { net, ablation: *ablation });
    }

    let results = run_benchmark(&methods, &pairs, &ctx, &bench)?;
    if let Some(path) = table_out {
        let mut f = fs::File::create(path)?;
        write_benchmark_csv(&results, &mut f)?;
    }
    Ok(results)
}

/// `endurance`: repeated rolls up to the configured horizon for each
/// checkpoint.
pub fn cmd_endurance(
    cfg: &AppConfig,
    ckpts: &[PathBuf],
    seconds: f64,
    table_out: Option<&Path>,
) -> Result<Vec<EnduranceCurve>> {
    let ctx = cfg.stack_context();
    let mut bench = cfg.benchmark_config();
    bench.runs = cfg.benchmark.endurance_runs;
    let traj = build_endurance_roll(&cfg.maneuvers, seconds)?;
    let students: Vec<(PolicyNet<f32>, Ablation, CheckpointMeta)> = ckpts
        .iter()
        .map(|p| load_student(p))
        .collect::<Result<_>>()?;
    let methods: Vec<MethodSpec<'_>> = students
        .iter()
        .map(|(net, ablation, _)| MethodSpec::Student { net, ablation: *ablation })
        .collect();
    let curves = endurance_test(&methods, &traj, &ctx, &bench, seconds)?;
    if let Some(path) = table_out {
        let mut f = fs::File::create(path)?;
        write_endurance_csv(&curves, &mut f)?;
    }
    Ok(curves)
}

/// `transfer`: evaluate a feature-track student on freshly seeded scenes.
pub fn cmd_transfer(
    cfg: &AppConfig,
    ckpt: &Path,
    scenes: usize,
    table_out: Option<&Path>,
) -> Result<Vec<BenchmarkResult>> {
    let (net, ablation, meta) = load_student(ckpt)?;
    if ablation != Ablation::None {
        return Err(Error::Config {
            reason: "transfer test expects a full (feature-track) student".into(),
        });
    }
    let maneuver: Maneuver = meta.maneuver.parse()?;
    let traj = make_trajectory(cfg, maneuver)?;
    let ctx = cfg.stack_context();
    let mut bench = cfg.benchmark_config();
    bench.runs = cfg.benchmark.transfer_runs;
    let seeds: Vec<u64> = (0..scenes.saturating_sub(1))
        .map(|i| {
            cfg.benchmark
                .transfer_scene_seeds
                .get(i)
                .copied()
                .unwrap_or_else(|| crate::exec::mix_seed(cfg.benchmark.base_seed, 0x5C + i as u64))
        })
        .collect();
    let results = transfer_test(&net, &traj, maneuver, &ctx, &bench, &seeds)?;
    if let Some(path) = table_out {
        let mut f = fs::File::create(path)?;
        write_transfer_csv(&results, &mut f)?;
    }
    Ok(results)
}

/// `wasserstein`: sliced distance between the camera observations of two
/// logs.
pub fn cmd_wasserstein(cfg: &AppConfig, obs_a: &Path, obs_b: &Path) -> Result<f64> {
    let a = camera_observations(&read_obs_log(obs_a)?);
    let b = camera_observations(&read_obs_log(obs_b)?);
    crate::wasserstein::empirical_wasserstein(
        &a,
        &b,
        cfg.benchmark.wasserstein_projections,
        cfg.benchmark.base_seed,
    )
}

/// Resolve maneuver names like "power_loop,combo" or "all".
pub fn parse_maneuvers(arg: &str) -> Result<Vec<Maneuver>> {
    if arg == "all" {
        return Ok(Maneuver::all().to_vec());
    }
    arg.split(',').map(|s| s.trim().parse()).collect()
}
