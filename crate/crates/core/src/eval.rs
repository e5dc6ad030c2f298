//! Benchmark suite: tracking error and success metrics, the method-by-
//! maneuver grid, endurance runs, and sim-to-sim transfer.

use serde::{Deserialize, Serialize};

use crate::dagger::{perturbed_start, randomize_platform};
use crate::error::{Error, Result};
use crate::exec;
use crate::pilots::{Ablation, DriftMpcPilot, DriftOdometryConfig, StackContext, StudentPilot};
use crate::policy::PolicyNet;
use crate::sensing::SceneConfig;
use crate::sim::{run_closed_loop, ExpertPilot, RunOptions, SimOutcome};
use crate::trajectory::{Maneuver, ReferenceTrajectory};

/// Benchmark-wide settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub runs: usize,
    pub start_pos_jitter: f64,
    pub start_yaw_jitter_deg: f64,
    /// Platform randomization amplitude applied per run.
    pub rand_frac: f64,
    pub base_seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            runs: 20,
            start_pos_jitter: 0.1,
            start_yaw_jitter_deg: 5.0,
            rand_frac: 0.10,
            base_seed: 0x5EED,
        }
    }
}

/// Samples a completed run must contain: one per reference event in [0, T).
pub fn expected_samples(traj: &ReferenceTrajectory) -> usize {
    traj.len().saturating_sub(1)
}

/// RMSE of the position error over the 50 Hz log, in centimeters.
pub fn tracking_error_cm(traj: &ReferenceTrajectory, states: &[crate::dynamics::QuadState]) -> Result<f64> {
    let expected = expected_samples(traj);
    if states.len() != expected {
        return Err(Error::AlignmentError { expected, got: states.len() });
    }
    let mut sq = 0.0;
    for (s, r) in states.iter().zip(&traj.states) {
        sq += (s.p - r.p).norm_squared();
    }
    Ok((sq / states.len() as f64).sqrt() * 100.0)
}

/// Success: the run never crashed (flying-space exit or >= 2 m error).
pub fn success(outcome: &SimOutcome) -> bool {
    !outcome.crashed
}

/// A method under evaluation.
pub enum MethodSpec<'a> {
    /// Privileged MPC on the true state.
    Expert,
    /// MPC on a drifting state estimate (declared VIO stand-in).
    DriftMpc(DriftOdometryConfig),
    /// Sensorimotor student with an input ablation.
    Student { net: &'a PolicyNet<f32>, ablation: Ablation },
}

impl MethodSpec<'_> {
    pub fn id(&self) -> String {
        match self {
            MethodSpec::Expert => "expert".into(),
            MethodSpec::DriftMpc(_) => "drift_mpc".into(),
            MethodSpec::Student { ablation, .. } => format!("student_{}", ablation.name()),
        }
    }
}

/// One run's outcome.
#[derive(Debug, Clone, Copy)]
pub struct RunResult {
    pub success: bool,
    pub rmse_cm: Option<f64>,
    pub crash_time: Option<f64>,
}

/// Aggregate over the seeded runs of one (method, maneuver) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub method: String,
    pub maneuver: String,
    pub runs: usize,
    pub successes: usize,
    /// Percent in [0, 100].
    pub success_rate: f64,
    /// Mean/std over completed runs; None when no run completed.
    pub rmse_mean_cm: Option<f64>,
    pub rmse_std_cm: Option<f64>,
}

impl BenchmarkResult {
    fn from_runs(method: String, maneuver: String, results: &[RunResult]) -> Self {
        let successes = results.iter().filter(|r| r.success).count();
        let errors: Vec<f64> = results.iter().filter_map(|r| r.rmse_cm).collect();
        let (mean, std) = if errors.is_empty() {
            (None, None)
        } else {
            let m = errors.iter().sum::<f64>() / errors.len() as f64;
            let var = errors.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / errors.len() as f64;
            (Some(m), Some(var.sqrt()))
        };
        Self {
            method,
            maneuver,
            runs: results.len(),
            successes,
            success_rate: 100.0 * successes as f64 / results.len().max(1) as f64,
            rmse_mean_cm: mean,
            rmse_std_cm: std,
        }
    }
}

/// Run one seeded evaluation episode and keep the full outcome.
pub fn run_one_outcome(
    method: &MethodSpec<'_>,
    traj: &ReferenceTrajectory,
    ctx: &StackContext,
    cfg: &BenchmarkConfig,
    seed: u64,
) -> Result<SimOutcome> {
    use rand::SeedableRng;
    let mut draw_rng = rand_chacha::ChaCha8Rng::seed_from_u64(exec::mix_seed(seed, 11));
    let draw = randomize_platform(&ctx.nominal, &ctx.sensors.imu, cfg.rand_frac, &mut draw_rng);
    let mut start_rng = rand_chacha::ChaCha8Rng::seed_from_u64(exec::mix_seed(seed, 12));
    let start = perturbed_start(traj, cfg.start_pos_jitter, cfg.start_yaw_jitter_deg, &mut start_rng);
    let opts = RunOptions {
        sensor_seed: exec::mix_seed(seed, 13),
        imu_biases: Some(draw.imu_biases),
        log_observations: false,
    };

    match method {
        MethodSpec::Expert => {
            let mut pilot = ExpertPilot::new(ctx.mpc, ctx.nominal);
            run_closed_loop(traj, &draw.params, start, &mut pilot, &ctx.sensors, &opts, None)
        }
        MethodSpec::DriftMpc(drift) => {
            let mut pilot =
                DriftMpcPilot::new(ctx.mpc, ctx.nominal, *drift, exec::mix_seed(seed, 14));
            run_closed_loop(traj, &draw.params, start, &mut pilot, &ctx.sensors, &opts, None)
        }
        MethodSpec::Student { net, ablation } => {
            let mut pilot = StudentPilot::new(net, ctx.squash, ctx.norm, *ablation);
            run_closed_loop(traj, &draw.params, start, &mut pilot, &ctx.sensors, &opts, None)
        }
    }
}

/// Run one seeded evaluation episode of `method` on `traj`.
pub fn run_one(
    method: &MethodSpec<'_>,
    traj: &ReferenceTrajectory,
    ctx: &StackContext,
    cfg: &BenchmarkConfig,
    seed: u64,
) -> Result<RunResult> {
    let outcome = run_one_outcome(method, traj, ctx, cfg, seed)?;
    let ok = success(&outcome);
    let rmse = if ok { Some(tracking_error_cm(traj, &outcome.states_50hz)?) } else { None };
    Ok(RunResult { success: ok, rmse_cm: rmse, crash_time: outcome.crash_time })
}

/// Evaluate every (method, maneuver) cell over seeded perturbed runs.
pub fn run_benchmark(
    methods: &[MethodSpec<'_>],
    maneuvers: &[(Maneuver, &ReferenceTrajectory)],
    ctx: &StackContext,
    cfg: &BenchmarkConfig,
) -> Result<Vec<BenchmarkResult>> {
    let mut table = Vec::with_capacity(methods.len() * maneuvers.len());
    for (mi, method) in methods.iter().enumerate() {
        for (ji, (maneuver, traj)) in maneuvers.iter().enumerate() {
            let seeds: Vec<u64> = (0..cfg.runs)
                .map(|k| {
                    exec::mix_seed(cfg.base_seed, ((mi as u64) << 40) | ((ji as u64) << 32) | k as u64)
                })
                .collect();
            let runs: Vec<Result<RunResult>> =
                exec::map(seeds, |seed| run_one(method, traj, ctx, cfg, seed));
            let runs: Vec<RunResult> = runs.into_iter().collect::<Result<_>>()?;
            table.push(BenchmarkResult::from_runs(
                method.id(),
                maneuver.name().to_string(),
                &runs,
            ));
        }
    }
    Ok(table)
}

/// CSV with an `inf` sentinel for cells with no completed runs.
pub fn write_benchmark_csv<W: std::io::Write>(results: &[BenchmarkResult], w: &mut W) -> Result<()> {
    writeln!(w, "method,maneuver,runs,successes,success_rate_pct,rmse_mean_cm,rmse_std_cm")?;
    for r in results {
        let mean = r.rmse_mean_cm.map_or("inf".to_string(), |v| format!("{v:.2}"));
        let std = r.rmse_std_cm.map_or("inf".to_string(), |v| format!("{v:.2}"));
        writeln!(
            w,
            "{},{},{},{},{:.1},{},{}",
            r.method, r.maneuver, r.runs, r.successes, r.success_rate, mean, std
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Endurance
// ---------------------------------------------------------------------------

/// Success and error at fixed checkpoints along repeated primitives.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnduranceCurve {
    pub method: String,
    /// Seconds of the checkpoints (2 s spacing).
    pub checkpoints: Vec<f64>,
    /// Percent of runs still alive at each checkpoint.
    pub success_pct: Vec<f64>,
    /// RMSE (cm) up to each checkpoint over surviving runs; None if none.
    pub rmse_cm: Vec<Option<f64>>,
}

/// Repeats the circular primitive back-to-back (one long multi-turn
/// reference) and logs survival at 2 s intervals.
pub fn endurance_test(
    methods: &[MethodSpec<'_>],
    traj: &ReferenceTrajectory,
    ctx: &StackContext,
    cfg: &BenchmarkConfig,
    horizon_s: f64,
) -> Result<Vec<EnduranceCurve>> {
    let checkpoints: Vec<f64> = (1..=(horizon_s / 2.0) as usize).map(|k| k as f64 * 2.0).collect();
    let mut curves = Vec::with_capacity(methods.len());
    for (mi, method) in methods.iter().enumerate() {
        let seeds: Vec<u64> = (0..cfg.runs)
            .map(|k| exec::mix_seed(cfg.base_seed, 0xE0_0000 + ((mi as u64) << 32) + k as u64))
            .collect();
        let detailed: Vec<Result<(Option<f64>, Vec<crate::dynamics::QuadState>)>> =
            exec::map(seeds, |seed| {
                let outcome = run_one_outcome(method, traj, ctx, cfg, seed)?;
                Ok((outcome.crash_time, outcome.states_50hz))
            });
        let detailed: Vec<(Option<f64>, Vec<crate::dynamics::QuadState>)> =
            detailed.into_iter().collect::<Result<_>>()?;

        let mut success_pct = Vec::with_capacity(checkpoints.len());
        let mut rmse_cm = Vec::with_capacity(checkpoints.len());
        for &cp in &checkpoints {
            let alive: Vec<&(Option<f64>, Vec<crate::dynamics::QuadState>)> = detailed
                .iter()
                .filter(|(crash, _)| crash.map_or(true, |t| t > cp))
                .collect();
            success_pct.push(100.0 * alive.len() as f64 / detailed.len() as f64);
            let n50 = (cp / crate::trajectory::SAMPLE_DT) as usize;
            if alive.is_empty() {
                rmse_cm.push(None);
            } else {
                let mut sq = 0.0;
                let mut count = 0;
                for (_, states) in &alive {
                    for (k, s) in states.iter().take(n50).enumerate() {
                        sq += (s.p - traj.states[k].p).norm_squared();
                        count += 1;
                    }
                }
                rmse_cm.push(Some((sq / count.max(1) as f64).sqrt() * 100.0));
            }
        }
        curves.push(EnduranceCurve {
            method: method.id(),
            checkpoints: checkpoints.clone(),
            success_pct,
            rmse_cm,
        });
    }
    Ok(curves)
}

/// One row per 2 s checkpoint.
pub fn write_endurance_csv<W: std::io::Write>(curves: &[EnduranceCurve], w: &mut W) -> Result<()> {
    write!(w, "t_s")?;
    for c in curves {
        write!(w, ",{}_success_pct,{}_rmse_cm", c.method, c.method)?;
    }
    writeln!(w)?;
    let n = curves.first().map_or(0, |c| c.checkpoints.len());
    for i in 0..n {
        write!(w, "{:.0}", curves[0].checkpoints[i])?;
        for c in curves {
            let rmse = c.rmse_cm[i].map_or("inf".into(), |v| format!("{v:.2}"));
            write!(w, ",{:.1},{}", c.success_pct[i], rmse)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Transfer
// ---------------------------------------------------------------------------

/// Evaluate a feature-track policy on freshly seeded landmark clouds.
pub fn transfer_test(
    net: &PolicyNet<f32>,
    traj: &ReferenceTrajectory,
    maneuver: Maneuver,
    ctx: &StackContext,
    cfg: &BenchmarkConfig,
    test_scene_seeds: &[u64],
) -> Result<Vec<BenchmarkResult>> {
    let mut out = Vec::new();
    let mut scenes: Vec<(String, SceneConfig)> =
        vec![("train".into(), ctx.sensors.scene)];
    for (i, seed) in test_scene_seeds.iter().enumerate() {
        scenes.push((format!("test_{}", i + 1), SceneConfig { seed: *seed, ..ctx.sensors.scene }));
    }
    for (label, scene) in scenes {
        let mut scene_ctx = ctx.clone();
        scene_ctx.sensors.scene = scene;
        let method = MethodSpec::Student { net, ablation: Ablation::None };
        let mut results = run_benchmark(
            std::slice::from_ref(&method),
            &[(maneuver, traj)],
            &scene_ctx,
            cfg,
        )?;
        let mut r = results.remove(0);
        r.method = format!("student_full/{label}");
        out.push(r);
    }
    Ok(out)
}

/// Transfer table; the raw-image policy row is declared out of scope rather
/// than fabricated.
pub fn write_transfer_csv<W: std::io::Write>(results: &[BenchmarkResult], w: &mut W) -> Result<()> {
    write_benchmark_csv(results, w)?;
    writeln!(w, "raw_image,-,0,0,out_of_scope,out_of_scope,out_of_scope")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::QuadState;
    use crate::trajectory::{build_maneuver, ManeuverParams};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn power_loop() -> ReferenceTrajectory {
        build_maneuver(Maneuver::PowerLoop, &ManeuverParams::default()).unwrap()
    }

    #[test]
    fn zero_error_for_perfect_tracking() {
        let traj = power_loop();
        let states: Vec<QuadState> = traj.states[..traj.len() - 1].to_vec();
        assert_relative_eq!(tracking_error_cm(&traj, &states).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_is_its_own_rmse() {
        let traj = power_loop();
        let states: Vec<QuadState> = traj.states[..traj.len() - 1]
            .iter()
            .map(|s| {
                let mut s = *s;
                s.p.x += 0.10;
                s
            })
            .collect();
        assert_relative_eq!(tracking_error_cm(&traj, &states).unwrap(), 10.0, epsilon = 1e-9);
    }

    #[test]
    fn misaligned_log_rejected() {
        let traj = power_loop();
        let states: Vec<QuadState> = traj.states[..10].to_vec();
        assert!(matches!(
            tracking_error_cm(&traj, &states),
            Err(Error::AlignmentError { .. })
        ));
    }

    #[test]
    fn expert_benchmark_cell() {
        let traj = power_loop();
        let ctx = StackContext::default();
        let cfg = BenchmarkConfig { runs: 3, ..Default::default() };
        let table =
            run_benchmark(&[MethodSpec::Expert], &[(Maneuver::PowerLoop, &traj)], &ctx, &cfg).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table[0].runs, 3);
        assert_eq!(table[0].successes, 3, "expert failed a run");
        assert!(table[0].rmse_mean_cm.unwrap() < 10.0);
    }

    #[test]
    fn benchmark_deterministic() {
        let traj = power_loop();
        let ctx = StackContext::default();
        let cfg = BenchmarkConfig { runs: 2, ..Default::default() };
        let t1 =
            run_benchmark(&[MethodSpec::Expert], &[(Maneuver::PowerLoop, &traj)], &ctx, &cfg).unwrap();
        let t2 =
            run_benchmark(&[MethodSpec::Expert], &[(Maneuver::PowerLoop, &traj)], &ctx, &cfg).unwrap();
        assert_eq!(t1[0].rmse_mean_cm, t2[0].rmse_mean_cm);
        // Success rate is exactly the mean of the per-run booleans.
        assert_relative_eq!(
            t1[0].success_rate,
            100.0 * t1[0].successes as f64 / t1[0].runs as f64
        );
    }

    #[test]
    fn drift_baseline_calibrated() {
        // The drifting-odometry stand-in should land in the tens-of-cm
        // band on a single maneuver and degrade with maneuver length.
        let short = power_loop();
        let long = crate::trajectory::build_maneuver(
            Maneuver::Combo,
            &crate::trajectory::ManeuverParams::default(),
        )
        .unwrap();
        let ctx = StackContext::default();
        let cfg = BenchmarkConfig { runs: 5, ..Default::default() };
        let method = MethodSpec::DriftMpc(DriftOdometryConfig::default());
        let table = run_benchmark(
            std::slice::from_ref(&method),
            &[(Maneuver::PowerLoop, &short), (Maneuver::Combo, &long)],
            &ctx,
            &cfg,
        )
        .unwrap();
        let loop_rmse = table[0].rmse_mean_cm.expect("drift completes the loop");
        assert!(
            (40.0..100.0).contains(&loop_rmse),
            "power-loop drift RMSE {loop_rmse} cm outside the 40-100 band"
        );
        let combo_rmse = table[1].rmse_mean_cm.unwrap_or(f64::INFINITY);
        assert!(
            combo_rmse > loop_rmse,
            "combo drift {combo_rmse} not worse than loop {loop_rmse}"
        );
    }

    #[test]
    fn csv_shapes() {
        let traj = power_loop();
        let ctx = StackContext::default();
        let cfg = BenchmarkConfig { runs: 1, ..Default::default() };
        let table =
            run_benchmark(&[MethodSpec::Expert], &[(Maneuver::PowerLoop, &traj)], &ctx, &cfg).unwrap();
        let mut buf = Vec::new();
        write_benchmark_csv(&table, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("method,maneuver,runs"));
    }
}
