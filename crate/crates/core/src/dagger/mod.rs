//! Privileged-expert imitation with dataset aggregation.
//!
//! Rollouts fly under a safety-thresholded blend of student and expert with
//! occasional exploration; every control tick is labeled with a fresh expert
//! action recomputed from the true state. After each round of rollouts the
//! student retrains on the whole dataset.

pub mod dataset;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Action, PlatformParams, QuadState, GRAVITY};
use crate::error::{Error, Result};
use crate::exec;
use crate::mpc::{expert_action_at, MpcConfig};
use crate::pilots::{Ablation, StackContext, StudentPilot};
use crate::policy::{
    Adam, InputSnapshot, PolicyNet, TrackFrame,
};
use crate::sensing::{ImuBiases, ImuParams};
use crate::sim::{run_closed_loop, Pilot, RunOptions};
use crate::trajectory::{Maneuver, ReferenceTrajectory};

pub use dataset::Dataset;

/// The off-policy training schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub rollouts_per_round: usize,
    pub rounds: usize,
    pub epochs_per_round: usize,
    pub lr: f64,
    /// Initial student/expert blending threshold.
    pub threshold_t0: f64,
    /// Doubling interval of the threshold, in rollouts.
    pub threshold_double_every: usize,
    /// Probability of executing a random exploration action at a tick.
    pub p_random: f64,
    /// Domain-randomization amplitude (0.10 = +-10%).
    pub rand_frac: f64,
    pub batch_size: usize,
    /// Training examples drawn per rollout (desk-scale subsampling of the
    /// 100 Hz records).
    pub train_examples_per_rollout: usize,
    /// Held-out examples drawn per rollout for validation loss.
    pub holdout_examples_per_rollout: usize,
    /// Start-state jitter applied to collection rollouts.
    pub start_pos_jitter: f64,
    pub start_yaw_jitter_deg: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            rollouts_per_round: 30,
            rounds: 5,
            epochs_per_round: 40,
            lr: 3e-4,
            threshold_t0: 1.0,
            threshold_double_every: 30,
            p_random: 0.3,
            rand_frac: 0.10,
            batch_size: 8,
            train_examples_per_rollout: 24,
            holdout_examples_per_rollout: 3,
            start_pos_jitter: 0.1,
            start_yaw_jitter_deg: 5.0,
        }
    }
}

impl TrainSchedule {
    /// Blending threshold for global rollout index `i`.
    pub fn threshold_at(&self, rollout_index: usize) -> f64 {
        self.threshold_t0 * 2f64.powi((rollout_index / self.threshold_double_every) as i32)
    }
}

/// Realized platform randomization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatformDraw {
    pub params: PlatformParams,
    pub imu_biases: ImuBiases,
}

/// Multiply thrust authority and each IMU bias component by independent
/// uniform factors in `[1-frac, 1+frac]`. Scene geometry is never touched.
pub fn randomize_platform<R: Rng>(
    nominal: &PlatformParams,
    imu: &ImuParams,
    frac: f64,
    rng: &mut R,
) -> PlatformDraw {
    let mut draw = |nominal: f64| nominal * rng.gen_range(1.0 - frac..=1.0 + frac);
    let thrust_scale = draw(1.0);
    let accel = Vector3::new(
        draw(imu.accel_bias.x),
        draw(imu.accel_bias.y),
        draw(imu.accel_bias.z),
    );
    let gyro = Vector3::new(
        draw(imu.gyro_bias.x),
        draw(imu.gyro_bias.y),
        draw(imu.gyro_bias.z),
    );
    PlatformDraw {
        params: PlatformParams { thrust_scale, ..*nominal },
        imu_biases: ImuBiases { accel, gyro },
    }
}

/// Start state jittered in position and yaw.
pub fn perturbed_start<R: Rng>(
    traj: &ReferenceTrajectory,
    pos_jitter: f64,
    yaw_jitter_deg: f64,
    rng: &mut R,
) -> QuadState {
    let mut s = traj.states[0];
    s.p += Vector3::new(
        rng.gen_range(-pos_jitter..=pos_jitter),
        rng.gen_range(-pos_jitter..=pos_jitter),
        rng.gen_range(-pos_jitter..=pos_jitter),
    );
    let yaw = rng.gen_range(-yaw_jitter_deg..=yaw_jitter_deg).to_radians();
    s.q = nalgebra::UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw) * s.q;
    s
}

/// Which branch of the blend fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlendOutcome {
    Student,
    Expert,
    Explored,
}

/// Distance between actions with thrust normalized by gravity.
pub fn action_distance(a: &Action, b: &Action) -> f64 {
    let dc = (a.c - b.c) / GRAVITY;
    (dc * dc + (a.w_cmd - b.w_cmd).norm_squared()).sqrt()
}

/// The safety-thresholded blend. Returns the executed action; the
/// supervision label is always the expert action.
pub fn blended_action<R: Rng>(
    u_student: &Action,
    u_expert: &Action,
    threshold: f64,
    p_random: f64,
    rng: &mut R,
) -> (Action, BlendOutcome) {
    if p_random > 0.0 && rng.gen::<f64>() < p_random {
        // Exploration: uniform box around the expert action sized by 20% of
        // the actuator range. Kicks of this size actually move the state off
        // the reference tube (so corrective labels get visited) while
        // keeping the rollout survivable.
        let half_c = 0.1 * 4.0 * GRAVITY;
        let half_w = 0.1 * 12.0;
        let c = u_expert.c + rng.gen_range(-half_c..=half_c);
        let mut w = u_expert.w_cmd;
        for i in 0..3 {
            w[i] += rng.gen_range(-half_w..=half_w);
        }
        return (Action::new(c, w), BlendOutcome::Explored);
    }
    if action_distance(u_student, u_expert) < threshold {
        (*u_student, BlendOutcome::Student)
    } else {
        (*u_expert, BlendOutcome::Expert)
    }
}

/// One labeled control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutRecord {
    pub stamp: f64,
    pub snapshot: InputSnapshot,
    /// Expert label (c, wx, wy, wz).
    pub expert: [f32; 4],
    pub executed: [f32; 4],
    pub outcome: BlendOutcome,
    pub true_state: QuadState,
}

/// One collected rollout: records at 100 Hz plus the camera frame store the
/// records index into.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub maneuver: Maneuver,
    pub seed: u64,
    pub records: Vec<RolloutRecord>,
    pub frames: Vec<TrackFrame<f32>>,
    pub crashed: bool,
    pub draw: PlatformDraw,
    /// Record indices reserved for training / validation.
    pub train_picks: Vec<usize>,
    pub holdout_picks: Vec<usize>,
}

struct DaggerPilot<'a> {
    student: StudentPilot<'a>,
    nominal: PlatformParams,
    mpc: MpcConfig,
    threshold: f64,
    p_random: f64,
    rng: ChaCha8Rng,
    records: Vec<RolloutRecord>,
}

impl Pilot for DaggerPilot<'_> {
    fn needs_sensors(&self) -> bool {
        true
    }

    fn on_inertial(&mut self, t: f64, sig: &crate::sensing::InertialSignal) {
        self.student.on_inertial(t, sig);
    }

    fn on_tracks(&mut self, t: f64, tracks: &crate::sensing::TrackArray, d: bool) {
        self.student.on_tracks(t, tracks, d);
    }

    fn on_reference(&mut self, t: f64, state: &QuadState, ff: &Action) {
        self.student.on_reference(t, state, ff);
    }

    fn control(&mut self, t: f64, true_state: &QuadState, traj: &ReferenceTrajectory) -> Result<Action> {
        let u_student = self.student.control(t, true_state, traj)?;
        // Labels come from fresh solves so they are a pure function of the
        // stored state and stamp (replayable).
        let u_expert = expert_action_at(true_state, traj, t, &self.mpc, &self.nominal)?;
        let (executed, outcome) =
            blended_action(&u_student, &u_expert, self.threshold, self.p_random, &mut self.rng);
        self.records.push(RolloutRecord {
            stamp: t,
            snapshot: self.student.buffers.snapshot(),
            expert: pack_action(&u_expert),
            executed: pack_action(&executed),
            outcome,
            true_state: *true_state,
        });
        Ok(executed)
    }
}

fn pack_action(a: &Action) -> [f32; 4] {
    [a.c as f32, a.w_cmd.x as f32, a.w_cmd.y as f32, a.w_cmd.z as f32]
}

/// Fly one data-collection rollout.
#[allow(clippy::too_many_arguments)]
pub fn collect_rollout(
    net: &PolicyNet<f32>,
    ablation: Ablation,
    traj: &ReferenceTrajectory,
    maneuver: Maneuver,
    ctx: &StackContext,
    schedule: &TrainSchedule,
    threshold: f64,
    seed: u64,
) -> Result<Rollout> {
    let mut draw_rng = ChaCha8Rng::seed_from_u64(exec::mix_seed(seed, 1));
    let draw = randomize_platform(&ctx.nominal, &ctx.sensors.imu, schedule.rand_frac, &mut draw_rng);
    let mut start_rng = ChaCha8Rng::seed_from_u64(exec::mix_seed(seed, 2));
    let start = perturbed_start(
        traj,
        schedule.start_pos_jitter,
        schedule.start_yaw_jitter_deg,
        &mut start_rng,
    );

    let student = StudentPilot::new(net, ctx.squash, ctx.norm, ablation).record_frames();
    let mut pilot = DaggerPilot {
        student,
        nominal: ctx.nominal,
        mpc: ctx.mpc,
        threshold,
        p_random: schedule.p_random,
        rng: ChaCha8Rng::seed_from_u64(exec::mix_seed(seed, 3)),
        records: Vec::new(),
    };

    let outcome = run_closed_loop(
        traj,
        &draw.params,
        start,
        &mut pilot,
        &ctx.sensors,
        &RunOptions {
            sensor_seed: exec::mix_seed(seed, 4),
            imu_biases: Some(draw.imu_biases),
            log_observations: false,
        },
        None,
    )?;

    let records = pilot.records;
    let frames = pilot.student.frames;

    // Reserve train/holdout record indices now, so example selection is a
    // property of the rollout alone.
    let mut pick_rng = ChaCha8Rng::seed_from_u64(exec::mix_seed(seed, 5));
    let want = schedule.train_examples_per_rollout + schedule.holdout_examples_per_rollout;
    let picks = if records.is_empty() {
        Vec::new()
    } else {
        rand::seq::index::sample(&mut pick_rng, records.len(), want.min(records.len())).into_vec()
    };
    let split = schedule.train_examples_per_rollout.min(picks.len());
    let (train_picks, holdout_picks) = (picks[..split].to_vec(), picks[split..].to_vec());

    Ok(Rollout {
        maneuver,
        seed,
        records,
        frames,
        crashed: outcome.crashed,
        draw,
        train_picks,
        holdout_picks,
    })
}

/// Per-round training diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub threshold: f64,
    pub dataset_rollouts: usize,
    pub train_examples: usize,
    pub crashes_this_round: usize,
    pub final_train_loss: f64,
    pub holdout_loss: f64,
    /// Wall-clock spent collecting / training this round, seconds.
    pub collect_s: f64,
    pub train_s: f64,
}

/// Full training output.
pub struct DaggerOutput {
    pub net: PolicyNet<f32>,
    pub metrics: Vec<RoundMetrics>,
    pub dataset: Dataset,
}

/// Run the collect-and-train loop for one maneuver.
///
/// `save_dir`, when set, persists the dataset incrementally after each round.
pub fn run_dagger(
    traj: &ReferenceTrajectory,
    maneuver: Maneuver,
    ablation: Ablation,
    ctx: &StackContext,
    schedule: &TrainSchedule,
    master_seed: u64,
    save_dir: Option<&std::path::Path>,
) -> Result<DaggerOutput> {
    run_dagger_with(traj, maneuver, ablation, ctx, schedule, master_seed, save_dir, None)
}

/// As [`run_dagger`] with an optional per-round progress callback.
#[allow(clippy::too_many_arguments)]
pub fn run_dagger_with(
    traj: &ReferenceTrajectory,
    maneuver: Maneuver,
    ablation: Ablation,
    ctx: &StackContext,
    schedule: &TrainSchedule,
    master_seed: u64,
    save_dir: Option<&std::path::Path>,
    on_round: Option<&(dyn Fn(&RoundMetrics) + Sync)>,
) -> Result<DaggerOutput> {
    let mut net: PolicyNet<f32> = PolicyNet::init(exec::mix_seed(master_seed, 0xA11));
    let mut adam = Adam::new(&net);
    let mut dataset = Dataset::new(maneuver);
    let mut metrics = Vec::with_capacity(schedule.rounds);

    for round in 0..schedule.rounds {
        let round_start = std::time::Instant::now();
        // Collect with the latest policy.
        let seeds: Vec<(usize, u64)> = (0..schedule.rollouts_per_round)
            .map(|i| {
                let global = round * schedule.rollouts_per_round + i;
                (global, exec::mix_seed(master_seed, 0xB0_0000 + global as u64))
            })
            .collect();
        let net_ref = &net;
        let rollouts: Vec<Result<Rollout>> = exec::map(seeds, |(global, seed)| {
            collect_rollout(
                net_ref,
                ablation,
                traj,
                maneuver,
                ctx,
                schedule,
                schedule.threshold_at(global),
                seed,
            )
        });
        let mut crashes = 0;
        let mut new_rollouts = Vec::with_capacity(rollouts.len());
        for r in rollouts {
            let r = r?;
            crashes += r.crashed as usize;
            new_rollouts.push(r);
        }
        if let Some(dir) = save_dir {
            dataset::append_round(dir, maneuver, round, &new_rollouts)?;
        }
        for r in new_rollouts {
            dataset.append(r);
        }

        let collect_s = round_start.elapsed().as_secs_f64();
        let train_start = std::time::Instant::now();

        // Train on the whole dataset.
        let train_idx = dataset.train_indices();
        let holdout_idx = dataset.holdout_indices();
        let mut final_loss = f64::NAN;
        for epoch in 0..schedule.epochs_per_round {
            let mut order: Vec<usize> = (0..train_idx.len()).collect();
            let mut shuffle_rng = ChaCha8Rng::seed_from_u64(exec::mix_seed(
                master_seed,
                0xC0_0000 + (round * 10_000 + epoch) as u64,
            ));
            shuffle(&mut order, &mut shuffle_rng);
            let mut epoch_loss = 0.0;
            let mut batches = 0;
            for chunk in order.chunks(schedule.batch_size) {
                let picks: Vec<(usize, usize)> = chunk.iter().map(|&i| train_idx[i]).collect();
                let examples = dataset.examples(&picks);
                epoch_loss +=
                    crate::policy::train_step(&mut net, &examples, &ctx.squash, &mut adam, schedule.lr)?;
                batches += 1;
            }
            final_loss = epoch_loss / batches.max(1) as f64;
        }
        let holdout_loss = if holdout_idx.is_empty() {
            f64::NAN
        } else {
            let examples = dataset.examples(&holdout_idx);
            crate::policy::batch_loss_and_grads(&net, &examples, &ctx.squash).0
        };
        if !net.all_finite() {
            return Err(Error::Diverged { context: "policy parameters", value: f64::NAN });
        }
        let m = RoundMetrics {
            round: round + 1,
            threshold: schedule.threshold_at(round * schedule.rollouts_per_round),
            dataset_rollouts: dataset.rollouts.len(),
            train_examples: train_idx.len(),
            crashes_this_round: crashes,
            final_train_loss: final_loss,
            holdout_loss,
            collect_s,
            train_s: train_start.elapsed().as_secs_f64(),
        };
        if let Some(cb) = on_round {
            cb(&m);
        }
        metrics.push(m);
    }

    Ok(DaggerOutput { net, metrics, dataset })
}

/// Fisher-Yates with our seeded generator.
fn shuffle<R: Rng>(order: &mut [usize], rng: &mut R) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}
