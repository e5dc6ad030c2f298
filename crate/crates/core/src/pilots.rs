//! Controllers that fly the closed loop: the sensorimotor student and the
//! drifting-odometry MPC baseline. The privileged expert lives in [`crate::sim`].

use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Action, PlatformParams, QuadState};
use crate::error::Result;
use crate::mpc::{MpcConfig, MpcExpert};
use crate::policy::{BranchBuffers, InputNorm, OutputSquash, PolicyEvent, PolicyNet};
use crate::sensing::{InertialSignal, TrackArray};
use crate::sim::{Pilot, SensorConfig};
use crate::trajectory::ReferenceTrajectory;

/// Everything fixed across training and evaluation runs: nominal platform,
/// expert settings, sensor models, and the policy's I/O conventions.
#[derive(Debug, Clone)]
pub struct StackContext {
    pub nominal: PlatformParams,
    pub mpc: MpcConfig,
    pub sensors: SensorConfig,
    pub squash: OutputSquash,
    pub norm: InputNorm,
}

impl Default for StackContext {
    fn default() -> Self {
        Self {
            nominal: PlatformParams::default(),
            mpc: MpcConfig::default(),
            sensors: SensorConfig::default(),
            squash: OutputSquash::default(),
            norm: InputNorm::default(),
        }
    }
}

/// Input ablations of the student (applied in training and evaluation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    None,
    /// Visual branch input zeroed.
    NoFt,
    /// Inertial branch input zeroed.
    NoImu,
    /// Both sensor branches zeroed.
    OnlyRef,
}

impl Ablation {
    pub fn name(&self) -> &'static str {
        match self {
            Ablation::None => "full",
            Ablation::NoFt => "no_ft",
            Ablation::NoImu => "no_imu",
            Ablation::OnlyRef => "only_ref",
        }
    }

    pub fn masks_tracks(&self) -> bool {
        matches!(self, Ablation::NoFt | Ablation::OnlyRef)
    }

    pub fn masks_inertial(&self) -> bool {
        matches!(self, Ablation::NoImu | Ablation::OnlyRef)
    }
}

impl std::str::FromStr for Ablation {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "full" => Ok(Ablation::None),
            "no_ft" => Ok(Ablation::NoFt),
            "no_imu" => Ok(Ablation::NoImu),
            "only_ref" => Ok(Ablation::OnlyRef),
            other => Err(crate::error::Error::Config {
                reason: format!("unknown ablation '{other}'"),
            }),
        }
    }
}

/// Pure sensorimotor pilot: feeds sensor events into the branch buffers and
/// emits the head output at control ticks. Never reads the true state.
pub struct StudentPilot<'a> {
    net: &'a PolicyNet<f32>,
    squash: OutputSquash,
    norm: InputNorm,
    ablation: Ablation,
    pub buffers: BranchBuffers,
    /// Frame store index for the next camera frame (-1 disables recording).
    frame_counter: i64,
    record_frames: bool,
    pub frames: Vec<crate::policy::TrackFrame<f32>>,
}

impl<'a> StudentPilot<'a> {
    pub fn new(
        net: &'a PolicyNet<f32>,
        squash: OutputSquash,
        norm: InputNorm,
        ablation: Ablation,
    ) -> Self {
        Self {
            net,
            squash,
            norm,
            ablation,
            buffers: BranchBuffers::new(net),
            frame_counter: 0,
            record_frames: false,
            frames: Vec::new(),
        }
    }

    /// Keep the normalized camera frames for dataset records.
    pub fn record_frames(mut self) -> Self {
        self.record_frames = true;
        self
    }

    pub fn ablation(&self) -> Ablation {
        self.ablation
    }
}

impl Pilot for StudentPilot<'_> {
    fn needs_sensors(&self) -> bool {
        true
    }

    fn on_inertial(&mut self, t: f64, sig: &InertialSignal) {
        let input = if self.ablation.masks_inertial() {
            [0.0f32; crate::policy::INERTIAL_DIM]
        } else {
            self.norm.inertial(sig)
        };
        let _ = self
            .buffers
            .handle(self.net, &self.squash, &PolicyEvent::Imu { stamp: t, input });
    }

    fn on_tracks(&mut self, t: f64, tracks: &TrackArray, _degenerate: bool) {
        let frame = if self.ablation.masks_tracks() {
            [[0.0f32; 5]; crate::sensing::TRACKS_PER_FRAME]
        } else {
            self.norm.tracks(tracks)
        };
        let frame_idx = if self.record_frames {
            self.frames.push(frame);
            let idx = self.frame_counter;
            self.frame_counter += 1;
            idx
        } else {
            -1
        };
        let _ = self.buffers.handle(
            self.net,
            &self.squash,
            &PolicyEvent::Camera { stamp: t, frame: Box::new(frame), frame_idx },
        );
    }

    fn on_reference(&mut self, t: f64, state: &QuadState, _ff: &Action) {
        let input = self.norm.reference(state);
        let _ = self
            .buffers
            .handle(self.net, &self.squash, &PolicyEvent::Reference { stamp: t, input });
    }

    fn control(&mut self, t: f64, _true_state: &QuadState, _traj: &ReferenceTrajectory) -> Result<Action> {
        let action = self
            .buffers
            .handle(self.net, &self.squash, &PolicyEvent::HeadTick { stamp: t })?
            .expect("head tick emits an action");
        Ok(action)
    }
}

/// Random-walk odometry corruption for the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftOdometryConfig {
    /// Position random-walk intensity, m/sqrt(s), per axis.
    pub pos_walk_std: f64,
    /// Orientation random-walk intensity, rad/sqrt(s), per axis.
    pub att_walk_std: f64,
    /// Walk update rate, Hz.
    pub update_hz: f64,
}

impl Default for DriftOdometryConfig {
    fn default() -> Self {
        Self { pos_walk_std: 0.15, att_walk_std: 0.01, update_hz: 100.0 }
    }
}

/// The VIO-MPC stand-in: the privileged expert fed a drifting state estimate.
pub struct DriftMpcPilot {
    expert: MpcExpert,
    cfg: DriftOdometryConfig,
    drift_p: Vector3<f64>,
    drift_q: UnitQuaternion<f64>,
    rng: ChaCha8Rng,
}

impl DriftMpcPilot {
    pub fn new(
        mpc: MpcConfig,
        params: PlatformParams,
        cfg: DriftOdometryConfig,
        seed: u64,
    ) -> Self {
        Self {
            expert: MpcExpert::new(mpc, params),
            cfg,
            drift_p: Vector3::zeros(),
            drift_q: UnitQuaternion::identity(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Current drift offset (for calibration probes).
    pub fn drift(&self) -> Vector3<f64> {
        self.drift_p
    }
}

impl Pilot for DriftMpcPilot {
    fn control(&mut self, t: f64, true_state: &QuadState, traj: &ReferenceTrajectory) -> Result<Action> {
        let dt = 1.0 / self.cfg.update_hz;
        if self.cfg.pos_walk_std > 0.0 {
            let n = Normal::new(0.0, self.cfg.pos_walk_std * dt.sqrt()).unwrap();
            self.drift_p += Vector3::new(
                n.sample(&mut self.rng),
                n.sample(&mut self.rng),
                n.sample(&mut self.rng),
            );
        }
        if self.cfg.att_walk_std > 0.0 {
            let n = Normal::new(0.0, self.cfg.att_walk_std * dt.sqrt()).unwrap();
            let dq = Vector3::new(
                n.sample(&mut self.rng),
                n.sample(&mut self.rng),
                n.sample(&mut self.rng),
            );
            self.drift_q = UnitQuaternion::from_scaled_axis(dq) * self.drift_q;
        }
        let corrupted = QuadState {
            p: true_state.p + self.drift_p,
            q: self.drift_q * true_state.q,
            v: true_state.v,
            w: true_state.w,
        };
        Ok(self.expert.control(&corrupted, traj, t)?.actions[0])
    }
}
