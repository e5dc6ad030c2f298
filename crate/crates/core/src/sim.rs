//! Event-driven closed-loop simulation.
//!
//! The plant integrates the full model at 500 Hz between events; sensor
//! streams (IMU 100 Hz, camera 30 Hz, reference 50 Hz) and the control tick
//! (100 Hz) fire at exact nanosecond stamps in a fixed priority order. All
//! randomness is drawn from per-run seeded generators, so a run is a pure
//! function of (trajectory, parameters, seed).

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{full_step, in_flying_space, Action, PlatformParams, QuadState};
use crate::error::Result;
use crate::sensing::{
    sample_tracks, simulate_imu, CameraModel, ImuBiases, ImuParams, ImuSample, InertialFilter,
    InertialSignal, SceneConfig, TrackArray, Tracker, TrackerConfig,
};
use crate::trajectory::ReferenceTrajectory;

/// Plant integration step, seconds.
pub const PLANT_DT: f64 = 0.002;
/// Control (head) rate, Hz.
pub const CONTROL_HZ: f64 = 100.0;
/// Reference stream rate, Hz.
pub const REFERENCE_HZ: f64 = 50.0;
/// Position error that counts as a crash, meters (inclusive).
pub const CRASH_POS_ERR: f64 = 2.0;

const NS: u64 = 1_000_000_000;

/// What a controller sees at its tick and through sensor callbacks.
pub trait Pilot {
    /// When false the engine skips sensor simulation entirely.
    fn needs_sensors(&self) -> bool {
        false
    }

    fn on_inertial(&mut self, _t: f64, _sig: &InertialSignal) {}

    fn on_tracks(&mut self, _t: f64, _tracks: &TrackArray, _degenerate: bool) {}

    fn on_reference(&mut self, _t: f64, _state: &QuadState, _ff: &Action) {}

    /// Control tick at 100 Hz. `true_state` is privileged information; pure
    /// sensorimotor pilots must ignore it.
    fn control(&mut self, t: f64, true_state: &QuadState, traj: &ReferenceTrajectory)
        -> Result<Action>;

    /// Called once per control tick after the action is chosen, with the
    /// action actually applied to the plant.
    fn on_applied(&mut self, _t: f64, _true_state: &QuadState, _applied: &Action) {}
}

/// Sensor-noise and scene configuration for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub imu: ImuParams,
    pub camera: CameraModel,
    pub tracker: TrackerConfig,
    pub scene: SceneConfig,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            imu: ImuParams::default(),
            camera: CameraModel::default(),
            tracker: TrackerConfig::default(),
            scene: SceneConfig::default(),
        }
    }
}

/// One sensor event for the observation log.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObsEvent {
    Imu { stamp: f64, accel: [f64; 3], gyro: [f64; 3] },
    Camera { stamp: f64, tracks: Vec<[f32; 5]>, degenerate: bool },
    Ref { stamp: f64, p: [f64; 3], v: [f64; 3] },
}

/// Closed-loop run result.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    /// True states sampled at the 50 Hz reference stamps (up to the crash).
    pub states_50hz: Vec<QuadState>,
    pub crashed: bool,
    pub crash_time: Option<f64>,
    /// Control ticks executed.
    pub ticks: usize,
}

pub struct RunOptions {
    /// Seed for sensor noise and the tracker.
    pub sensor_seed: u64,
    /// Realized IMU biases (after randomization).
    pub imu_biases: Option<ImuBiases>,
    /// Collect an observation log.
    pub log_observations: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { sensor_seed: 0, imu_biases: None, log_observations: false }
    }
}

struct SensorStack {
    imu_params: ImuParams,
    biases: ImuBiases,
    filter: InertialFilter,
    camera: CameraModel,
    tracker: Tracker,
    landmarks: Vec<Vector3<f64>>,
    rng: ChaCha8Rng,
}

/// Event kinds in tie-break order at equal stamps: sensors feed the branch
/// state before the head consumes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Imu,
    Camera,
    Reference,
    Control,
}

/// Run one closed-loop episode of `pilot` against `traj`.
///
/// `plant` carries the (possibly randomized) physical parameters; the pilot
/// uses whatever model it was built with.
pub fn run_closed_loop(
    traj: &ReferenceTrajectory,
    plant: &PlatformParams,
    start: QuadState,
    pilot: &mut dyn Pilot,
    sensors_cfg: &SensorConfig,
    opts: &RunOptions,
    mut obs_log: Option<&mut Vec<ObsEvent>>,
) -> Result<SimOutcome> {
    let duration = traj.duration();
    let end_ns = (duration * NS as f64) as u64;

    let mut sensors = if pilot.needs_sensors() || opts.log_observations {
        let landmarks = sensors_cfg.scene.generate()?;
        Some(SensorStack {
            imu_params: sensors_cfg.imu,
            biases: opts.imu_biases.unwrap_or(ImuBiases::nominal(&sensors_cfg.imu)),
            filter: InertialFilter::new(
                ImuBiases::nominal(&sensors_cfg.imu),
                sensors_cfg.imu.filter_gain,
            ),
            camera: sensors_cfg.camera,
            tracker: Tracker::new(sensors_cfg.tracker, sensors_cfg.camera),
            landmarks,
            rng: ChaCha8Rng::seed_from_u64(opts.sensor_seed),
        })
    } else {
        None
    };

    let imu_hz = sensors_cfg.imu.rate_hz;
    let cam_hz = sensors_cfg.camera.rate_hz;

    // Per-stream event counters.
    let mut next_idx = [0u64; 4];
    let stream_hz = |kind: EventKind| match kind {
        EventKind::Imu => imu_hz,
        EventKind::Camera => cam_hz,
        EventKind::Reference => REFERENCE_HZ,
        EventKind::Control => CONTROL_HZ,
    };
    let stamp_of = |kind: EventKind, idx: u64| -> u64 {
        ((idx as f64 / stream_hz(kind)) * NS as f64).round() as u64
    };
    let kinds = [EventKind::Imu, EventKind::Camera, EventKind::Reference, EventKind::Control];

    let mut state = start;
    let mut action = traj.actions_ff[0];
    let mut t_ns: u64 = 0;
    let mut states_50hz: Vec<QuadState> = Vec::with_capacity(traj.len());
    let mut crashed = false;
    let mut crash_time = None;
    let mut ticks = 0usize;

    'outer: loop {
        // Next event over all streams.
        let mut best: Option<(u64, EventKind)> = None;
        for kind in kinds {
            if !pilot.needs_sensors()
                && !opts.log_observations
                && matches!(kind, EventKind::Imu | EventKind::Camera)
            {
                continue;
            }
            let s = stamp_of(kind, next_idx[kind as usize]);
            if s >= end_ns {
                continue;
            }
            match best {
                Some((bs, bk)) if (bs, bk) <= (s, kind) => {}
                _ => best = Some((s, kind)),
            }
        }
        let Some((stamp_ns, kind)) = best else {
            break 'outer;
        };
        next_idx[kind as usize] += 1;

        // Integrate the plant up to the event.
        while t_ns < stamp_ns {
            let step_ns = (stamp_ns - t_ns).min((PLANT_DT * NS as f64) as u64);
            let dt = step_ns as f64 / NS as f64;
            state = full_step(&state, &action, dt, plant)?;
            t_ns += step_ns;
        }
        let t = stamp_ns as f64 / NS as f64;

        match kind {
            EventKind::Imu => {
                let stack = sensors.as_mut().expect("imu event without sensors");
                let c_eff = action.c * plant.thrust_scale;
                let sample: ImuSample = simulate_imu(
                    &state,
                    c_eff,
                    &stack.biases,
                    &stack.imu_params,
                    t,
                    &mut stack.rng,
                );
                let sig = stack.filter.step(&sample)?;
                if let Some(log) = obs_log.as_deref_mut() {
                    log.push(ObsEvent::Imu {
                        stamp: t,
                        accel: sample.accel.into(),
                        gyro: sample.gyro.into(),
                    });
                }
                pilot.on_inertial(t, &sig);
            }
            EventKind::Camera => {
                let stack = sensors.as_mut().expect("camera event without sensors");
                let rendered = stack.camera.render_keypoints(&state, &stack.landmarks);
                let frame = stack.tracker.process(state, rendered, &mut stack.rng);
                let arr = sample_tracks(&frame, &mut stack.rng);
                if let Some(log) = obs_log.as_deref_mut() {
                    log.push(ObsEvent::Camera {
                        stamp: t,
                        tracks: arr.to_vec(),
                        degenerate: frame.degenerate,
                    });
                }
                pilot.on_tracks(t, &arr, frame.degenerate);
            }
            EventKind::Reference => {
                let (ref_state, ff) = traj.sample_at(t);
                states_50hz.push(state);
                if let Some(log) = obs_log.as_deref_mut() {
                    log.push(ObsEvent::Ref { stamp: t, p: ref_state.p.into(), v: ref_state.v.into() });
                }
                pilot.on_reference(t, &ref_state, &ff);
            }
            EventKind::Control => {
                ticks += 1;
                let proposed = pilot.control(t, &state, traj)?;
                action = proposed.clamped(plant);
                pilot.on_applied(t, &state, &action);
                // Crash detection at the control rate.
                let (ref_state, _) = traj.sample_at(t);
                let err = (state.p - ref_state.p).norm();
                if !state.is_finite() || err >= CRASH_POS_ERR || !in_flying_space(&state.p) {
                    crashed = true;
                    crash_time = Some(t);
                    break 'outer;
                }
            }
        }
    }

    Ok(SimOutcome { states_50hz, crashed, crash_time, ticks })
}

/// Privileged expert pilot: warm-started receding-horizon control on the
/// true state.
pub struct ExpertPilot {
    expert: crate::mpc::MpcExpert,
}

impl ExpertPilot {
    pub fn new(cfg: crate::mpc::MpcConfig, params: PlatformParams) -> Self {
        Self { expert: crate::mpc::MpcExpert::new(cfg, params) }
    }
}

impl Pilot for ExpertPilot {
    fn control(
        &mut self,
        t: f64,
        true_state: &QuadState,
        traj: &ReferenceTrajectory,
    ) -> Result<Action> {
        Ok(self.expert.control(true_state, traj, t)?.actions[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::MpcConfig;
    use crate::trajectory::{build_maneuver, Maneuver, ManeuverParams};

    struct HoverPilot;

    impl Pilot for HoverPilot {
        fn control(&mut self, _t: f64, _s: &QuadState, _traj: &ReferenceTrajectory) -> Result<Action> {
            Ok(Action::hover())
        }
    }

    struct CountingPilot {
        inertial: usize,
        cameras: usize,
        refs: usize,
        ticks: usize,
    }

    impl Pilot for CountingPilot {
        fn needs_sensors(&self) -> bool {
            true
        }

        fn on_inertial(&mut self, _t: f64, _sig: &InertialSignal) {
            self.inertial += 1;
        }

        fn on_tracks(&mut self, _t: f64, _tracks: &TrackArray, _d: bool) {
            self.cameras += 1;
        }

        fn on_reference(&mut self, _t: f64, _s: &QuadState, _ff: &Action) {
            self.refs += 1;
        }

        fn control(&mut self, _t: f64, _s: &QuadState, _traj: &ReferenceTrajectory) -> Result<Action> {
            self.ticks += 1;
            Ok(Action::hover())
        }
    }

    fn hover_traj(seconds: f64) -> ReferenceTrajectory {
        let p = Vector3::new(0.0, 0.0, 2.0);
        let n = (seconds / 0.02) as usize + 1;
        ReferenceTrajectory {
            states: vec![QuadState::hover(p); n],
            actions_ff: vec![Action::hover(); n],
            stamps: (0..n).map(|k| k as f64 * 0.02).collect(),
            primitive_count: 0,
        }
    }

    #[test]
    fn cadence_counts() {
        let traj = hover_traj(6.0);
        let mut pilot =
            CountingPilot { inertial: 0, cameras: 0, refs: 0, ticks: 0 };
        let out = run_closed_loop(
            &traj,
            &PlatformParams::default(),
            QuadState::hover(Vector3::new(0.0, 0.0, 2.0)),
            &mut pilot,
            &SensorConfig::default(),
            &RunOptions::default(),
            None,
        )
        .unwrap();
        // Events on [0, 6 s): 600 control ticks, 600 imu, 180 camera, 300 ref.
        assert_eq!(pilot.ticks, 600);
        assert_eq!(pilot.inertial, 600);
        assert_eq!(pilot.cameras, 180);
        assert_eq!(pilot.refs, 300);
        assert!(!out.crashed);
        assert_eq!(out.states_50hz.len(), 300);
    }

    #[test]
    fn hover_pilot_holds_hover() {
        let traj = hover_traj(3.0);
        let mut pilot = HoverPilot;
        let out = run_closed_loop(
            &traj,
            &PlatformParams::default(),
            QuadState::hover(Vector3::new(0.0, 0.0, 2.0)),
            &mut pilot,
            &SensorConfig::default(),
            &RunOptions::default(),
            None,
        )
        .unwrap();
        assert!(!out.crashed);
        let last = out.states_50hz.last().unwrap();
        assert!((last.p - Vector3::new(0.0, 0.0, 2.0)).norm() < 1e-6);
    }

    #[test]
    fn zero_action_crashes_out() {
        struct FallPilot;
        impl Pilot for FallPilot {
            fn control(&mut self, _t: f64, _s: &QuadState, _traj: &ReferenceTrajectory) -> Result<Action> {
                Ok(Action::new(0.0, Vector3::zeros()))
            }
        }
        let traj = hover_traj(10.0);
        let out = run_closed_loop(
            &traj,
            &PlatformParams::default(),
            QuadState::hover(Vector3::new(0.0, 0.0, 2.0)),
            &mut FallPilot,
            &SensorConfig::default(),
            &RunOptions::default(),
            None,
        )
        .unwrap();
        assert!(out.crashed);
        assert!(out.crash_time.unwrap() < 2.0);
    }

    #[test]
    fn expert_tracks_power_loop() {
        let traj = build_maneuver(Maneuver::PowerLoop, &ManeuverParams::default()).unwrap();
        let params = PlatformParams::default();
        let mut pilot = ExpertPilot::new(MpcConfig::default(), params);
        let start = traj.states[0];
        let out = run_closed_loop(
            &traj,
            &params,
            start,
            &mut pilot,
            &SensorConfig::default(),
            &RunOptions::default(),
            None,
        )
        .unwrap();
        assert!(!out.crashed);
        // RMSE against the reference positions.
        let mut sq = 0.0;
        for (s, r) in out.states_50hz.iter().zip(&traj.states) {
            sq += (s.p - r.p).norm_squared();
        }
        let rmse = (sq / out.states_50hz.len() as f64).sqrt();
        assert!(rmse < 0.10, "expert RMSE {rmse} m");
    }

    #[test]
    fn runs_are_deterministic() {
        let traj = hover_traj(2.0);
        let run = || {
            let mut pilot = CountingPilot { inertial: 0, cameras: 0, refs: 0, ticks: 0 };
            run_closed_loop(
                &traj,
                &PlatformParams::default(),
                QuadState::hover(Vector3::new(0.0, 0.0, 2.0)),
                &mut pilot,
                &SensorConfig::default(),
                &RunOptions { sensor_seed: 5, ..Default::default() },
                None,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.states_50hz, b.states_50hz);
    }
}
