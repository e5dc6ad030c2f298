//! Sensor-stack behavior over a full acrobatic flight.

use acro_core::dynamics::{Action, PlatformParams, QuadState};
use acro_core::mpc::{MpcConfig, MpcExpert};
use acro_core::sensing::InertialSignal;
use acro_core::sim::{run_closed_loop, Pilot, RunOptions, SensorConfig};
use acro_core::trajectory::{build_maneuver, Maneuver, ManeuverParams, ReferenceTrajectory};
use nalgebra::Vector3;

/// Expert pilot that also watches the inertial estimate.
struct InstrumentedExpert {
    expert: MpcExpert,
    latest: Option<InertialSignal>,
    worst_gravity_err_deg: f64,
    worst_speed_err: f64,
    track_events: usize,
    min_tracks: usize,
}

impl Pilot for InstrumentedExpert {
    fn needs_sensors(&self) -> bool {
        true
    }

    fn on_inertial(&mut self, _t: f64, sig: &InertialSignal) {
        self.latest = Some(*sig);
    }

    fn on_tracks(&mut self, _t: f64, tracks: &acro_core::sensing::TrackArray, _d: bool) {
        self.track_events += 1;
        let real = tracks.iter().filter(|row| row[4] > 0.0).count();
        self.min_tracks = self.min_tracks.min(real);
    }

    fn control(
        &mut self,
        t: f64,
        true_state: &QuadState,
        traj: &ReferenceTrajectory,
    ) -> acro_core::Result<Action> {
        if let Some(sig) = &self.latest {
            // Roll/pitch error: angle between estimated and true body-frame
            // gravity directions (yaw-invariant).
            let up_est = sig.q_est.inverse() * Vector3::z();
            let up_true = true_state.q.inverse() * Vector3::z();
            let err = up_est.dot(&up_true).clamp(-1.0, 1.0).acos().to_degrees();
            self.worst_gravity_err_deg = self.worst_gravity_err_deg.max(err);
            self.worst_speed_err =
                self.worst_speed_err.max((sig.v_est - true_state.v).norm());
        }
        Ok(self.expert.control(true_state, traj, t)?.actions[0])
    }
}

#[test]
fn inertial_estimate_bounded_through_power_loop() {
    let traj = build_maneuver(Maneuver::PowerLoop, &ManeuverParams::default()).unwrap();
    let params = PlatformParams::default();
    let mut pilot = InstrumentedExpert {
        expert: MpcExpert::new(MpcConfig::default(), params),
        latest: None,
        worst_gravity_err_deg: 0.0,
        worst_speed_err: 0.0,
        track_events: 0,
        min_tracks: usize::MAX,
    };
    let out = run_closed_loop(
        &traj,
        &params,
        traj.states[0],
        &mut pilot,
        &SensorConfig::default(),
        &RunOptions { sensor_seed: 17, ..Default::default() },
        None,
    )
    .unwrap();
    assert!(!out.crashed);
    // Gravity-aligned attitude stays within the filter bound even through
    // the loop, where the accelerometer is useless for alignment.
    assert!(
        pilot.worst_gravity_err_deg < 5.0,
        "roll/pitch error reached {:.2} deg",
        pilot.worst_gravity_err_deg
    );
    // Velocity estimate drifts but stays sane on a ~7 s maneuver.
    assert!(pilot.worst_speed_err < 1.0, "v_est error {:.2} m/s", pilot.worst_speed_err);
    // The camera kept enough features throughout.
    assert!(pilot.track_events > 0);
    assert!(pilot.min_tracks >= 4, "min tracks {}", pilot.min_tracks);
}

#[test]
fn observation_log_matches_cadence() {
    let traj = build_maneuver(Maneuver::BarrelRoll, &ManeuverParams::default()).unwrap();
    let params = PlatformParams::default();
    let mut pilot = InstrumentedExpert {
        expert: MpcExpert::new(MpcConfig::default(), params),
        latest: None,
        worst_gravity_err_deg: 0.0,
        worst_speed_err: 0.0,
        track_events: 0,
        min_tracks: usize::MAX,
    };
    let mut events = Vec::new();
    let out = run_closed_loop(
        &traj,
        &params,
        traj.states[0],
        &mut pilot,
        &SensorConfig::default(),
        &RunOptions { sensor_seed: 3, log_observations: true, ..Default::default() },
        Some(&mut events),
    )
    .unwrap();
    assert!(!out.crashed);
    let duration = traj.duration();
    let imu = events.iter().filter(|e| matches!(e, acro_core::sim::ObsEvent::Imu { .. })).count();
    let cam = events.iter().filter(|e| matches!(e, acro_core::sim::ObsEvent::Camera { .. })).count();
    let refs = events.iter().filter(|e| matches!(e, acro_core::sim::ObsEvent::Ref { .. })).count();
    assert_eq!(imu, (duration * 100.0).ceil() as usize);
    assert_eq!(cam, (duration * 30.0).ceil() as usize);
    assert_eq!(refs, (duration * 50.0).ceil() as usize);
}
