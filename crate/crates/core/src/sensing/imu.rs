//! IMU simulation and the inertial preprocessing the policy consumes.

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{gravity_world, QuadState};
use crate::error::{Error, Result};

/// One accelerometer + gyroscope sample, body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    /// Specific force, m/s².
    pub accel: Vector3<f64>,
    /// Angular rate, rad/s.
    pub gyro: Vector3<f64>,
    /// Seconds.
    pub stamp: f64,
}

/// Sensor constants: nominal biases and per-sample noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImuParams {
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    pub accel_noise_std: f64,
    pub gyro_noise_std: f64,
    /// Sample rate, Hz.
    pub rate_hz: f64,
    /// Complementary-filter gain per sample.
    pub filter_gain: f64,
}

impl Default for ImuParams {
    fn default() -> Self {
        Self {
            accel_bias: Vector3::new(0.05, -0.03, 0.04),
            gyro_bias: Vector3::new(0.010, -0.008, 0.012),
            accel_noise_std: 0.03,
            gyro_noise_std: 0.002,
            rate_hz: 100.0,
            filter_gain: 0.02,
        }
    }
}

/// Bias draw actually realized on the platform (domain randomization output).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuBiases {
    pub accel: Vector3<f64>,
    pub gyro: Vector3<f64>,
}

impl ImuBiases {
    pub fn nominal(params: &ImuParams) -> Self {
        Self { accel: params.accel_bias, gyro: params.gyro_bias }
    }
}

/// Simulate one IMU sample from the true state.
///
/// `c_eff` is the realized mass-normalized thrust; with no drag the
/// body-frame specific force is exactly `(0, 0, c_eff)`.
pub fn simulate_imu<R: Rng>(
    s_true: &QuadState,
    c_eff: f64,
    biases: &ImuBiases,
    params: &ImuParams,
    stamp: f64,
    rng: &mut R,
) -> ImuSample {
    let mut accel = Vector3::new(0.0, 0.0, c_eff) + biases.accel;
    let mut gyro = s_true.w + biases.gyro;
    if params.accel_noise_std > 0.0 {
        let n = Normal::new(0.0, params.accel_noise_std).unwrap();
        accel += Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng));
    }
    if params.gyro_noise_std > 0.0 {
        let n = Normal::new(0.0, params.gyro_noise_std).unwrap();
        gyro += Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng));
    }
    ImuSample { accel, gyro, stamp }
}

/// Bias-subtracted, gravity-aligned inertial state estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InertialSignal {
    /// Velocity estimate, m/s, gravity-aligned world frame.
    pub v_est: Vector3<f64>,
    /// Orientation estimate (yaw-free start), gravity-aligned.
    pub q_est: UnitQuaternion<f64>,
    /// Debiased body rates, rad/s.
    pub w_est: Vector3<f64>,
}

impl InertialSignal {
    pub fn initial() -> Self {
        Self {
            v_est: Vector3::zeros(),
            q_est: UnitQuaternion::identity(),
            w_est: Vector3::zeros(),
        }
    }
}

/// Largest tolerated gap between consecutive IMU samples, seconds.
pub const MAX_IMU_GAP: f64 = 0.025;

/// Complementary filter: gyro propagation with accelerometer roll/pitch
/// correction, plus velocity integration of the gravity-compensated
/// acceleration.
#[derive(Debug, Clone)]
pub struct InertialFilter {
    signal: InertialSignal,
    bias_estimate: ImuBiases,
    gain: f64,
    last_stamp: Option<f64>,
}

impl InertialFilter {
    /// `bias_estimate` is what the preprocessing *believes* the biases are
    /// (the nominal calibration); any randomized residual stays in the data.
    pub fn new(bias_estimate: ImuBiases, gain: f64) -> Self {
        Self { signal: InertialSignal::initial(), bias_estimate, gain, last_stamp: None }
    }

    pub fn signal(&self) -> &InertialSignal {
        &self.signal
    }

    /// Fold in one sample; returns the updated signal.
    pub fn step(&mut self, sample: &ImuSample) -> Result<InertialSignal> {
        let dt = match self.last_stamp {
            None => 0.01,
            Some(prev) => {
                let gap = sample.stamp - prev;
                if gap > MAX_IMU_GAP {
                    return Err(Error::StaleImu { gap, max: MAX_IMU_GAP });
                }
                if gap <= 0.0 {
                    return Err(Error::OutOfOrderEvent { stamp: sample.stamp, last: prev });
                }
                gap
            }
        };
        self.last_stamp = Some(sample.stamp);

        let gyro = sample.gyro - self.bias_estimate.gyro;
        let accel = sample.accel - self.bias_estimate.accel;

        // Attitude propagation.
        let mut q = self.signal.q_est * UnitQuaternion::from_scaled_axis(gyro * dt);

        // Gravity alignment, trusted only near 1 g specific force and at low
        // rotation rates; inside a maneuver the accelerometer points along
        // thrust, not gravity, so the filter must coast on the gyro there.
        let norm = accel.norm();
        let g = crate::dynamics::GRAVITY;
        let norm_gate = (1.0 - ((norm / g) - 1.0).abs() / 0.15).clamp(0.0, 1.0);
        let rate_gate = (1.0 - gyro.norm() / 1.0).clamp(0.0, 1.0);
        let trust = norm_gate * rate_gate;
        if trust > 0.0 && norm > 1e-6 {
            let measured_up = accel / norm;
            let predicted_up = q.inverse() * Vector3::z();
            let correction = (measured_up.cross(&predicted_up)) * (self.gain * trust);
            q *= UnitQuaternion::from_scaled_axis(correction);
        }

        // Velocity integration of the gravity-compensated acceleration.
        let world_accel = q * accel + gravity_world();
        let v = self.signal.v_est + world_accel * dt;

        self.signal = InertialSignal { v_est: v, q_est: q, w_est: gyro };
        Ok(self.signal)
    }
}

/// One filter update from the latest contiguous history; the struct-based
/// [`InertialFilter`] is the stateful form of the same preprocessing.
pub fn preprocess_imu(
    samples: &[ImuSample],
    bias_estimate: &ImuBiases,
    gain: f64,
) -> Result<InertialSignal> {
    let mut filter = InertialFilter::new(*bias_estimate, gain);
    for s in samples {
        filter.step(s)?;
    }
    Ok(filter.signal)
}
