//! Adapters from sensing types to normalized network inputs.

use serde::{Deserialize, Serialize};

use crate::dynamics::QuadState;
use crate::policy::net::{TrackFrame, INERTIAL_DIM, REFERENCE_DIM};
use crate::sensing::{InertialSignal, TrackArray};

/// Scale constants bringing every input channel to order one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputNorm {
    /// Velocity scale, m/s.
    pub vel: f64,
    /// Body-rate scale, rad/s.
    pub rate: f64,
    /// Keypoint position scale, rectified units.
    pub uv: f64,
    /// Keypoint displacement scale, rectified units.
    pub duv: f64,
    /// Track age scale, keyframes.
    pub age: f64,
}

impl Default for InputNorm {
    fn default() -> Self {
        Self { vel: 5.0, rate: 12.0, uv: 2.0, duv: 0.5, age: 16.0 }
    }
}

impl InputNorm {
    pub fn tracks(&self, arr: &TrackArray) -> TrackFrame<f32> {
        let mut out = [[0.0f32; 5]; crate::sensing::TRACKS_PER_FRAME];
        for (row, src) in out.iter_mut().zip(arr.iter()) {
            row[0] = src[0] / self.uv as f32;
            row[1] = src[1] / self.uv as f32;
            row[2] = src[2] / self.duv as f32;
            row[3] = src[3] / self.duv as f32;
            row[4] = src[4] / self.age as f32;
        }
        out
    }

    pub fn inertial(&self, sig: &InertialSignal) -> [f32; INERTIAL_DIM] {
        let q = sig.q_est.quaternion();
        [
            (sig.v_est.x / self.vel) as f32,
            (sig.v_est.y / self.vel) as f32,
            (sig.v_est.z / self.vel) as f32,
            q.w as f32,
            q.i as f32,
            q.j as f32,
            q.k as f32,
            (sig.w_est.x / self.rate) as f32,
            (sig.w_est.y / self.rate) as f32,
            (sig.w_est.z / self.rate) as f32,
        ]
    }

    /// Reference velocity, orientation, and angular rate at the current
    /// sample (positions are deliberately absent).
    pub fn reference(&self, state: &QuadState) -> [f32; REFERENCE_DIM] {
        let q = state.q.quaternion();
        [
            (state.v.x / self.vel) as f32,
            (state.v.y / self.vel) as f32,
            (state.v.z / self.vel) as f32,
            q.w as f32,
            q.i as f32,
            q.j as f32,
            q.k as f32,
            (state.w.x / self.rate) as f32,
            (state.w.y / self.rate) as f32,
            (state.w.z / self.rate) as f32,
        ]
    }
}
