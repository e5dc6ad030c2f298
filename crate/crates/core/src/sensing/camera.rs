//! Forward-facing pinhole on the rectified plane.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::QuadState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    /// Full field of view, degrees.
    pub fov_deg: f64,
    /// Frame rate, Hz.
    pub rate_hz: f64,
    /// Reference sensor width used to convert pixel thresholds to rectified
    /// units.
    pub width_px: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self { fov_deg: 150.0, rate_hz: 30.0, width_px: 640.0 }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.fov_deg > 30.0 && self.fov_deg < 180.0) {
            return Err(Error::Config { reason: format!("camera fov {} deg", self.fov_deg) });
        }
        Ok(())
    }

    /// Tangent of the half field of view: the rectified-plane radius.
    pub fn tan_half_fov(&self) -> f64 {
        (self.fov_deg.to_radians() / 2.0).tan()
    }

    /// Rectified-plane units per pixel of the reference sensor.
    pub fn rect_per_px(&self) -> f64 {
        2.0 * self.tan_half_fov() / self.width_px
    }

    /// Project a world point into rectified coordinates, if in view.
    ///
    /// Camera convention: optical axis = body x (forward), image u right
    /// (-body y), image v down (-body z).
    pub fn project(&self, state: &QuadState, point: &Vector3<f64>) -> Option<(f64, f64)> {
        let d_body = state.q.inverse() * (point - state.p);
        let depth = d_body.x;
        if depth <= 1e-6 {
            return None;
        }
        let u = -d_body.y / depth;
        let v = -d_body.z / depth;
        let r = self.tan_half_fov();
        if u * u + v * v <= r * r {
            Some((u, v))
        } else {
            None
        }
    }

    /// Visible keypoints as (landmark id, rectified position), id-ordered.
    pub fn render_keypoints(
        &self,
        state: &QuadState,
        landmarks: &[Vector3<f64>],
    ) -> Vec<(usize, (f64, f64))> {
        landmarks
            .iter()
            .enumerate()
            .filter_map(|(id, p)| self.project(state, p).map(|uv| (id, uv)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;

    #[test]
    fn optical_axis_projects_to_center() {
        let cam = CameraModel::default();
        let s = QuadState::hover(Vector3::new(0.0, 0.0, 2.0));
        let (u, v) = cam.project(&s, &Vector3::new(10.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(u, 0.0);
        assert_relative_eq!(v, 0.0);
    }

    #[test]
    fn behind_camera_excluded() {
        let cam = CameraModel::default();
        let s = QuadState::hover(Vector3::new(0.0, 0.0, 2.0));
        assert!(cam.project(&s, &Vector3::new(-5.0, 0.0, 2.0)).is_none());
    }

    #[test]
    fn outside_fov_excluded() {
        let cam = CameraModel { fov_deg: 90.0, ..Default::default() };
        let s = QuadState::hover(Vector3::new(0.0, 0.0, 2.0));
        // 45 deg half fov: a point at 60 deg off-axis is out.
        assert!(cam.project(&s, &Vector3::new(1.0, 1.8, 2.0)).is_none());
        assert!(cam.project(&s, &Vector3::new(1.0, 0.5, 2.0)).is_some());
    }

    #[test]
    fn approach_point_stays_centered() {
        // Translating straight toward a landmark keeps it at the center
        // while off-axis points diverge radially.
        let cam = CameraModel::default();
        let target = Vector3::new(20.0, 0.0, 2.0);
        let side = Vector3::new(20.0, 3.0, 2.0);
        let mut prev_side = 0.0;
        for k in 0..5 {
            let s = QuadState::hover(Vector3::new(k as f64 * 2.0, 0.0, 2.0));
            let (u, v) = cam.project(&s, &target).unwrap();
            assert_relative_eq!((u * u + v * v).sqrt(), 0.0, epsilon = 1e-12);
            let (us, vs) = cam.project(&s, &side).unwrap();
            let r = (us * us + vs * vs).sqrt();
            assert!(r > prev_side);
            prev_side = r;
        }
    }

    #[test]
    fn yawed_camera_sees_sideways() {
        let cam = CameraModel::default();
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        let s = QuadState { q, ..QuadState::hover(Vector3::new(0.0, 0.0, 2.0)) };
        // Facing +y now; a point along +y is centered.
        let (u, v) = cam.project(&s, &Vector3::new(0.0, 10.0, 2.0)).unwrap();
        assert_relative_eq!(u, 0.0, epsilon = 1e-12);
        assert_relative_eq!(v, 0.0, epsilon = 1e-12);
    }
}
