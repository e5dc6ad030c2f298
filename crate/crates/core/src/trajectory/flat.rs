//! Flat outputs and the map back to full states and actions.
//!
//! A quadrotor trajectory is planned as (x, y, z, yaw) with position
//! derivatives up to snap. The attitude is recovered from the thrust vector
//! `a + g*e3`; body x/y come either from the yaw angle (the standard frame,
//! used on polynomial segments) or from an axis anchored to the primitive
//! plane. The anchored variant exists because the yaw-referenced frame
//! degenerates when the thrust vector passes through the horizontal, which
//! happens twice per loop.

use nalgebra::{Rotation3, UnitQuaternion, Vector3};

use crate::dynamics::{Action, QuadState, GRAVITY};
use crate::error::{Error, Result};

/// Flat output sample: position derivatives up to 4th order, yaw up to 2nd.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatOutput {
    /// Position, velocity, acceleration, jerk, snap; meters and SI derivatives.
    pub pos: [Vector3<f64>; 5],
    /// Yaw angle (rad, wrapped to (-pi, pi]), yaw rate, yaw acceleration.
    pub yaw: [f64; 3],
}

impl FlatOutput {
    /// Resting flat output at `p` with the given yaw.
    pub fn rest(p: Vector3<f64>, yaw: f64) -> Self {
        Self {
            pos: [p, Vector3::zeros(), Vector3::zeros(), Vector3::zeros(), Vector3::zeros()],
            yaw: [wrap_angle(yaw), 0.0, 0.0],
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.pos[0]
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.pos[1]
    }

    pub fn acceleration(&self) -> Vector3<f64> {
        self.pos[2]
    }

    pub fn jerk(&self) -> Vector3<f64> {
        self.pos[3]
    }
}

/// Wrap to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut x = a % two_pi;
    if x <= -std::f64::consts::PI {
        x += two_pi;
    } else if x > std::f64::consts::PI {
        x -= two_pi;
    }
    x
}

/// How to complete the attitude around the thrust axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttitudeFrame {
    /// Body x from the yaw heading (Mellinger frame).
    Yaw,
    /// Body x pinned to a fixed world direction (roll primitives).
    AnchorX(Vector3<f64>),
    /// Body y pinned to a fixed world direction (loop primitives).
    AnchorY(Vector3<f64>),
}

/// Thrust must keep this fraction of gravity for a well-defined attitude.
pub const MIN_THRUST_FRACTION: f64 = 0.1;

/// Convert one flat-output sample to a full state and feedforward action
/// using the standard yaw-referenced frame.
pub fn flatness_transform(fo: &FlatOutput) -> Result<(QuadState, Action)> {
    flatness_transform_in(fo, &AttitudeFrame::Yaw)
}

/// As [`flatness_transform`] with an explicit frame completion.
pub fn flatness_transform_in(
    fo: &FlatOutput,
    frame: &AttitudeFrame,
) -> Result<(QuadState, Action)> {
    let t_vec = fo.acceleration() + Vector3::new(0.0, 0.0, GRAVITY);
    let c = t_vec.norm();
    if c <= MIN_THRUST_FRACTION * GRAVITY {
        return Err(Error::DegenerateOrientation { thrust_norm: c });
    }
    let z_b = t_vec / c;

    let (x_b, y_b) = match frame {
        AttitudeFrame::Yaw => {
            let x_c = Vector3::new(fo.yaw[0].cos(), fo.yaw[0].sin(), 0.0);
            let y_raw = z_b.cross(&x_c);
            let n = y_raw.norm();
            if n < 1e-6 {
                // Thrust parallel to the heading: yaw frame undefined.
                return Err(Error::DegenerateOrientation { thrust_norm: n });
            }
            let y_b = y_raw / n;
            (y_b.cross(&z_b), y_b)
        }
        AttitudeFrame::AnchorX(dir) => {
            let y_b = z_b.cross(dir);
            let n = y_b.norm();
            if n < 1e-6 {
                return Err(Error::DegenerateOrientation { thrust_norm: n });
            }
            let y_b = y_b / n;
            (y_b.cross(&z_b), y_b)
        }
        AttitudeFrame::AnchorY(dir) => {
            let x_b = dir.cross(&z_b);
            let n = x_b.norm();
            if n < 1e-6 {
                return Err(Error::DegenerateOrientation { thrust_norm: n });
            }
            let x_b = x_b / n;
            (x_b, z_b.cross(&x_b))
        }
    };

    let rot = Rotation3::from_matrix_unchecked(nalgebra::Matrix3::from_columns(&[x_b, y_b, z_b]));
    let q = UnitQuaternion::from_rotation_matrix(&rot);

    // Rate of the thrust axis; the component around it depends on the frame.
    let j = fo.jerk();
    let h_w = (j - z_b * z_b.dot(&j)) / c;
    let w_x = -h_w.dot(&y_b);
    let w_y = h_w.dot(&x_b);
    let w_z = match frame {
        AttitudeFrame::Yaw => fo.yaw[1] * Vector3::z().dot(&z_b),
        // Anchored frames rotate about the (in-plane) anchor only.
        AttitudeFrame::AnchorX(_) | AttitudeFrame::AnchorY(_) => 0.0,
    };
    let w = Vector3::new(w_x, w_y, w_z);

    let state = QuadState { p: fo.position(), q, v: fo.velocity(), w };
    let action = Action::new(c, w);
    Ok((state, action))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hover_is_identity() {
        let fo = FlatOutput::rest(Vector3::new(1.0, 2.0, 3.0), 0.0);
        let (s, a) = flatness_transform(&fo).unwrap();
        assert_relative_eq!(a.c, GRAVITY);
        assert_relative_eq!(s.w, Vector3::zeros());
        assert!(s.q.angle_to(&UnitQuaternion::identity()) < 1e-12);
    }

    #[test]
    fn hover_with_yaw() {
        let fo = FlatOutput::rest(Vector3::zeros(), 1.0);
        let (s, _) = flatness_transform(&fo).unwrap();
        let (roll, pitch, yaw) = s.q.euler_angles();
        assert_relative_eq!(roll, 0.0, epsilon = 1e-12);
        assert_relative_eq!(pitch, 0.0, epsilon = 1e-12);
        assert_relative_eq!(yaw, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn free_fall_is_degenerate() {
        let mut fo = FlatOutput::rest(Vector3::zeros(), 0.0);
        fo.pos[2] = Vector3::new(0.0, 0.0, -GRAVITY);
        assert!(matches!(
            flatness_transform(&fo),
            Err(Error::DegenerateOrientation { .. })
        ));
    }

    #[test]
    fn wrap_angle_range() {
        assert_relative_eq!(wrap_angle(std::f64::consts::PI), std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(-std::f64::consts::PI), std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(3.0 * std::f64::consts::PI), std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(0.5), 0.5);
    }

    #[test]
    fn forward_acceleration_pitches() {
        let mut fo = FlatOutput::rest(Vector3::zeros(), 0.0);
        fo.pos[2] = Vector3::new(2.0, 0.0, 0.0);
        let (s, a) = flatness_transform(&fo).unwrap();
        assert_relative_eq!(a.c, (4.0 + GRAVITY * GRAVITY).sqrt(), epsilon = 1e-12);
        // Thrust tilts forward, so the body pitches nose-down in the world.
        let z_world = s.q * Vector3::z();
        assert!(z_world.x > 0.0);
        assert_relative_eq!(z_world.y, 0.0, epsilon = 1e-12);
    }
}
