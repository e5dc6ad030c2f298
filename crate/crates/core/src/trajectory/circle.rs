//! Circular motion primitives: the core of every acrobatic maneuver.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::GRAVITY;
use crate::error::{Error, Result};
use crate::trajectory::flat::{flatness_transform_in, AttitudeFrame, FlatOutput};

/// Margin over the critical tangential velocity that would free-fall at the
/// top of a loop.
pub const SPEED_MARGIN: f64 = 1.1;

/// Yaw handling on and around a primitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum YawMode {
    /// Camera holds a fixed heading (the facing direction).
    Fixed,
    /// Yaw follows the horizontal velocity heading. Degenerate on vertical
    /// circles; meant for near-horizontal primitives.
    ForwardFacing,
    /// The entry segment yaws 180 degrees, then the primitive is flown
    /// facing backwards.
    Yaw180Entry,
}

/// Constant-speed circle in an arbitrary plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularPrimitive {
    /// Circle center, meters, world frame.
    pub center: Vector3<f64>,
    /// Radius, meters.
    pub radius: f64,
    /// Tangential speed, m/s.
    pub v_l: f64,
    /// Unit plane normal.
    pub normal: Vector3<f64>,
    /// Entry angle in the plane basis, rad (pi = lowest point for vertical
    /// circles).
    pub entry_phase: f64,
    /// Number of turns.
    pub turns: f64,
    /// Traversal sign: phase moves as `entry_phase + dir * (v_l/r) * t`.
    pub direction: f64,
    pub yaw_mode: YawMode,
    /// World direction the camera should face at entry; resolves the
    /// attitude branch.
    pub facing: Vector3<f64>,
}

impl CircularPrimitive {
    /// Validates the speed margin `v_l > 1.1 * sqrt(r g)` and geometry.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        center: Vector3<f64>,
        radius: f64,
        v_l: f64,
        normal: Vector3<f64>,
        entry_phase: f64,
        turns: f64,
        direction: f64,
        yaw_mode: YawMode,
        facing: Vector3<f64>,
    ) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::Config { reason: format!("circle radius {radius}") });
        }
        let required = SPEED_MARGIN * (radius * GRAVITY).sqrt();
        if v_l <= required {
            return Err(Error::CircleMargin { v_l, required });
        }
        let n = normal.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::Config { reason: format!("circle normal norm {n}") });
        }
        Ok(Self {
            center,
            radius,
            v_l,
            normal,
            entry_phase,
            turns,
            direction: direction.signum(),
            yaw_mode,
            facing: facing / facing.norm(),
        })
    }

    /// In-plane orthonormal basis `(e1, e2)` with `e2 = n x e1`; `e1` points
    /// as close to world-up as the plane allows.
    pub fn plane_basis(&self) -> (Vector3<f64>, Vector3<f64>) {
        let n = self.normal;
        let up = Vector3::z();
        let e1 = {
            let proj = up - n * n.dot(&up);
            if proj.norm() > 1e-9 {
                proj / proj.norm()
            } else {
                let x = Vector3::x();
                let proj = x - n * n.dot(&x);
                proj / proj.norm()
            }
        };
        (e1, n.cross(&e1))
    }

    /// Angular rate of the phase, rad/s (signed).
    pub fn phase_rate(&self) -> f64 {
        self.direction * self.v_l / self.radius
    }

    /// Time for the configured number of turns, seconds.
    pub fn duration(&self) -> f64 {
        self.turns * std::f64::consts::TAU * self.radius / self.v_l
    }

    /// Frame completion used when converting to full states: loops anchor
    /// body-y to the plane normal, rolls anchor body-x.
    pub fn attitude_frame(&self) -> Result<AttitudeFrame> {
        let fo = circular_flat_outputs(self, 0.0);
        let t_vec = fo.acceleration() + Vector3::new(0.0, 0.0, GRAVITY);
        let z_b = t_vec / t_vec.norm();
        let roll_like = self.normal.dot(&self.facing).abs() > 0.9;
        for sign in [1.0, -1.0] {
            let frame = if roll_like {
                AttitudeFrame::AnchorX(self.normal * sign)
            } else {
                AttitudeFrame::AnchorY(self.normal * sign)
            };
            let x_b = match frame {
                AttitudeFrame::AnchorX(d) => {
                    let y = z_b.cross(&d);
                    y.cross(&z_b) / y.cross(&z_b).norm()
                }
                AttitudeFrame::AnchorY(d) => {
                    let x = d.cross(&z_b);
                    x / x.norm()
                }
                AttitudeFrame::Yaw => unreachable!(),
            };
            if x_b.dot(&self.facing) > 0.1 {
                return Ok(frame);
            }
        }
        Err(Error::Config {
            reason: "circle facing direction incompatible with entry attitude".into(),
        })
    }

    /// Full state and feedforward action at local time `t`.
    pub fn sample(&self, t: f64) -> Result<(crate::dynamics::QuadState, crate::dynamics::Action)> {
        let fo = circular_flat_outputs(self, t);
        flatness_transform_in(&fo, &self.attitude_frame()?)
    }
}

/// Closed-form flat outputs of the circle at local time `t`.
pub fn circular_flat_outputs(prim: &CircularPrimitive, t: f64) -> FlatOutput {
    let (e1, e2) = prim.plane_basis();
    let rate = prim.phase_rate();
    let phi = prim.entry_phase + rate * t;
    let u = e1 * phi.cos() + e2 * phi.sin();
    let du = -e1 * phi.sin() + e2 * phi.cos();
    let r = prim.radius;
    let pos = [
        prim.center + u * r,
        du * (r * rate),
        u * (-r * rate * rate),
        du * (-r * rate * rate * rate),
        u * (r * rate * rate * rate * rate),
    ];
    let yaw = match prim.yaw_mode {
        YawMode::Fixed => {
            let f = prim.facing;
            [f.y.atan2(f.x), 0.0, 0.0]
        }
        YawMode::Yaw180Entry => {
            let f = prim.facing;
            [f.y.atan2(f.x), 0.0, 0.0]
        }
        YawMode::ForwardFacing => {
            let v = pos[1];
            let a = pos[2];
            let h2 = v.x * v.x + v.y * v.y;
            if h2 < 1e-9 {
                [0.0, 0.0, 0.0]
            } else {
                let yaw = v.y.atan2(v.x);
                let yaw_rate = (v.x * a.y - v.y * a.x) / h2;
                [yaw, yaw_rate, 0.0]
            }
        }
    };
    FlatOutput { pos, yaw }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn loop_primitive() -> CircularPrimitive {
        // Power-loop geometry: vertical circle in the x-z plane, entered at
        // the bottom traveling +x.
        CircularPrimitive::new(
            Vector3::new(0.0, 0.0, 3.5),
            1.5,
            4.5,
            Vector3::y(),
            std::f64::consts::PI,
            1.0,
            -1.0,
            YawMode::Fixed,
            Vector3::x(),
        )
        .unwrap()
    }

    #[test]
    fn margin_accepts_and_rejects() {
        let required = SPEED_MARGIN * (1.5f64 * GRAVITY).sqrt();
        assert_relative_eq!(required, 4.2196, epsilon = 1e-3);
        assert!(loop_primitive().v_l > required);
        let slow = CircularPrimitive::new(
            Vector3::zeros(),
            1.5,
            4.0,
            Vector3::y(),
            0.0,
            1.0,
            1.0,
            YawMode::Fixed,
            Vector3::x(),
        );
        match slow {
            Err(Error::CircleMargin { v_l, required }) => {
                assert_relative_eq!(v_l, 4.0);
                assert_relative_eq!(required, 4.2196, epsilon = 1e-3);
            }
            other => panic!("expected margin rejection, got {other:?}"),
        }
    }

    #[test]
    fn centripetal_acceleration_everywhere() {
        let prim = loop_primitive();
        let expected = 4.5 * 4.5 / 1.5;
        let mut t = 0.0;
        while t < prim.duration() {
            let fo = circular_flat_outputs(&prim, t);
            assert_relative_eq!(fo.acceleration().norm(), expected, epsilon = 1e-9);
            assert_relative_eq!(fo.velocity().norm(), 4.5, epsilon = 1e-9);
            t += 0.01;
        }
    }

    #[test]
    fn entry_geometry() {
        let prim = loop_primitive();
        let fo = circular_flat_outputs(&prim, 0.0);
        assert_relative_eq!(fo.position(), Vector3::new(0.0, 0.0, 2.0), epsilon = 1e-12);
        assert_relative_eq!(fo.velocity(), Vector3::new(4.5, 0.0, 0.0), epsilon = 1e-9);
        // Centripetal acceleration points up at the bottom.
        assert_relative_eq!(
            fo.acceleration(),
            Vector3::new(0.0, 0.0, 13.5),
            epsilon = 1e-9
        );
    }

    #[test]
    fn top_of_loop_thrust() {
        let prim = loop_primitive();
        // Half a turn after entry.
        let t = 0.5 * prim.duration();
        let (state, action) = prim.sample(t).unwrap();
        assert_relative_eq!(action.c, 4.5 * 4.5 / 1.5 - GRAVITY, epsilon = 1e-9);
        // Thrust axis points world-down at the top.
        let z_world = state.q * Vector3::z();
        assert_relative_eq!(z_world, -Vector3::z(), epsilon = 1e-9);
        // Inverted: the camera looks against the direction of entry travel.
        let x_world = state.q * Vector3::x();
        assert!(x_world.x < -0.99);
    }

    #[test]
    fn rates_stay_within_limits() {
        let prim = loop_primitive();
        let mut peak: f64 = 0.0;
        let mut t = 0.0;
        while t <= prim.duration() {
            let (_, action) = prim.sample(t).unwrap();
            peak = peak.max(action.w_cmd.amax());
            t += 0.002;
        }
        // Fastest thrust-vector rotation happens at the top.
        assert!(peak < 12.0, "peak rate {peak}");
        assert!(peak > 10.0, "peak rate {peak}");
    }

    #[test]
    fn loop_pitches_only() {
        let prim = loop_primitive();
        let mut t = 0.0;
        while t <= prim.duration() {
            let (_, action) = prim.sample(t).unwrap();
            assert_relative_eq!(action.w_cmd.x, 0.0, epsilon = 1e-9);
            assert_relative_eq!(action.w_cmd.z, 0.0, epsilon = 1e-9);
            t += 0.01;
        }
    }

    #[test]
    fn roll_primitive_rolls_only() {
        // Barrel-roll geometry: circle in the y-z plane, normal along travel.
        let prim = CircularPrimitive::new(
            Vector3::new(0.0, 0.0, 3.5),
            1.5,
            4.5,
            Vector3::x(),
            std::f64::consts::PI,
            1.0,
            1.0,
            YawMode::Fixed,
            Vector3::x(),
        )
        .unwrap();
        let mut t = 0.0;
        while t <= prim.duration() {
            let (_, action) = prim.sample(t).unwrap();
            assert_relative_eq!(action.w_cmd.y, 0.0, epsilon = 1e-9);
            assert_relative_eq!(action.w_cmd.z, 0.0, epsilon = 1e-9);
            t += 0.01;
        }
        let (s0, _) = prim.sample(0.0).unwrap();
        let x_world = s0.q * Vector3::x();
        assert!(x_world.x > 0.99, "camera faces travel at entry");
    }

    #[test]
    fn simulation_round_trip() {
        // Integrating the simplified model along the primitive's feedforward
        // actions re-tracks the analytic circle.
        use crate::dynamics::{simplified_step, PlatformParams};
        let prim = loop_primitive();
        let params = PlatformParams::default();
        let dt = 0.005;
        let (mut state, _) = prim.sample(0.0).unwrap();
        let mut t = 0.0;
        let mut worst: f64 = 0.0;
        while t + dt <= prim.duration() {
            // Midpoint feedforward for the step.
            let (_, action) = prim.sample(t + 0.5 * dt).unwrap();
            state = simplified_step(&state, &action, dt, &params).unwrap();
            t += dt;
            let fo = circular_flat_outputs(&prim, t);
            worst = worst.max((state.p - fo.position()).norm());
        }
        assert!(worst < 1e-3, "max divergence {worst}");
    }
}
