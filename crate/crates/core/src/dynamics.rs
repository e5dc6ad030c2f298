//! Rigid-body quadrotor models.
//!
//! Two step functions share one RK4 integrator: [`full_step`] integrates the
//! complete rotational dynamics with torques from the inner-loop rate
//! controller, while [`simplified_step`] treats commanded body rates as
//! instantaneous (the prediction model used by the receding-horizon expert).
//! Both are pure functions over value types.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gravity magnitude, m/s².
pub const GRAVITY: f64 = 9.81;

/// Largest timestep accepted by [`full_step`], seconds.
pub const MAX_FULL_DT: f64 = 0.01;

/// Largest timestep accepted by [`simplified_step`], seconds. The prediction
/// model is integrated at the controller rate, which is coarser than the
/// plant rate.
pub const MAX_SIMPLIFIED_DT: f64 = 0.1;

/// Gravity vector in the world frame (z up).
pub fn gravity_world() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -GRAVITY)
}

/// Full platform state: position, attitude, velocity, body rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadState {
    /// Position, meters, world frame.
    pub p: Vector3<f64>,
    /// Unit quaternion, world-from-body.
    pub q: UnitQuaternion<f64>,
    /// Velocity, m/s, world frame.
    pub v: Vector3<f64>,
    /// Body rates, rad/s, body frame.
    pub w: Vector3<f64>,
}

impl QuadState {
    /// Resting state at `p` with identity attitude.
    pub fn hover(p: Vector3<f64>) -> Self {
        Self {
            p,
            q: UnitQuaternion::identity(),
            v: Vector3::zeros(),
            w: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
            && self.w.iter().all(|x| x.is_finite())
            && self.q.as_vector().iter().all(|x| x.is_finite())
    }

    /// Body z-axis expressed in the world frame (thrust direction).
    pub fn thrust_axis(&self) -> Vector3<f64> {
        self.q * Vector3::z()
    }
}

/// Mass-normalized collective thrust plus commanded body rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// Collective thrust, m/s² (thrust divided by mass).
    pub c: f64,
    /// Commanded body rates, rad/s, body frame.
    pub w_cmd: Vector3<f64>,
}

impl Action {
    pub fn new(c: f64, w_cmd: Vector3<f64>) -> Self {
        Self { c, w_cmd }
    }

    /// Hover feedforward: weight compensation, zero rates.
    pub fn hover() -> Self {
        Self::new(GRAVITY, Vector3::zeros())
    }

    pub fn is_finite(&self) -> bool {
        self.c.is_finite() && self.w_cmd.iter().all(|x| x.is_finite())
    }

    /// Clamp into the actuator box `[0, c_max] x [-w_max, w_max]^3`.
    pub fn clamped(&self, params: &PlatformParams) -> Self {
        let m = params.omega_max;
        Self {
            c: self.c.clamp(0.0, params.c_max()),
            w_cmd: self.w_cmd.map(|w| w.clamp(-m, m)),
        }
    }

    fn within_bounds(&self, params: &PlatformParams) -> bool {
        let tol = 1e-9;
        self.c >= -tol
            && self.c <= params.c_max() + tol
            && self.w_cmd.iter().all(|w| w.abs() <= params.omega_max + tol)
    }
}

/// Physical platform constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatformParams {
    /// Diagonal inertia entries (J_xx, J_yy, J_zz), kg·m².
    pub j: Vector3<f64>,
    /// Maximum thrust over weight; must exceed 1 to hover.
    pub thrust_to_weight: f64,
    /// Gravity magnitude, m/s².
    pub g: f64,
    /// Inner-loop proportional gain, 1/s.
    pub rate_gain: f64,
    /// Per-axis torque limit, N·m.
    pub torque_max: f64,
    /// Per-axis body-rate limit, rad/s.
    pub omega_max: f64,
    /// Actuator gain error: realized thrust = commanded `c` times this.
    /// 1.0 when the platform is perfectly calibrated; the domain
    /// randomization draws it in [0.9, 1.1].
    pub thrust_scale: f64,
}

impl Default for PlatformParams {
    fn default() -> Self {
        Self {
            j: Vector3::new(0.01, 0.01, 0.02),
            thrust_to_weight: 4.0,
            g: GRAVITY,
            rate_gain: 20.0,
            torque_max: 0.5,
            omega_max: 12.0,
            thrust_scale: 1.0,
        }
    }
}

impl PlatformParams {
    /// Maximum mass-normalized thrust, m/s².
    pub fn c_max(&self) -> f64 {
        self.thrust_to_weight * self.g
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.j.iter().all(|x| *x > 0.0)) {
            return Err(Error::Config {
                reason: "inertia entries must be positive".into(),
            });
        }
        if self.thrust_to_weight <= 1.0 {
            return Err(Error::Config {
                reason: "thrust-to-weight must exceed 1".into(),
            });
        }
        Ok(())
    }
}

/// Quaternion kinematics `q_dot = 1/2 * q ⊗ (0, w)` for body-frame rates.
///
/// Returns an error when `q` is not unit-norm; the flow is norm-preserving,
/// so `dot(q, q_dot) = 0`.
pub fn quat_derivative(q: &Quaternion<f64>, w: &Vector3<f64>) -> Result<Quaternion<f64>> {
    let norm = q.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::NonUnitQuaternion { norm });
    }
    Ok(quat_derivative_raw(q, w))
}

#[inline]
fn quat_derivative_raw(q: &Quaternion<f64>, w: &Vector3<f64>) -> Quaternion<f64> {
    let omega = Quaternion::new(0.0, w.x, w.y, w.z);
    (q * omega) * 0.5
}

/// Inner-loop body-rate controller: feedback-linearizing proportional law
/// `eta = J*k*(w_cmd - w) + w x Jw`, clamped per-axis to the torque limit.
pub fn rate_controller(
    w_cmd: &Vector3<f64>,
    w: &Vector3<f64>,
    params: &PlatformParams,
) -> Vector3<f64> {
    let feedback = params.j.component_mul(&(w_cmd - w)) * params.rate_gain;
    let gyro = w.cross(&params.j.component_mul(w));
    let t = params.torque_max;
    (feedback + gyro).map(|x| x.clamp(-t, t))
}

#[derive(Clone, Copy)]
struct Deriv {
    p: Vector3<f64>,
    q: Quaternion<f64>,
    v: Vector3<f64>,
    w: Vector3<f64>,
}

#[derive(Clone, Copy)]
struct RawState {
    p: Vector3<f64>,
    q: Quaternion<f64>,
    v: Vector3<f64>,
    w: Vector3<f64>,
}

impl RawState {
    fn advanced(&self, d: &Deriv, dt: f64) -> Self {
        Self {
            p: self.p + d.p * dt,
            q: self.q + d.q * dt,
            v: self.v + d.v * dt,
            w: self.w + d.w * dt,
        }
    }
}

/// Translational + rotational vector field. `rate_dynamics = false` freezes
/// the body rates (the simplified model).
fn vector_field(s: &RawState, u: &Action, params: &PlatformParams, rate_dynamics: bool) -> Deriv {
    // Stage quaternions drift slightly off unit norm; normalize for the
    // thrust rotation only.
    let qn = UnitQuaternion::new_unchecked(s.q / s.q.norm());
    let thrust_world = qn * Vector3::new(0.0, 0.0, u.c * params.thrust_scale);
    let v_dot = gravity_world() + thrust_world;
    let w_dot = if rate_dynamics {
        let eta = rate_controller(&u.w_cmd, &s.w, params);
        let gyro = s.w.cross(&params.j.component_mul(&s.w));
        (eta - gyro).component_div(&params.j)
    } else {
        Vector3::zeros()
    };
    Deriv {
        p: s.v,
        q: quat_derivative_raw(&s.q, &s.w),
        v: v_dot,
        w: w_dot,
    }
}

fn rk4(s0: RawState, u: &Action, dt: f64, params: &PlatformParams, rate_dynamics: bool) -> RawState {
    let k1 = vector_field(&s0, u, params, rate_dynamics);
    let k2 = vector_field(&s0.advanced(&k1, dt * 0.5), u, params, rate_dynamics);
    let k3 = vector_field(&s0.advanced(&k2, dt * 0.5), u, params, rate_dynamics);
    let k4 = vector_field(&s0.advanced(&k3, dt), u, params, rate_dynamics);
    let sixth = dt / 6.0;
    RawState {
        p: s0.p + (k1.p + k2.p * 2.0 + k3.p * 2.0 + k4.p) * sixth,
        q: s0.q + (k1.q + k2.q * 2.0 + k3.q * 2.0 + k4.q) * sixth,
        v: s0.v + (k1.v + k2.v * 2.0 + k3.v * 2.0 + k4.v) * sixth,
        w: s0.w + (k1.w + k2.w * 2.0 + k3.w * 2.0 + k4.w) * sixth,
    }
}

fn step_checked(
    s: &QuadState,
    u: &Action,
    dt: f64,
    params: &PlatformParams,
    max_dt: f64,
    rate_dynamics: bool,
) -> Result<QuadState> {
    if !(dt > 0.0 && dt <= max_dt) {
        return Err(Error::InvalidTimestep { dt, max: max_dt });
    }
    if !s.is_finite() || !u.is_finite() {
        return Err(Error::NonFinite { context: "dynamics step input" });
    }
    if !u.within_bounds(params) {
        return Err(Error::ActionOutOfBounds {
            c: u.c,
            w_norm: u.w_cmd.amax(),
        });
    }
    let s0 = RawState {
        p: s.p,
        q: *s.q.quaternion(),
        v: s.v,
        w: if rate_dynamics { s.w } else { u.w_cmd },
    };
    let s1 = rk4(s0, u, dt, params, rate_dynamics);
    Ok(QuadState {
        p: s1.p,
        q: UnitQuaternion::new_unchecked(s1.q / s1.q.norm()),
        v: s1.v,
        w: if rate_dynamics { s1.w } else { u.w_cmd },
    })
}

/// One RK4 step of the full model, with torques from [`rate_controller`]
/// evaluated at every stage. The quaternion is renormalized after the step.
pub fn full_step(s: &QuadState, u: &Action, dt: f64, params: &PlatformParams) -> Result<QuadState> {
    step_checked(s, u, dt, params, MAX_FULL_DT, true)
}

/// One RK4 step of the simplified model: body rates follow the command
/// instantly, everything else as [`full_step`].
pub fn simplified_step(
    s: &QuadState,
    u: &Action,
    dt: f64,
    params: &PlatformParams,
) -> Result<QuadState> {
    step_checked(s, u, dt, params, MAX_SIMPLIFIED_DT, false)
}

/// Side length of the cubical flying space, meters.
pub const FLYING_SPACE_SIDE: f64 = 70.0;

/// True while `p` is inside the flying space: the cube spans
/// `[-35, 35]` in x and y and `[0, 70]` in z (ground at z = 0).
pub fn in_flying_space(p: &Vector3<f64>) -> bool {
    let h = FLYING_SPACE_SIDE / 2.0;
    p.x.abs() <= h && p.y.abs() <= h && p.z >= 0.0 && p.z <= FLYING_SPACE_SIDE
}
