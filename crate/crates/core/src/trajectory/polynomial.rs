//! Constrained polynomial segments in flat-output space.
//!
//! Position components are order-7 polynomials pinned down to the 3rd
//! derivative at both ends; yaw is order 2 pinned to the values at both ends
//! and the rate at the start. Segment durations come from a bisection that
//! checks actuator limits on a dense sampling of the flatness transform.

use nalgebra::{SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::flat::{flatness_transform, wrap_angle, FlatOutput};

/// Per-axis polynomial coefficients (constant term first) and duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialSegment {
    /// x, y, z coefficient vectors, 8 each.
    pub pos_coeffs: [[f64; 8]; 3],
    /// Yaw coefficients, 3.
    pub yaw_coeffs: [f64; 3],
    /// Duration, seconds.
    pub t_m: f64,
}

/// Limits enforced while searching for the shortest feasible duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentLimits {
    /// Speed bound, m/s.
    pub v_max: f64,
    /// Collective-thrust bound, m/s².
    pub c_max: f64,
    /// Per-axis body-rate bound, rad/s.
    pub omega_max: f64,
}

impl Default for SegmentLimits {
    fn default() -> Self {
        Self { v_max: 5.0, c_max: 4.0 * 9.81, omega_max: 12.0 }
    }
}

/// Evaluate `sum_j a_j t^j` and derivatives 1..=order at `t`.
fn eval_poly<const N: usize>(coeffs: &[f64; N], t: f64, out: &mut [f64]) {
    for (k, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        // Horner on the k-th derivative.
        for j in (k..N).rev() {
            let mut fac = 1.0;
            for m in 0..k {
                fac *= (j - m) as f64;
            }
            acc = acc * t + fac * coeffs[j];
        }
        *slot = acc;
    }
}

impl PolynomialSegment {
    /// Flat output of the segment at local time `t` in `[0, t_m]`.
    pub fn flat_output(&self, t: f64) -> FlatOutput {
        let mut pos = [Vector3::zeros(); 5];
        for (axis, coeffs) in self.pos_coeffs.iter().enumerate() {
            let mut d = [0.0; 5];
            eval_poly(coeffs, t, &mut d);
            for (k, v) in d.iter().enumerate() {
                pos[k][axis] = *v;
            }
        }
        let mut yaw = [0.0; 3];
        eval_poly(&self.yaw_coeffs, t, &mut yaw);
        yaw[0] = wrap_angle(yaw[0]);
        FlatOutput { pos, yaw }
    }
}

/// Row of the constraint matrix: k-th derivative of (1, t, .., t^7) at `t`.
fn basis_row(k: usize, t: f64) -> SVector<f64, 8> {
    let mut row = SVector::<f64, 8>::zeros();
    for j in k..8 {
        let mut fac = 1.0;
        for m in 0..k {
            fac *= (j - m) as f64;
        }
        row[j] = fac * t.powi((j - k) as i32);
    }
    row
}

/// Solve the two-point boundary-value problem for one segment.
///
/// Position axes match value/velocity/acceleration/jerk at both ends; yaw
/// matches the values at both ends and the rate at the start. Yaw end values
/// are taken on the shortest angular route.
pub fn solve_polynomial_segment(
    bc_start: &FlatOutput,
    bc_end: &FlatOutput,
    t_m: f64,
) -> Result<PolynomialSegment> {
    if !(t_m > 0.0) || !t_m.is_finite() {
        return Err(Error::InfeasibleSegment { reason: format!("duration {t_m}") });
    }
    let mut mat = SMatrix::<f64, 8, 8>::zeros();
    for k in 0..4 {
        mat.set_row(k, &basis_row(k, 0.0).transpose());
        mat.set_row(4 + k, &basis_row(k, t_m).transpose());
    }
    let lu = mat.lu();
    let mut pos_coeffs = [[0.0; 8]; 3];
    for axis in 0..3 {
        let mut rhs = SVector::<f64, 8>::zeros();
        for k in 0..4 {
            rhs[k] = bc_start.pos[k][axis];
            rhs[4 + k] = bc_end.pos[k][axis];
        }
        let sol = lu.solve(&rhs).ok_or_else(|| Error::InfeasibleSegment {
            reason: format!("singular boundary system at t_m={t_m}"),
        })?;
        for j in 0..8 {
            pos_coeffs[axis][j] = sol[j];
        }
    }

    let yaw0 = bc_start.yaw[0];
    let dyaw = wrap_angle(bc_end.yaw[0] - yaw0);
    let rate0 = bc_start.yaw[1];
    let yaw_coeffs = [yaw0, rate0, (dyaw - rate0 * t_m) / (t_m * t_m)];

    Ok(PolynomialSegment { pos_coeffs, yaw_coeffs, t_m })
}

/// Spacing of the feasibility sweep, seconds.
pub const FEASIBILITY_DT: f64 = 0.005;
/// Duration search floor, seconds.
pub const T_FLOOR: f64 = 0.1;
/// Duration search ceiling, seconds.
pub const T_CEIL: f64 = 30.0;

fn segment_feasible(seg: &PolynomialSegment, limits: &SegmentLimits) -> bool {
    // Boundary conditions are allowed to sit exactly on a limit.
    let tol = 1e-9;
    let steps = (seg.t_m / FEASIBILITY_DT).ceil() as usize;
    for i in 0..=steps {
        let t = (i as f64 * FEASIBILITY_DT).min(seg.t_m);
        let fo = seg.flat_output(t);
        if fo.velocity().norm() > limits.v_max + tol {
            return false;
        }
        match flatness_transform(&fo) {
            Ok((_, action)) => {
                if action.c > limits.c_max + tol || action.w_cmd.amax() > limits.omega_max + tol {
                    return false;
                }
            }
            Err(_) => return false,
        }
    }
    true
}

/// Shortest segment duration (1 ms resolution) whose dense sampling respects
/// the limits, searched by bisection over `[0.1 s, 30 s]`.
pub fn minimize_segment_time(
    bc_start: &FlatOutput,
    bc_end: &FlatOutput,
    limits: &SegmentLimits,
) -> Result<PolynomialSegment> {
    if limits.c_max <= crate::dynamics::GRAVITY {
        return Err(Error::Config {
            reason: "segment limits must allow hover (c_max > g)".into(),
        });
    }
    let feasible_ms = |ms: u64| -> Result<bool> {
        let seg = solve_polynomial_segment(bc_start, bc_end, ms as f64 * 1e-3)?;
        Ok(segment_feasible(&seg, limits))
    };

    let floor_ms = (T_FLOOR * 1e3) as u64;
    let ceil_ms = (T_CEIL * 1e3) as u64;
    if feasible_ms(floor_ms)? {
        return solve_polynomial_segment(bc_start, bc_end, T_FLOOR);
    }
    // With non-rest boundary conditions the feasible durations form a window,
    // not a half-line (very long high-order segments swing wide), so scan
    // coarsely for the first feasible duration, then bisect down to 1 ms.
    let coarse_ms = 100;
    let mut lo = floor_ms;
    let mut hi = None;
    let mut t = floor_ms + coarse_ms;
    while t <= ceil_ms {
        if feasible_ms(t)? {
            hi = Some(t);
            break;
        }
        lo = t;
        t += coarse_ms;
    }
    let Some(mut hi) = hi else {
        return Err(Error::NoFeasibleTime { t_max: T_CEIL });
    };
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if feasible_ms(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    solve_polynomial_segment(bc_start, bc_end, hi as f64 * 1e-3)
}
