//! Privileged receding-horizon expert.
//!
//! Tracks a reference window on the simplified model by iterated
//! Gauss-Newton: linearize the rollout around the current action sequence,
//! solve the resulting quadratic in action deltas with an LQR backward
//! recursion, clamp to actuator bounds, and accept steps through a
//! backtracking line search so the cost never increases.

use nalgebra::{SMatrix, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{simplified_step, Action, PlatformParams, QuadState};
use crate::error::{Error, Result};
use crate::trajectory::ReferenceTrajectory;

const NX: usize = 10; // p(3) v(3) q(4)
const NU: usize = 4; // c w(3)
const NE: usize = 9; // position, velocity, attitude errors

/// Solver settings and cost weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    /// Horizon length in steps (window holds this many reference states).
    pub horizon: usize,
    /// Horizon step, seconds.
    pub dt: f64,
    pub q_pos: f64,
    pub q_vel: f64,
    pub q_att: f64,
    pub r_thrust: f64,
    pub r_rates: f64,
    pub max_iters: usize,
    /// Relative cost-improvement threshold that stops the iteration.
    pub convergence_tol: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.05,
            q_pos: 100.0,
            q_vel: 20.0,
            q_att: 5.0,
            r_thrust: 0.5,
            r_rates: 0.5,
            max_iters: 6,
            convergence_tol: 1e-6,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::Config { reason: "mpc horizon must be >= 2".into() });
        }
        let weights =
            [self.q_pos, self.q_vel, self.q_att, self.r_thrust, self.r_rates];
        if weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Config { reason: "mpc weights must be non-negative".into() });
        }
        Ok(())
    }
}

/// Reference window: `horizon` states and feedforward actions at the MPC
/// step, interpolated from the 50 Hz reference.
#[derive(Debug, Clone)]
pub struct RefWindow {
    pub states: Vec<QuadState>,
    pub actions: Vec<Action>,
}

impl RefWindow {
    /// Window starting at trajectory time `t0`. States are sampled on the
    /// step grid; feedforward actions at step midpoints, where a zero-order
    /// hold over the step is second-order accurate.
    pub fn from_trajectory(traj: &ReferenceTrajectory, t0: f64, cfg: &MpcConfig) -> Self {
        let mut states = Vec::with_capacity(cfg.horizon);
        let mut actions = Vec::with_capacity(cfg.horizon);
        for i in 0..cfg.horizon {
            let (s, _) = traj.sample_at(t0 + i as f64 * cfg.dt);
            let (_, u) = traj.sample_at(t0 + (i as f64 + 0.5) * cfg.dt);
            states.push(s);
            actions.push(u);
        }
        Self { states, actions }
    }
}

/// Result of one receding-horizon solve.
#[derive(Debug, Clone)]
pub struct MpcSolution {
    /// Optimized action sequence, `horizon - 1` entries.
    pub actions: Vec<Action>,
    /// Predicted states under those actions, `horizon` entries.
    pub predicted_states: Vec<QuadState>,
    pub cost: f64,
    /// Accepted Gauss-Newton iterations.
    pub iterations: usize,
    /// Cost after the initial rollout and after each accepted iteration.
    pub cost_trace: Vec<f64>,
}

fn pack(s: &QuadState) -> SVector<f64, NX> {
    let q = s.q.quaternion();
    SVector::<f64, NX>::from_column_slice(&[
        s.p.x, s.p.y, s.p.z, s.v.x, s.v.y, s.v.z, q.w, q.i, q.j, q.k,
    ])
}

fn unpack(x: &SVector<f64, NX>, w: Vector3<f64>) -> QuadState {
    let q = nalgebra::Quaternion::new(x[6], x[7], x[8], x[9]);
    QuadState {
        p: Vector3::new(x[0], x[1], x[2]),
        v: Vector3::new(x[3], x[4], x[5]),
        q: UnitQuaternion::new_unchecked(q / q.norm()),
        w,
    }
}

fn step(x: &SVector<f64, NX>, u: &SVector<f64, NU>, dt: f64, params: &PlatformParams) -> SVector<f64, NX> {
    let s = unpack(x, Vector3::new(u[1], u[2], u[3]));
    let a = Action::new(u[0], Vector3::new(u[1], u[2], u[3]));
    // Bounds were applied by the caller; the clamp here only guards
    // float-rounding excursions.
    let a = a.clamped(params);
    let next = simplified_step(&s, &a, dt, params).expect("simplified step in mpc");
    pack(&next)
}

/// Stage error: position, velocity, and the vector part of the attitude
/// error quaternion `q_ref^-1 ⊗ q`.
fn stage_error(x: &SVector<f64, NX>, r: &QuadState) -> SVector<f64, NE> {
    let mut e = SVector::<f64, NE>::zeros();
    for i in 0..3 {
        e[i] = x[i] - r.p[i];
        e[3 + i] = x[3 + i] - r.v[i];
    }
    let q = nalgebra::Quaternion::new(x[6], x[7], x[8], x[9]);
    let q = q / q.norm();
    let err = r.q.quaternion().conjugate() * q;
    // Take the hemisphere closest to identity.
    let sign = if err.w < 0.0 { -1.0 } else { 1.0 };
    e[6] = sign * err.i;
    e[7] = sign * err.j;
    e[8] = sign * err.k;
    e
}

struct Weights {
    state: SVector<f64, NE>,
    action: SVector<f64, NU>,
}

impl Weights {
    fn new(cfg: &MpcConfig) -> Self {
        let mut state = SVector::<f64, NE>::zeros();
        for i in 0..3 {
            state[i] = cfg.q_pos;
            state[3 + i] = cfg.q_vel;
            state[6 + i] = cfg.q_att;
        }
        let action = SVector::<f64, NU>::from_column_slice(&[
            cfg.r_thrust,
            cfg.r_rates,
            cfg.r_rates,
            cfg.r_rates,
        ]);
        Self { state, action }
    }
}

fn rollout(
    x0: &SVector<f64, NX>,
    actions: &[SVector<f64, NU>],
    dt: f64,
    params: &PlatformParams,
) -> Vec<SVector<f64, NX>> {
    let mut xs = Vec::with_capacity(actions.len() + 1);
    xs.push(*x0);
    for u in actions {
        let next = step(xs.last().unwrap(), u, dt, params);
        xs.push(next);
    }
    xs
}

fn total_cost(
    xs: &[SVector<f64, NX>],
    actions: &[SVector<f64, NU>],
    window: &RefWindow,
    w: &Weights,
) -> f64 {
    let mut cost = 0.0;
    for (k, x) in xs.iter().enumerate().skip(1) {
        let e = stage_error(x, &window.states[k]);
        cost += e.component_mul(&w.state).dot(&e);
    }
    for (k, u) in actions.iter().enumerate() {
        let uff = action_vec(&window.actions[k]);
        let du = u - uff;
        cost += du.component_mul(&w.action).dot(&du);
    }
    cost
}

fn action_vec(a: &Action) -> SVector<f64, NU> {
    SVector::<f64, NU>::from_column_slice(&[a.c, a.w_cmd.x, a.w_cmd.y, a.w_cmd.z])
}

fn vec_action(u: &SVector<f64, NU>) -> Action {
    Action::new(u[0], Vector3::new(u[1], u[2], u[3]))
}

fn clamp_vec(u: &SVector<f64, NU>, params: &PlatformParams) -> SVector<f64, NU> {
    let m = params.omega_max;
    SVector::<f64, NU>::from_column_slice(&[
        u[0].clamp(0.0, params.c_max()),
        u[1].clamp(-m, m),
        u[2].clamp(-m, m),
        u[3].clamp(-m, m),
    ])
}

/// Central-difference Jacobians of the one-step dynamics.
fn linearize(
    x: &SVector<f64, NX>,
    u: &SVector<f64, NU>,
    dt: f64,
    params: &PlatformParams,
) -> (SMatrix<f64, NX, NX>, SMatrix<f64, NX, NU>) {
    let h = 1e-6;
    let mut a = SMatrix::<f64, NX, NX>::zeros();
    for i in 0..NX {
        let mut xp = *x;
        let mut xm = *x;
        xp[i] += h;
        xm[i] -= h;
        let col = (step(&xp, u, dt, params) - step(&xm, u, dt, params)) / (2.0 * h);
        a.set_column(i, &col);
    }
    let mut b = SMatrix::<f64, NX, NU>::zeros();
    for i in 0..NU {
        let mut up = *u;
        let mut um = *u;
        up[i] += h;
        um[i] -= h;
        let col = (step(x, &up, dt, params) - step(x, &um, dt, params)) / (2.0 * h);
        b.set_column(i, &col);
    }
    (a, b)
}

/// Jacobian of the stage error w.r.t. the packed state.
fn error_jacobian(x: &SVector<f64, NX>, r: &QuadState) -> SMatrix<f64, NE, NX> {
    let mut jac = SMatrix::<f64, NE, NX>::zeros();
    for i in 0..6 {
        jac[(i, i)] = 1.0;
    }
    // vec(q_ref^-1 ⊗ q) is linear in q; differentiate through the
    // normalization numerically for robustness.
    let h = 1e-7;
    for i in 0..4 {
        let mut xp = *x;
        let mut xm = *x;
        xp[6 + i] += h;
        xm[6 + i] -= h;
        let col = (stage_error(&xp, r) - stage_error(&xm, r)) / (2.0 * h);
        for row in 6..NE {
            jac[(row, 6 + i)] = col[row];
        }
    }
    jac
}

/// Solve the tracking problem from state `s` against the given window.
///
/// `warm` seeds the action sequence (shifted previous solution); otherwise
/// the reference feedforward is used.
pub fn solve_mpc(
    s: &QuadState,
    window: &RefWindow,
    cfg: &MpcConfig,
    params: &PlatformParams,
    warm: Option<&[Action]>,
) -> Result<MpcSolution> {
    cfg.validate()?;
    if window.states.len() != cfg.horizon {
        return Err(Error::AlignmentError { expected: cfg.horizon, got: window.states.len() });
    }
    if !s.is_finite() {
        return Err(Error::NonFinite { context: "mpc initial state" });
    }
    let n_act = cfg.horizon - 1;
    let w = Weights::new(cfg);
    let x0 = pack(s);

    let mut actions: Vec<SVector<f64, NU>> = match warm {
        Some(seq) if seq.len() == n_act => seq.iter().map(action_vec).collect(),
        _ => window.actions[..n_act].iter().map(action_vec).collect(),
    };
    for u in actions.iter_mut() {
        *u = clamp_vec(u, params);
    }

    let mut xs = rollout(&x0, &actions, cfg.dt, params);
    let mut cost = total_cost(&xs, &actions, window, &w);
    let mut cost_trace = vec![cost];
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        // Backward LQR pass on the linearized, quadraticized problem.
        let mut ks: Vec<SVector<f64, NU>> = vec![SVector::zeros(); n_act];
        let mut gains: Vec<SMatrix<f64, NU, NX>> = vec![SMatrix::zeros(); n_act];

        let term_err = stage_error(&xs[n_act], &window.states[n_act]);
        let term_jac = error_jacobian(&xs[n_act], &window.states[n_act]);
        let wq = SMatrix::<f64, NE, NE>::from_diagonal(&w.state);
        let mut v_x: SVector<f64, NX> = term_jac.transpose() * (wq * term_err);
        let mut v_xx: SMatrix<f64, NX, NX> = term_jac.transpose() * wq * term_jac;

        let wr = SMatrix::<f64, NU, NU>::from_diagonal(&w.action);
        let mut failed = false;
        for k in (0..n_act).rev() {
            let (a, b) = linearize(&xs[k], &actions[k], cfg.dt, params);
            let du = actions[k] - action_vec(&window.actions[k]);
            let mut q_x = a.transpose() * v_x;
            let mut q_xx = a.transpose() * v_xx * a;
            if k > 0 {
                let e = stage_error(&xs[k], &window.states[k]);
                let jac = error_jacobian(&xs[k], &window.states[k]);
                q_x += jac.transpose() * (wq * e);
                q_xx += jac.transpose() * wq * jac;
            }
            let q_u = wr * du + b.transpose() * v_x;
            let q_uu = wr + b.transpose() * v_xx * b;
            let q_ux = b.transpose() * v_xx * a;
            let Some(chol) = q_uu.cholesky() else {
                failed = true;
                break;
            };
            let kk = -chol.solve(&q_u);
            let gain = -chol.solve(&q_ux);
            v_x = q_x + gain.transpose() * (q_uu * kk) + gain.transpose() * q_u + q_ux.transpose() * kk;
            v_xx = q_xx
                + gain.transpose() * q_uu * gain
                + gain.transpose() * q_ux
                + q_ux.transpose() * gain;
            ks[k] = kk;
            gains[k] = gain;
        }
        if failed {
            break;
        }

        // Forward pass with backtracking on the step size.
        let mut improved = false;
        for alpha in [1.0, 0.5, 0.25, 0.125] {
            let mut new_actions = actions.clone();
            let mut new_xs = Vec::with_capacity(n_act + 1);
            new_xs.push(x0);
            for k in 0..n_act {
                let dx = new_xs[k] - xs[k];
                let u = actions[k] + ks[k] * alpha + gains[k] * dx;
                let u = clamp_vec(&u, params);
                new_actions[k] = u;
                let next = step(&new_xs[k], &u, cfg.dt, params);
                new_xs.push(next);
            }
            let new_cost = total_cost(&new_xs, &new_actions, window, &w);
            if new_cost < cost {
                let rel = (cost - new_cost) / cost.max(1e-12);
                actions = new_actions;
                xs = new_xs;
                cost = new_cost;
                cost_trace.push(cost);
                iterations += 1;
                improved = true;
                if rel < cfg.convergence_tol {
                    return Ok(finish(actions, xs, cost, iterations, cost_trace));
                }
                break;
            }
        }
        if !improved {
            break;
        }
    }
    if !cost.is_finite() {
        return Err(Error::Diverged { context: "mpc cost", value: cost });
    }
    Ok(finish(actions, xs, cost, iterations, cost_trace))
}

fn finish(
    actions: Vec<SVector<f64, NU>>,
    xs: Vec<SVector<f64, NX>>,
    cost: f64,
    iterations: usize,
    cost_trace: Vec<f64>,
) -> MpcSolution {
    let acts: Vec<Action> = actions.iter().map(vec_action).collect();
    let states = xs
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let w = if k < acts.len() { acts[k].w_cmd } else { Vector3::zeros() };
            unpack(x, w)
        })
        .collect();
    MpcSolution { actions: acts, predicted_states: states, cost, iterations, cost_trace }
}

/// Expert action at trajectory time `t0` (seconds): fresh solve, first
/// action of the optimized sequence. Pure function of its arguments.
pub fn expert_action_at(
    s: &QuadState,
    traj: &ReferenceTrajectory,
    t0: f64,
    cfg: &MpcConfig,
    params: &PlatformParams,
) -> Result<Action> {
    let window = RefWindow::from_trajectory(traj, t0, cfg);
    let sol = solve_mpc(s, &window, cfg, params, None)?;
    Ok(sol.actions[0])
}

/// Expert action at reference sample `k` (50 Hz index, clamped past the end).
pub fn expert_action(
    s: &QuadState,
    traj: &ReferenceTrajectory,
    k: usize,
    cfg: &MpcConfig,
    params: &PlatformParams,
) -> Result<Action> {
    expert_action_at(s, traj, k as f64 * crate::trajectory::SAMPLE_DT, cfg, params)
}

/// Receding-horizon controller with warm starting between solves.
pub struct MpcExpert {
    pub cfg: MpcConfig,
    pub params: PlatformParams,
    warm: Option<(f64, Vec<Action>)>,
}

impl MpcExpert {
    pub fn new(cfg: MpcConfig, params: PlatformParams) -> Self {
        Self { cfg, params, warm: None }
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    /// Control at trajectory time `t`, warm-started from the previous solve
    /// shifted by however many horizon steps have elapsed.
    pub fn control(
        &mut self,
        s: &QuadState,
        traj: &ReferenceTrajectory,
        t: f64,
    ) -> Result<MpcSolution> {
        let window = RefWindow::from_trajectory(traj, t, &self.cfg);
        let shifted = self.warm.take().map(|(t_prev, mut seq)| {
            let shift = ((t - t_prev) / self.cfg.dt).floor().max(0.0) as usize;
            if shift > 0 && shift < seq.len() {
                seq.drain(..shift);
                let last = *seq.last().unwrap();
                seq.extend(std::iter::repeat(last).take(shift));
            }
            seq
        });
        let sol = solve_mpc(s, &window, &self.cfg, &self.params, shifted.as_deref())?;
        self.warm = Some((t, sol.actions.clone()));
        Ok(sol)
    }
}
