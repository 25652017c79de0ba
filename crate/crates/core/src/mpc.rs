//! Finite-horizon nonlinear MPC over the kinematic model.
//!
//! Prediction is forward Euler (no attitude clamping inside prediction; the
//! clamp is a plant behavior). The cost is the three-term quadratic
//!
//! ```text
//! J = sum_{j=1..N} (x_d - x_j)' Qx (x_d - x_j)
//!   + (u_d - u_{j-1})' Qu (u_d - u_{j-1})
//!   + (u_{j-1} - u_{j-2})' Qdu (u_{j-1} - u_{j-2})     with u_{-1} = u_prev
//! ```
//!
//! over diagonal weights, minimized by projected gradient descent with Armijo
//! backtracking under the box `T in [0, T_max]`, `|phi_d| <= phi_max`,
//! `|theta_d| <= theta_max`. The gradient is the exact discrete adjoint of the
//! Euler rollout.

use crate::dynamics::{
    self, ControlInput, DynamicsError, ModelParams, UavState, thrust_direction,
};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The N inputs `u_0..u_{N-1}` of one horizon.
pub type InputSequence = Vec<ControlInput>;
/// The N predicted states `x_1..x_N` of one horizon.
pub type PredictedTrajectory = Vec<UavState>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("{what} has length {actual}, expected {expected}")]
    LengthMismatch { what: &'static str, expected: usize, actual: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("solver reached a non-finite cost after {iterations} iterations")]
    Diverged { iterations: usize, last_finite: InputSequence },
}

/// Desired state for one prediction step: position and velocity targets with
/// an implicit zero roll/pitch reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl ReferencePoint {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>) -> Self {
        Self { position, velocity }
    }

    /// The full desired state `x_d` (zero attitude).
    pub fn desired_state(&self) -> UavState {
        UavState {
            position: self.position,
            velocity: self.velocity,
            roll: 0.0,
            pitch: 0.0,
        }
    }
}

/// Input box constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    /// Thrust range is `[0, thrust_max]`, m/s^2.
    pub thrust_max: f64,
    /// Roll/pitch reference range is symmetric, radians.
    pub roll_max: f64,
    pub pitch_max: f64,
}

impl Default for InputBounds {
    fn default() -> Self {
        Self { thrust_max: 20.0, roll_max: 0.4, pitch_max: 0.4 }
    }
}

impl InputBounds {
    /// Euclidean projection onto the box.
    pub fn project(&self, u: ControlInput) -> ControlInput {
        ControlInput {
            thrust: u.thrust.clamp(0.0, self.thrust_max),
            roll_ref: u.roll_ref.clamp(-self.roll_max, self.roll_max),
            pitch_ref: u.pitch_ref.clamp(-self.pitch_max, self.pitch_max),
        }
    }

    pub fn contains(&self, u: &ControlInput) -> bool {
        (0.0..=self.thrust_max).contains(&u.thrust)
            && u.roll_ref.abs() <= self.roll_max
            && u.pitch_ref.abs() <= self.pitch_max
    }
}

/// Projected-gradient solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub max_iters: usize,
    /// Convergence threshold on the projected-gradient infinity norm,
    /// `max_i |u_i - proj(u_i - g_i)|`.
    pub tolerance: f64,
    pub initial_step: f64,
    pub backtrack_factor: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    pub max_backtracks: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_iters: 60,
            tolerance: 1e-4,
            initial_step: 1.0,
            backtrack_factor: 0.5,
            armijo_c: 1e-4,
            max_backtracks: 40,
        }
    }
}

/// Horizon length, sampling time, diagonal weights, steady-state input, input
/// box, and solver settings for one controller.
///
/// Weight order for `state_weights` follows the state layout:
/// `[p_x, p_y, p_z, v_x, v_y, v_z, roll, pitch]`; input weights follow
/// `[thrust, roll_ref, pitch_ref]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    pub state_weights: [f64; 8],
    pub input_weights: [f64; 3],
    pub rate_weights: [f64; 3],
    pub steady_input: ControlInput,
    pub bounds: InputBounds,
    pub solver: SolverParams,
}

impl MpcConfig {
    /// Default controller for the given model: 100-step horizon at 100 Hz,
    /// representative diagonal weights, hover steady input.
    pub fn defaults_for(params: &ModelParams) -> Self {
        Self {
            horizon: 100,
            dt: 0.01,
            state_weights: [8.0, 8.0, 8.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            input_weights: [1.0, 5.0, 5.0],
            rate_weights: [2.0, 10.0, 10.0],
            steady_input: params.hover_input(),
            bounds: InputBounds::default(),
            solver: SolverParams::default(),
        }
    }
}

/// Solver output: the optimized sequence, its first element (the command that
/// gets published), final cost, iteration count, wall-clock solve time in
/// seconds, and the accepted-iterate cost trace (non-increasing).
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub inputs: InputSequence,
    pub first_input: ControlInput,
    pub cost: f64,
    pub iterations: usize,
    pub solve_time: f64,
    pub cost_trace: Vec<f64>,
}

fn check_len(what: &'static str, actual: usize, expected: usize) -> Result<(), MpcError> {
    if actual != expected {
        return Err(MpcError::LengthMismatch { what, expected, actual });
    }
    Ok(())
}

/// Forward-Euler rollout `x_1..x_N` from `x0` under `u_seq` (unclamped).
pub fn predict(
    x0: &UavState,
    u_seq: &[ControlInput],
    cfg: &MpcConfig,
    params: &ModelParams,
) -> Result<PredictedTrajectory, MpcError> {
    check_len("input sequence", u_seq.len(), cfg.horizon)?;
    let mut traj = Vec::with_capacity(u_seq.len());
    let mut x = *x0;
    for u in u_seq {
        x = dynamics::step_euler_unclamped(&x, u, params, cfg.dt)?;
        traj.push(x);
    }
    Ok(traj)
}

fn quad3(w: &[f64; 3], d: Vector3<f64>) -> f64 {
    w[0] * d.x * d.x + w[1] * d.y * d.y + w[2] * d.z * d.z
}

fn input_delta(a: &ControlInput, b: &ControlInput) -> Vector3<f64> {
    Vector3::new(a.thrust - b.thrust, a.roll_ref - b.roll_ref, a.pitch_ref - b.pitch_ref)
}

fn stage_cost(x: &UavState, r: &ReferencePoint, cfg: &MpcConfig) -> f64 {
    let w = &cfg.state_weights;
    let ep = r.position - x.position;
    let ev = r.velocity - x.velocity;
    w[0] * ep.x * ep.x
        + w[1] * ep.y * ep.y
        + w[2] * ep.z * ep.z
        + w[3] * ev.x * ev.x
        + w[4] * ev.y * ev.y
        + w[5] * ev.z * ev.z
        + w[6] * x.roll * x.roll
        + w[7] * x.pitch * x.pitch
}

/// Total cost of `u_seq` from `x0` against per-step references. `u_prev` is
/// the previously applied command, anchoring the first rate term.
pub fn total_cost(
    x0: &UavState,
    u_seq: &[ControlInput],
    refs: &[ReferencePoint],
    u_prev: &ControlInput,
    cfg: &MpcConfig,
    params: &ModelParams,
) -> Result<f64, MpcError> {
    check_len("reference window", refs.len(), cfg.horizon)?;
    let traj = predict(x0, u_seq, cfg, params)?;
    let mut cost = 0.0;
    for j in 0..cfg.horizon {
        cost += stage_cost(&traj[j], &refs[j], cfg);
        cost += quad3(&cfg.input_weights, input_delta(&u_seq[j], &cfg.steady_input));
        let prev = if j == 0 { u_prev } else { &u_seq[j - 1] };
        cost += quad3(&cfg.rate_weights, input_delta(&u_seq[j], prev));
    }
    Ok(cost)
}

/// Costate over the state layout (position, velocity, roll, pitch).
#[derive(Clone, Copy)]
struct Costate {
    p: Vector3<f64>,
    v: Vector3<f64>,
    roll: f64,
    pitch: f64,
}

/// dJ/dx_j of the stage cost: -2 Qx (r - x) per component.
fn stage_cost_grad(x: &UavState, r: &ReferencePoint, cfg: &MpcConfig) -> Costate {
    let w = &cfg.state_weights;
    let ep = r.position - x.position;
    let ev = r.velocity - x.velocity;
    Costate {
        p: Vector3::new(-2.0 * w[0] * ep.x, -2.0 * w[1] * ep.y, -2.0 * w[2] * ep.z),
        v: Vector3::new(-2.0 * w[3] * ev.x, -2.0 * w[4] * ev.y, -2.0 * w[5] * ev.z),
        roll: 2.0 * w[6] * x.roll,
        pitch: 2.0 * w[7] * x.pitch,
    }
}

/// (df/dx)' lambda at (x, u): the velocity block feeds position, attitude
/// feeds velocity through the thrust direction partials, damping and the
/// first-order attitude loops feed back into themselves.
fn dynamics_vjp_state(x: &UavState, u: &ControlInput, params: &ModelParams, lam: &Costate) -> Costate {
    let (sin_roll, cos_roll) = x.roll.sin_cos();
    let (sin_pitch, cos_pitch) = x.pitch.sin_cos();
    let ddir_droll = Vector3::new(-sin_pitch * sin_roll, -cos_roll, -cos_pitch * sin_roll);
    let ddir_dpitch = Vector3::new(cos_pitch * cos_roll, 0.0, -sin_pitch * cos_roll);
    Costate {
        p: Vector3::zeros(),
        v: lam.p - params.damping.component_mul(&lam.v),
        roll: u.thrust * ddir_droll.dot(&lam.v) - lam.roll / params.roll_tau,
        pitch: u.thrust * ddir_dpitch.dot(&lam.v) - lam.pitch / params.pitch_tau,
    }
}

/// (df/du)' lambda at (x, u), as (d/dthrust, d/droll_ref, d/dpitch_ref).
fn dynamics_vjp_input(x: &UavState, params: &ModelParams, lam: &Costate) -> Vector3<f64> {
    Vector3::new(
        thrust_direction(x.roll, x.pitch).dot(&lam.v),
        params.roll_gain / params.roll_tau * lam.roll,
        params.pitch_gain / params.pitch_tau * lam.pitch,
    )
}

/// Exact gradient of [`total_cost`] with respect to all N inputs, computed by
/// reverse accumulation through the Euler rollout (discrete adjoint). Element
/// i is (dJ/dthrust_i, dJ/droll_ref_i, dJ/dpitch_ref_i).
pub fn cost_gradient(
    x0: &UavState,
    u_seq: &[ControlInput],
    refs: &[ReferencePoint],
    u_prev: &ControlInput,
    cfg: &MpcConfig,
    params: &ModelParams,
) -> Result<Vec<Vector3<f64>>, MpcError> {
    check_len("reference window", refs.len(), cfg.horizon)?;
    let n = cfg.horizon;
    let traj = predict(x0, u_seq, cfg, params)?;
    // states[j] = x_j, j = 0..N.
    let state_at = |j: usize| if j == 0 { x0 } else { &traj[j - 1] };

    let mut grad = vec![Vector3::zeros(); n];

    // Backward costate sweep: lambda_j = c_j + (I + dt J_x)' lambda_{j+1},
    // harvesting dt J_u' lambda_j into the gradient of u_{j-1} as we pass.
    let mut lam_next: Option<Costate> = None;
    for j in (1..=n).rev() {
        let mut lam = stage_cost_grad(state_at(j), &refs[j - 1], cfg);
        if let Some(next) = lam_next {
            let prop = dynamics_vjp_state(state_at(j), &u_seq[j], params, &next);
            lam.p += next.p + cfg.dt * prop.p;
            lam.v += next.v + cfg.dt * prop.v;
            lam.roll += next.roll + cfg.dt * prop.roll;
            lam.pitch += next.pitch + cfg.dt * prop.pitch;
        }
        grad[j - 1] += cfg.dt * dynamics_vjp_input(state_at(j - 1), params, &lam);
        lam_next = Some(lam);
    }

    // Input-deviation and rate terms.
    let qu = &cfg.input_weights;
    let qdu = &cfg.rate_weights;
    for i in 0..n {
        let du = input_delta(&u_seq[i], &cfg.steady_input);
        grad[i] += 2.0 * Vector3::new(qu[0] * du.x, qu[1] * du.y, qu[2] * du.z);
        let prev = if i == 0 { u_prev } else { &u_seq[i - 1] };
        let dr = input_delta(&u_seq[i], prev);
        grad[i] += 2.0 * Vector3::new(qdu[0] * dr.x, qdu[1] * dr.y, qdu[2] * dr.z);
        if i + 1 < n {
            let dn = input_delta(&u_seq[i + 1], &u_seq[i]);
            grad[i] -= 2.0 * Vector3::new(qdu[0] * dn.x, qdu[1] * dn.y, qdu[2] * dn.z);
        }
    }
    Ok(grad)
}

fn project_seq(u: &mut [ControlInput], bounds: &InputBounds) {
    for ui in u.iter_mut() {
        *ui = bounds.project(*ui);
    }
}

fn gradient_step(u: &[ControlInput], grad: &[Vector3<f64>], step: f64, bounds: &InputBounds) -> InputSequence {
    u.iter()
        .zip(grad)
        .map(|(ui, gi)| {
            bounds.project(ControlInput {
                thrust: ui.thrust - step * gi.x,
                roll_ref: ui.roll_ref - step * gi.y,
                pitch_ref: ui.pitch_ref - step * gi.z,
            })
        })
        .collect()
}

fn seq_inf_distance(a: &[ControlInput], b: &[ControlInput]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            (x.thrust - y.thrust)
                .abs()
                .max((x.roll_ref - y.roll_ref).abs())
                .max((x.pitch_ref - y.pitch_ref).abs())
        })
        .fold(0.0, f64::max)
}

fn descent_dot(grad: &[Vector3<f64>], from: &[ControlInput], to: &[ControlInput]) -> f64 {
    grad.iter()
        .zip(from.iter().zip(to))
        .map(|(g, (a, b))| g.dot(&input_delta(a, b)))
        .sum()
}

#[cfg(not(target_arch = "wasm32"))]
fn elapsed_seconds(t0: std::time::Instant) -> f64 {
    t0.elapsed().as_secs_f64()
}

/// Minimize [`total_cost`] over the input box by projected gradient descent
/// with Armijo backtracking. Deterministic: identical arguments produce a
/// bit-identical sequence. Accepted-iterate costs are non-increasing and every
/// iterate (including the returned one) is feasible.
pub fn solve(
    x0: &UavState,
    refs: &[ReferencePoint],
    warm_start: Option<&[ControlInput]>,
    u_prev: &ControlInput,
    cfg: &MpcConfig,
    params: &ModelParams,
) -> Result<MpcSolution, MpcError> {
    let n = cfg.horizon;
    if n == 0 {
        return Err(MpcError::LengthMismatch { what: "horizon", expected: 1, actual: 0 });
    }
    check_len("reference window", refs.len(), n)?;
    if let Some(w) = warm_start {
        check_len("warm start", w.len(), n)?;
    }
    #[cfg(not(target_arch = "wasm32"))]
    let t0 = std::time::Instant::now();

    let sp = &cfg.solver;
    let mut u: InputSequence = warm_start.map_or_else(|| vec![cfg.steady_input; n], <[_]>::to_vec);
    project_seq(&mut u, &cfg.bounds);

    let mut cost = total_cost(x0, &u, refs, u_prev, cfg, params)?;
    if !cost.is_finite() {
        return Err(MpcError::Diverged { iterations: 0, last_finite: u });
    }
    let mut cost_trace = vec![cost];
    let mut iterations = 0;

    for iter in 0..sp.max_iters {
        let grad = cost_gradient(x0, &u, refs, u_prev, cfg, params)?;
        if grad.iter().any(|g| !g.x.is_finite() || !g.y.is_finite() || !g.z.is_finite()) {
            return Err(MpcError::Diverged { iterations: iter, last_finite: u });
        }
        // Stationarity: fixed point of the unit-step projected gradient map.
        let unit_target = gradient_step(&u, &grad, 1.0, &cfg.bounds);
        if seq_inf_distance(&u, &unit_target) <= sp.tolerance {
            break;
        }

        let mut step = sp.initial_step;
        let mut accepted = false;
        for _ in 0..sp.max_backtracks {
            let candidate = gradient_step(&u, &grad, step, &cfg.bounds);
            let candidate_cost = total_cost(x0, &candidate, refs, u_prev, cfg, params)?;
            if candidate_cost.is_finite() {
                // g . (u - candidate) >= 0 for a projected gradient step, so
                // acceptance implies candidate_cost <= cost.
                let decrease = descent_dot(&grad, &u, &candidate);
                if candidate_cost <= cost - sp.armijo_c * decrease {
                    u = candidate;
                    cost = candidate_cost;
                    cost_trace.push(cost);
                    accepted = true;
                    break;
                }
            }
            step *= sp.backtrack_factor;
        }
        iterations = iter + 1;
        if !accepted {
            // Line search exhausted: the current iterate is as good as this
            // method gets; it is feasible and its cost is recorded.
            break;
        }
    }

    Ok(MpcSolution {
        first_input: u[0],
        cost,
        iterations,
        #[cfg(not(target_arch = "wasm32"))]
        solve_time: elapsed_seconds(t0),
        #[cfg(target_arch = "wasm32")]
        solve_time: 0.0,
        cost_trace,
        inputs: u,
    })
}

/// Shift-by-one warm start: drop the first input, duplicate the last.
pub fn shifted_warm_start(previous: &[ControlInput]) -> InputSequence {
    let mut shifted: InputSequence = previous[1..].to_vec();
    if let Some(last) = previous.last() {
        shifted.push(*last);
    }
    shifted
}
