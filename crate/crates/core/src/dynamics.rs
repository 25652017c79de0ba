//! Continuous-time UAV kinematic model and one-step integrators.
//!
//! State: position `p`, velocity `v` (world frame), roll `phi`, pitch `theta`.
//! Input: mass-normalized thrust `T` plus roll/pitch references tracked by
//! first-order attitude loops. Yaw is absent from the model.
//!
//! Convention: yaw-free ZYX Euler composition, so the body thrust axis in world
//! frame is `[sin(theta)cos(phi), -sin(phi), cos(theta)cos(phi)]`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Attitude clamp margin below pi/2, radians.
pub const DEFAULT_ATTITUDE_MARGIN: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite component in {0}")]
    NonFinite(&'static str),
    #[error("negative step size dt = {0}")]
    NegativeDt(f64),
}

/// Vehicle state `x = [p, v, phi, theta]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    /// Position, meters, world frame.
    pub position: Vector3<f64>,
    /// Velocity, m/s, world frame.
    pub velocity: Vector3<f64>,
    /// Roll angle, radians.
    pub roll: f64,
    /// Pitch angle, radians.
    pub pitch: f64,
}

impl UavState {
    /// State at `position` with zero velocity and level attitude.
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self { position, velocity: Vector3::zeros(), roll: 0.0, pitch: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
            && self.velocity.iter().all(|c| c.is_finite())
            && self.roll.is_finite()
            && self.pitch.is_finite()
    }
}

/// Command `u = [T, phi_d, theta_d]`: mass-normalized thrust (m/s^2) and
/// attitude references (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub thrust: f64,
    pub roll_ref: f64,
    pub pitch_ref: f64,
}

impl ControlInput {
    pub fn new(thrust: f64, roll_ref: f64, pitch_ref: f64) -> Self {
        Self { thrust, roll_ref, pitch_ref }
    }

    pub fn is_finite(&self) -> bool {
        self.thrust.is_finite() && self.roll_ref.is_finite() && self.pitch_ref.is_finite()
    }
}

/// Model parameters. Defaults are representative tuning values, not
/// measurements of any particular airframe; all are configurable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Gravity, m/s^2.
    pub gravity: f64,
    /// Linear velocity damping coefficients per axis, 1/s, nonnegative.
    pub damping: Vector3<f64>,
    /// Attitude loop gains (dimensionless).
    pub roll_gain: f64,
    pub pitch_gain: f64,
    /// Attitude loop time constants, seconds, strictly positive.
    pub roll_tau: f64,
    pub pitch_tau: f64,
    /// Attitude is clamped to |angle| <= pi/2 - margin after every plant step.
    pub attitude_margin: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            damping: Vector3::new(0.1, 0.1, 0.2),
            roll_gain: 1.0,
            pitch_gain: 1.0,
            roll_tau: 0.5,
            pitch_tau: 0.5,
            attitude_margin: DEFAULT_ATTITUDE_MARGIN,
        }
    }
}

impl ModelParams {
    /// Attitude clamp bound: pi/2 minus the configured margin.
    pub fn attitude_limit(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 - self.attitude_margin
    }

    /// Steady-state hover input: thrust cancels gravity, level attitude.
    pub fn hover_input(&self) -> ControlInput {
        ControlInput::new(self.gravity, 0.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.gravity.is_finite()
            && self.damping.iter().all(|c| c.is_finite())
            && self.roll_gain.is_finite()
            && self.pitch_gain.is_finite()
            && self.roll_tau.is_finite()
            && self.pitch_tau.is_finite()
            && self.attitude_margin.is_finite()
    }
}

/// Time derivative of [`UavState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub dposition: Vector3<f64>,
    pub dvelocity: Vector3<f64>,
    pub droll: f64,
    pub dpitch: f64,
}

/// World-frame direction of the body thrust axis for the given attitude.
pub fn thrust_direction(roll: f64, pitch: f64) -> Vector3<f64> {
    let (sin_roll, cos_roll) = roll.sin_cos();
    let (sin_pitch, cos_pitch) = pitch.sin_cos();
    Vector3::new(sin_pitch * cos_roll, -sin_roll, cos_pitch * cos_roll)
}

/// Right-hand side of the kinematic model:
/// `dp = v`, `dv = T*R(phi,theta)e_z - g*e_z - diag(A)v`,
/// `dphi = (K_phi*phi_d - phi)/tau_phi`, `dtheta = (K_theta*theta_d - theta)/tau_theta`.
pub fn state_derivative(
    x: &UavState,
    u: &ControlInput,
    params: &ModelParams,
) -> Result<StateDerivative, DynamicsError> {
    if !x.is_finite() {
        return Err(DynamicsError::NonFinite("state"));
    }
    if !u.is_finite() {
        return Err(DynamicsError::NonFinite("input"));
    }
    if !params.is_finite() {
        return Err(DynamicsError::NonFinite("model parameters"));
    }
    let dvelocity = u.thrust * thrust_direction(x.roll, x.pitch)
        + Vector3::new(0.0, 0.0, -params.gravity)
        - params.damping.component_mul(&x.velocity);
    Ok(StateDerivative {
        dposition: x.velocity,
        dvelocity,
        droll: (params.roll_gain * u.roll_ref - x.roll) / params.roll_tau,
        dpitch: (params.pitch_gain * u.pitch_ref - x.pitch) / params.pitch_tau,
    })
}

fn offset(x: &UavState, d: &StateDerivative, h: f64) -> UavState {
    UavState {
        position: x.position + h * d.dposition,
        velocity: x.velocity + h * d.dvelocity,
        roll: x.roll + h * d.droll,
        pitch: x.pitch + h * d.dpitch,
    }
}

fn clamp_attitude(mut x: UavState, params: &ModelParams) -> UavState {
    let limit = params.attitude_limit();
    x.roll = x.roll.clamp(-limit, limit);
    x.pitch = x.pitch.clamp(-limit, limit);
    x
}

/// One forward-Euler step without the plant attitude clamp. This is the
/// controller's prediction step; clamping is a plant behavior.
pub(crate) fn step_euler_unclamped(
    x: &UavState,
    u: &ControlInput,
    params: &ModelParams,
    dt: f64,
) -> Result<UavState, DynamicsError> {
    if dt < 0.0 {
        return Err(DynamicsError::NegativeDt(dt));
    }
    let d = state_derivative(x, u, params)?;
    Ok(offset(x, &d, dt))
}

/// One forward-Euler plant step; attitude clamped to the state invariant.
pub fn step_euler(
    x: &UavState,
    u: &ControlInput,
    params: &ModelParams,
    dt: f64,
) -> Result<UavState, DynamicsError> {
    Ok(clamp_attitude(step_euler_unclamped(x, u, params, dt)?, params))
}

/// One classical fourth-order Runge-Kutta plant step with zero-order-hold
/// input; attitude clamped to the state invariant.
pub fn step_rk4(
    x: &UavState,
    u: &ControlInput,
    params: &ModelParams,
    dt: f64,
) -> Result<UavState, DynamicsError> {
    if dt < 0.0 {
        return Err(DynamicsError::NegativeDt(dt));
    }
    let k1 = state_derivative(x, u, params)?;
    let k2 = state_derivative(&offset(x, &k1, dt / 2.0), u, params)?;
    let k3 = state_derivative(&offset(x, &k2, dt / 2.0), u, params)?;
    let k4 = state_derivative(&offset(x, &k3, dt), u, params)?;
    let next = UavState {
        position: x.position
            + dt / 6.0 * (k1.dposition + 2.0 * k2.dposition + 2.0 * k3.dposition + k4.dposition),
        velocity: x.velocity
            + dt / 6.0 * (k1.dvelocity + 2.0 * k2.dvelocity + 2.0 * k3.dvelocity + k4.dvelocity),
        roll: x.roll + dt / 6.0 * (k1.droll + 2.0 * k2.droll + 2.0 * k3.droll + k4.droll),
        pitch: x.pitch + dt / 6.0 * (k1.dpitch + 2.0 * k2.dpitch + 2.0 * k3.dpitch + k4.dpitch),
    };
    Ok(clamp_attitude(next, params))
}
