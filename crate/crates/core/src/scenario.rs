//! Scenario configuration: everything one episode needs, plus validation and
//! the built-in presets.

use crate::dynamics::{ModelParams, UavState};
use crate::mpc::MpcConfig;
use crate::netsim::{DelayDistribution, LatencyProfile, LinkConfig};
use crate::reference::{self, ReferenceError, TrajectorySpec};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// A config invariant violation, naming the offending field.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid `{field}`: {message}")]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError { field, message: message.into() }
}

/// Clock discipline for the episode loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Discrete-event clock; bit-identical replay for a given config + seed.
    Deterministic,
    /// Wall clock with plant and controller as independent timed threads.
    Realtime,
}

/// Where the controller execution time `T_exec` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ExecModel {
    /// Actual solver wall time. Realtime mode only.
    Measured,
    /// A configured execution delay, injected exactly; this is how published
    /// timing tables reproduce digit-for-digit in deterministic mode.
    Simulated { mean_ms: f64 },
}

impl FromStr for ExecModel {
    type Err = ConfigError;

    /// Accepts `measured` or `simulated:<MS>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("measured") {
            return Ok(ExecModel::Measured);
        }
        if let Some(ms) = s.strip_prefix("simulated:") {
            let mean_ms: f64 = ms
                .parse()
                .map_err(|_| invalid("exec-model", format!("`{ms}` is not a number")))?;
            return Ok(ExecModel::Simulated { mean_ms });
        }
        Err(invalid("exec-model", format!("`{s}` is not `measured` or `simulated:<MS>`")))
    }
}

impl fmt::Display for ExecModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecModel::Measured => write!(f, "measured"),
            ExecModel::Simulated { mean_ms } => write!(f, "simulated:{mean_ms}"),
        }
    }
}

impl FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "deterministic" => Ok(Mode::Deterministic),
            "realtime" => Ok(Mode::Realtime),
            other => Err(invalid("mode", format!("`{other}` is not `deterministic` or `realtime`"))),
        }
    }
}

/// Full description of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub trajectory: TrajectorySpec,
    pub link: LinkConfig,
    /// Controller activation rate, Hz.
    pub control_rate: f64,
    /// Plant integration rate, Hz; an integer multiple of `control_rate`.
    pub plant_rate: f64,
    pub mpc: MpcConfig,
    pub model: ModelParams,
    pub mode: Mode,
    pub exec_model: ExecModel,
    pub seed: u64,
    /// Episode length, seconds.
    pub duration: f64,
    /// Initial segment excluded from tracking-error statistics, seconds.
    pub transient_window: f64,
    /// Start position; defaults to the reference at t = 0 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_position: Option<Vector3<f64>>,
}

impl ScenarioConfig {
    /// Deterministic defaults (100 Hz control over a 500 Hz plant, seed 1,
    /// 5 s transient window) around the given trajectory and link, with the
    /// episode spanning the full trajectory.
    pub fn new(trajectory: TrajectorySpec, link: LinkConfig, exec_mean_ms: f64) -> Self {
        Self::base(trajectory, link, exec_mean_ms)
    }

    fn base(trajectory: TrajectorySpec, link: LinkConfig, exec_mean_ms: f64) -> Self {
        let model = ModelParams::default();
        let mpc = MpcConfig::defaults_for(&model);
        Self {
            duration: trajectory.duration,
            trajectory,
            link,
            control_rate: 100.0,
            plant_rate: 500.0,
            mpc,
            model,
            mode: Mode::Deterministic,
            exec_model: ExecModel::Simulated { mean_ms: exec_mean_ms },
            seed: 1,
            transient_window: 5.0,
            initial_position: None,
        }
    }

    /// Hover at (0, 0, 2) over an ideal link with zero execution delay.
    pub fn hover_ideal() -> Self {
        Self::base(
            TrajectorySpec::setpoint(Vector3::new(0.0, 0.0, 2.0), 10.0),
            LinkConfig::ideal(),
            0.0,
        )
    }

    /// Circle under the first architecture's link; 16.1 ms execution.
    pub fn circular_profile_a() -> Self {
        Self::base(TrajectorySpec::circular(), LinkConfig::profile_a(), 16.1)
    }

    /// Circle under the second architecture's link; 16.9 ms execution.
    pub fn circular_profile_b() -> Self {
        Self::base(TrajectorySpec::circular(), LinkConfig::profile_b(), 16.9)
    }

    /// Helix under the first architecture's link; 16.1 ms execution.
    pub fn helical_profile_a() -> Self {
        Self::base(TrajectorySpec::helical(), LinkConfig::profile_a(), 16.1)
    }

    /// Helix under the second architecture's link; 16.9 ms execution.
    pub fn helical_profile_b() -> Self {
        Self::base(TrajectorySpec::helical(), LinkConfig::profile_b(), 16.9)
    }

    pub fn preset_names() -> &'static [&'static str] {
        &[
            "hover-ideal",
            "circular-profile-A",
            "circular-profile-B",
            "helical-profile-A",
            "helical-profile-B",
        ]
    }

    /// Look up a named scenario preset, case-insensitively.
    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "hover-ideal" => Some(Self::hover_ideal()),
            "circular-profile-a" => Some(Self::circular_profile_a()),
            "circular-profile-b" => Some(Self::circular_profile_b()),
            "helical-profile-a" => Some(Self::helical_profile_a()),
            "helical-profile-b" => Some(Self::helical_profile_b()),
            _ => None,
        }
    }

    /// Start state: configured position or the reference at t = 0, at rest.
    pub fn initial_state(&self) -> Result<UavState, ReferenceError> {
        let position = match self.initial_position {
            Some(p) => p,
            None => reference::sample_reference(&self.trajectory, 0.0)?.position,
        };
        Ok(UavState::at_rest(position))
    }

    /// Check every config invariant; errors name the offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        if !(m.gravity.is_finite() && m.gravity > 0.0) {
            return Err(invalid("model.gravity", "must be finite and > 0"));
        }
        if m.damping.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(invalid("model.damping", "components must be finite and >= 0"));
        }
        for (field, tau) in [("model.roll_tau", m.roll_tau), ("model.pitch_tau", m.pitch_tau)] {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(invalid(field, "must be finite and > 0"));
            }
        }
        if !(m.roll_gain.is_finite() && m.pitch_gain.is_finite()) {
            return Err(invalid("model.roll_gain", "gains must be finite"));
        }
        if !(m.attitude_margin > 0.0 && m.attitude_margin < std::f64::consts::FRAC_PI_2) {
            return Err(invalid("model.attitude_margin", "must lie in (0, pi/2)"));
        }

        let c = &self.mpc;
        if c.horizon == 0 {
            return Err(invalid("mpc.horizon", "must be >= 1"));
        }
        if !(c.dt.is_finite() && c.dt > 0.0) {
            return Err(invalid("mpc.dt", "must be finite and > 0"));
        }
        if c.state_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("mpc.state_weights", "diagonal entries must be finite and >= 0"));
        }
        if c.input_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("mpc.input_weights", "diagonal entries must be finite and >= 0"));
        }
        if c.rate_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("mpc.rate_weights", "diagonal entries must be finite and >= 0"));
        }
        if !(c.bounds.thrust_max.is_finite() && c.bounds.thrust_max > m.gravity) {
            return Err(invalid("mpc.bounds.thrust_max", "must exceed model.gravity"));
        }
        for (field, bound) in
            [("mpc.bounds.roll_max", c.bounds.roll_max), ("mpc.bounds.pitch_max", c.bounds.pitch_max)]
        {
            if !(bound.is_finite() && bound > 0.0 && bound < std::f64::consts::FRAC_PI_2) {
                return Err(invalid(field, "must lie in (0, pi/2)"));
            }
        }
        if !c.steady_input.is_finite() || !c.bounds.contains(&c.steady_input) {
            return Err(invalid("mpc.steady_input", "must be finite and within the input bounds"));
        }
        let s = &c.solver;
        if s.max_iters == 0 {
            return Err(invalid("mpc.solver.max_iters", "must be >= 1"));
        }
        if !(s.tolerance.is_finite() && s.tolerance > 0.0) {
            return Err(invalid("mpc.solver.tolerance", "must be finite and > 0"));
        }
        if !(s.initial_step.is_finite() && s.initial_step > 0.0) {
            return Err(invalid("mpc.solver.initial_step", "must be finite and > 0"));
        }
        if !(s.backtrack_factor > 0.0 && s.backtrack_factor < 1.0) {
            return Err(invalid("mpc.solver.backtrack_factor", "must lie in (0, 1)"));
        }
        if !(s.armijo_c > 0.0 && s.armijo_c < 1.0) {
            return Err(invalid("mpc.solver.armijo_c", "must lie in (0, 1)"));
        }
        if s.max_backtracks == 0 {
            return Err(invalid("mpc.solver.max_backtracks", "must be >= 1"));
        }

        let t = &self.trajectory;
        if !(t.radius.is_finite() && t.radius >= 0.0) {
            return Err(invalid("trajectory.radius", "must be finite and >= 0"));
        }
        if !(t.duration.is_finite() && t.duration > 0.0) {
            return Err(invalid("trajectory.duration", "must be finite and > 0"));
        }
        if !(t.angular_rate.is_finite()
            && t.climb_rate.is_finite()
            && t.start_altitude.is_finite()
            && t.phase.is_finite()
            && t.center.iter().all(|x| x.is_finite()))
        {
            return Err(invalid("trajectory", "all geometry fields must be finite"));
        }

        for (field, p) in [
            ("link.robot_to_edge", &self.link.robot_to_edge),
            ("link.edge_to_robot", &self.link.edge_to_robot),
        ] {
            validate_profile(field, p)?;
        }

        if !(self.control_rate.is_finite() && self.control_rate > 0.0) {
            return Err(invalid("control_rate", "must be finite and > 0"));
        }
        if !(self.plant_rate.is_finite() && self.plant_rate >= self.control_rate) {
            return Err(invalid("plant_rate", "must be finite and >= control_rate"));
        }
        let ratio = self.plant_rate / self.control_rate;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(invalid(
                "plant_rate",
                format!("must be an integer multiple of control_rate (ratio {ratio})"),
            ));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(invalid("duration", "must be finite and > 0"));
        }
        if self.duration > self.trajectory.duration {
            return Err(invalid(
                "duration",
                format!(
                    "episode duration {} exceeds trajectory duration {}",
                    self.duration, self.trajectory.duration
                ),
            ));
        }
        if !(self.transient_window.is_finite() && self.transient_window >= 0.0) {
            return Err(invalid("transient_window", "must be finite and >= 0"));
        }
        match self.exec_model {
            ExecModel::Simulated { mean_ms } if !(mean_ms.is_finite() && mean_ms >= 0.0) => {
                return Err(invalid("exec_model", "simulated mean must be finite and >= 0"));
            }
            ExecModel::Measured if self.mode == Mode::Deterministic => {
                return Err(invalid(
                    "exec_model",
                    "deterministic mode requires a simulated execution time; \
                     measured wall time is only meaningful in realtime mode",
                ));
            }
            _ => {}
        }
        if let Some(p) = self.initial_position {
            if !p.iter().all(|x| x.is_finite()) {
                return Err(invalid("initial_position", "must be finite"));
            }
        }
        Ok(())
    }
}

fn validate_profile(field: &'static str, p: &LatencyProfile) -> Result<(), ConfigError> {
    let finite = p.mean_ms.is_finite()
        && p.jitter_std_ms.is_finite()
        && p.spike_prob.is_finite()
        && p.spike_scale.is_finite()
        && p.floor_ms.is_finite();
    if !finite {
        return Err(invalid(field, "all profile fields must be finite"));
    }
    if !(p.floor_ms >= 0.0 && p.mean_ms >= p.floor_ms) {
        return Err(invalid(field, "requires mean_ms >= floor_ms >= 0"));
    }
    if p.jitter_std_ms < 0.0 {
        return Err(invalid(field, "jitter_std_ms must be >= 0"));
    }
    if !(0.0..=1.0).contains(&p.spike_prob) {
        return Err(invalid(field, "spike_prob must lie in [0, 1]"));
    }
    if p.spike_scale < 1.0 {
        return Err(invalid(field, "spike_scale must be >= 1"));
    }
    let _ = DelayDistribution::Degenerate; // variants carry no extra invariants
    Ok(())
}
