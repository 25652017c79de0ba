//! Layered scenario configuration: preset defaults, then a TOML config file,
//! then command-line flags, each overriding the previous layer per field.

use edgeloop_core::{
    DelayDistribution, ExecModel, LinkConfig, Mode, ScenarioConfig, TrajectoryKind,
};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read config `{path}`: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// The underlying TOML error message carries line and column anchors.
    #[error("cannot parse config `{path}`: {source}")]
    Parse {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("unknown scenario `{name}`; expected one of {expected}")]
    UnknownScenario { name: String, expected: String },
    #[error("unknown latency profile `{name}`; expected one of {expected}")]
    UnknownProfile { name: String, expected: String },
    #[error("invalid exec model `{0}`; expected `measured` or `simulated:<ms>`")]
    ExecModel(String),
    #[error(transparent)]
    Invalid(#[from] edgeloop_core::ConfigError),
}

/// Command-line overrides; all optional, applied last.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub duration: Option<f64>,
    pub rate: Option<f64>,
    pub horizon: Option<usize>,
    pub profile: Option<String>,
    pub exec_model: Option<String>,
    pub mode: Option<Mode>,
}

/// Partial mirror of the scenario schema; every field optional so sparse
/// files override only what they mention. Unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    /// Optional preset name used as the base layer.
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub duration: Option<f64>,
    pub control_rate: Option<f64>,
    pub plant_rate: Option<f64>,
    pub mode: Option<Mode>,
    pub exec_model: Option<RawExecModel>,
    pub transient_window: Option<f64>,
    pub initial_position: Option<[f64; 3]>,
    pub trajectory: Option<RawTrajectory>,
    pub link: Option<RawLink>,
    pub mpc: Option<RawMpc>,
    pub model: Option<RawModel>,
    /// Provenance block found when re-reading a written manifest; ignored.
    pub manifest: Option<ManifestMeta>,
}

/// Tool provenance echoed into every written manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestMeta {
    pub tool: String,
    pub version: String,
    /// Where the configuration came from: a file path, a preset name, or
    /// "flags".
    pub source: String,
}

/// Accepts either the compact string form ("measured", "simulated:16.1") or
/// the structured form a manifest emits.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum RawExecModel {
    Text(String),
    Typed(ExecModel),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTrajectory {
    pub kind: Option<TrajectoryKind>,
    pub center: Option<[f64; 3]>,
    pub radius: Option<f64>,
    pub angular_rate: Option<f64>,
    pub climb_rate: Option<f64>,
    pub start_altitude: Option<f64>,
    pub duration: Option<f64>,
    pub phase: Option<f64>,
}

/// A link is either a preset name or explicit per-direction profiles.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum RawLink {
    Preset(String),
    Split(RawLinkSplit),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLinkSplit {
    pub robot_to_edge: Option<RawProfile>,
    pub edge_to_robot: Option<RawProfile>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProfile {
    pub mean_ms: Option<f64>,
    pub jitter_std_ms: Option<f64>,
    pub spike_prob: Option<f64>,
    pub spike_scale: Option<f64>,
    pub floor_ms: Option<f64>,
    pub distribution: Option<DelayDistribution>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMpc {
    pub horizon: Option<usize>,
    pub dt: Option<f64>,
    pub state_weights: Option<[f64; 8]>,
    pub input_weights: Option<[f64; 3]>,
    pub rate_weights: Option<[f64; 3]>,
    pub steady_input: Option<RawInput>,
    pub bounds: Option<RawBounds>,
    pub solver: Option<RawSolver>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInput {
    pub thrust: Option<f64>,
    pub roll_ref: Option<f64>,
    pub pitch_ref: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBounds {
    pub thrust_max: Option<f64>,
    pub roll_max: Option<f64>,
    pub pitch_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSolver {
    pub max_iters: Option<usize>,
    pub tolerance: Option<f64>,
    pub initial_step: Option<f64>,
    pub backtrack_factor: Option<f64>,
    pub armijo_c: Option<f64>,
    pub max_backtracks: Option<usize>,
}

pub fn load_raw(path: &Path) -> Result<RawConfig, ConfigFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Read {
        path: path.display().to_string(),
        source,
    })?;
    toml::from_str(&text).map_err(|source| ConfigFileError::Parse {
        path: path.display().to_string(),
        source: Box::new(source),
    })
}

fn scenario_base(name: &str) -> Result<ScenarioConfig, ConfigFileError> {
    ScenarioConfig::preset(name).ok_or_else(|| ConfigFileError::UnknownScenario {
        name: name.to_string(),
        expected: ScenarioConfig::preset_names().join(", "),
    })
}

fn link_preset(name: &str) -> Result<LinkConfig, ConfigFileError> {
    LinkConfig::preset(name).ok_or_else(|| ConfigFileError::UnknownProfile {
        name: name.to_string(),
        expected: LinkConfig::preset_names().join(", "),
    })
}

fn set<T: Copy>(target: &mut T, source: Option<T>) {
    if let Some(v) = source {
        *target = v;
    }
}

fn apply_profile(target: &mut edgeloop_core::LatencyProfile, raw: &RawProfile) {
    set(&mut target.mean_ms, raw.mean_ms);
    set(&mut target.jitter_std_ms, raw.jitter_std_ms);
    set(&mut target.spike_prob, raw.spike_prob);
    set(&mut target.spike_scale, raw.spike_scale);
    set(&mut target.floor_ms, raw.floor_ms);
    set(&mut target.distribution, raw.distribution);
}

fn apply_raw(cfg: &mut ScenarioConfig, raw: &RawConfig) -> Result<(), ConfigFileError> {
    set(&mut cfg.seed, raw.seed);
    set(&mut cfg.control_rate, raw.control_rate);
    set(&mut cfg.plant_rate, raw.plant_rate);
    set(&mut cfg.mode, raw.mode);
    set(&mut cfg.transient_window, raw.transient_window);
    if let Some(p) = raw.initial_position {
        cfg.initial_position = Some(Vector3::from(p));
    }
    if let Some(exec) = &raw.exec_model {
        cfg.exec_model = match exec {
            RawExecModel::Text(s) => {
                s.parse().map_err(|_| ConfigFileError::ExecModel(s.clone()))?
            }
            RawExecModel::Typed(m) => *m,
        };
    }
    if let Some(t) = &raw.trajectory {
        let traj = &mut cfg.trajectory;
        set(&mut traj.kind, t.kind);
        if let Some(c) = t.center {
            traj.center = Vector3::from(c);
        }
        set(&mut traj.radius, t.radius);
        set(&mut traj.angular_rate, t.angular_rate);
        set(&mut traj.climb_rate, t.climb_rate);
        set(&mut traj.start_altitude, t.start_altitude);
        set(&mut traj.duration, t.duration);
        set(&mut traj.phase, t.phase);
    }
    if let Some(link) = &raw.link {
        match link {
            RawLink::Preset(name) => cfg.link = link_preset(name)?,
            RawLink::Split(split) => {
                if let Some(p) = &split.robot_to_edge {
                    apply_profile(&mut cfg.link.robot_to_edge, p);
                }
                if let Some(p) = &split.edge_to_robot {
                    apply_profile(&mut cfg.link.edge_to_robot, p);
                }
            }
        }
    }
    if let Some(m) = &raw.mpc {
        let mpc = &mut cfg.mpc;
        set(&mut mpc.horizon, m.horizon);
        set(&mut mpc.dt, m.dt);
        set(&mut mpc.state_weights, m.state_weights);
        set(&mut mpc.input_weights, m.input_weights);
        set(&mut mpc.rate_weights, m.rate_weights);
        if let Some(u) = &m.steady_input {
            set(&mut mpc.steady_input.thrust, u.thrust);
            set(&mut mpc.steady_input.roll_ref, u.roll_ref);
            set(&mut mpc.steady_input.pitch_ref, u.pitch_ref);
        }
        if let Some(b) = &m.bounds {
            set(&mut mpc.bounds.thrust_max, b.thrust_max);
            set(&mut mpc.bounds.roll_max, b.roll_max);
            set(&mut mpc.bounds.pitch_max, b.pitch_max);
        }
        if let Some(s) = &m.solver {
            set(&mut mpc.solver.max_iters, s.max_iters);
            set(&mut mpc.solver.tolerance, s.tolerance);
            set(&mut mpc.solver.initial_step, s.initial_step);
            set(&mut mpc.solver.backtrack_factor, s.backtrack_factor);
            set(&mut mpc.solver.armijo_c, s.armijo_c);
            set(&mut mpc.solver.max_backtracks, s.max_backtracks);
        }
    }
    if let Some(m) = &raw.model {
        let model = &mut cfg.model;
        set(&mut model.gravity, m.gravity);
        if let Some(d) = m.damping {
            model.damping = Vector3::from(d);
        }
        set(&mut model.roll_gain, m.roll_gain);
        set(&mut model.pitch_gain, m.pitch_gain);
        set(&mut model.roll_tau, m.roll_tau);
        set(&mut model.pitch_tau, m.pitch_tau);
        set(&mut model.attitude_margin, m.attitude_margin);
    }
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub gravity: Option<f64>,
    pub damping: Option<[f64; 3]>,
    pub roll_gain: Option<f64>,
    pub pitch_gain: Option<f64>,
    pub roll_tau: Option<f64>,
    pub pitch_tau: Option<f64>,
    pub attitude_margin: Option<f64>,
}

/// Resolved configuration plus a human-readable label of its base scenario.
pub struct Resolved {
    pub config: ScenarioConfig,
    pub scenario: String,
}

/// Layer a raw config file (if any) and flag overrides over the base preset.
/// The base is the flag scenario, else the file's `scenario` key, else
/// `helical-profile-A`. Episode duration tracks the trajectory unless set
/// explicitly.
pub fn resolve(raw: Option<RawConfig>, over: &Overrides) -> Result<Resolved, ConfigFileError> {
    let raw = raw.unwrap_or_default();
    let scenario = over
        .scenario
        .clone()
        .or_else(|| raw.scenario.clone())
        .unwrap_or_else(|| "helical-profile-A".to_string());
    let mut cfg = scenario_base(&scenario)?;

    let explicit_duration = over.duration.or(raw.duration);
    apply_raw(&mut cfg, &raw)?;

    set(&mut cfg.seed, over.seed);
    set(&mut cfg.control_rate, over.rate);
    set(&mut cfg.mpc.horizon, over.horizon);
    set(&mut cfg.mode, over.mode);
    if let Some(name) = &over.profile {
        cfg.link = link_preset(name)?;
    }
    if let Some(spec) = &over.exec_model {
        cfg.exec_model = spec.parse().map_err(|_| ConfigFileError::ExecModel(spec.clone()))?;
    }
    cfg.duration = explicit_duration.unwrap_or(cfg.trajectory.duration);

    cfg.validate()?;
    Ok(Resolved { config: cfg, scenario })
}
