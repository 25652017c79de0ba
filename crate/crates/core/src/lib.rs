//! Desk-scale laboratory for edge-offloaded model predictive control of a
//! quadrotor-class UAV.
//!
//! The crate closes a control loop between a simulated vehicle and a remote MPC
//! across a simulated network link:
//!
//! - [`dynamics`]: the kinematic plant model and one-step integrators,
//! - [`mpc`]: finite-horizon MPC with forward-Euler prediction, an analytic
//!   gradient, and a projected-gradient solver,
//! - [`reference`]: setpoint, circular, and helical reference trajectories,
//! - [`netsim`]: a topic-based pub/sub bus with per-direction stochastic delays,
//! - [`scenario`]: scenario configuration, validation, and named presets,
//! - [`runtime`]: the closed-loop episode driver recording the per-cycle timing
//!   decomposition `T_rtt = T_ttre + T_exec + T_tter` and tracking error.

pub mod dynamics;
pub mod mpc;
pub mod netsim;
pub mod reference;
pub mod runtime;
pub mod scenario;

pub use dynamics::{ControlInput, ModelParams, StateDerivative, UavState};
pub use mpc::{InputBounds, MpcConfig, MpcError, MpcSolution, ReferencePoint, SolverParams};
pub use netsim::{
    DelayDistribution, LatencyProfile, LinkConfig, LinkRng, Payload, SimBus, StampedMessage, Topic,
};
pub use reference::{sample_reference, TrajectoryKind, TrajectorySpec};
pub use runtime::{
    compute_rtt, euclidean_error, run_episode, stats, summarize, CycleRecord, Episode,
    EpisodeSummary, QuantityStats, RuntimeError,
};
pub use scenario::{ConfigError, ExecModel, Mode, ScenarioConfig};
