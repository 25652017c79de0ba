//! Reference trajectory generation: setpoint, circular, and helical paths
//! sampled at arbitrary times, plus the per-step horizon window the
//! controller previews.

use crate::mpc::ReferencePoint;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("reference time {t} outside [0, {duration}]")]
    OutOfRange { t: f64, duration: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Setpoint,
    Circular,
    Helical,
}

/// Geometry and timing of one reference trajectory.
///
/// All kinds share the anchor `center + (0, 0, start_altitude)`; circular and
/// helical paths orbit it at `radius` with angular rate `angular_rate`, and
/// the helical path climbs at `climb_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    /// Meters.
    pub center: Vector3<f64>,
    /// Meters, >= 0.
    pub radius: f64,
    /// rad/s.
    pub angular_rate: f64,
    /// m/s; only the helical kind climbs.
    pub climb_rate: f64,
    /// Meters above the center.
    pub start_altitude: f64,
    /// Seconds, > 0.
    pub duration: f64,
    /// Radians.
    pub phase: f64,
}

impl TrajectorySpec {
    /// Hold a fixed position for `duration` seconds.
    pub fn setpoint(target: Vector3<f64>, duration: f64) -> Self {
        Self {
            kind: TrajectoryKind::Setpoint,
            center: target,
            radius: 0.0,
            angular_rate: 0.0,
            climb_rate: 0.0,
            start_altitude: 0.0,
            duration,
            phase: 0.0,
        }
    }

    /// Default circle: radius 2 m, one revolution per 40 s, altitude 2 m,
    /// 80 s duration. Representative values, not tied to any measurement.
    pub fn circular() -> Self {
        Self {
            kind: TrajectoryKind::Circular,
            center: Vector3::zeros(),
            radius: 2.0,
            angular_rate: 2.0 * std::f64::consts::PI / 40.0,
            climb_rate: 0.0,
            start_altitude: 2.0,
            duration: 80.0,
            phase: 0.0,
        }
    }

    /// Default helix: the default circle climbing at 0.05 m/s over 80 s.
    pub fn helical() -> Self {
        Self { kind: TrajectoryKind::Helical, climb_rate: 0.05, ..Self::circular() }
    }
}

/// Reference position and analytic velocity at time `t`. Desired roll/pitch
/// are zero by convention (see [`ReferencePoint`]).
pub fn sample_reference(spec: &TrajectorySpec, t: f64) -> Result<ReferencePoint, ReferenceError> {
    if !(0.0..=spec.duration).contains(&t) || !t.is_finite() {
        return Err(ReferenceError::OutOfRange { t, duration: spec.duration });
    }
    let anchor = spec.center + Vector3::new(0.0, 0.0, spec.start_altitude);
    match spec.kind {
        TrajectoryKind::Setpoint => Ok(ReferencePoint::new(anchor, Vector3::zeros())),
        TrajectoryKind::Circular | TrajectoryKind::Helical => {
            let angle = spec.angular_rate * t + spec.phase;
            let (sin_a, cos_a) = angle.sin_cos();
            let tangential = spec.radius * spec.angular_rate;
            let mut position = anchor + Vector3::new(spec.radius * cos_a, spec.radius * sin_a, 0.0);
            let mut velocity = Vector3::new(-tangential * sin_a, tangential * cos_a, 0.0);
            if spec.kind == TrajectoryKind::Helical {
                position.z += spec.climb_rate * t;
                velocity.z = spec.climb_rate;
            }
            Ok(ReferencePoint::new(position, velocity))
        }
    }
}

/// The controller's horizon preview: element `j` is the reference at
/// `min(t + j*dt, duration)` for `j = 0..n-1`.
pub fn reference_window(
    spec: &TrajectorySpec,
    t: f64,
    n: usize,
    dt: f64,
) -> Result<Vec<ReferencePoint>, ReferenceError> {
    let mut window = Vec::with_capacity(n);
    for j in 0..n {
        let tj = (t + j as f64 * dt).min(spec.duration);
        window.push(sample_reference(spec, tj)?);
    }
    Ok(window)
}
