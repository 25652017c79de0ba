//! Run artifacts: the lossless CSV trace, plot-ready columnar files, the
//! human-readable summary, and the resolved manifest.

use crate::config::ManifestMeta;
use edgeloop_core::{
    ControlInput, CycleRecord, Episode, ReferencePoint, ScenarioConfig, UavState,
};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TRAJECTORY_FILE: &str = "trajectory3d.dat";
pub const DELAYS_FILE: &str = "delays.dat";
pub const ERROR_FILE: &str = "error.dat";

/// One flattened trace row. Floats are written in shortest round-trip form,
/// so parsing a row back reproduces the record bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: u64,
    pub t: f64,
    pub ttre_ms: f64,
    pub exec_ms: f64,
    pub tter_ms: f64,
    pub rtt_ms: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub roll: f64,
    pub pitch: f64,
    pub thrust: f64,
    pub roll_ref: f64,
    pub pitch_ref: f64,
    pub ref_x: f64,
    pub ref_y: f64,
    pub ref_z: f64,
    pub ref_vx: f64,
    pub ref_vy: f64,
    pub ref_vz: f64,
    pub tracking_error: f64,
    pub degraded: bool,
}

impl From<&CycleRecord> for TraceRow {
    fn from(r: &CycleRecord) -> Self {
        Self {
            k: r.k,
            t: r.t,
            ttre_ms: r.ttre_ms,
            exec_ms: r.exec_ms,
            tter_ms: r.tter_ms,
            rtt_ms: r.rtt_ms,
            x: r.state_at_send.position.x,
            y: r.state_at_send.position.y,
            z: r.state_at_send.position.z,
            vx: r.state_at_send.velocity.x,
            vy: r.state_at_send.velocity.y,
            vz: r.state_at_send.velocity.z,
            roll: r.state_at_send.roll,
            pitch: r.state_at_send.pitch,
            thrust: r.applied_input.thrust,
            roll_ref: r.applied_input.roll_ref,
            pitch_ref: r.applied_input.pitch_ref,
            ref_x: r.reference.position.x,
            ref_y: r.reference.position.y,
            ref_z: r.reference.position.z,
            ref_vx: r.reference.velocity.x,
            ref_vy: r.reference.velocity.y,
            ref_vz: r.reference.velocity.z,
            tracking_error: r.tracking_error,
            degraded: r.degraded,
        }
    }
}

impl From<&TraceRow> for CycleRecord {
    fn from(row: &TraceRow) -> Self {
        Self {
            k: row.k,
            t: row.t,
            ttre_ms: row.ttre_ms,
            exec_ms: row.exec_ms,
            tter_ms: row.tter_ms,
            rtt_ms: row.rtt_ms,
            state_at_send: UavState {
                position: Vector3::new(row.x, row.y, row.z),
                velocity: Vector3::new(row.vx, row.vy, row.vz),
                roll: row.roll,
                pitch: row.pitch,
            },
            applied_input: ControlInput::new(row.thrust, row.roll_ref, row.pitch_ref),
            reference: ReferencePoint::new(
                Vector3::new(row.ref_x, row.ref_y, row.ref_z),
                Vector3::new(row.ref_vx, row.ref_vy, row.ref_vz),
            ),
            tracking_error: row.tracking_error,
            degraded: row.degraded,
        }
    }
}

pub fn write_trace(path: &Path, records: &[CycleRecord]) -> io::Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for record in records {
        writer.serialize(TraceRow::from(record))?;
    }
    writer.flush()
}

pub fn read_trace(path: &Path) -> Result<Vec<CycleRecord>, csv::Error> {
    csv::Reader::from_path(path)?
        .deserialize::<TraceRow>()
        .map(|row| row.map(|r| CycleRecord::from(&r)))
        .collect()
}

fn write_dat(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> io::Result<()> {
    let mut file = io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "# {header}")?;
    for row in rows {
        writeln!(file, "{row}")?;
    }
    file.flush()
}

/// `trajectory3d.dat`: t, x, y, z, x_ref, y_ref, z_ref.
pub fn write_trajectory_dat(path: &Path, records: &[CycleRecord]) -> io::Result<()> {
    write_dat(
        path,
        "t x y z x_ref y_ref z_ref",
        records.iter().map(|r| {
            let p = r.state_at_send.position;
            let q = r.reference.position;
            format!(
                "{:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
                r.t, p.x, p.y, p.z, q.x, q.y, q.z
            )
        }),
    )
}

/// `delays.dat`: k, t, ttre, exec, tter, rtt (ms).
pub fn write_delays_dat(path: &Path, records: &[CycleRecord]) -> io::Result<()> {
    write_dat(
        path,
        "k t ttre_ms exec_ms tter_ms rtt_ms",
        records.iter().map(|r| {
            format!(
                "{} {:.6} {:.6} {:.6} {:.6} {:.6}",
                r.k, r.t, r.ttre_ms, r.exec_ms, r.tter_ms, r.rtt_ms
            )
        }),
    )
}

/// `error.dat`: t, Euclidean position error (m).
pub fn write_error_dat(path: &Path, records: &[CycleRecord]) -> io::Result<()> {
    write_dat(
        path,
        "t euclidean_error_m",
        records.iter().map(|r| format!("{:.6} {:.6}", r.t, r.tracking_error)),
    )
}

/// Mean latencies in reporting order (robot to edge, execution, edge to
/// robot, round trip), then tracking and solver stats.
pub fn render_summary(episode: &Episode, scenario: &str) -> String {
    let s = &episode.summary;
    let cfg = &s.config;
    let mut text = String::new();
    let _ = writeln!(text, "scenario: {scenario}");
    let _ = writeln!(
        text,
        "mode: {} | seed: {} | duration: {} s | control: {} Hz | horizon: {}",
        match cfg.mode {
            edgeloop_core::Mode::Deterministic => "deterministic",
            edgeloop_core::Mode::Realtime => "realtime",
        },
        cfg.seed,
        cfg.duration,
        cfg.control_rate,
        cfg.mpc.horizon,
    );
    let _ = writeln!(text, "cycles: {} (degraded: {})", s.cycles, s.degraded_cycles);
    let _ = writeln!(text, "timing (ms):");
    for (label, q) in [
        ("robot -> edge", &s.ttre),
        ("execution    ", &s.exec),
        ("edge -> robot", &s.tter),
        ("round trip   ", &s.rtt),
    ] {
        let _ = writeln!(
            text,
            "  {label}  mean {:>8.3}  std {:>8.3}  max {:>8.3}",
            q.mean, q.std, q.max
        );
    }
    let _ = writeln!(
        text,
        "tracking error (m): mean {:.4}  max {:.4}  (excluding first {} s)",
        s.tracking_error_mean, s.tracking_error_max, cfg.transient_window
    );
    let _ = writeln!(
        text,
        "solver: mean {:.3} ms  max {:.3} ms  mean iterations {:.1}",
        episode.solver_time_ms.mean, episode.solver_time_ms.max, episode.solver_iterations.mean
    );
    text
}

/// The resolved config plus a `[manifest]` provenance table. The file is
/// itself a valid config: re-running with `--config manifest.toml` reproduces
/// the episode.
pub fn render_manifest(cfg: &ScenarioConfig, meta: &ManifestMeta) -> Result<String, toml::ser::Error> {
    let mut table = toml::Table::try_from(cfg)?;
    table.insert("manifest".into(), toml::Value::try_from(meta)?);
    toml::to_string_pretty(&table)
}
