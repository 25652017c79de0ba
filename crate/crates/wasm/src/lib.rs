//! Browser bindings: run episodes, sample link delays, and preview single MPC
//! solves, returning plot-ready JSON. The deterministic engine is identical
//! to the native one; realtime mode is not exposed (no threads on wasm).

use edgeloop_core::{
    mpc, netsim, reference, run_episode, CycleRecord, Episode, QuantityStats, ScenarioConfig,
    UavState,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct SeriesJson {
    t: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    ref_x: Vec<f64>,
    ref_y: Vec<f64>,
    ref_z: Vec<f64>,
    error: Vec<f64>,
    rtt_ms: Vec<f64>,
}

#[derive(Serialize)]
struct SummaryJson {
    ttre: QuantityStats,
    exec: QuantityStats,
    tter: QuantityStats,
    rtt: QuantityStats,
    tracking_error_mean: f64,
    tracking_error_max: f64,
}

#[derive(Serialize)]
struct SolverJson {
    mean_ms: f64,
    max_ms: f64,
    mean_iterations: f64,
}

#[derive(Serialize)]
struct EpisodeJson {
    scenario: String,
    cycles: usize,
    degraded: usize,
    summary: SummaryJson,
    solver: SolverJson,
    series: SeriesJson,
}

fn decimate(records: &[CycleRecord], max_points: usize) -> Vec<&CycleRecord> {
    let stride = records.len().div_ceil(max_points.max(1)).max(1);
    records.iter().step_by(stride).collect()
}

fn episode_json(scenario: &str, episode: &Episode, max_points: usize) -> EpisodeJson {
    let picked = decimate(&episode.records, max_points);
    let series = SeriesJson {
        t: picked.iter().map(|r| r.t).collect(),
        x: picked.iter().map(|r| r.state_at_send.position.x).collect(),
        y: picked.iter().map(|r| r.state_at_send.position.y).collect(),
        z: picked.iter().map(|r| r.state_at_send.position.z).collect(),
        ref_x: picked.iter().map(|r| r.reference.position.x).collect(),
        ref_y: picked.iter().map(|r| r.reference.position.y).collect(),
        ref_z: picked.iter().map(|r| r.reference.position.z).collect(),
        error: picked.iter().map(|r| r.tracking_error).collect(),
        rtt_ms: picked.iter().map(|r| r.rtt_ms).collect(),
    };
    let s = &episode.summary;
    EpisodeJson {
        scenario: scenario.to_string(),
        cycles: s.cycles,
        degraded: s.degraded_cycles,
        summary: SummaryJson {
            ttre: s.ttre,
            exec: s.exec,
            tter: s.tter,
            rtt: s.rtt,
            tracking_error_mean: s.tracking_error_mean,
            tracking_error_max: s.tracking_error_max,
        },
        solver: SolverJson {
            mean_ms: episode.solver_time_ms.mean,
            max_ms: episode.solver_time_ms.max,
            mean_iterations: episode.solver_iterations.mean,
        },
        series,
    }
}

fn run_episode_impl(
    scenario: &str,
    seed: u32,
    duration_s: f64,
    max_points: usize,
) -> Result<String, String> {
    let mut cfg = ScenarioConfig::preset(scenario).ok_or_else(|| {
        format!(
            "unknown scenario `{scenario}`; expected one of {}",
            ScenarioConfig::preset_names().join(", ")
        )
    })?;
    cfg.seed = seed as u64;
    cfg.duration = duration_s.min(cfg.trajectory.duration);
    cfg.validate().map_err(|e| e.to_string())?;
    let episode = run_episode(&cfg).map_err(|e| e.to_string())?;
    serde_json::to_string(&episode_json(scenario, &episode, max_points))
        .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct DelaysJson {
    samples: Vec<f64>,
    mean: f64,
    std: f64,
    max: f64,
}

fn sample_delays_impl(
    mean_ms: f64,
    jitter_std_ms: f64,
    spike_prob: f64,
    spike_scale: f64,
    count: usize,
    seed: u32,
) -> Result<String, String> {
    let profile = netsim::LatencyProfile {
        mean_ms,
        jitter_std_ms,
        spike_prob,
        spike_scale,
        floor_ms: 0.0,
        distribution: netsim::DelayDistribution::LognormalWithSpikes,
    };
    if !(mean_ms.is_finite() && mean_ms >= 0.0) {
        return Err("mean_ms must be finite and non-negative".to_string());
    }
    if !(0.0..=1.0).contains(&spike_prob) {
        return Err("spike_prob must lie in [0, 1]".to_string());
    }
    if count == 0 || count > 1_000_000 {
        return Err("count must lie in [1, 1e6]".to_string());
    }
    let mut rng = netsim::LinkRng::with_stream(seed as u64, 0);
    let samples: Vec<f64> =
        (0..count).map(|_| netsim::sample_delay(&profile, &mut rng)).collect();
    let stats = edgeloop_core::stats(&samples);
    serde_json::to_string(&DelaysJson {
        samples,
        mean: stats.mean,
        std: stats.std,
        max: stats.max,
    })
    .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct PathJson {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

#[derive(Serialize)]
struct SolveJson {
    cost: f64,
    iterations: usize,
    cost_trace: Vec<f64>,
    predicted: PathJson,
    reference: PathJson,
    thrust: f64,
    roll_ref: f64,
    pitch_ref: f64,
}

/// One solve along a preset's trajectory: the vehicle starts at rest where
/// the reference was one second earlier, so the horizon has an error to
/// close.
fn solve_preview_impl(scenario: &str, t: f64, horizon: usize) -> Result<String, String> {
    let mut cfg = ScenarioConfig::preset(scenario).ok_or_else(|| {
        format!(
            "unknown scenario `{scenario}`; expected one of {}",
            ScenarioConfig::preset_names().join(", ")
        )
    })?;
    if !(1..=400).contains(&horizon) {
        return Err("horizon must lie in [1, 400]".to_string());
    }
    cfg.mpc.horizon = horizon;
    let spec = &cfg.trajectory;
    if !t.is_finite() || !(0.0..=spec.duration).contains(&t) {
        return Err(format!("t must lie in [0, {}]", spec.duration));
    }
    let behind = (t - 1.0).max(0.0);
    let start = reference::sample_reference(spec, behind).map_err(|e| e.to_string())?;
    let x0 = UavState::at_rest(start.position);
    let refs = reference::reference_window(spec, t, cfg.mpc.horizon, cfg.mpc.dt)
        .map_err(|e| e.to_string())?;
    let sol = mpc::solve(&x0, &refs, None, &cfg.mpc.steady_input, &cfg.mpc, &cfg.model)
        .map_err(|e| e.to_string())?;
    let predicted = mpc::predict(&x0, &sol.inputs, &cfg.mpc, &cfg.model)
        .map_err(|e| e.to_string())?;
    serde_json::to_string(&SolveJson {
        cost: sol.cost,
        iterations: sol.iterations,
        cost_trace: sol.cost_trace.clone(),
        predicted: PathJson {
            x: predicted.iter().map(|s| s.position.x).collect(),
            y: predicted.iter().map(|s| s.position.y).collect(),
            z: predicted.iter().map(|s| s.position.z).collect(),
        },
        reference: PathJson {
            x: refs.iter().map(|r| r.position.x).collect(),
            y: refs.iter().map(|r| r.position.y).collect(),
            z: refs.iter().map(|r| r.position.z).collect(),
        },
        thrust: sol.first_input.thrust,
        roll_ref: sol.first_input.roll_ref,
        pitch_ref: sol.first_input.pitch_ref,
    })
    .map_err(|e| e.to_string())
}

/// JSON array of built-in scenario names.
#[wasm_bindgen]
pub fn scenario_names() -> String {
    serde_json::to_string(ScenarioConfig::preset_names()).expect("static list")
}

/// JSON array of built-in latency profile names.
#[wasm_bindgen]
pub fn profile_names() -> String {
    serde_json::to_string(edgeloop_core::LinkConfig::preset_names()).expect("static list")
}

/// Run a preset episode and return summary plus decimated series as JSON.
#[wasm_bindgen]
pub fn run_scenario(
    scenario: &str,
    seed: u32,
    duration_s: f64,
    max_points: usize,
) -> Result<String, JsError> {
    run_episode_impl(scenario, seed, duration_s, max_points).map_err(|e| JsError::new(&e))
}

/// Draw link-delay samples from a lognormal-with-spikes profile as JSON.
#[wasm_bindgen]
pub fn sample_delays(
    mean_ms: f64,
    jitter_std_ms: f64,
    spike_prob: f64,
    spike_scale: f64,
    count: usize,
    seed: u32,
) -> Result<String, JsError> {
    sample_delays_impl(mean_ms, jitter_std_ms, spike_prob, spike_scale, count, seed)
        .map_err(|e| JsError::new(&e))
}

/// Solve one horizon along a preset trajectory and return the prediction and
/// cost trace as JSON.
#[wasm_bindgen]
pub fn solve_preview(scenario: &str, t: f64, horizon: usize) -> Result<String, JsError> {
    solve_preview_impl(scenario, t, horizon).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).expect("valid JSON")
    }

    #[test]
    fn name_lists_parse() {
        let scenarios = parse(&scenario_names());
        assert_eq!(scenarios.as_array().unwrap().len(), 5);
        let profiles = parse(&profile_names());
        assert!(profiles.as_array().unwrap().iter().any(|v| v == "profile-A"));
    }

    #[test]
    fn hover_episode_payload_shape() {
        let json = run_episode_impl("hover-ideal", 1, 1.0, 50).unwrap();
        let v = parse(&json);
        assert_eq!(v["cycles"], 100);
        assert_eq!(v["degraded"], 0);
        let t = v["series"]["t"].as_array().unwrap();
        assert!(t.len() <= 50, "decimation failed: {} points", t.len());
        assert!(v["summary"]["tracking_error_max"].as_f64().unwrap() < 1e-3);
    }

    /// Everything except the measured solver wall times must replay exactly.
    #[test]
    fn episodes_are_deterministic() {
        let strip = |json: &str| {
            let mut v = parse(json);
            v["solver"] = Value::Null;
            v
        };
        let a = strip(&run_episode_impl("circular-profile-B", 3, 2.0, 200).unwrap());
        let b = strip(&run_episode_impl("circular-profile-B", 3, 2.0, 200).unwrap());
        assert_eq!(a, b);
        let c = strip(&run_episode_impl("circular-profile-B", 4, 2.0, 200).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn unknown_scenario_is_reported() {
        let err = run_episode_impl("zigzag", 1, 1.0, 100).unwrap_err();
        assert!(err.contains("unknown scenario"));
        assert!(err.contains("hover-ideal"));
    }

    #[test]
    fn duration_is_clamped_to_the_trajectory() {
        let json = run_episode_impl("hover-ideal", 1, 500.0, 10_000).unwrap();
        let v = parse(&json);
        assert_eq!(v["cycles"], 1000, "10 s trajectory at 100 Hz");
    }

    #[test]
    fn delay_samples_match_configuration() {
        let json = sample_delays_impl(14.2, 3.55, 0.0, 5.0, 20_000, 42).unwrap();
        let v = parse(&json);
        let mean = v["mean"].as_f64().unwrap();
        assert!((mean - 14.2).abs() / 14.2 < 0.05, "mean {mean}");
        let samples = v["samples"].as_array().unwrap();
        assert_eq!(samples.len(), 20_000);
        assert!(samples.iter().all(|s| s.as_f64().unwrap() >= 0.0));
    }

    #[test]
    fn delay_parameter_validation() {
        assert!(sample_delays_impl(f64::NAN, 1.0, 0.0, 5.0, 10, 1).is_err());
        assert!(sample_delays_impl(10.0, 1.0, 1.5, 5.0, 10, 1).is_err());
        assert!(sample_delays_impl(10.0, 1.0, 0.0, 5.0, 0, 1).is_err());
    }

    #[test]
    fn solve_preview_closes_toward_the_reference() {
        let json = solve_preview_impl("circular-profile-A", 10.0, 50).unwrap();
        let v = parse(&json);
        let trace: Vec<f64> = v["cost_trace"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]), "non-monotone trace");
        assert!(
            trace.last().unwrap() < trace.first().unwrap(),
            "solver did not improve on the steady-input start"
        );
        assert_eq!(v["predicted"]["x"].as_array().unwrap().len(), 50);
        assert_eq!(v["reference"]["x"].as_array().unwrap().len(), 50);
        // Circular flight stays near the 2 m altitude band.
        for z in v["predicted"]["z"].as_array().unwrap() {
            let z = z.as_f64().unwrap();
            assert!((z - 2.0).abs() < 0.5, "prediction left the altitude band: z = {z}");
        }
    }

    #[test]
    fn solve_preview_rejects_out_of_range_inputs() {
        assert!(solve_preview_impl("circular-profile-A", -1.0, 50).is_err());
        assert!(solve_preview_impl("circular-profile-A", 1e9, 50).is_err());
        assert!(solve_preview_impl("circular-profile-A", 10.0, 0).is_err());
    }
}
