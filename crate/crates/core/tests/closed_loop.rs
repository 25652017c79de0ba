//! End-to-end episodes: tracking quality, latency bookkeeping, and replay
//! behavior of the full plant-link-controller loop.

use edgeloop_core::{
    compute_rtt, run_episode, LinkConfig, Mode, ScenarioConfig, TrajectorySpec,
};
use nalgebra::Vector3;

#[test]
fn helical_tracking_under_stochastic_latency() {
    let mut cfg = ScenarioConfig::helical_profile_a();
    cfg.duration = 12.0;
    let episode = run_episode(&cfg).unwrap();
    assert_eq!(episode.summary.degraded_cycles, 0);
    assert!(episode.monotone_descent);
    assert!(
        episode.summary.tracking_error_mean < 0.7,
        "post-transient mean error {}",
        episode.summary.tracking_error_mean
    );
}

#[test]
fn circular_tracking_under_stochastic_latency() {
    let mut cfg = ScenarioConfig::circular_profile_b();
    cfg.duration = 10.0;
    let episode = run_episode(&cfg).unwrap();
    assert_eq!(episode.summary.degraded_cycles, 0);
    assert!(
        episode.summary.tracking_error_mean < 0.7,
        "post-transient mean error {}",
        episode.summary.tracking_error_mean
    );
}

#[test]
fn offset_start_converges_to_the_setpoint() {
    let mut cfg = ScenarioConfig::hover_ideal();
    cfg.duration = 4.0;
    cfg.initial_position = Some(Vector3::new(0.5, -0.5, 1.5));
    let episode = run_episode(&cfg).unwrap();
    let first = episode.records.first().unwrap();
    let last = episode.records.last().unwrap();
    assert!(first.tracking_error > 0.8, "offset start should begin in error");
    assert!(last.tracking_error < 0.05, "final error {}", last.tracking_error);
}

#[test]
fn ideal_link_contributes_zero_latency() {
    let mut cfg = ScenarioConfig::hover_ideal();
    cfg.duration = 1.0;
    let episode = run_episode(&cfg).unwrap();
    for r in &episode.records {
        assert_eq!(r.ttre_ms, 0.0);
        assert_eq!(r.tter_ms, 0.0);
        assert_eq!(r.rtt_ms, r.exec_ms);
        assert_eq!(r.rtt_ms, compute_rtt(r));
    }
}

#[test]
fn stochastic_delays_have_sane_statistics() {
    let mut cfg = ScenarioConfig::helical_profile_a();
    cfg.duration = 5.0;
    let episode = run_episode(&cfg).unwrap();
    let s = &episode.summary;
    assert!(s.ttre.mean > 5.0 && s.ttre.mean < 40.0, "ttre mean {}", s.ttre.mean);
    assert!(s.tter.mean > 5.0 && s.tter.mean < 50.0, "tter mean {}", s.tter.mean);
    assert!(s.rtt.max >= s.rtt.mean);
    for r in &episode.records {
        assert!(r.ttre_ms >= 0.0 && r.tter_ms >= 0.0);
        assert_eq!(r.rtt_ms, compute_rtt(r));
    }
}

#[test]
fn custom_scenario_from_parts() {
    let mut cfg = ScenarioConfig::new(TrajectorySpec::circular(), LinkConfig::profile_b(), 16.9);
    cfg.duration = 3.0;
    cfg.seed = 42;
    cfg.mode = Mode::Deterministic;
    let episode = run_episode(&cfg).unwrap();
    assert_eq!(episode.records.len(), 300);
    assert_eq!(episode.summary.config.seed, 42);
}
