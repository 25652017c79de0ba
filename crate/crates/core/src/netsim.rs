//! Topic-based publish/subscribe bus with per-direction stochastic delay
//! injection, standing in for the robot-to-edge network link.
//!
//! Delays are sampled per message from a [`LatencyProfile`] (degenerate or
//! lognormal-with-spikes). Delivery per topic is FIFO: a later message that
//! draws a shorter delay has its delivery time raised to the previous
//! message's, so in-order transport semantics hold for every seed.

use crate::dynamics::{ControlInput, UavState};
use crate::mpc::ReferencePoint;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BusError {
    #[error("cannot publish to a closed bus")]
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayDistribution {
    /// Always returns the mean. Zero variance; used for exact timing
    /// reproduction.
    Degenerate,
    /// Lognormal body parameterized by the delay's own mean and standard
    /// deviation, with Bernoulli multiplicative spikes.
    LognormalWithSpikes,
}

/// One-way delay model for one link direction. Milliseconds throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub mean_ms: f64,
    pub jitter_std_ms: f64,
    /// Probability that a sample is multiplied by `spike_scale`.
    pub spike_prob: f64,
    pub spike_scale: f64,
    /// Minimum deliverable delay; samples are clamped up to it.
    pub floor_ms: f64,
    pub distribution: DelayDistribution,
}

impl LatencyProfile {
    /// Zero-variance profile that reproduces `mean_ms` exactly.
    pub fn degenerate(mean_ms: f64) -> Self {
        Self {
            mean_ms,
            jitter_std_ms: 0.0,
            spike_prob: 0.0,
            spike_scale: 1.0,
            floor_ms: 0.0,
            distribution: DelayDistribution::Degenerate,
        }
    }

    /// Stochastic profile around `mean_ms` with the default shape:
    /// jitter std = 0.25 * mean, 1% spikes at 5x.
    pub fn stochastic(mean_ms: f64) -> Self {
        Self {
            mean_ms,
            jitter_std_ms: 0.25 * mean_ms,
            spike_prob: 0.01,
            spike_scale: 5.0,
            floor_ms: 0.0,
            distribution: DelayDistribution::LognormalWithSpikes,
        }
    }
}

/// The two profiles of one robot-edge link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub robot_to_edge: LatencyProfile,
    pub edge_to_robot: LatencyProfile,
}

impl LinkConfig {
    /// First measured architecture: 14.2 ms up, 17.6 ms down, stochastic.
    pub fn profile_a() -> Self {
        Self {
            robot_to_edge: LatencyProfile::stochastic(14.2),
            edge_to_robot: LatencyProfile::stochastic(17.6),
        }
    }

    /// Second measured architecture: 9.5 ms up, 13.1 ms down, stochastic.
    pub fn profile_b() -> Self {
        Self {
            robot_to_edge: LatencyProfile::stochastic(9.5),
            edge_to_robot: LatencyProfile::stochastic(13.1),
        }
    }

    /// Degenerate variant of [`Self::profile_a`] for exact timing runs.
    pub fn profile_a_exact() -> Self {
        Self {
            robot_to_edge: LatencyProfile::degenerate(14.2),
            edge_to_robot: LatencyProfile::degenerate(17.6),
        }
    }

    /// Degenerate variant of [`Self::profile_b`] for exact timing runs.
    pub fn profile_b_exact() -> Self {
        Self {
            robot_to_edge: LatencyProfile::degenerate(9.5),
            edge_to_robot: LatencyProfile::degenerate(13.1),
        }
    }

    /// Zero-delay link.
    pub fn ideal() -> Self {
        Self {
            robot_to_edge: LatencyProfile::degenerate(0.0),
            edge_to_robot: LatencyProfile::degenerate(0.0),
        }
    }

    pub fn preset_names() -> &'static [&'static str] {
        &["profile-A", "profile-B", "profile-A-exact", "profile-B-exact", "ideal"]
    }

    /// Look up a named preset, case-insensitively.
    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "profile-a" => Some(Self::profile_a()),
            "profile-b" => Some(Self::profile_b()),
            "profile-a-exact" => Some(Self::profile_a_exact()),
            "profile-b-exact" => Some(Self::profile_b_exact()),
            "ideal" => Some(Self::ideal()),
            _ => None,
        }
    }
}

/// Link directions map to distinct RNG streams of the episode seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkDirection {
    RobotToEdge,
    EdgeToRobot,
}

/// Seeded delay stream for one link direction: same seed, same delays.
#[derive(Debug, Clone)]
pub struct LinkRng(ChaCha8Rng);

impl LinkRng {
    pub fn new(seed: u64, direction: LinkDirection) -> Self {
        let stream = match direction {
            LinkDirection::RobotToEdge => 0,
            LinkDirection::EdgeToRobot => 1,
        };
        Self::with_stream(seed, stream)
    }

    /// Arbitrary stream index; used by tests and standalone sampling.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self(rng)
    }
}

impl RngCore for LinkRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
}

/// Draw one delay in milliseconds. Degenerate profiles return the mean
/// exactly. Lognormal profiles draw from the lognormal whose own mean and
/// std are (`mean_ms`, `jitter_std_ms`), multiply by `spike_scale` with
/// probability `spike_prob`, and clamp below at `floor_ms`. A nonpositive
/// mean or zero jitter degenerates to the mean (no draws consumed).
pub fn sample_delay(profile: &LatencyProfile, rng: &mut LinkRng) -> f64 {
    match profile.distribution {
        DelayDistribution::Degenerate => profile.mean_ms,
        DelayDistribution::LognormalWithSpikes => {
            let m = profile.mean_ms;
            let s = profile.jitter_std_ms;
            if m <= 0.0 || s <= 0.0 {
                return m.max(profile.floor_ms);
            }
            // Lognormal with E[X] = m, Std[X] = s.
            let sigma_sq = (1.0 + (s / m).powi(2)).ln();
            let mu = m.ln() - sigma_sq / 2.0;
            let body = LogNormal::new(mu, sigma_sq.sqrt()).expect("finite lognormal parameters");
            let mut delay = body.sample(rng);
            if rng.random::<f64>() < profile.spike_prob {
                delay *= profile.spike_scale;
            }
            delay.max(profile.floor_ms)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topic {
    Odometry,
    Reference,
    Command,
}

impl Topic {
    fn index(self) -> usize {
        match self {
            Topic::Odometry => 0,
            Topic::Reference => 1,
            Topic::Command => 2,
        }
    }
}

/// Message body; by convention the variant matches the topic it travels on,
/// but the bus treats payloads opaquely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Odometry(UavState),
    Reference(ReferencePoint),
    Command(ControlInput),
}

impl Payload {
    pub fn as_odometry(&self) -> Option<&UavState> {
        match self {
            Payload::Odometry(x) => Some(x),
            _ => None,
        }
    }

    pub fn as_command(&self) -> Option<&ControlInput> {
        match self {
            Payload::Command(u) => Some(u),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StampedMessage {
    /// Per-topic monotone counter.
    pub seq: u64,
    pub topic: Topic,
    /// Simulation clock at publish, seconds.
    pub t_published: f64,
    /// Delivery time, seconds; >= t_published, nondecreasing per topic.
    pub t_deliver: f64,
    pub payload: Payload,
}

/// Receipt for one published message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Published {
    pub seq: u64,
    pub t_deliver: f64,
    /// Effective one-way delay in ms: the sampled value, or the raised value
    /// if in-order delivery had to push `t_deliver` past a predecessor.
    pub delay_ms: f64,
}

const TOPIC_COUNT: usize = 3;

/// Single-task bus: per-topic FIFO queues keyed by delivery time.
#[derive(Debug, Default)]
pub struct SimBus {
    queues: [VecDeque<StampedMessage>; TOPIC_COUNT],
    next_seq: [u64; TOPIC_COUNT],
    last_deliver: [Option<f64>; TOPIC_COUNT],
    published: [u64; TOPIC_COUNT],
    delivered: [u64; TOPIC_COUNT],
    closed: bool,
}

impl SimBus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stamp, delay, and enqueue a message. The delivery time is
    /// `now + sampled delay`, raised to the previous delivery time on the
    /// topic so per-topic order matches publication order.
    pub fn publish(
        &mut self,
        topic: Topic,
        payload: Payload,
        now: f64,
        profile: &LatencyProfile,
        rng: &mut LinkRng,
    ) -> Result<Published, BusError> {
        if self.closed {
            return Err(BusError::Closed);
        }
        let i = topic.index();
        let mut delay_ms = sample_delay(profile, rng);
        debug_assert!(delay_ms >= 0.0, "negative delay {delay_ms}");
        let mut t_deliver = now + delay_ms / 1000.0;
        if let Some(prev) = self.last_deliver[i] {
            if t_deliver < prev {
                t_deliver = prev;
                delay_ms = (t_deliver - now) * 1000.0;
            }
        }
        self.last_deliver[i] = Some(t_deliver);
        let seq = self.next_seq[i];
        self.next_seq[i] += 1;
        self.published[i] += 1;
        self.queues[i].push_back(StampedMessage { seq, topic, t_published: now, t_deliver, payload });
        Ok(Published { seq, t_deliver, delay_ms })
    }

    /// Remove and return all messages on `topic` due by `now` (inclusive),
    /// in seq order. The measured one-way delay of a delivered message is
    /// `t_deliver - t_published`.
    pub fn poll_deliveries(&mut self, topic: Topic, now: f64) -> Vec<StampedMessage> {
        let i = topic.index();
        let mut out = Vec::new();
        while self.queues[i].front().is_some_and(|m| m.t_deliver <= now) {
            out.push(self.queues[i].pop_front().unwrap());
        }
        self.delivered[i] += out.len() as u64;
        out
    }

    pub fn in_flight(&self, topic: Topic) -> usize {
        self.queues[topic.index()].len()
    }

    pub fn published_count(&self, topic: Topic) -> u64 {
        self.published[topic.index()]
    }

    pub fn delivered_count(&self, topic: Topic) -> u64 {
        self.delivered[topic.index()]
    }

    /// Stop accepting publications. Pending messages remain pollable.
    pub fn close(&mut self) {
        self.closed = true;
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }
}

/// Mutex-synchronized bus for the realtime runtime: plant and controller
/// threads share it; each method takes the lock for one operation.
#[derive(Debug, Default)]
pub struct SyncBus {
    inner: Mutex<SimBus>,
}

impl SyncBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(
        &self,
        topic: Topic,
        payload: Payload,
        now: f64,
        profile: &LatencyProfile,
        rng: &mut LinkRng,
    ) -> Result<Published, BusError> {
        self.inner.lock().unwrap().publish(topic, payload, now, profile, rng)
    }

    pub fn poll_deliveries(&self, topic: Topic, now: f64) -> Vec<StampedMessage> {
        self.inner.lock().unwrap().poll_deliveries(topic, now)
    }

    pub fn in_flight(&self, topic: Topic) -> usize {
        self.inner.lock().unwrap().in_flight(topic)
    }

    pub fn close(&self) {
        self.inner.lock().unwrap().close()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn any_payload() -> Payload {
        Payload::Command(ControlInput::new(9.81, 0.0, 0.0))
    }

    #[test]
    fn degenerate_profile_returns_mean_exactly() {
        let profile = LatencyProfile::degenerate(14.2);
        let mut rng = LinkRng::new(1, LinkDirection::RobotToEdge);
        for _ in 0..10 {
            assert_eq!(sample_delay(&profile, &mut rng), 14.2);
        }
        let zero = LatencyProfile::degenerate(0.0);
        assert_eq!(sample_delay(&zero, &mut rng), 0.0);
    }

    #[test]
    fn lognormal_matches_configured_moments() {
        let profile = LatencyProfile {
            mean_ms: 9.5,
            jitter_std_ms: 2.0,
            spike_prob: 0.0,
            spike_scale: 1.0,
            floor_ms: 0.0,
            distribution: DelayDistribution::LognormalWithSpikes,
        };
        let mut rng = LinkRng::with_stream(42, 0);
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| sample_delay(&profile, &mut rng)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 9.5).abs() / 9.5 < 0.02, "empirical mean {mean}");
        assert!((var.sqrt() - 2.0).abs() / 2.0 < 0.05, "empirical std {}", var.sqrt());
        assert!(samples.iter().all(|d| *d >= 0.0));
    }

    #[test]
    fn spikes_scale_the_body() {
        let mut always = LatencyProfile::stochastic(14.2);
        always.spike_prob = 1.0;
        let mut rng = LinkRng::with_stream(7, 3);
        let n = 20_000;
        let mean = (0..n).map(|_| sample_delay(&always, &mut rng)).sum::<f64>() / n as f64;
        // Every sample spiked: the mean scales by spike_scale.
        assert!((mean - 5.0 * 14.2).abs() / (5.0 * 14.2) < 0.05, "spiked mean {mean}");
    }

    #[test]
    fn floor_clamps_from_below() {
        let profile = LatencyProfile {
            mean_ms: 5.0,
            jitter_std_ms: 5.0,
            spike_prob: 0.0,
            spike_scale: 1.0,
            floor_ms: 4.0,
            distribution: DelayDistribution::LognormalWithSpikes,
        };
        let mut rng = LinkRng::with_stream(3, 0);
        let samples: Vec<f64> = (0..5_000).map(|_| sample_delay(&profile, &mut rng)).collect();
        assert!(samples.iter().all(|d| *d >= 4.0));
        assert!(samples.iter().any(|d| *d == 4.0), "no sample hit the floor clamp");
    }

    #[test]
    fn seeded_streams_replay_and_separate() {
        let profile = LatencyProfile::stochastic(10.0);
        let draw = |seed, stream| {
            let mut rng = LinkRng::with_stream(seed, stream);
            (0..50).map(|_| sample_delay(&profile, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9, 0), draw(9, 0));
        assert_ne!(draw(9, 0), draw(9, 1));
        assert_ne!(draw(9, 0), draw(10, 0));
    }

    #[test]
    fn publish_stamps_delivery_with_sampled_delay() {
        let mut bus = SimBus::new();
        let mut rng = LinkRng::new(1, LinkDirection::RobotToEdge);
        let p = bus
            .publish(Topic::Odometry, any_payload(), 1.0, &LatencyProfile::degenerate(14.2), &mut rng)
            .unwrap();
        assert_abs_diff_eq!(p.t_deliver, 1.0142, epsilon = 1e-12);

        let q = bus
            .publish(Topic::Command, any_payload(), 2.0, &LatencyProfile::degenerate(0.0), &mut rng)
            .unwrap();
        assert_eq!(q.t_deliver, 2.0);
    }

    #[test]
    fn fifo_clamp_raises_shorter_later_delays() {
        let mut bus = SimBus::new();
        let mut rng = LinkRng::new(1, LinkDirection::RobotToEdge);
        let first = bus
            .publish(Topic::Command, any_payload(), 0.0, &LatencyProfile::degenerate(50.0), &mut rng)
            .unwrap();
        let second = bus
            .publish(Topic::Command, any_payload(), 0.001, &LatencyProfile::degenerate(10.0), &mut rng)
            .unwrap();
        assert_eq!(first.t_deliver, 0.05);
        assert_eq!(second.t_deliver, 0.05, "second delivery not raised to the first");
        let delivered = bus.poll_deliveries(Topic::Command, 0.05);
        assert_eq!(delivered.len(), 2);
        assert_eq!(delivered[0].seq, 0);
        assert_eq!(delivered[1].seq, 1);
    }

    #[test]
    fn poll_respects_time_and_boundary() {
        let mut bus = SimBus::new();
        let mut rng = LinkRng::new(1, LinkDirection::EdgeToRobot);
        let profile = LatencyProfile::degenerate(20.0);
        bus.publish(Topic::Odometry, any_payload(), 0.0, &profile, &mut rng).unwrap();
        assert!(bus.poll_deliveries(Topic::Odometry, 0.019).is_empty());
        // Boundary is inclusive.
        assert_eq!(bus.poll_deliveries(Topic::Odometry, 0.02).len(), 1);
    }

    #[test]
    fn staggered_messages_deliver_in_seq_order() {
        let mut bus = SimBus::new();
        let mut rng = LinkRng::new(5, LinkDirection::RobotToEdge);
        for (now, mean) in [(0.0, 30.0), (0.01, 5.0), (0.02, 80.0)] {
            bus.publish(Topic::Reference, any_payload(), now, &LatencyProfile::degenerate(mean), &mut rng)
                .unwrap();
        }
        let all = bus.poll_deliveries(Topic::Reference, 10.0);
        assert_eq!(all.iter().map(|m| m.seq).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(all.windows(2).all(|w| w[0].t_deliver <= w[1].t_deliver));
    }

    #[test]
    fn seq_counters_are_per_topic() {
        let mut bus = SimBus::new();
        let mut rng = LinkRng::new(2, LinkDirection::RobotToEdge);
        let profile = LatencyProfile::degenerate(1.0);
        let a = bus.publish(Topic::Odometry, any_payload(), 0.0, &profile, &mut rng).unwrap();
        let b = bus.publish(Topic::Command, any_payload(), 0.0, &profile, &mut rng).unwrap();
        let c = bus.publish(Topic::Odometry, any_payload(), 0.1, &profile, &mut rng).unwrap();
        assert_eq!((a.seq, b.seq, c.seq), (0, 0, 1));
    }

    #[test]
    fn message_accounting_balances() {
        let mut bus = SimBus::new();
        let mut rng = LinkRng::new(11, LinkDirection::RobotToEdge);
        let profile = LatencyProfile::stochastic(10.0);
        for i in 0..40 {
            bus.publish(Topic::Command, any_payload(), i as f64 * 0.01, &profile, &mut rng).unwrap();
        }
        let delivered = bus.poll_deliveries(Topic::Command, 0.25);
        assert_eq!(
            bus.published_count(Topic::Command),
            bus.delivered_count(Topic::Command) + bus.in_flight(Topic::Command) as u64,
        );
        assert_eq!(delivered.len() as u64, bus.delivered_count(Topic::Command));
    }

    #[test]
    fn closed_bus_rejects_publish_but_still_delivers() {
        let mut bus = SimBus::new();
        let mut rng = LinkRng::new(1, LinkDirection::RobotToEdge);
        let profile = LatencyProfile::degenerate(5.0);
        bus.publish(Topic::Command, any_payload(), 0.0, &profile, &mut rng).unwrap();
        bus.close();
        assert!(bus.is_closed());
        let err = bus.publish(Topic::Command, any_payload(), 0.1, &profile, &mut rng).unwrap_err();
        assert_eq!(err, BusError::Closed);
        assert_eq!(bus.poll_deliveries(Topic::Command, 1.0).len(), 1);
    }

    #[test]
    fn identical_seeds_give_identical_delivery_schedules() {
        let run = |seed: u64| {
            let mut bus = SimBus::new();
            let mut rng = LinkRng::new(seed, LinkDirection::RobotToEdge);
            let profile = LinkConfig::profile_a().robot_to_edge;
            (0..100)
                .map(|i| {
                    bus.publish(Topic::Odometry, any_payload(), i as f64 * 0.01, &profile, &mut rng)
                        .unwrap()
                        .t_deliver
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(77), run(77));
        assert_ne!(run(77), run(78));
    }

    #[test]
    fn preset_lookup() {
        assert_eq!(LinkConfig::preset("profile-A").unwrap().robot_to_edge.mean_ms, 14.2);
        assert_eq!(LinkConfig::preset("profile-b").unwrap().edge_to_robot.mean_ms, 13.1);
        assert_eq!(
            LinkConfig::preset("Profile-A-Exact").unwrap().robot_to_edge.distribution,
            DelayDistribution::Degenerate
        );
        assert_eq!(LinkConfig::preset("ideal").unwrap().robot_to_edge.mean_ms, 0.0);
        assert!(LinkConfig::preset("wifi").is_none());
        assert_eq!(LinkConfig::preset_names().len(), 5);
    }

    #[test]
    fn payload_accessors() {
        let state = UavState::at_rest(Vector3::new(1.0, 2.0, 3.0));
        let odo = Payload::Odometry(state);
        assert_eq!(odo.as_odometry(), Some(&state));
        assert_eq!(odo.as_command(), None);
    }

    proptest! {
        #[test]
        fn delivery_order_matches_publication_order(
            seed in 0u64..1000,
            mean in 0.1..50.0f64,
            jitter_frac in 0.0..2.0f64,
            count in 1usize..60,
        ) {
            let profile = LatencyProfile {
                mean_ms: mean,
                jitter_std_ms: jitter_frac * mean,
                spike_prob: 0.05,
                spike_scale: 5.0,
                floor_ms: 0.0,
                distribution: DelayDistribution::LognormalWithSpikes,
            };
            let mut bus = SimBus::new();
            let mut rng = LinkRng::with_stream(seed, 0);
            for i in 0..count {
                let p = bus.publish(Topic::Command, any_payload(), i as f64 * 0.01, &profile, &mut rng).unwrap();
                prop_assert!(p.t_deliver >= i as f64 * 0.01);
            }
            let all = bus.poll_deliveries(Topic::Command, f64::INFINITY);
            prop_assert_eq!(all.len(), count);
            for (i, m) in all.iter().enumerate() {
                prop_assert_eq!(m.seq, i as u64);
                prop_assert!(m.t_deliver >= m.t_published);
            }
            for w in all.windows(2) {
                prop_assert!(w[0].t_deliver <= w[1].t_deliver);
            }
        }
    }
}
