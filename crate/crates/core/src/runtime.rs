//! Closed-loop episode driver: plant, controller, and bus, under a simulated
//! or wall clock.
//!
//! The plant integrates at `plant_rate` with RK4 under zero-order hold; every
//! control tick it publishes odometry. The controller, on odometry arrival,
//! previews the reference window, solves the MPC warm-started from the shifted
//! previous solution, and publishes the first input as the command. Each
//! activation appends one [`CycleRecord`] whose round trip decomposes as
//! `T_rtt = T_ttre + T_exec + T_tter` exactly, by construction.
//!
//! Deterministic mode advances a discrete-event clock and replays
//! bit-identically for a config + seed. Realtime mode runs plant and
//! controller as independent timed threads over a synchronized bus.

use crate::dynamics::{self, ControlInput, DynamicsError, UavState};
use crate::mpc::{self, InputSequence, MpcError};
use crate::netsim::{
    BusError, LinkDirection, LinkRng, Payload, Published, SimBus, Topic,
};
use crate::reference::{self, ReferenceError};
use crate::scenario::{ConfigError, ExecModel, Mode, ScenarioConfig};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("cannot summarize an empty record list")]
    EmptyRecords,
    #[error("{0}")]
    Unsupported(&'static str),
}

/// One controller activation: the Eq.-3 style timing decomposition plus the
/// plant view at send time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    /// Cycle index.
    pub k: u64,
    /// Odometry publish time (control tick), seconds.
    pub t: f64,
    /// Robot-to-edge travel time, ms.
    pub ttre_ms: f64,
    /// Controller execution time, ms.
    pub exec_ms: f64,
    /// Edge-to-robot travel time, ms.
    pub tter_ms: f64,
    /// Round trip: always the sum of the three components above.
    pub rtt_ms: f64,
    pub state_at_send: UavState,
    /// Command active under zero-order hold at this tick.
    pub applied_input: ControlInput,
    pub reference: crate::mpc::ReferencePoint,
    /// Euclidean position error against `reference` at this tick, m.
    pub tracking_error: f64,
    /// Solver diverged this cycle; the previous command was republished.
    pub degraded: bool,
}

/// `T_ttre + T_exec + T_tter`, the recomputed round trip.
pub fn compute_rtt(record: &CycleRecord) -> f64 {
    record.ttre_ms + record.exec_ms + record.tter_ms
}

/// `||p - p_ref||_2`.
pub fn euclidean_error(p: &Vector3<f64>, p_ref: &Vector3<f64>) -> f64 {
    (p - p_ref).norm()
}

/// Mean, population standard deviation, and maximum of one quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantityStats {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

/// Stats over a sample; all-zero for an empty sample.
pub fn stats(values: &[f64]) -> QuantityStats {
    if values.is_empty() {
        return QuantityStats { mean: 0.0, std: 0.0, max: 0.0 };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    QuantityStats { mean, std: variance.sqrt(), max }
}

/// Per-episode aggregates in the reporting order robot-to-edge, execution,
/// edge-to-robot, round trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub ttre: QuantityStats,
    pub exec: QuantityStats,
    pub tter: QuantityStats,
    pub rtt: QuantityStats,
    /// Tracking-error stats over cycles after the transient window (falling
    /// back to all cycles if none lie beyond it).
    pub tracking_error_mean: f64,
    pub tracking_error_max: f64,
    pub cycles: usize,
    pub degraded_cycles: usize,
    pub config: ScenarioConfig,
}

/// Aggregate records into an [`EpisodeSummary`]. The config supplies the
/// transient window and is echoed into the summary.
pub fn summarize(
    records: &[CycleRecord],
    cfg: &ScenarioConfig,
) -> Result<EpisodeSummary, RuntimeError> {
    if records.is_empty() {
        return Err(RuntimeError::EmptyRecords);
    }
    let collect = |f: fn(&CycleRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let post_transient: Vec<f64> = records
        .iter()
        .filter(|r| r.t >= cfg.transient_window)
        .map(|r| r.tracking_error)
        .collect();
    let tracking = if post_transient.is_empty() {
        stats(&collect(|r| r.tracking_error))
    } else {
        stats(&post_transient)
    };
    Ok(EpisodeSummary {
        ttre: stats(&collect(|r| r.ttre_ms)),
        exec: stats(&collect(|r| r.exec_ms)),
        tter: stats(&collect(|r| r.tter_ms)),
        rtt: stats(&collect(|r| r.rtt_ms)),
        tracking_error_mean: tracking.mean,
        tracking_error_max: tracking.max,
        cycles: records.len(),
        degraded_cycles: records.iter().filter(|r| r.degraded).count(),
        config: cfg.clone(),
    })
}

/// Records and summary of one episode, plus in-process solver statistics
/// (timing in ms, iteration counts) and a descent check aggregated over every
/// solve of the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub records: Vec<CycleRecord>,
    pub summary: EpisodeSummary,
    pub solver_time_ms: QuantityStats,
    pub solver_iterations: QuantityStats,
    /// True iff every accepted-iterate cost trace was non-increasing.
    pub monotone_descent: bool,
}

/// Edge-side controller state carried across activations.
struct Controller {
    cfg: ScenarioConfig,
    warm: Option<InputSequence>,
    u_prev: ControlInput,
    last_command: ControlInput,
    solve_times_ms: Vec<f64>,
    solve_iterations: Vec<f64>,
    monotone: bool,
}

struct Activation {
    command: ControlInput,
    degraded: bool,
    /// Wall-clock solve time, seconds; absent when the solver diverged.
    solve_time_s: Option<f64>,
}

impl Controller {
    fn new(cfg: &ScenarioConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            warm: None,
            u_prev: cfg.mpc.steady_input,
            last_command: cfg.mpc.steady_input,
            solve_times_ms: Vec::new(),
            solve_iterations: Vec::new(),
            monotone: true,
        }
    }

    /// Solve from the received state with the horizon window anchored at
    /// `window_start`, falling back to the held command on divergence.
    fn activate(&mut self, state: &UavState, window_start: f64) -> Result<Activation, RuntimeError> {
        let cfg = &self.cfg;
        let refs = reference::reference_window(
            &cfg.trajectory,
            window_start.min(cfg.trajectory.duration),
            cfg.mpc.horizon,
            cfg.mpc.dt,
        )?;
        let activation = match mpc::solve(state, &refs, self.warm.as_deref(), &self.u_prev, &cfg.mpc, &cfg.model)
        {
            Ok(sol) => {
                self.solve_times_ms.push(sol.solve_time * 1e3);
                self.solve_iterations.push(sol.iterations as f64);
                self.monotone &= sol.cost_trace.windows(2).all(|w| w[1] <= w[0]);
                self.warm = Some(mpc::shifted_warm_start(&sol.inputs));
                Activation {
                    command: sol.first_input,
                    degraded: false,
                    solve_time_s: Some(sol.solve_time),
                }
            }
            Err(MpcError::Diverged { .. }) => {
                Activation { command: self.last_command, degraded: true, solve_time_s: None }
            }
            Err(e) => return Err(e.into()),
        };
        self.last_command = activation.command;
        self.u_prev = activation.command;
        Ok(activation)
    }
}

fn plant_steps(cfg: &ScenarioConfig) -> (u64, u64, f64) {
    let dt_plant = 1.0 / cfg.plant_rate;
    let steps_per_control = (cfg.plant_rate / cfg.control_rate).round() as u64;
    let total = (cfg.duration * cfg.plant_rate).round() as u64;
    (total, steps_per_control, dt_plant)
}

/// Run one episode under the configured mode. The config is validated first;
/// violations are rejected before anything starts.
pub fn run_episode(cfg: &ScenarioConfig) -> Result<Episode, RuntimeError> {
    cfg.validate()?;
    match cfg.mode {
        Mode::Deterministic => run_deterministic(cfg),
        Mode::Realtime => realtime::run(cfg),
    }
}

fn run_deterministic(cfg: &ScenarioConfig) -> Result<Episode, RuntimeError> {
    let exec_ms = match cfg.exec_model {
        ExecModel::Simulated { mean_ms } => mean_ms,
        // Rejected by validation; kept as a hard error for direct callers.
        ExecModel::Measured => {
            return Err(RuntimeError::Unsupported(
                "measured execution time requires realtime mode",
            ))
        }
    };
    let (total_steps, steps_per_control, dt_plant) = plant_steps(cfg);
    let mut bus = SimBus::new();
    let mut rng_up = LinkRng::new(cfg.seed, LinkDirection::RobotToEdge);
    let mut rng_down = LinkRng::new(cfg.seed, LinkDirection::EdgeToRobot);
    let mut controller = Controller::new(cfg);

    let mut state = cfg.initial_state()?;
    let mut applied = cfg.mpc.steady_input;
    let mut applied_seq: Option<u64> = None;
    let mut records: Vec<CycleRecord> =
        Vec::with_capacity(total_steps.div_ceil(steps_per_control) as usize);

    for i in 0..total_steps {
        let t = i as f64 * dt_plant;

        for msg in bus.poll_deliveries(Topic::Command, t) {
            debug_assert!(msg.t_published <= msg.t_deliver && msg.t_deliver <= t);
            debug_assert!(applied_seq.is_none_or(|s| msg.seq > s), "command order regressed");
            if let Payload::Command(u) = msg.payload {
                applied = u;
                applied_seq = Some(msg.seq);
            }
        }

        if i % steps_per_control == 0 {
            // The controller chain is evaluated eagerly at the publish
            // instant: its inputs (the published state, the reference
            // schedule, the per-direction RNG streams) cannot depend on plant
            // evolution between publish and delivery, so the outcome is
            // identical to event-driven activation at t_deliver.
            let Published { t_deliver: t_arrival, delay_ms: ttre_ms, .. } = bus.publish(
                Topic::Odometry,
                Payload::Odometry(state),
                t,
                &cfg.link.robot_to_edge,
                &mut rng_up,
            )?;

            let activation = controller.activate(&state, t_arrival)?;
            let t_command = t_arrival + exec_ms / 1e3;
            let tter_ms = bus
                .publish(
                    Topic::Command,
                    Payload::Command(activation.command),
                    t_command,
                    &cfg.link.edge_to_robot,
                    &mut rng_down,
                )?
                .delay_ms;

            let reference =
                reference::sample_reference(&cfg.trajectory, t.min(cfg.trajectory.duration))?;
            records.push(CycleRecord {
                k: records.len() as u64,
                t,
                ttre_ms,
                exec_ms,
                tter_ms,
                rtt_ms: ttre_ms + exec_ms + tter_ms,
                state_at_send: state,
                applied_input: applied,
                reference,
                tracking_error: euclidean_error(&state.position, &reference.position),
                degraded: activation.degraded,
            });
        }

        state = dynamics::step_rk4(&state, &applied, &cfg.model, dt_plant)?;
    }

    let summary = summarize(&records, cfg)?;
    Ok(Episode {
        records,
        summary,
        solver_time_ms: stats(&controller.solve_times_ms),
        solver_iterations: stats(&controller.solve_iterations),
        monotone_descent: controller.monotone,
    })
}

#[cfg(not(target_arch = "wasm32"))]
mod realtime {
    use super::*;
    use crate::netsim::SyncBus;
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::Arc;
    use std::thread;
    use std::time::{Duration, Instant};

    #[derive(Clone, Copy)]
    struct Clock(Instant);

    impl Clock {
        fn now_s(&self) -> f64 {
            self.0.elapsed().as_secs_f64()
        }
    }

    /// Wall-clock episode: the plant thread integrates on its own cadence and
    /// the controller thread reacts to odometry deliveries. Records still
    /// carry the modeled link delays (delivery minus publish stamps), so the
    /// decomposition invariant is preserved; scheduling jitter shows up only
    /// in when work happens, not in the recorded delays.
    pub(super) fn run(cfg: &ScenarioConfig) -> Result<Episode, RuntimeError> {
        let (total_steps, steps_per_control, dt_plant) = plant_steps(cfg);
        let bus = Arc::new(SyncBus::new());
        let plant_done = Arc::new(AtomicBool::new(false));
        let clock = Clock(Instant::now());

        let plant = {
            let bus = Arc::clone(&bus);
            let done = Arc::clone(&plant_done);
            let cfg = cfg.clone();
            let mut state = cfg.initial_state()?;
            thread::spawn(move || -> Result<(), RuntimeError> {
                let mut rng_up = LinkRng::new(cfg.seed, LinkDirection::RobotToEdge);
                let mut applied = cfg.mpc.steady_input;
                let mut applied_seq: Option<u64> = None;
                for i in 0..total_steps {
                    let target = i as f64 * dt_plant;
                    let remaining = target - clock.now_s();
                    if remaining > 0.0 {
                        thread::sleep(Duration::from_secs_f64(remaining));
                    }
                    let now = clock.now_s();
                    for msg in bus.poll_deliveries(Topic::Command, now) {
                        debug_assert!(msg.t_deliver <= now);
                        debug_assert!(applied_seq.is_none_or(|s| msg.seq > s));
                        if let Payload::Command(u) = msg.payload {
                            applied = u;
                            applied_seq = Some(msg.seq);
                        }
                    }
                    if i % steps_per_control == 0 {
                        bus.publish(
                            Topic::Odometry,
                            Payload::Odometry(state),
                            clock.now_s(),
                            &cfg.link.robot_to_edge,
                            &mut rng_up,
                        )?;
                    }
                    state = dynamics::step_rk4(&state, &applied, &cfg.model, dt_plant)?;
                }
                done.store(true, Ordering::Release);
                Ok(())
            })
        };

        let controller_thread = {
            let bus = Arc::clone(&bus);
            let done = Arc::clone(&plant_done);
            let cfg = cfg.clone();
            thread::spawn(move || -> Result<(Vec<CycleRecord>, Controller), RuntimeError> {
                let mut rng_down = LinkRng::new(cfg.seed, LinkDirection::EdgeToRobot);
                let mut controller = Controller::new(&cfg);
                let mut records = Vec::new();
                // Generous ceiling so a stalled plant cannot hang the episode.
                let deadline = cfg.duration + 10.0;
                loop {
                    let now = clock.now_s();
                    let msgs = bus.poll_deliveries(Topic::Odometry, now);
                    if msgs.is_empty() {
                        if done.load(Ordering::Acquire) && bus.in_flight(Topic::Odometry) == 0 {
                            break;
                        }
                        if now > deadline {
                            break;
                        }
                        thread::sleep(Duration::from_micros(200));
                        continue;
                    }
                    for msg in msgs {
                        let Payload::Odometry(state) = msg.payload else { continue };
                        let ttre_ms = (msg.t_deliver - msg.t_published) * 1e3;
                        // The plant's held input is not observable here; the
                        // previous published command is the closest causal
                        // stand-in for what was active at send time.
                        let in_effect = controller.last_command;
                        let activation = controller.activate(&state, clock.now_s())?;
                        let exec_ms = match cfg.exec_model {
                            ExecModel::Measured => activation.solve_time_s.unwrap_or(0.0) * 1e3,
                            ExecModel::Simulated { mean_ms } => {
                                if mean_ms > 0.0 {
                                    thread::sleep(Duration::from_secs_f64(mean_ms / 1e3));
                                }
                                mean_ms
                            }
                        };
                        let t_command = clock.now_s();
                        let tter_ms = bus
                            .publish(
                                Topic::Command,
                                Payload::Command(activation.command),
                                t_command,
                                &cfg.link.edge_to_robot,
                                &mut rng_down,
                            )?
                            .delay_ms;
                        let t_sent = msg.t_published;
                        let reference = reference::sample_reference(
                            &cfg.trajectory,
                            t_sent.min(cfg.trajectory.duration),
                        )?;
                        records.push(CycleRecord {
                            k: records.len() as u64,
                            t: t_sent,
                            ttre_ms,
                            exec_ms,
                            tter_ms,
                            rtt_ms: ttre_ms + exec_ms + tter_ms,
                            state_at_send: state,
                            applied_input: in_effect,
                            reference,
                            tracking_error: euclidean_error(&state.position, &reference.position),
                            degraded: activation.degraded,
                        });
                    }
                }
                Ok((records, controller))
            })
        };

        plant.join().expect("plant thread panicked")?;
        let (records, controller) =
            controller_thread.join().expect("controller thread panicked")?;
        let summary = summarize(&records, cfg)?;
        Ok(Episode {
            records,
            summary,
            solver_time_ms: stats(&controller.solve_times_ms),
            solver_iterations: stats(&controller.solve_iterations),
            monotone_descent: controller.monotone,
        })
    }
}

#[cfg(target_arch = "wasm32")]
mod realtime {
    use super::*;

    pub(super) fn run(_cfg: &ScenarioConfig) -> Result<Episode, RuntimeError> {
        Err(RuntimeError::Unsupported("realtime mode requires threads, unavailable on wasm"))
    }
}
