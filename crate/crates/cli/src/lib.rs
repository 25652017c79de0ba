//! Command-line front end: resolve a scenario, run the episode, and write the
//! trace, plot files, summary, and manifest into the output directory.

pub mod config;
pub mod output;

use clap::error::ErrorKind;
use clap::Parser;
use config::{ConfigFileError, ManifestMeta, Overrides};
use edgeloop_core::{Episode, Mode, RuntimeError, ScenarioConfig};
use std::ffi::OsString;
use std::io;
use std::path::{Path, PathBuf};
use thiserror::Error;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigFileError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("cannot write `{path}`: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    /// 1 for configuration problems, 2 for runtime and I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) | CliError::Write { .. } => 2,
        }
    }
}

/// Closed-loop episode runner for a simulated UAV under remote MPC.
///
/// Picks a scenario (preset, config file, or both layered), runs the episode,
/// and writes trace.csv, trajectory3d.dat, delays.dat, error.dat, summary.txt,
/// and manifest.toml into the output directory.
#[derive(Debug, Parser)]
#[command(name = "edgeloop", version, about, max_term_width = 100)]
struct Cli {
    /// TOML scenario configuration; keys override the preset
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in scenario preset (see --list)
    #[arg(long, value_name = "NAME")]
    scenario: Option<String>,
    /// Episode RNG seed
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Episode length, seconds
    #[arg(long, value_name = "S")]
    duration: Option<f64>,
    /// Control rate, Hz
    #[arg(long, value_name = "HZ")]
    rate: Option<f64>,
    /// MPC horizon, steps
    #[arg(long, value_name = "N")]
    horizon: Option<usize>,
    /// Link latency preset (see --list)
    #[arg(long, value_name = "NAME")]
    profile: Option<String>,
    /// Execution-time model: `measured` or `simulated:<MS>`
    #[arg(long, value_name = "MODEL")]
    exec_model: Option<String>,
    /// `deterministic` or `realtime`
    #[arg(long, value_name = "MODE", value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// List built-in scenarios and latency profiles, then exit
    #[arg(long)]
    list: bool,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e| format!("{e}"))
}

/// Parse and execute; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if cli.list {
        println!("scenarios:");
        for name in ScenarioConfig::preset_names() {
            println!("  {name}");
        }
        println!("latency profiles:");
        for name in edgeloop_core::LinkConfig::preset_names() {
            println!("  {name}");
        }
        return Ok(());
    }

    let overrides = Overrides {
        scenario: cli.scenario.clone(),
        seed: cli.seed,
        duration: cli.duration,
        rate: cli.rate,
        horizon: cli.horizon,
        profile: cli.profile.clone(),
        exec_model: cli.exec_model.clone(),
        mode: cli.mode,
    };
    let raw = cli.config.as_deref().map(config::load_raw).transpose()?;
    let resolved = config::resolve(raw, &overrides)?;
    let source = match (&cli.config, &cli.scenario) {
        (Some(path), _) => path.display().to_string(),
        (None, Some(name)) => format!("preset:{name}"),
        (None, None) => format!("preset:{}", resolved.scenario),
    };

    let episode = edgeloop_core::run_episode(&resolved.config)?;
    let summary_text = output::render_summary(&episode, &resolved.scenario);
    write_outputs(&cli.out, &resolved.config, &episode, &summary_text, &source)?;

    print!("{summary_text}");
    println!("outputs: {}", cli.out.display());
    Ok(())
}

fn write_outputs(
    dir: &Path,
    cfg: &ScenarioConfig,
    episode: &Episode,
    summary_text: &str,
    source: &str,
) -> Result<(), CliError> {
    let write_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source: io::Error| CliError::Write { path, source }
    };
    std::fs::create_dir_all(dir).map_err(write_err(dir))?;

    let trace = dir.join(output::TRACE_FILE);
    output::write_trace(&trace, &episode.records)
        .map_err(|e| CliError::Write { path: trace.clone(), source: io::Error::other(e) })?;

    let traj = dir.join(output::TRAJECTORY_FILE);
    output::write_trajectory_dat(&traj, &episode.records).map_err(write_err(&traj))?;
    let delays = dir.join(output::DELAYS_FILE);
    output::write_delays_dat(&delays, &episode.records).map_err(write_err(&delays))?;
    let error = dir.join(output::ERROR_FILE);
    output::write_error_dat(&error, &episode.records).map_err(write_err(&error))?;

    let summary = dir.join(output::SUMMARY_FILE);
    std::fs::write(&summary, summary_text).map_err(write_err(&summary))?;

    let meta = ManifestMeta {
        tool: "edgeloop".to_string(),
        version: VERSION.to_string(),
        source: source.to_string(),
    };
    let manifest = dir.join(output::MANIFEST_FILE);
    let text = output::render_manifest(cfg, &meta)
        .map_err(|e| CliError::Write { path: manifest.clone(), source: io::Error::other(e) })?;
    std::fs::write(&manifest, text).map_err(write_err(&manifest))?;
    Ok(())
}
