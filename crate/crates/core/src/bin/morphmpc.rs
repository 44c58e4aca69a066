use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use morphmpc::config::{load_config, parse_schedule};
use morphmpc::sim::{compute_metrics, run_scenario, MetricsConfig, NoiseConfig, ScenarioConfig, ScenarioKind};

/// Closed-loop flight scenarios for the foldable quadrotor.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hold a fixed position while cycling through formations.
    Hover(RunArgs),
    /// Fly a square of waypoints while cycling through formations.
    Square(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (INI sections geometry, plant, attitude_mpc, trajectory, scenario).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Simulated time in seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV trace destination; `-` writes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Formation switches as `time:formation,...`, e.g. `0:X,15:H`.
    #[arg(long)]
    schedule: Option<String>,
    /// Multiplier on the default noise levels; 0 disables noise.
    #[arg(long)]
    noise: Option<f64>,
    /// Metrics report destination; `-` writes to stdout.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

fn build_config(kind: ScenarioKind, args: &RunArgs) -> Result<ScenarioConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path, kind).map_err(|e| format!("{}: {e}", path.display()))?,
        None => ScenarioConfig::for_kind(kind),
    };
    if cfg.kind != kind {
        return Err(format!(
            "configuration describes a {} scenario but the {} command was given",
            cfg.kind.as_str(),
            kind.as_str()
        ));
    }
    if let Some(d) = args.duration {
        cfg.duration = d;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(s) = &args.schedule {
        cfg.schedule = parse_schedule(s)?;
    }
    if let Some(k) = args.noise {
        cfg.noise = NoiseConfig::DEFAULT.scaled(k);
    }
    Ok(cfg)
}

fn open_output(path: &PathBuf) -> io::Result<Box<dyn io::Write>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(io::stdout().lock()))
    } else {
        Ok(Box::new(BufWriter::new(File::create(path)?)))
    }
}

fn run(kind: ScenarioKind, args: RunArgs) -> Result<(), String> {
    let cfg = build_config(kind, &args)?;
    let trace = run_scenario(&cfg).map_err(|e| e.to_string())?;
    if let Some(path) = &args.out {
        let out = open_output(path).map_err(|e| format!("{}: {e}", path.display()))?;
        trace.write_csv(out).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    let metrics = compute_metrics(&trace, &MetricsConfig::from_scenario(&cfg)).map_err(|e| e.to_string())?;
    match &args.metrics {
        Some(path) => {
            let mut out = open_output(path).map_err(|e| format!("{}: {e}", path.display()))?;
            out.write_all(metrics.report().as_bytes()).map_err(|e| format!("{}: {e}", path.display()))?;
        }
        None if args.out.is_none() => print!("{}", metrics.report()),
        None => {}
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Hover(args) => run(ScenarioKind::Hover, args),
        Command::Square(args) => run(ScenarioKind::Square, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
