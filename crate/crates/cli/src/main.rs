mod config;
mod output;
mod plots;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::ExperimentConfig;
use output::{envelope, metadata, OutDir, RunStatus};
use plots::PlotKind;

/// Experiments for the equation Δu = m·u^(−α): radial shooting, bifurcation constants,
/// Dirichlet solves, stability spectra, continuation and estimate checks.
///
/// Every setting lives in a TOML config (see configs/reference.toml for all defaults) and
/// can be overridden with `--override section.key=value`.
///
/// Exit codes: 0 success, 1 internal or I/O error, 2 nonexistence detected, 3 no
/// convergence, 4 configuration error.
#[derive(Debug, Parser)]
#[command(name = "singlab", version)]
struct Cli {
    /// TOML config file; omitted sections take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir, default "singlab-out").
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `section.key=value`, value in TOML syntax; repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Do not print the result summary.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Radial profiles for [radial].eps and the shooting-map scan.
    Radial,
    /// C1/C2 from the shooting-map scan, plus solution counts at [radial].levels.
    Bifurcation,
    /// Dirichlet solve with [solve] settings (maximal iteration or Newton).
    Solve,
    /// Smallest eigenvalue of the linearized operator at a cone or a computed solution.
    Stability,
    /// Boundary-data homotopy [continue].from -> .to, and optional singular sequence.
    Continue,
    /// Positivity, integral, Hölder, log-cutoff and box-dimension checks.
    Estimates,
    /// The numbered acceptance criteria ([reproduce].criteria, empty = all).
    Reproduce,
    /// Emit a gnuplot script for an existing scan, trace or profiles file.
    Plot {
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long)]
        input: PathBuf,
        /// Height of the cone reference line (scan) or slope of u = c·r (profiles).
        #[arg(long, default_value_t = 1.0)]
        cone_level: f64,
    },
    /// Print the resolved config as TOML.
    Config,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Radial => "radial",
            Command::Bifurcation => "bifurcation",
            Command::Solve => "solve",
            Command::Stability => "stability",
            Command::Continue => "continue",
            Command::Estimates => "estimates",
            Command::Reproduce => "reproduce",
            Command::Plot { .. } => "plot",
            Command::Config => "config",
        }
    }
}

fn finish(
    out: Option<&mut OutDir>,
    name: &str,
    hash: &str,
    results: serde_json::Value,
    status: RunStatus,
    quiet: bool,
) -> ExitCode {
    let body = envelope(name, hash, results, status);
    if let Some(out) = out {
        if let Err(e) = out.write(&format!("{name}.json"), body.as_bytes()) {
            eprintln!("singlab: cannot write summary: {e}");
            return ExitCode::from(RunStatus::Error.exit_code() as u8);
        }
    }
    if !quiet {
        print!("{body}");
    }
    ExitCode::from(status.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let cfg = match ExperimentConfig::load(cli.config.as_deref(), &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("singlab: {e}");
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(config::OutputConfig::default().dir));
            let mut out = OutDir::create(&dir).ok();
            return finish(out.as_mut(), name, "", json!({"error": e.0}), RunStatus::ConfigError, cli.quiet);
        }
    };
    if let Command::Config = cli.command {
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }
    let hash = cfg.hash();
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let mut out = match OutDir::create(&dir) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("singlab: cannot create {}: {e}", dir.display());
            return ExitCode::from(RunStatus::Error.exit_code() as u8);
        }
    };
    let start = Instant::now();
    let result = match &cli.command {
        Command::Radial => run::radial(&cfg, &mut out),
        Command::Bifurcation => run::bifurcation(&cfg, &mut out),
        Command::Solve => run::solve(&cfg, &mut out),
        Command::Stability => run::stability(&cfg, &mut out),
        Command::Continue => run::continuation(&cfg, &mut out),
        Command::Estimates => run::estimates(&cfg, &mut out),
        Command::Reproduce => run::reproduce(&cfg, &mut out),
        Command::Plot { kind, input, cone_level } => run::plot(*kind, input, &mut out, *cone_level),
        Command::Config => unreachable!("handled above"),
    };
    let (results, status) = match result {
        Ok(r) => r,
        Err(f) => {
            eprintln!("singlab {name}: {}", f.message);
            (json!({"error": f.message}), f.status)
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    let mut files = out.written().to_vec();
    files.push(format!("{name}.json"));
    if let Err(e) = out.write(&format!("{name}.meta.json"), metadata(name, elapsed, json!({"files": files})).as_bytes()) {
        eprintln!("singlab: cannot write metadata: {e}");
    }
    finish(Some(&mut out), name, &hash, results, status, cli.quiet)
}
