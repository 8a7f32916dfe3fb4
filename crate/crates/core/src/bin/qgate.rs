//! Command-line front end: `synth`, `validate` and `simulate`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qgate_core::config::load_config;
use qgate_core::io::{load_pulses, save_grid, save_pulses, save_report, save_trajectory};
use qgate_core::synthesis::{simulate_populations, synthesize, validate_grid, SynthesisError};
use qgate_core::{ControlSignal, Error, SynthesisConfig};

#[derive(Parser)]
#[command(
    name = "qgate",
    version,
    about = "Robust two-qubit gate pulse synthesis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a pulse and write it with a convergence report.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_pulses: PathBuf,
        #[arg(long)]
        out_report: PathBuf,
    },
    /// Evaluate a pulse on an NxM grid over the uncertainty intervals.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        pulses: PathBuf,
        #[arg(long, value_parser = parse_grid)]
        grid: (usize, usize),
        #[arg(long)]
        out: PathBuf,
    },
    /// Write populations, trace and purity over time at one (alpha, beta).
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        pulses: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
        #[arg(long, allow_negative_numbers = true)]
        beta: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (n, m) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("grid must look like NxM, got `{s}`"))?;
    let n: usize = n.trim().parse().map_err(|e| format!("grid rows: {e}"))?;
    let m: usize = m.trim().parse().map_err(|e| format!("grid columns: {e}"))?;
    if n < 2 || m < 2 {
        return Err(format!("grid must be at least 2x2, got {n}x{m}"));
    }
    Ok((n, m))
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| format!("THREADS must be a positive integer, got `{value}`"))?;
    if n == 0 {
        return Err("THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn load_matching_pulses(path: &Path, config: &SynthesisConfig) -> Result<ControlSignal, Error> {
    let pulse = load_pulses(path, config.dt())?;
    if pulse.steps() != config.steps {
        return Err(Error::InvalidArgument(format!(
            "{} has {} steps but the configuration expects {}",
            path.display(),
            pulse.steps(),
            config.steps
        )));
    }
    Ok(pulse)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Synth {
            config,
            out_pulses,
            out_report,
        } => {
            let config = load_config(&config)?;
            match synthesize(&config) {
                Ok((pulse, report)) => {
                    save_pulses(&out_pulses, &pulse)?;
                    save_report(&out_report, &report)?;
                    eprintln!(
                        "{} iterations, terminal error {:.3e} ({:?})",
                        report.iterations_used, report.final_error, report.stop_reason
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Err(SynthesisError::Stagnation {
                    iteration,
                    doublings,
                    pulse,
                    report,
                }) => {
                    save_pulses(&out_pulses, &pulse)?;
                    save_report(&out_report, &report)?;
                    eprintln!(
                        "error: stagnated in iteration {iteration} after {doublings} doublings; partial results written"
                    );
                    Ok(ExitCode::from(2))
                }
                Err(SynthesisError::Invalid(e)) => Err(e),
            }
        }
        Command::Validate {
            config,
            pulses,
            grid,
            out,
        } => {
            let config = load_config(&config)?;
            let pulse = load_matching_pulses(&pulses, &config)?;
            let grid = validate_grid(&pulse, &config, grid.0, grid.1)?;
            save_grid(&out, &grid)?;
            eprintln!("max terminal error {:.3e}", grid.max_error());
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            config,
            pulses,
            alpha,
            beta,
            out,
        } => {
            let config = load_config(&config)?;
            let pulse = load_matching_pulses(&pulses, &config)?;
            let samples = simulate_populations(&pulse, &config, alpha, beta)?;
            save_trajectory(&out, &samples)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    // usage errors exit with 1; 2 is reserved for stagnation
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
