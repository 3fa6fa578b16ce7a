use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hrode::{Algorithm, ConditionKind};
use hrode_cli::config::{ExperimentConfig, Suite};
use hrode_cli::verify::Status;
use hrode_cli::{derive, runs, verify, CliError, CliResult};

#[derive(Parser)]
#[command(name = "hrode", version, about = "High-resolution ODE experiments for minimax algorithms")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment: fig1a, fig2 (alias fig1b).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every configured dynamic and write one CSV per run.
    Trajectories,
    /// Print the derived resolution ODE of degree R for ALG.
    Derive {
        #[arg(value_parser = parse_algorithm)]
        algorithm: Algorithm,
        degree: usize,
        /// Also write a JSON artifact to the output directory.
        #[arg(long)]
        json: bool,
    },
    /// Run verification suites and write a summary bundle.
    Verify {
        #[arg(long, value_enum, value_delimiter = ',')]
        suite: Vec<Suite>,
    },
    /// Estimate ρ(s) for the chosen condition kinds.
    Rho {
        #[arg(long, value_parser = parse_kind, value_delimiter = ',')]
        kind: Vec<ConditionKind>,
        #[arg(long)]
        s: Option<f64>,
    },
    /// Mode decomposition and closed-form solutions of a bilinear problem.
    Spectral,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: hrode::Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<ConditionKind, String> {
    s.parse().map_err(|e: hrode::Error| e.to_string())
}

fn run(cli: Cli) -> CliResult<bool> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    }
    let config = || ExperimentConfig::resolve(cli.config.as_deref(), cli.preset.as_deref(), cli.seed);
    match cli.command {
        Command::Derive { algorithm, degree, json } => {
            let d = derive::run_derive(algorithm, degree)?;
            println!("{}", derive::render(&d));
            if json {
                let path = derive::write_artifact(&d, algorithm, degree, &cli.out)?;
                eprintln!("wrote {}", path.display());
            }
            Ok(d.matches_closed_form)
        }
        Command::Trajectories => {
            for path in runs::cmd_trajectories(&config()?, &cli.out)? {
                println!("{}", path.display());
            }
            Ok(true)
        }
        Command::Verify { suite } => {
            let cfg = config()?;
            let suites = if suite.is_empty() { cfg.suites() } else { suite };
            let (path, bundle) = verify::cmd_verify(&cfg, &suites, &cli.out)?;
            for report in &bundle.suites {
                let failed = report.checks.iter().filter(|c| c.status == Status::Fail).count();
                let passed = report.checks.iter().filter(|c| c.status == Status::Pass).count();
                println!("{:<15} {:?}  {passed} pass, {failed} fail, {} checks", report.suite.label(), report.status, report.checks.len());
                for c in report.checks.iter().filter(|c| c.status == Status::Fail) {
                    println!("    FAIL {}: {}", c.name, c.detail);
                }
            }
            println!("{}", path.display());
            Ok(bundle.passed)
        }
        Command::Rho { kind, s } => {
            let kinds = if kind.is_empty() { ConditionKind::ALL.to_vec() } else { kind };
            let (path, report) = runs::cmd_rho(&config()?, &kinds, s, &cli.out)?;
            for e in &report.estimates {
                println!("{:<20} {:.6e}", e.kind.label(), e.value);
            }
            for f in &report.formulas {
                println!("formula {:<12} {:.6e}", f.example.number(), f.rho);
            }
            println!("{}", path.display());
            Ok(true)
        }
        Command::Spectral => {
            println!("{}", runs::cmd_spectral(&config()?, &cli.out)?.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
