//! Config-driven experiment runner over the skill-based queue simulator.
//!
//! Exit codes: 0 success, 2 configuration errors, 3 scenario errors,
//! 4 solver failures (partial results and a manifest are still written).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use skillqueue_cli::{build_preset, preset_names, run_experiment, write_outputs, CliError, Preset};

/// Worker-pool size override.
const WORKERS_ENV: &str = "SKILLQUEUE_WORKERS";

#[derive(Parser)]
#[command(
    name = "skillqueue",
    version,
    about = "Skill-based queue routing experiments"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config file.
    Run { config: PathBuf },
    /// Run a built-in preset experiment.
    Preset {
        /// One of: appendix-d, fairness-sweep, burst-incident,
        /// episode-sweep, estimator-ablation.
        name: String,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replication count override.
        #[arg(long)]
        replications: Option<usize>,
        /// Base seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and validate a config file without running it.
    Validate { config: PathBuf },
}

fn init_workers() {
    if let Ok(value) = std::env::var(WORKERS_ENV) {
        if let Ok(workers) = value.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(workers.max(1))
                .build_global();
        } else {
            eprintln!("warning: ignoring non-numeric {WORKERS_ENV}={value}");
        }
    }
}

fn run(args: Args) -> Result<(), CliError> {
    match args.command {
        Command::Run { config } => {
            let experiment = skillqueue_cli::ExperimentConfig::from_path(&config)?;
            execute(experiment)
        }
        Command::Preset {
            name,
            out,
            replications,
            seed,
        } => match build_preset(&name) {
            Some(Preset::Experiment(mut experiment)) => {
                if let Some(out) = out {
                    experiment.experiment.output_dir = out;
                }
                if let Some(replications) = replications {
                    experiment.experiment.replications = replications;
                }
                if let Some(seed) = seed {
                    experiment.experiment.base_seed = seed;
                }
                execute(experiment)
            }
            Some(Preset::AppendixD) => {
                let outcome = skillqueue_cli::presets::run_appendix_d(
                    replications.unwrap_or(100) as u64,
                    seed.unwrap_or(1000),
                )?;
                for line in &outcome.lines {
                    println!("{line}");
                }
                println!(
                    "appendix-d validation: {} in {:.2?}",
                    if outcome.pass { "PASS" } else { "FAIL" },
                    outcome.elapsed
                );
                if let Some(out) = out {
                    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(e.to_string()))?;
                    std::fs::write(out.join("appendix_d.txt"), outcome.lines.join("\n"))
                        .map_err(|e| CliError::Io(e.to_string()))?;
                }
                if outcome.pass {
                    Ok(())
                } else {
                    Err(CliError::Solver(vec!["appendix-d bands".into()]))
                }
            }
            None => Err(CliError::Config(format!(
                "unknown preset '{name}'; available: {}",
                preset_names().join(", ")
            ))),
        },
        Command::Validate { config } => {
            let experiment = skillqueue_cli::ExperimentConfig::from_path(&config)?;
            let (scenario, warnings) = experiment.build_scenario()?;
            for warning in warnings {
                eprintln!("warning: {warning}");
            }
            println!(
                "ok: {} types, {} servers, {} lines, {} cells x {} replications",
                scenario.config.num_types,
                scenario.config.num_servers,
                scenario.config.lines.len(),
                experiment.expand_cells().len(),
                experiment.experiment.replications,
            );
            Ok(())
        }
    }
}

fn execute(experiment: skillqueue_cli::ExperimentConfig) -> Result<(), CliError> {
    let outcome = run_experiment(&experiment)?;
    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }
    write_outputs(&outcome)?;
    for cell in &outcome.cells {
        match (&cell.report, &cell.error) {
            (Some(report), _) => println!(
                "{}: payoff {:.2}{} mean wait {:.2}s",
                cell.name,
                report.total_payoff,
                report
                    .payoff_relative_to_oracle
                    .map(|r| format!(" ({:.4} of oracle)", r))
                    .unwrap_or_default(),
                report.mean_waiting_time,
            ),
            (None, Some(error)) => println!("{}: FAILED ({error})", cell.name),
            (None, None) => {}
        }
    }
    println!("reports written to {}", outcome.output_dir.display());
    let failed: Vec<String> = outcome
        .failed_cells()
        .iter()
        .map(|c| c.name.clone())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Solver(failed))
    }
}

fn main() -> ExitCode {
    init_workers();
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code() as u8)
        }
    }
}
