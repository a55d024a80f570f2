//! Library behind the `skillqueue` binary: experiment configuration,
//! the cell runner, and the built-in presets.

pub mod config;
pub mod presets;
pub mod runner;

use std::fmt;

pub use config::{BurstSpec, Cell, CsvScenario, ExperimentConfig, ExperimentSettings, Sweeps};
pub use presets::{build_preset, preset_names, Preset};
pub use runner::{run_experiment, write_outputs, CellResult, ExperimentOutcome};

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or inconsistent experiment configuration.
    Config(String),
    /// The scenario could not be built.
    Scenario(String),
    /// One or more cells failed in the solver.
    Solver(Vec<String>),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Scenario(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Scenario(msg) => write!(f, "scenario error: {msg}"),
            CliError::Solver(cells) => write!(f, "solver failure in cells: {}", cells.join(", ")),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}
