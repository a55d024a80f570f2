//! Experiment configuration: a single TOML file describing the scenario,
//! the policies under test, replication counts, seeds, and sweep axes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use skillqueue::data::{self, Scenario, SyntheticSpec};
use skillqueue::PolicySpec;

use crate::CliError;

fn default_replications() -> usize {
    1
}
fn default_seed() -> u64 {
    1
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSettings {
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_seed")]
    pub base_seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Overrides the scenario's own horizon when set.
    #[serde(default)]
    pub horizon: Option<f64>,
}

/// Where the scenario comes from: exactly one of `synthetic` or `csv`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScenarioSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvScenario>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvScenario {
    pub calls: PathBuf,
    pub schedule: PathBuf,
    pub date: String,
    #[serde(default = "default_threshold")]
    pub compat_threshold: u64,
    #[serde(default)]
    pub transform_theta: bool,
}

fn default_threshold() -> u64 {
    100
}

/// Extra arrivals injected on top of the scenario's own.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BurstSpec {
    pub customer_type: usize,
    pub count: usize,
    pub window: (f64, f64),
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Parameter grids crossed with every policy. An absent axis keeps each
/// policy's own value.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Sweeps {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_lengths: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_inits: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSettings,
    pub scenario: ScenarioSource,
    pub policies: Vec<PolicySpec>,
    #[serde(default)]
    pub sweeps: Sweeps,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bursts: Vec<BurstSpec>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.experiment.replications == 0 {
            return Err(CliError::Config("replications must be at least 1".into()));
        }
        if self.policies.is_empty() {
            return Err(CliError::Config("at least one policy is required".into()));
        }
        match (&self.scenario.synthetic, &self.scenario.csv) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "scenario must be synthetic or csv, not both".into(),
                ))
            }
            (None, None) => return Err(CliError::Config("a scenario source is required".into())),
            _ => {}
        }
        for grid in [
            self.sweeps.episode_lengths.as_ref(),
            self.sweeps.gammas.as_ref(),
            self.sweeps.mu_inits.as_ref(),
        ]
        .into_iter()
        .flatten()
        {
            if grid.is_empty() {
                return Err(CliError::Config("sweep grids must be non-empty".into()));
            }
        }
        for (k, spec) in self.expand_cells().iter().enumerate() {
            let violations = spec.spec.validate();
            if !violations.is_empty() {
                return Err(CliError::Config(format!(
                    "cell {} ({}) is invalid: {}",
                    k,
                    spec.name,
                    violations
                        .iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join("; ")
                )));
            }
        }
        Ok(())
    }

    /// Builds the scenario, applying configured bursts.
    pub fn build_scenario(&self) -> Result<(Scenario, Vec<String>), CliError> {
        let (mut scenario, warnings) = if let Some(spec) = &self.scenario.synthetic {
            (
                data::generate_synthetic(spec).map_err(|e| CliError::Scenario(e.to_string()))?,
                Vec::new(),
            )
        } else if let Some(csv) = &self.scenario.csv {
            data::scenario_from_csv(
                &csv.calls,
                &csv.schedule,
                &csv.date,
                csv.compat_threshold,
                csv.transform_theta,
            )
            .map_err(|e| CliError::Scenario(e.to_string()))?
        } else {
            return Err(CliError::Config("a scenario source is required".into()));
        };
        for burst in &self.bursts {
            if burst.customer_type >= scenario.config.num_types {
                return Err(CliError::Scenario(format!(
                    "burst targets unknown type {}",
                    burst.customer_type
                )));
            }
            scenario = data::inject_burst(
                &scenario,
                burst.customer_type,
                burst.count,
                burst.window,
                burst.seed,
            );
        }
        Ok((scenario, warnings))
    }

    /// The (policy x sweep-point) grid. Absent axes keep each policy's own
    /// parameter value.
    pub fn expand_cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for policy in &self.policies {
            let hs = self
                .sweeps
                .episode_lengths
                .clone()
                .unwrap_or_else(|| vec![policy.episode_length_h]);
            for h in &hs {
                let gammas = self
                    .sweeps
                    .gammas
                    .clone()
                    .unwrap_or_else(|| vec![policy.gamma]);
                for gamma in &gammas {
                    let mu_inits = self
                        .sweeps
                        .mu_inits
                        .clone()
                        .unwrap_or_else(|| vec![policy.mu_init]);
                    for mu_init in &mu_inits {
                        let mut spec = policy.clone();
                        spec.episode_length_h = *h;
                        spec.gamma = *gamma;
                        spec.mu_init = *mu_init;
                        let mut name = spec.kind.label().to_string();
                        if self.sweeps.episode_lengths.is_some() {
                            name.push_str(&format!("_h{h}"));
                        }
                        if self.sweeps.gammas.is_some() {
                            name.push_str(&format!("_g{gamma}"));
                        }
                        if self.sweeps.mu_inits.is_some() {
                            name.push_str(&format!("_mu{mu_init}"));
                        }
                        cells.push(Cell { name, spec });
                    }
                }
            }
        }
        cells
    }
}

/// One experiment cell: a policy spec at a sweep point.
#[derive(Debug, Clone)]
pub struct Cell {
    pub name: String,
    pub spec: PolicySpec,
}
