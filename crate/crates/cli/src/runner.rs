//! Cell execution: runs every (policy, sweep-point, replication) with
//! paired seeds, aggregates KPI reports, and writes the per-cell report
//! files plus a cross-policy summary.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use skillqueue::engine::ReplicationOutput;
use skillqueue::metrics::{compute_kpis, relative_payoff, KpiOptions, KpiReport};
use skillqueue::policies::EpisodeSnapshot;
use skillqueue::{run_replication_detailed, EventLog, Line, PolicyKind};

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct CellResult {
    pub name: String,
    pub policy: PolicyKind,
    pub episode_length_h: f64,
    pub gamma: f64,
    pub mu_init: f64,
    #[serde(skip)]
    pub report: Option<KpiReport>,
    /// First replication's episode snapshots (episodic policies only).
    #[serde(skip)]
    pub snapshots: Vec<EpisodeSnapshot>,
    /// Mean planned load variance over the first replication's episodes.
    pub plan_load_variance: Option<f64>,
    /// Variance of the empirical busy fractions across servers.
    pub empirical_load_variance: Option<f64>,
    pub error: Option<String>,
}

pub struct ExperimentOutcome {
    pub cells: Vec<CellResult>,
    pub output_dir: PathBuf,
    pub warnings: Vec<String>,
    /// Scenario line set, for flattening per-line snapshot series.
    pub lines: Vec<Line>,
}

impl ExperimentOutcome {
    pub fn failed_cells(&self) -> Vec<&CellResult> {
        self.cells.iter().filter(|c| c.error.is_some()).collect()
    }
}

fn variance(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum()
}

/// Runs the whole experiment grid. Solver failures flag their cell and the
/// run continues; the caller decides the exit status from `failed_cells`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, CliError> {
    config.validate()?;
    let (scenario, warnings) = config.build_scenario()?;
    let horizon = config.experiment.horizon.unwrap_or(scenario.horizon);
    let cells = config.expand_cells();
    let replications = config.experiment.replications;
    let base_seed = config.experiment.base_seed;

    let runs: Vec<Result<Vec<ReplicationOutput>, String>> = cells
        .par_iter()
        .map(|cell| {
            (0..replications)
                .into_par_iter()
                .map(|r| {
                    // Paired seeds: replication r consumes identical arrival
                    // and service draws under every policy.
                    run_replication_detailed(
                        &scenario.config,
                        &cell.spec,
                        base_seed + r as u64,
                        horizon,
                    )
                    .map_err(|e| e.to_string())
                })
                .collect()
        })
        .collect();

    let opts = KpiOptions::default();
    let mut results: Vec<CellResult> = Vec::with_capacity(cells.len());
    for (run, cell) in runs.into_iter().zip(&cells) {
        let mut result = CellResult {
            name: cell.name.clone(),
            policy: cell.spec.kind,
            episode_length_h: cell.spec.episode_length_h,
            gamma: cell.spec.gamma,
            mu_init: cell.spec.mu_init,
            report: None,
            snapshots: Vec::new(),
            plan_load_variance: None,
            empirical_load_variance: None,
            error: None,
        };
        match run {
            Ok(outputs) => {
                let mut logs: Vec<EventLog> = Vec::with_capacity(outputs.len());
                for (r, output) in outputs.into_iter().enumerate() {
                    if r == 0 {
                        result.snapshots = output.snapshots;
                    }
                    logs.push(output.log);
                }
                let report =
                    compute_kpis(&logs, &opts).map_err(|e| CliError::Scenario(e.to_string()))?;
                if !result.snapshots.is_empty() {
                    result.plan_load_variance = Some(
                        result
                            .snapshots
                            .iter()
                            .map(|s| s.plan_load_variance)
                            .sum::<f64>()
                            / result.snapshots.len() as f64,
                    );
                }
                result.empirical_load_variance = Some(variance(&report.server_load));
                result.report = Some(report);
            }
            Err(message) => result.error = Some(message),
        }
        results.push(result);
    }

    // Relative payoff against the oracle cell at the same sweep point,
    // falling back to the first oracle cell of the grid.
    let oracle_reports: Vec<(f64, f64, f64, KpiReport)> = results
        .iter()
        .filter(|c| c.policy == PolicyKind::Oracle)
        .filter_map(|c| {
            c.report
                .clone()
                .map(|r| (c.episode_length_h, c.gamma, c.mu_init, r))
        })
        .collect();
    for cell in &mut results {
        if cell.policy == PolicyKind::Oracle {
            continue;
        }
        let Some(report) = cell.report.as_mut() else {
            continue;
        };
        let matched = oracle_reports
            .iter()
            .find(|(h, g, m, _)| {
                *h == cell.episode_length_h && *g == cell.gamma && *m == cell.mu_init
            })
            .or_else(|| oracle_reports.first());
        if let Some((_, _, _, oracle)) = matched {
            if let Ok(ratio) = relative_payoff(report, oracle) {
                report.payoff_relative_to_oracle = Some(ratio);
            }
        }
    }

    Ok(ExperimentOutcome {
        cells: results,
        output_dir: config.experiment.output_dir.clone(),
        warnings,
        lines: scenario.config.lines.clone(),
    })
}

/// Writes per-cell reports, episode snapshots, the summary CSV, and (on
/// partial failure) a manifest of failed cells.
pub fn write_outputs(outcome: &ExperimentOutcome) -> Result<(), CliError> {
    let dir = &outcome.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Io(e.to_string()))?;

    for cell in &outcome.cells {
        if let Some(report) = &cell.report {
            fs::write(
                dir.join(format!("{}.kpi.json", cell.name)),
                report.to_json(),
            )
            .map_err(|e| CliError::Io(e.to_string()))?;
            fs::write(
                dir.join(format!("{}.kpi.csv", cell.name)),
                report.to_csv_string(),
            )
            .map_err(|e| CliError::Io(e.to_string()))?;
        }
        if !cell.snapshots.is_empty() {
            let mut buf = Vec::new();
            write_snapshots_csv(&cell.snapshots, &outcome.lines, &mut buf)
                .map_err(|e| CliError::Io(e.to_string()))?;
            fs::write(dir.join(format!("{}.snapshots.csv", cell.name)), buf)
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
    }

    let mut summary = String::from(
        "cell,policy,episode_length_h,gamma,mu_init,replications,total_payoff,total_departures,\
         payoff_per_completion,payoff_relative_to_oracle,mean_waiting_time,office_median_wait,\
         plan_load_variance,empirical_load_variance,error\n",
    );
    for cell in &outcome.cells {
        let report = cell.report.as_ref();
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            cell.name,
            cell.policy.label(),
            cell.episode_length_h,
            cell.gamma,
            cell.mu_init,
            report.map(|r| r.replications).unwrap_or(0),
            fmt_opt(report.map(|r| r.total_payoff)),
            fmt_opt(report.map(|r| r.total_departures)),
            fmt_opt(report.map(|r| r.payoff_per_completion)),
            fmt_opt(report.and_then(|r| r.payoff_relative_to_oracle)),
            fmt_opt(report.map(|r| r.mean_waiting_time)),
            fmt_opt(report.and_then(|r| r.office_hours_waiting.as_ref().map(|q| q.median))),
            fmt_opt(cell.plan_load_variance),
            fmt_opt(cell.empirical_load_variance),
            cell.error.clone().unwrap_or_default(),
        ));
    }
    fs::write(dir.join("summary.csv"), summary).map_err(|e| CliError::Io(e.to_string()))?;

    let failed = outcome.failed_cells();
    if !failed.is_empty() {
        let manifest = serde_json::json!({
            "failed_cells": failed
                .iter()
                .map(|c| serde_json::json!({"cell": c.name, "error": c.error}))
                .collect::<Vec<_>>(),
        });
        fs::write(
            dir.join("partial_results.json"),
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )
        .map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}

/// Writes episode snapshots of one replication as a flat CSV with columns
/// (episode, metric, customer_type, server, value).
pub fn write_snapshots_csv<W: Write>(
    snapshots: &[EpisodeSnapshot],
    lines: &[Line],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "episode,metric,customer_type,server,value")?;
    for snapshot in snapshots {
        for (i, value) in snapshot.lambda_hat.iter().enumerate() {
            writeln!(w, "{},lambda_hat,{i},,{value}", snapshot.episode)?;
        }
        for (metric, series) in [
            ("theta_bar", &snapshot.theta_bar),
            ("theta_ucb", &snapshot.theta_ucb),
            ("mu_hat", &snapshot.mu_hat),
            ("plan_rate", &snapshot.plan_rates),
            ("probability", &snapshot.probabilities),
        ] {
            for (id, value) in series.iter().enumerate() {
                let line = lines[id];
                writeln!(
                    w,
                    "{},{metric},{},{},{value}",
                    snapshot.episode, line.customer_type, line.server
                )?;
            }
        }
        writeln!(
            w,
            "{},plan_load_variance,,,{}",
            snapshot.episode, snapshot.plan_load_variance
        )?;
        writeln!(
            w,
            "{},used_fallback,,,{}",
            snapshot.episode, snapshot.used_fallback as u8
        )?;
    }
    Ok(())
}
