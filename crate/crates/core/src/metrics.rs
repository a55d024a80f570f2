//! Turns event logs into the performance measures used for policy
//! comparison and aggregates them across replications.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::engine::{EventLog, LogKind};
use crate::model::Line;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no event logs supplied")]
    EmptyLog,
    #[error("oracle payoff is zero; relative payoff undefined")]
    ZeroOracle,
}

/// Windowing knobs for KPI aggregation.
#[derive(Debug, Clone)]
pub struct KpiOptions {
    /// Waiting-time bin width in seconds.
    pub bin_width: f64,
    /// Window for the waiting-time quartiles, seconds of day.
    pub office_hours: (f64, f64),
    /// Sample points of the rate and queue-length series.
    pub series_points: usize,
    /// Bins with fewer pooled observations than this report no CI.
    pub min_ci_observations: u64,
}

impl Default for KpiOptions {
    fn default() -> Self {
        Self {
            bin_width: 60.0,
            office_hours: (6.0 * 3600.0, 21.0 * 3600.0),
            series_points: 48,
            min_ci_observations: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WaitBin {
    pub start: f64,
    pub mean: f64,
    /// 95% normal-approximation CI over replication means; absent for
    /// thinly observed bins.
    pub ci: Option<(f64, f64)>,
    pub observations: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub count: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LineVolume {
    pub line: Line,
    /// Mean departures per replication.
    pub departures: f64,
}

/// Aggregated performance measures of one (policy, scenario) cell.
#[derive(Debug, Clone, Serialize)]
pub struct KpiReport {
    pub replications: usize,
    pub horizon: f64,
    /// Mean over replications of the summed payoff draws.
    pub total_payoff: f64,
    pub payoff_per_replication: Vec<f64>,
    pub total_departures: f64,
    pub payoff_per_completion: f64,
    pub mean_waiting_time: f64,
    pub waiting_time_series: Vec<WaitBin>,
    pub office_hours_waiting: Option<Quartiles>,
    pub routing_volume: Vec<LineVolume>,
    /// Busy fraction per server.
    pub server_load: Vec<f64>,
    /// Shared time grid of the series below.
    pub series_times: Vec<f64>,
    /// Mean departures-per-unit-time `D_ij(t)/t` per line over the grid.
    pub empirical_rates: Vec<Vec<f64>>,
    /// Mean queue length per type over the grid.
    pub queue_lengths: Vec<Vec<f64>>,
    pub payoff_relative_to_oracle: Option<f64>,
}

struct RepStats {
    payoff: f64,
    departures: u64,
    wait_sum: f64,
    wait_count: u64,
    bin_sum: Vec<f64>,
    bin_count: Vec<u64>,
    office_waits: Vec<f64>,
    line_departures: BTreeMap<(usize, usize), u64>,
    busy: Vec<f64>,
    rate_buckets: BTreeMap<(usize, usize), Vec<u64>>,
    arrivals_grid: Vec<Vec<u64>>,
    starts_grid: Vec<Vec<u64>>,
}

/// Computes the KPI report over one or more replication logs of the same
/// scenario.
pub fn compute_kpis(logs: &[EventLog], opts: &KpiOptions) -> Result<KpiReport, MetricsError> {
    if logs.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let horizon = logs[0].horizon;
    let num_types = logs[0].num_types;
    let num_servers = logs[0].num_servers;
    let num_bins = (horizon / opts.bin_width).ceil().max(1.0) as usize;
    let grid = opts.series_points.max(1);
    let series_times: Vec<f64> = (1..=grid)
        .map(|g| horizon * g as f64 / grid as f64)
        .collect();

    let grid_index = |time: f64| -> usize {
        (((time * grid as f64 / horizon).ceil() as usize).saturating_sub(1)).min(grid - 1)
    };

    let reps: Vec<RepStats> = logs
        .iter()
        .map(|log| {
            let mut arrivals: Vec<(f64, usize)> = Vec::new();
            let mut stats = RepStats {
                payoff: 0.0,
                departures: 0,
                wait_sum: 0.0,
                wait_count: 0,
                bin_sum: vec![0.0; num_bins],
                bin_count: vec![0; num_bins],
                office_waits: Vec::new(),
                line_departures: BTreeMap::new(),
                busy: vec![0.0; num_servers],
                rate_buckets: BTreeMap::new(),
                arrivals_grid: vec![vec![0; grid]; num_types],
                starts_grid: vec![vec![0; grid]; num_types],
            };
            let mut service_open: Vec<Option<f64>> = vec![None; num_servers];
            for record in &log.records {
                match record.kind {
                    LogKind::Arrival => {
                        let customer = record.customer.expect("arrival has customer") as usize;
                        let ctype = record.customer_type.expect("arrival has type");
                        if arrivals.len() <= customer {
                            arrivals.resize(customer + 1, (f64::NAN, usize::MAX));
                        }
                        arrivals[customer] = (record.time, ctype);
                        stats.arrivals_grid[ctype][grid_index(record.time)] += 1;
                    }
                    LogKind::ServiceStart => {
                        let customer = record.customer.expect("start has customer") as usize;
                        let ctype = record.customer_type.expect("start has type");
                        let server = record.server.expect("start has server");
                        let (arrived, _) = arrivals[customer];
                        let wait = record.time - arrived;
                        stats.wait_sum += wait;
                        stats.wait_count += 1;
                        let bin = ((arrived / opts.bin_width) as usize).min(num_bins - 1);
                        stats.bin_sum[bin] += wait;
                        stats.bin_count[bin] += 1;
                        if arrived >= opts.office_hours.0 && arrived < opts.office_hours.1 {
                            stats.office_waits.push(wait);
                        }
                        stats.starts_grid[ctype][grid_index(record.time)] += 1;
                        service_open[server] = Some(record.time);
                    }
                    LogKind::Departure => {
                        let ctype = record.customer_type.expect("departure has type");
                        let server = record.server.expect("departure has server");
                        stats.payoff += record.value.unwrap_or(0.0);
                        stats.departures += 1;
                        *stats.line_departures.entry((ctype, server)).or_default() += 1;
                        stats
                            .rate_buckets
                            .entry((ctype, server))
                            .or_insert_with(|| vec![0; grid])[grid_index(record.time)] += 1;
                        if let Some(started) = service_open[server].take() {
                            stats.busy[server] += record.time - started;
                        }
                    }
                    LogKind::ScheduleUpdate | LogKind::EpisodeEnd => {}
                }
            }
            for (server, open) in service_open.into_iter().enumerate() {
                if let Some(started) = open {
                    stats.busy[server] += horizon - started;
                }
            }
            stats
        })
        .collect();

    let n = reps.len() as f64;
    let total_payoff = reps.iter().map(|r| r.payoff).sum::<f64>() / n;
    let total_departures = reps.iter().map(|r| r.departures as f64).sum::<f64>() / n;
    let payoff_per_completion = if total_departures > 0.0 {
        total_payoff / total_departures
    } else {
        0.0
    };
    let wait_count: u64 = reps.iter().map(|r| r.wait_count).sum();
    let mean_waiting_time = if wait_count > 0 {
        reps.iter().map(|r| r.wait_sum).sum::<f64>() / wait_count as f64
    } else {
        0.0
    };

    let waiting_time_series = (0..num_bins)
        .map(|bin| {
            let rep_means: Vec<f64> = reps
                .iter()
                .filter(|r| r.bin_count[bin] > 0)
                .map(|r| r.bin_sum[bin] / r.bin_count[bin] as f64)
                .collect();
            let observations: u64 = reps.iter().map(|r| r.bin_count[bin]).sum();
            let mean = if rep_means.is_empty() {
                0.0
            } else {
                rep_means.iter().sum::<f64>() / rep_means.len() as f64
            };
            let ci = if observations >= opts.min_ci_observations && rep_means.len() >= 2 {
                let m = rep_means.len() as f64;
                let var = rep_means
                    .iter()
                    .map(|x| (x - mean) * (x - mean))
                    .sum::<f64>()
                    / (m - 1.0);
                let half = 1.96 * (var / m).sqrt();
                Some((mean - half, mean + half))
            } else {
                None
            };
            WaitBin {
                start: bin as f64 * opts.bin_width,
                mean,
                ci,
                observations,
            }
        })
        .collect();

    let mut office: Vec<f64> = reps
        .iter()
        .flat_map(|r| r.office_waits.iter().copied())
        .collect();
    office.sort_unstable_by(f64::total_cmp);
    let office_hours_waiting = if office.is_empty() {
        None
    } else {
        let q = |p: f64| -> f64 {
            let pos = p * (office.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            office[lo] * (1.0 - frac) + office[hi] * frac
        };
        Some(Quartiles {
            min: office[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: *office.last().unwrap(),
            mean: office.iter().sum::<f64>() / office.len() as f64,
            count: office.len() as u64,
        })
    };

    let mut all_lines: Vec<(usize, usize)> = reps
        .iter()
        .flat_map(|r| r.line_departures.keys().copied())
        .collect();
    all_lines.sort_unstable();
    all_lines.dedup();
    let routing_volume: Vec<LineVolume> = all_lines
        .iter()
        .map(|key| LineVolume {
            line: Line::new(key.0, key.1),
            departures: reps
                .iter()
                .map(|r| *r.line_departures.get(key).unwrap_or(&0) as f64)
                .sum::<f64>()
                / n,
        })
        .collect();

    let server_load: Vec<f64> = (0..num_servers)
        .map(|j| reps.iter().map(|r| r.busy[j] / horizon).sum::<f64>() / n)
        .collect();

    let empirical_rates: Vec<Vec<f64>> = all_lines
        .iter()
        .map(|key| {
            (0..grid)
                .map(|g| {
                    let mean_cum: f64 = reps
                        .iter()
                        .map(|r| {
                            r.rate_buckets
                                .get(key)
                                .map_or(0.0, |buckets| buckets[..=g].iter().sum::<u64>() as f64)
                        })
                        .sum::<f64>()
                        / n;
                    mean_cum / series_times[g]
                })
                .collect()
        })
        .collect();

    let queue_lengths: Vec<Vec<f64>> = (0..num_types)
        .map(|i| {
            (0..grid)
                .map(|g| {
                    reps.iter()
                        .map(|r| {
                            let arrived: u64 = r.arrivals_grid[i][..=g].iter().sum();
                            let started: u64 = r.starts_grid[i][..=g].iter().sum();
                            (arrived - started) as f64
                        })
                        .sum::<f64>()
                        / n
                })
                .collect()
        })
        .collect();

    Ok(KpiReport {
        replications: reps.len(),
        horizon,
        total_payoff,
        payoff_per_replication: reps.iter().map(|r| r.payoff).collect(),
        total_departures,
        payoff_per_completion,
        mean_waiting_time,
        waiting_time_series,
        office_hours_waiting,
        routing_volume,
        server_load,
        series_times,
        empirical_rates,
        queue_lengths,
        payoff_relative_to_oracle: None,
    })
}

/// Ratio of mean total payoffs against an oracle run on the same scenario.
pub fn relative_payoff(policy: &KpiReport, oracle: &KpiReport) -> Result<f64, MetricsError> {
    if oracle.total_payoff == 0.0 {
        return Err(MetricsError::ZeroOracle);
    }
    Ok(policy.total_payoff / oracle.total_payoff)
}

impl KpiReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat CSV: one row per metric and bin with columns
    /// (metric, customer_type, server, bin, value, ci_low, ci_high, count).
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "metric,customer_type,server,bin,value,ci_low,ci_high,count"
        )?;
        let row = |w: &mut W,
                   metric: &str,
                   ctype: String,
                   server: String,
                   bin: String,
                   value: f64,
                   ci: Option<(f64, f64)>,
                   count: String|
         -> io::Result<()> {
            let (lo, hi) = ci.map_or((String::new(), String::new()), |(a, b)| {
                (a.to_string(), b.to_string())
            });
            writeln!(
                w,
                "{metric},{ctype},{server},{bin},{value},{lo},{hi},{count}"
            )
        };
        row(
            &mut w,
            "total_payoff",
            String::new(),
            String::new(),
            String::new(),
            self.total_payoff,
            None,
            self.replications.to_string(),
        )?;
        row(
            &mut w,
            "total_departures",
            String::new(),
            String::new(),
            String::new(),
            self.total_departures,
            None,
            String::new(),
        )?;
        row(
            &mut w,
            "payoff_per_completion",
            String::new(),
            String::new(),
            String::new(),
            self.payoff_per_completion,
            None,
            String::new(),
        )?;
        row(
            &mut w,
            "mean_waiting_time",
            String::new(),
            String::new(),
            String::new(),
            self.mean_waiting_time,
            None,
            String::new(),
        )?;
        if let Some(rel) = self.payoff_relative_to_oracle {
            row(
                &mut w,
                "payoff_relative_to_oracle",
                String::new(),
                String::new(),
                String::new(),
                rel,
                None,
                String::new(),
            )?;
        }
        for bin in &self.waiting_time_series {
            row(
                &mut w,
                "waiting_time",
                String::new(),
                String::new(),
                bin.start.to_string(),
                bin.mean,
                bin.ci,
                bin.observations.to_string(),
            )?;
        }
        if let Some(q) = &self.office_hours_waiting {
            for (name, value) in [
                ("office_wait_min", q.min),
                ("office_wait_q1", q.q1),
                ("office_wait_median", q.median),
                ("office_wait_q3", q.q3),
                ("office_wait_max", q.max),
                ("office_wait_mean", q.mean),
            ] {
                row(
                    &mut w,
                    name,
                    String::new(),
                    String::new(),
                    String::new(),
                    value,
                    None,
                    q.count.to_string(),
                )?;
            }
        }
        for volume in &self.routing_volume {
            row(
                &mut w,
                "routing_volume",
                volume.line.customer_type.to_string(),
                volume.line.server.to_string(),
                String::new(),
                volume.departures,
                None,
                String::new(),
            )?;
        }
        for (j, load) in self.server_load.iter().enumerate() {
            row(
                &mut w,
                "server_load",
                String::new(),
                j.to_string(),
                String::new(),
                *load,
                None,
                String::new(),
            )?;
        }
        for (volume, rates) in self.routing_volume.iter().zip(&self.empirical_rates) {
            for (t, rate) in self.series_times.iter().zip(rates) {
                row(
                    &mut w,
                    "empirical_rate",
                    volume.line.customer_type.to_string(),
                    volume.line.server.to_string(),
                    t.to_string(),
                    *rate,
                    None,
                    String::new(),
                )?;
            }
        }
        for (i, series) in self.queue_lengths.iter().enumerate() {
            for (t, len) in self.series_times.iter().zip(series) {
                row(
                    &mut w,
                    "queue_length",
                    i.to_string(),
                    String::new(),
                    t.to_string(),
                    *len,
                    None,
                    String::new(),
                )?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to vec");
        String::from_utf8(buf).expect("csv is utf8")
    }
}
