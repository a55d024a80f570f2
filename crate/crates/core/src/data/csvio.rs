//! Call-log and agent-schedule ingestion.
//!
//! Call-log CSV columns (header names fixed): date, vru_entry, q_start,
//! ser_start, ser_exit, type, outcome, agent_id, agent_group. Times are
//! integer seconds of day; missing values are empty. Agent-schedule CSV
//! columns: date, hour (0-23), agent_group, count.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, Scenario};
use crate::model::{
    ArrivalSource, CapacitySchedule, CapacityStep, Line, ServiceSource, SystemConfig,
};

/// Why a call ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Handled,
    Transfer,
    Conference,
    Abandon,
    Other(String),
}

impl Outcome {
    fn parse(raw: &str) -> Self {
        match raw.trim().to_ascii_lowercase().as_str() {
            "handled" => Outcome::Handled,
            "transfer" => Outcome::Transfer,
            "conference" => Outcome::Conference,
            "abandon" | "abandoned" | "hang" => Outcome::Abandon,
            other => Outcome::Other(other.to_string()),
        }
    }

    /// Served and kept within the answering group: neither a transfer nor
    /// a conference.
    fn is_success(&self) -> bool {
        !matches!(self, Outcome::Transfer | Outcome::Conference)
    }
}

/// One call interaction. Abandoned calls lack service timestamps and an
/// agent group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub date: String,
    pub vru_entry: Option<u32>,
    pub q_start: Option<u32>,
    pub ser_start: Option<u32>,
    pub ser_exit: Option<u32>,
    pub customer_type: u32,
    pub outcome: Outcome,
    pub agent_id: Option<String>,
    pub agent_group: Option<u32>,
}

impl CallRecord {
    /// The customer interacted with an agent.
    pub fn is_served(&self) -> bool {
        self.outcome != Outcome::Abandon
            && self.ser_start.is_some()
            && self.ser_exit.is_some()
            && self.agent_group.is_some()
    }

    /// Instant the customer joined the queue, falling back to VRU entry.
    pub fn queue_join(&self) -> Option<u32> {
        self.q_start.or(self.vru_entry)
    }
}

/// Reads a call-log CSV. Unknown outcome labels are preserved as
/// [`Outcome::Other`]; abandoned calls are kept here and dropped during
/// scenario assembly.
pub fn read_call_log<R: Read>(reader: R) -> Result<Vec<CallRecord>, DataError> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let col = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::BadLog(format!("missing column '{name}'")))
    };
    let c_date = col("date")?;
    let c_vru = col("vru_entry")?;
    let c_q = col("q_start")?;
    let c_start = col("ser_start")?;
    let c_exit = col("ser_exit")?;
    let c_type = col("type")?;
    let c_outcome = col("outcome")?;
    let c_agent = col("agent_id")?;
    let c_group = col("agent_group")?;

    let parse_opt = |s: &str| -> Option<u32> {
        if s.is_empty() {
            None
        } else {
            s.parse().ok()
        }
    };

    let mut records = Vec::new();
    for row in csv.records() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or("");
        records.push(CallRecord {
            date: field(c_date).to_string(),
            vru_entry: parse_opt(field(c_vru)),
            q_start: parse_opt(field(c_q)),
            ser_start: parse_opt(field(c_start)),
            ser_exit: parse_opt(field(c_exit)),
            customer_type: field(c_type)
                .parse()
                .map_err(|_| DataError::BadLog(format!("bad type '{}'", field(c_type))))?,
            outcome: Outcome::parse(field(c_outcome)),
            agent_id: {
                let a = field(c_agent);
                if a.is_empty() {
                    None
                } else {
                    Some(a.to_string())
                }
            },
            agent_group: parse_opt(field(c_group)),
        });
    }
    Ok(records)
}

/// Per-line success ratio over the given records: served calls that end in
/// neither transfer nor conference, divided by all served calls on the
/// line. Lines with no served calls are absent from the result.
pub fn derive_payoff(records: &[CallRecord]) -> BTreeMap<(u32, u32), f64> {
    let mut served: BTreeMap<(u32, u32), (u64, u64)> = BTreeMap::new();
    for record in records.iter().filter(|r| r.is_served()) {
        let key = (record.customer_type, record.agent_group.unwrap());
        let entry = served.entry(key).or_default();
        entry.0 += 1;
        if record.outcome.is_success() {
            entry.1 += 1;
        }
    }
    served
        .into_iter()
        .map(|(key, (total, ok))| (key, ok as f64 / total as f64))
        .collect()
}

/// Square-root min-max payoff transformation, applied per customer type:
/// multi-line types map onto `sqrt((θ - min) / (max - min))`, single-line
/// types onto `sqrt(θ)`, and zero-range types onto 1 for every line.
pub fn transform_payoff(lines: &[Line], theta: &[f64]) -> Vec<f64> {
    let mut by_type: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (id, line) in lines.iter().enumerate() {
        by_type.entry(line.customer_type).or_default().push(id);
    }
    let mut out = theta.to_vec();
    for ids in by_type.values() {
        if ids.len() == 1 {
            out[ids[0]] = theta[ids[0]].sqrt();
            continue;
        }
        let min = ids
            .iter()
            .map(|id| theta[*id])
            .fold(f64::INFINITY, f64::min);
        let max = ids
            .iter()
            .map(|id| theta[*id])
            .fold(f64::NEG_INFINITY, f64::max);
        let range = max - min;
        for id in ids {
            out[*id] = if range > 0.0 {
                ((theta[*id] - min) / range).sqrt()
            } else {
                1.0
            };
        }
    }
    out
}

/// Lines with at least `threshold` served calls over the records.
pub fn build_compatibility(records: &[CallRecord], threshold: u64) -> Vec<(u32, u32)> {
    let mut counts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for record in records.iter().filter(|r| r.is_served()) {
        *counts
            .entry((record.customer_type, record.agent_group.unwrap()))
            .or_default() += 1;
    }
    counts
        .into_iter()
        .filter(|(_, n)| *n >= threshold)
        .map(|(key, _)| key)
        .collect()
}

/// One agent-schedule row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub date: String,
    pub hour: u32,
    pub agent_group: u32,
    pub count: u32,
}

pub fn read_agent_schedule<R: Read>(reader: R) -> Result<Vec<ScheduleRow>, DataError> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for row in csv.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// Assembles a one-day scenario from a call log and an agent schedule.
///
/// Compatibility comes from the whole log (threshold on served calls per
/// line); payoff, arrival timestamps, and empirical service pools come
/// from the records of `date`. Lines without any served call on that day
/// are dropped with a warning. Raw type and group identifiers are remapped
/// onto dense indices in ascending order.
pub fn scenario_from_csv(
    calls_path: &Path,
    schedule_path: &Path,
    date: &str,
    threshold: u64,
    apply_transform: bool,
) -> Result<(Scenario, Vec<String>), DataError> {
    let records = read_call_log(std::fs::File::open(calls_path)?)?;
    let schedule = read_agent_schedule(std::fs::File::open(schedule_path)?)?;
    scenario_from_records(&records, &schedule, date, threshold, apply_transform)
}

pub fn scenario_from_records(
    records: &[CallRecord],
    schedule: &[ScheduleRow],
    date: &str,
    threshold: u64,
    apply_transform: bool,
) -> Result<(Scenario, Vec<String>), DataError> {
    let mut warnings = Vec::new();
    let compat = build_compatibility(records, threshold);
    if compat.is_empty() {
        return Err(DataError::BadLog(format!(
            "no line reaches the compatibility threshold of {threshold} calls"
        )));
    }
    let day_records: Vec<&CallRecord> = records.iter().filter(|r| r.date == date).collect();
    if day_records.is_empty() {
        return Err(DataError::BadLog(format!("no records on {date}")));
    }
    let day_owned: Vec<CallRecord> = day_records.iter().map(|r| (*r).clone()).collect();
    let payoff_by_line = derive_payoff(&day_owned);

    // Keep only compatible lines that have payoff observations on the day.
    let mut kept: Vec<(u32, u32)> = Vec::new();
    for key in &compat {
        if payoff_by_line.contains_key(key) {
            kept.push(*key);
        } else {
            warnings.push(format!(
                "line ({}, {}) has no observations on {date}; dropped",
                key.0, key.1
            ));
        }
    }
    if kept.is_empty() {
        return Err(DataError::BadLog(format!("no usable lines on {date}")));
    }

    let type_ids: BTreeSet<u32> = kept.iter().map(|k| k.0).collect();
    let group_ids: BTreeSet<u32> = kept.iter().map(|k| k.1).collect();
    let type_index: BTreeMap<u32, usize> =
        type_ids.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let group_index: BTreeMap<u32, usize> =
        group_ids.iter().enumerate().map(|(j, g)| (*g, j)).collect();

    let lines: Vec<Line> = kept
        .iter()
        .map(|(t, g)| Line::new(type_index[t], group_index[g]))
        .collect();
    let mut theta: Vec<f64> = kept.iter().map(|key| payoff_by_line[key]).collect();
    if apply_transform {
        theta = transform_payoff(&lines, &theta);
    }

    // Per-line empirical service pools from the day's served calls.
    let mut pools: BTreeMap<(u32, u32), Vec<f64>> = BTreeMap::new();
    for record in day_owned.iter().filter(|r| r.is_served()) {
        let key = (record.customer_type, record.agent_group.unwrap());
        if !kept.contains(&key) {
            continue;
        }
        let duration = record.ser_exit.unwrap() as f64 - record.ser_start.unwrap() as f64;
        if duration > 0.0 {
            pools.entry(key).or_default().push(duration);
        }
    }
    let service: Vec<ServiceSource> = kept
        .iter()
        .map(|key| ServiceSource::Empirical {
            samples: pools.get(key).cloned().unwrap_or_default(),
        })
        .collect();
    for (key, source) in kept.iter().zip(&service) {
        if matches!(source, ServiceSource::Empirical { samples } if samples.is_empty()) {
            warnings.push(format!(
                "line ({}, {}) has no positive service durations on {date}",
                key.0, key.1
            ));
        }
    }

    // Arrival timestamps per type: queue-join instants of served calls of
    // types kept in the compatibility set.
    let mut arrivals_per_type: Vec<Vec<f64>> = vec![Vec::new(); type_index.len()];
    for record in day_owned.iter().filter(|r| r.is_served()) {
        let Some(i) = type_index.get(&record.customer_type) else {
            continue;
        };
        if let Some(t) = record.queue_join() {
            arrivals_per_type[*i].push(t as f64);
        }
    }
    for times in &mut arrivals_per_type {
        times.sort_unstable_by(f64::total_cmp);
    }

    // Hourly agent counts per group for the chosen date.
    let mut capacity = Vec::with_capacity(group_index.len());
    for group in group_index.keys() {
        let mut by_hour: BTreeMap<u32, u32> = BTreeMap::new();
        for row in schedule
            .iter()
            .filter(|r| r.date == date && r.agent_group == *group)
        {
            by_hour.insert(row.hour.min(23), row.count);
        }
        if by_hour.is_empty() {
            warnings.push(format!("agent group {group} has no schedule on {date}"));
            capacity.push(CapacitySchedule::constant(1));
        } else {
            capacity.push(CapacitySchedule {
                steps: (0..24)
                    .map(|h| CapacityStep {
                        at: h as f64 * 3600.0,
                        count: by_hour.get(&h).copied().unwrap_or(0),
                    })
                    .collect(),
            });
        }
    }

    let config = SystemConfig {
        num_types: type_index.len(),
        num_servers: group_index.len(),
        lines,
        payoff: theta,
        service,
        arrivals: arrivals_per_type
            .into_iter()
            .map(|times| ArrivalSource::Timestamps { times })
            .collect(),
        capacity,
    };
    Ok((
        Scenario {
            label: date.to_string(),
            horizon: 86_400.0,
            config,
        },
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(date: &str, t: u32, group: u32, outcome: &str, start: u32) -> CallRecord {
        CallRecord {
            date: date.to_string(),
            vru_entry: Some(start.saturating_sub(10)),
            q_start: Some(start),
            ser_start: Some(start + 30),
            ser_exit: Some(start + 230),
            customer_type: t,
            outcome: Outcome::parse(outcome),
            agent_id: Some("a1".into()),
            agent_group: Some(group),
        }
    }

    #[test]
    fn payoff_ratio_counts_transfers_and_conferences() {
        let mut records = Vec::new();
        for k in 0..7 {
            records.push(call("d", 1, 1, "handled", 100 + k));
        }
        records.push(call("d", 1, 1, "transfer", 200));
        records.push(call("d", 1, 1, "transfer", 210));
        records.push(call("d", 1, 1, "conference", 220));
        let theta = derive_payoff(&records);
        assert_eq!(theta[&(1, 1)], 0.7);
    }

    #[test]
    fn all_successful_is_one() {
        let records: Vec<CallRecord> = (0..5).map(|k| call("d", 2, 3, "handled", k)).collect();
        assert_eq!(derive_payoff(&records)[&(2, 3)], 1.0);
    }

    #[test]
    fn engineered_log_reproduces_point_84() {
        let mut records = Vec::new();
        for k in 0..84 {
            records.push(call("d", 1, 1, "handled", k));
        }
        for k in 0..16 {
            records.push(call("d", 1, 1, "transfer", 1000 + k));
        }
        assert_eq!(derive_payoff(&records)[&(1, 1)], 0.84);
    }

    #[test]
    fn abandoned_calls_are_not_served() {
        let mut record = call("d", 1, 1, "abandon", 100);
        record.ser_start = None;
        record.ser_exit = None;
        record.agent_group = None;
        assert!(!record.is_served());
        assert!(derive_payoff(&[record]).is_empty());
    }

    #[test]
    fn transform_matches_reference_row() {
        // Four lines of one type with payoffs (0.82, 0.89, 0.86, 1.00)
        // map onto (0.00, 0.62, 0.47, 1.00) up to rounding.
        let lines = vec![
            Line::new(0, 0),
            Line::new(0, 1),
            Line::new(0, 2),
            Line::new(0, 3),
        ];
        let out = transform_payoff(&lines, &[0.82, 0.89, 0.86, 1.00]);
        let expect = [0.0, 0.62, 0.47, 1.0];
        for (got, want) in out.iter().zip(expect) {
            assert!((got - want).abs() < 5e-3, "{out:?}");
        }
    }

    #[test]
    fn transform_single_line_takes_sqrt() {
        let out = transform_payoff(&[Line::new(0, 0)], &[0.81]);
        assert!((out[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn transform_zero_range_maps_to_one() {
        let lines = vec![Line::new(0, 0), Line::new(0, 1)];
        let out = transform_payoff(&lines, &[0.6, 0.6]);
        assert_eq!(out, vec![1.0, 1.0]);
    }

    #[test]
    fn transform_stays_in_unit_interval() {
        let lines = vec![
            Line::new(0, 0),
            Line::new(0, 1),
            Line::new(0, 2),
            Line::new(1, 0),
        ];
        let theta = [0.3, 0.9, 0.55, 0.2];
        for value in transform_payoff(&lines, &theta) {
            assert!((0.0..=1.0).contains(&value));
        }
    }

    #[test]
    fn compatibility_threshold_boundary() {
        let mut records = Vec::new();
        for k in 0..99 {
            records.push(call("d", 1, 1, "handled", k));
        }
        for k in 0..100 {
            records.push(call("d", 2, 2, "handled", k));
        }
        let lines = build_compatibility(&records, 100);
        assert!(!lines.contains(&(1, 1)), "99 calls must not qualify");
        assert!(lines.contains(&(2, 2)), "100 calls must qualify");
    }

    #[test]
    fn compatibility_matches_group_by_oracle() {
        // Mixed log checked against an independent group-by count.
        let mut records = Vec::new();
        let mut expected: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        let mut state = 12345u64;
        for _ in 0..600 {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let t = ((state >> 33) % 3) as u32;
            let g = ((state >> 16) % 2) as u32;
            records.push(call("d", t, g, "handled", (state % 86_000) as u32));
            *expected.entry((t, g)).or_default() += 1;
        }
        let threshold = 100;
        let got = build_compatibility(&records, threshold);
        let want: Vec<(u32, u32)> = expected
            .iter()
            .filter(|(_, n)| **n >= threshold)
            .map(|(k, _)| *k)
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn csv_round_trip_and_scenario_assembly() {
        let calls = "\
date,vru_entry,q_start,ser_start,ser_exit,type,outcome,agent_id,agent_group
2001-06-04,90,100,130,330,1,handled,a,10
2001-06-04,190,200,230,430,1,transfer,a,10
2001-06-04,290,300,330,530,2,handled,b,20
2001-06-04,390,400,,,2,abandon,,
2001-06-05,90,100,130,330,1,handled,a,10
";
        let records = read_call_log(calls.as_bytes()).unwrap();
        assert_eq!(records.len(), 5);
        assert!(!records[3].is_served());

        let schedule = "\
date,hour,agent_group,count
2001-06-04,0,10,2
2001-06-04,0,20,1
";
        let rows = read_agent_schedule(schedule.as_bytes()).unwrap();
        let (scenario, warnings) =
            scenario_from_records(&records, &rows, "2001-06-04", 1, false).unwrap();
        assert_eq!(scenario.config.num_types, 2);
        assert_eq!(scenario.config.num_servers, 2);
        assert_eq!(scenario.config.lines.len(), 2);
        assert_eq!(scenario.config.payoff[0], 0.5); // 1 of 2 on (1,10)
        assert_eq!(scenario.config.payoff[1], 1.0);
        assert!(warnings.is_empty(), "{warnings:?}");
        // Ingestion is pure: same inputs, same scenario.
        let (again, _) = scenario_from_records(&records, &rows, "2001-06-04", 1, false).unwrap();
        assert_eq!(scenario, again);
    }
}
