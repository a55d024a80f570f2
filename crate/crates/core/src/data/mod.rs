//! Scenario construction: synthetic generators, burst injection, and
//! call-log ingestion (see [`csvio`] for the file formats).

pub mod csvio;

pub use csvio::{
    build_compatibility, derive_payoff, read_agent_schedule, read_call_log, scenario_from_csv,
    CallRecord, Outcome, ScheduleRow,
};

use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, Exp};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    validate_config, ArrivalSource, CapacitySchedule, Line, ServiceSource, SystemConfig, TypeId,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("call log is unusable: {0}")]
    BadLog(String),
}

/// A fully resolved simulation input: the system config plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    pub horizon: f64,
    pub config: SystemConfig,
}

/// One piecewise-constant arrival-rate segment: `rates[i]` applies to type
/// `i` from `start` until the next segment (or the horizon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSegment {
    pub start: f64,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticService {
    /// One exponential mean for every line.
    Exponential {
        mean: f64,
    },
    /// Per-line exponential means, aligned with the line list.
    ExponentialPerLine {
        means: Vec<f64>,
    },
    LogNormal {
        location: f64,
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaSpec {
    /// Per-line payoff means aligned with the line list.
    PerLine { values: Vec<f64> },
    /// Independent uniform draws per line.
    Uniform { low: f64, high: f64 },
}

/// Blueprint of a synthetic scenario; deterministic given `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_types: usize,
    pub num_servers: usize,
    /// Compatibility lines; full compatibility when omitted.
    #[serde(default)]
    pub lines: Option<Vec<Line>>,
    pub rate_segments: Vec<RateSegment>,
    pub service: SyntheticService,
    pub theta: ThetaSpec,
    /// Constant agent count per server.
    pub agent_counts: Vec<u32>,
    /// Optional full schedules overriding `agent_counts`.
    #[serde(default)]
    pub agent_schedules: Option<Vec<CapacitySchedule>>,
    pub horizon: f64,
    pub seed: u64,
}

fn generation_rng(seed: u64, stream: u64, index: u64) -> Pcg64 {
    Pcg64::seed_from_u64(
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(stream.wrapping_mul(0x94D0_49BB))
            .wrapping_add(index),
    )
}

/// Materializes Poisson arrival lists from a piecewise-constant rate
/// profile over `[0, horizon)`.
fn poisson_arrivals(
    segments: &[RateSegment],
    customer_type: TypeId,
    horizon: f64,
    rng: &mut Pcg64,
) -> Vec<f64> {
    let mut times = Vec::new();
    for (k, segment) in segments.iter().enumerate() {
        let end = segments
            .get(k + 1)
            .map_or(horizon, |s| s.start)
            .min(horizon);
        let rate = segment.rates[customer_type];
        if rate <= 0.0 || segment.start >= end {
            continue;
        }
        let exp = Exp::new(rate).expect("positive rate");
        let mut t = segment.start + exp.sample(rng);
        while t < end {
            times.push(t);
            t += exp.sample(rng);
        }
    }
    times
}

/// Builds a synthetic scenario: explicit Poisson arrival lists, parametric
/// service sources, and the requested payoff matrix.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Scenario, DataError> {
    if spec.num_types == 0 || spec.num_servers == 0 {
        return Err(DataError::InvalidSpec(
            "need at least one type and server".into(),
        ));
    }
    if !(spec.horizon > 0.0) {
        return Err(DataError::InvalidSpec("horizon must be positive".into()));
    }
    if spec.rate_segments.is_empty() {
        return Err(DataError::InvalidSpec(
            "need at least one rate segment".into(),
        ));
    }
    for segment in &spec.rate_segments {
        if segment.rates.len() != spec.num_types {
            return Err(DataError::InvalidSpec(format!(
                "rate segment at t={} has {} rates for {} types",
                segment.start,
                segment.rates.len(),
                spec.num_types
            )));
        }
    }

    let lines = match &spec.lines {
        Some(lines) => lines.clone(),
        None => {
            let mut all = Vec::new();
            for i in 0..spec.num_types {
                for j in 0..spec.num_servers {
                    all.push(Line::new(i, j));
                }
            }
            all
        }
    };

    let payoff = match &spec.theta {
        ThetaSpec::PerLine { values } => {
            if values.len() != lines.len() {
                return Err(DataError::InvalidSpec(format!(
                    "{} payoff values for {} lines",
                    values.len(),
                    lines.len()
                )));
            }
            values.clone()
        }
        ThetaSpec::Uniform { low, high } => {
            let mut rng = generation_rng(spec.seed, 11, 0);
            lines
                .iter()
                .map(|_| rng.random_range(*low..*high))
                .collect()
        }
    };

    let service: Vec<ServiceSource> = match &spec.service {
        SyntheticService::Exponential { mean } => {
            vec![ServiceSource::Exponential { mean: *mean }; lines.len()]
        }
        SyntheticService::ExponentialPerLine { means } => {
            if means.len() != lines.len() {
                return Err(DataError::InvalidSpec(format!(
                    "{} service means for {} lines",
                    means.len(),
                    lines.len()
                )));
            }
            means
                .iter()
                .map(|m| ServiceSource::Exponential { mean: *m })
                .collect()
        }
        SyntheticService::LogNormal { location, scale } => {
            vec![
                ServiceSource::LogNormal {
                    location: *location,
                    scale: *scale,
                };
                lines.len()
            ]
        }
    };

    let arrivals: Vec<ArrivalSource> = (0..spec.num_types)
        .map(|i| {
            let mut rng = generation_rng(spec.seed, 10, i as u64);
            ArrivalSource::Timestamps {
                times: poisson_arrivals(&spec.rate_segments, i, spec.horizon, &mut rng),
            }
        })
        .collect();

    let capacity = match &spec.agent_schedules {
        Some(schedules) => {
            if schedules.len() != spec.num_servers {
                return Err(DataError::InvalidSpec(format!(
                    "{} schedules for {} servers",
                    schedules.len(),
                    spec.num_servers
                )));
            }
            schedules.clone()
        }
        None => {
            if spec.agent_counts.len() != spec.num_servers {
                return Err(DataError::InvalidSpec(format!(
                    "{} agent counts for {} servers",
                    spec.agent_counts.len(),
                    spec.num_servers
                )));
            }
            spec.agent_counts
                .iter()
                .map(|c| CapacitySchedule::constant(*c))
                .collect()
        }
    };

    let config = SystemConfig {
        num_types: spec.num_types,
        num_servers: spec.num_servers,
        lines,
        payoff,
        service,
        arrivals,
        capacity,
    };
    let violations = validate_config(&config);
    if !violations.is_empty() {
        return Err(DataError::InvalidSpec(format!(
            "generated config is invalid: {}",
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    Ok(Scenario {
        label: format!("synthetic-{}", spec.seed),
        horizon: spec.horizon,
        config,
    })
}

/// Adds `count` extra arrivals of one type at i.i.d. uniform times within
/// `window`, merged in timestamp order; existing arrivals are untouched.
/// Distribution-backed arrival sources are materialized over the horizon
/// first (deterministically from `seed`).
pub fn inject_burst(
    scenario: &Scenario,
    customer_type: TypeId,
    count: usize,
    window: (f64, f64),
    seed: u64,
) -> Scenario {
    assert!(window.0 < window.1, "burst window must be nonempty");
    let mut out = scenario.clone();
    let mut burst: Vec<f64> = {
        let mut rng = generation_rng(seed, 12, customer_type as u64);
        (0..count)
            .map(|_| rng.random_range(window.0..window.1))
            .collect()
    };
    burst.sort_unstable_by(f64::total_cmp);

    let existing = match &scenario.config.arrivals[customer_type] {
        ArrivalSource::Timestamps { times } => times.clone(),
        ArrivalSource::Exponential { mean } => {
            let mut rng = generation_rng(seed, 13, customer_type as u64);
            let exp = Exp::new(1.0 / mean).expect("positive mean");
            let mut times = Vec::new();
            let mut t = exp.sample(&mut rng);
            while t < scenario.horizon {
                times.push(t);
                t += exp.sample(&mut rng);
            }
            times
        }
    };
    let mut merged = existing;
    merged.extend(burst);
    merged.sort_unstable_by(f64::total_cmp);
    out.config.arrivals[customer_type] = ArrivalSource::Timestamps { times: merged };
    out
}
