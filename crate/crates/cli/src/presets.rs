//! Built-in experiment presets, one per experiment family: the 3x3
//! routing-rate validation, the fairness sweep, the burst-incident day,
//! the episode-length sweep, and the estimator ablation.

use std::path::PathBuf;

use rayon::prelude::*;

use skillqueue::data::{RateSegment, SyntheticService, SyntheticSpec, ThetaSpec};
use skillqueue::engine::run_with_policy;
use skillqueue::lp::LpProblem;
use skillqueue::policies::fixed_plan_policy;
use skillqueue::{
    ArrivalSource, CapacitySchedule, Line, LogKind, PolicyKind, PolicySpec, RoutingPlan,
    ServiceSource, SystemConfig,
};

use crate::config::{ExperimentConfig, ExperimentSettings, ScenarioSource, Sweeps};
use crate::CliError;

pub enum Preset {
    Experiment(ExperimentConfig),
    /// The 3x3 rate-replay validation with pass/fail tolerance bands.
    AppendixD,
}

pub fn preset_names() -> &'static [&'static str] {
    &[
        "appendix-d",
        "fairness-sweep",
        "burst-incident",
        "episode-sweep",
        "estimator-ablation",
    ]
}

pub fn build_preset(name: &str) -> Option<Preset> {
    match name {
        "appendix-d" => Some(Preset::AppendixD),
        "fairness-sweep" => Some(Preset::Experiment(fairness_sweep())),
        "burst-incident" => Some(Preset::Experiment(burst_incident())),
        "episode-sweep" => Some(Preset::Experiment(episode_sweep())),
        "estimator-ablation" => Some(Preset::Experiment(estimator_ablation())),
        _ => None,
    }
}

fn settings(replications: usize, out: &str) -> ExperimentSettings {
    ExperimentSettings {
        replications,
        base_seed: 1,
        output_dir: PathBuf::from(out),
        horizon: None,
    }
}

fn policy(kind: PolicyKind, h: f64) -> PolicySpec {
    let mut spec = PolicySpec::new(kind);
    spec.episode_length_h = h;
    spec
}

/// Server-fairness demo: two types, two servers with very different
/// speeds, payoffs favoring concentration. Swept over the fairness weight.
fn fairness_sweep() -> ExperimentConfig {
    ExperimentConfig {
        experiment: settings(3, "out/fairness-sweep"),
        scenario: ScenarioSource {
            synthetic: Some(SyntheticSpec {
                num_types: 2,
                num_servers: 2,
                lines: None,
                rate_segments: vec![RateSegment {
                    start: 0.0,
                    rates: vec![1.0, 0.4],
                }],
                service: SyntheticService::ExponentialPerLine {
                    means: vec![1.0 / 1.5, 0.25, 1.0 / 1.5, 0.25],
                },
                theta: ThetaSpec::PerLine {
                    values: vec![0.95, 0.90, 0.90, 0.82],
                },
                agent_counts: vec![1, 1],
                agent_schedules: None,
                horizon: 3_600.0,
                seed: 11,
            }),
            csv: None,
        },
        policies: vec![policy(PolicyKind::Oracle, 60.0)],
        sweeps: Sweeps {
            gammas: Some(vec![0.0, 0.01, 0.1, 1.0]),
            ..Default::default()
        },
        bursts: Vec::new(),
    }
}

/// A synthetic day hit by three 2000-customer surges an hour apart,
/// mirroring the incident pattern: tree-dispatch learning against the four
/// static benchmarks.
fn burst_incident() -> ExperimentConfig {
    let theta = vec![
        0.95, 0.60, 0.70, // type 0
        0.65, 0.90, 0.70, // type 1
        0.70, 0.60, 0.92, // type 2
    ];
    ExperimentConfig {
        experiment: settings(3, "out/burst-incident"),
        scenario: ScenarioSource {
            synthetic: Some(SyntheticSpec {
                num_types: 3,
                num_servers: 3,
                lines: None,
                rate_segments: vec![RateSegment {
                    start: 0.0,
                    rates: vec![0.15, 0.15, 0.15],
                }],
                service: SyntheticService::Exponential { mean: 60.0 },
                theta: ThetaSpec::PerLine { values: theta },
                agent_counts: vec![40, 40, 40],
                agent_schedules: None,
                horizon: 86_400.0,
                seed: 31,
            }),
            csv: None,
        },
        policies: vec![
            policy(PolicyKind::UcbqrTree, 120.0),
            policy(PolicyKind::FcfsAlis, 120.0),
            policy(PolicyKind::Greedy, 120.0),
            policy(PolicyKind::Random, 120.0),
            policy(PolicyKind::ThetaMu, 120.0),
        ],
        sweeps: Sweeps::default(),
        bursts: vec![
            crate::config::BurstSpec {
                customer_type: 0,
                count: 2000,
                window: (36_000.0, 36_600.0),
                seed: 71,
            },
            crate::config::BurstSpec {
                customer_type: 1,
                count: 2000,
                window: (39_600.0, 40_200.0),
                seed: 72,
            },
            crate::config::BurstSpec {
                customer_type: 2,
                count: 2000,
                window: (43_200.0, 43_800.0),
                seed: 73,
            },
        ],
    }
}

/// Square-wave arrival day: learning must chase two-hourly load switches,
/// so waiting times grow with the episode length while payoff barely
/// moves.
fn episode_sweep() -> ExperimentConfig {
    // Odd hours run hot, even hours (including the last) run cold so the
    // backlog drains before the horizon whatever the episode length.
    let mut segments = Vec::new();
    for phase in 0..9 {
        let rates = if phase % 2 == 0 {
            vec![0.05, 0.05]
        } else {
            vec![0.8, 0.8]
        };
        segments.push(RateSegment {
            start: phase as f64 * 3_600.0,
            rates,
        });
    }
    ExperimentConfig {
        experiment: settings(6, "out/episode-sweep"),
        scenario: ScenarioSource {
            synthetic: Some(SyntheticSpec {
                num_types: 2,
                num_servers: 3,
                lines: None,
                rate_segments: segments,
                service: SyntheticService::Exponential { mean: 30.0 },
                theta: ThetaSpec::PerLine {
                    values: vec![0.90, 0.86, 0.84, 0.88, 0.85, 0.83],
                },
                agent_counts: vec![20, 20, 20],
                agent_schedules: None,
                horizon: 32_400.0,
                seed: 41,
            }),
            csv: None,
        },
        policies: vec![
            policy(PolicyKind::Ucbqr, 120.0),
            policy(PolicyKind::Oracle, 120.0),
        ],
        sweeps: Sweeps {
            episode_lengths: Some(vec![60.0, 120.0, 300.0, 600.0, 1_200.0]),
            ..Default::default()
        },
        bursts: Vec::new(),
    }
}

/// Near-silent night followed by a sharp morning ramp on a system with
/// many compatible lines, so most service estimators still sit at their
/// initial value when traffic arrives. Run under both estimator
/// initializations and the knowledge ablations.
fn estimator_ablation() -> ExperimentConfig {
    ExperimentConfig {
        experiment: settings(15, "out/estimator-ablation"),
        scenario: ScenarioSource {
            synthetic: Some(SyntheticSpec {
                num_types: 4,
                num_servers: 8,
                lines: None,
                rate_segments: vec![
                    RateSegment {
                        start: 0.0,
                        rates: vec![0.0005; 4],
                    },
                    RateSegment {
                        start: 7_200.0,
                        rates: vec![0.18; 4],
                    },
                ],
                service: SyntheticService::Exponential { mean: 100.0 },
                theta: ThetaSpec::Uniform {
                    low: 0.55,
                    high: 0.95,
                },
                agent_counts: vec![13; 8],
                agent_schedules: None,
                horizon: 21_600.0,
                seed: 51,
            }),
            csv: None,
        },
        policies: vec![
            policy(PolicyKind::Ucbqr, 120.0),
            policy(PolicyKind::Oracle, 120.0),
            policy(PolicyKind::UcbqrLambda, 120.0),
            policy(PolicyKind::UcbqrMu, 120.0),
        ],
        sweeps: Sweeps {
            mu_inits: Some(vec![1e-3, 10.0]),
            ..Default::default()
        },
        bursts: Vec::new(),
    }
}

// ---------------------------------------------------------------------
// The 3x3 rate-replay validation.

/// Reference values for the 3x3 replay: long-run per-line departure rates
/// and per-server busy fractions with their tolerance bands.
pub const REPLAY_RATE_BANDS: [((usize, usize), f64, f64); 5] = [
    ((0, 0), 0.863, 0.08),
    ((0, 1), 2.153, 0.08),
    ((1, 1), 2.649, 0.08),
    ((1, 2), 4.338, 0.08),
    ((2, 2), 5.0, 0.08),
];
pub const REPLAY_BUSY_BANDS: [(f64, f64); 3] = [(0.852, 0.03), (0.955, 0.03), (0.936, 0.03)];

fn replay_payoffs() -> Vec<f64> {
    let favored = [
        ((0usize, 0usize), 0.95),
        ((0, 1), 0.60),
        ((1, 1), 0.80),
        ((1, 2), 0.50),
        ((2, 2), 0.90),
    ];
    let mut theta = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            theta.push(
                favored
                    .iter()
                    .find(|((a, b), _)| *a == i && *b == j)
                    .map(|(_, t)| *t)
                    .unwrap_or(0.05),
            );
        }
    }
    theta
}

/// The 3x3 system: Poisson arrival rates (3, 7, 5) against exponential
/// service rates (1, 5, 10) with full compatibility.
pub fn replay_config() -> SystemConfig {
    let server_mu = [1.0, 5.0, 10.0];
    let mut lines = Vec::new();
    let mut service = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            lines.push(Line::new(i, j));
            service.push(ServiceSource::Exponential {
                mean: 1.0 / server_mu[j],
            });
        }
    }
    SystemConfig {
        num_types: 3,
        num_servers: 3,
        lines,
        payoff: replay_payoffs(),
        service,
        arrivals: vec![
            ArrivalSource::Exponential { mean: 1.0 / 3.0 },
            ArrivalSource::Exponential { mean: 1.0 / 7.0 },
            ArrivalSource::Exponential { mean: 1.0 / 5.0 },
        ],
        capacity: vec![CapacitySchedule::constant(1); 3],
    }
}

/// The replayed vertex: x00 = 1-eps, x01 = 2+eps, x11 = 3-6eps,
/// x12 = 4+6eps, x22 = 5 at eps = 0.01.
pub fn replay_plan() -> (LpProblem, RoutingPlan) {
    let eps = 0.01;
    let config = replay_config();
    let problem = LpProblem::new(
        3,
        3,
        config.lines.clone(),
        vec![3.0, 7.0, 5.0],
        vec![1.0, 5.0, 10.0, 1.0, 5.0, 10.0, 1.0, 5.0, 10.0],
        replay_payoffs(),
        eps,
    );
    let mut rates = vec![0.0; 9];
    rates[0] = 1.0 - eps;
    rates[1] = 2.0 + eps;
    rates[4] = 3.0 - 6.0 * eps;
    rates[5] = 4.0 + 6.0 * eps;
    rates[8] = 5.0;
    (
        problem,
        RoutingPlan {
            rates,
            rejection_rates: Vec::new(),
            objective_value: 0.0,
            is_vertex: true,
        },
    )
}

pub struct AppendixDOutcome {
    /// Mean empirical rate per line of the reference support.
    pub rates: Vec<((usize, usize), f64)>,
    pub busy: Vec<f64>,
    pub lines: Vec<String>,
    pub pass: bool,
    pub elapsed: std::time::Duration,
}

/// Feeds the reference vertex to the tree dispatch rule over `replications`
/// independent runs of horizon 500 and checks the long-run rates and busy
/// fractions against their tolerance bands, one pass/fail line each.
pub fn run_appendix_d(replications: u64, base_seed: u64) -> Result<AppendixDOutcome, CliError> {
    let started = std::time::Instant::now();
    let horizon = 500.0;
    let config = replay_config();
    let mut spec = PolicySpec::new(PolicyKind::UcbqrTree);
    spec.episode_length_h = 10.0;
    spec.epsilon = 0.01;

    let per_rep: Result<Vec<(Vec<f64>, Vec<f64>)>, String> = (0..replications)
        .into_par_iter()
        .map(|replication| {
            let (problem, plan) = replay_plan();
            let policy = fixed_plan_policy(&config, &spec, problem, plan, true)
                .map_err(|e| e.to_string())?;
            let out = run_with_policy(
                &config,
                policy,
                spec.episode_length_h,
                base_seed + replication,
                horizon,
            )
            .map_err(|e| e.to_string())?;
            let mut line_rates = vec![0.0; 9];
            let mut busy = vec![0.0; 3];
            let mut open = [None; 3];
            for record in &out.log.records {
                match record.kind {
                    LogKind::ServiceStart => open[record.server.unwrap()] = Some(record.time),
                    LogKind::Departure => {
                        let j = record.server.unwrap();
                        line_rates[record.customer_type.unwrap() * 3 + j] += 1.0 / horizon;
                        busy[j] += record.time - open[j].take().unwrap_or(record.time);
                    }
                    _ => {}
                }
            }
            for (j, started_at) in open.into_iter().enumerate() {
                if let Some(t) = started_at {
                    busy[j] += horizon - t;
                }
            }
            for b in &mut busy {
                *b /= horizon;
            }
            Ok((line_rates, busy))
        })
        .collect();
    let per_rep = per_rep.map_err(|e| CliError::Solver(vec![e]))?;

    let n = replications as f64;
    let mut mean_rates = [0.0; 9];
    let mut mean_busy = [0.0; 3];
    for (rates, busy) in &per_rep {
        for (acc, r) in mean_rates.iter_mut().zip(rates) {
            *acc += r / n;
        }
        for (acc, b) in mean_busy.iter_mut().zip(busy) {
            *acc += b / n;
        }
    }

    let mut lines = Vec::new();
    let mut pass = true;
    let mut rates_out = Vec::new();
    for ((i, j), want, tol) in REPLAY_RATE_BANDS {
        let got = mean_rates[i * 3 + j];
        let ok = (got - want).abs() <= tol;
        pass &= ok;
        rates_out.push(((i, j), got));
        lines.push(format!(
            "{} rate({i},{j}) = {got:.3} (target {want} +- {tol})",
            if ok { "PASS" } else { "FAIL" }
        ));
    }
    for (j, (want, tol)) in REPLAY_BUSY_BANDS.iter().enumerate() {
        let got = mean_busy[j];
        let ok = (got - want).abs() <= *tol;
        pass &= ok;
        lines.push(format!(
            "{} busy({j}) = {got:.3} (target {want} +- {tol})",
            if ok { "PASS" } else { "FAIL" }
        ));
    }
    Ok(AppendixDOutcome {
        rates: rates_out,
        busy: mean_busy.to_vec(),
        lines,
        pass,
        elapsed: started.elapsed(),
    })
}
