//! Shared fixtures for the solver and simulation benchmarks.

use skillqueue::lp::LpProblem;
use skillqueue::{
    ArrivalSource, CapacitySchedule, Line, PolicyKind, PolicySpec, ServiceSource, SystemConfig,
};

/// The worked 3x3 routing problem.
pub fn small_problem() -> LpProblem {
    let mut lines = Vec::new();
    let mut mu = Vec::new();
    let mut theta = Vec::new();
    let server_mu = [1.0, 5.0, 10.0];
    for i in 0..3 {
        for j in 0..3 {
            lines.push(Line::new(i, j));
            mu.push(server_mu[j]);
            theta.push(0.05 + 0.1 * ((i * 3 + j) as f64));
        }
    }
    LpProblem::new(3, 3, lines, vec![3.0, 7.0, 5.0], mu, theta, 0.01)
}

/// A call-center-sized routing problem: 17 types x 47 servers with a
/// sparse compatibility set of about 70 lines.
pub fn large_problem() -> LpProblem {
    let num_types = 17;
    let num_servers = 47;
    let mut lines = Vec::new();
    let mut mu = Vec::new();
    let mut theta = Vec::new();
    let mut state = 0x9E3779B97F4A7C15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for i in 0..num_types {
        for j in 0..num_servers {
            // Every type keeps its diagonal-ish anchor plus random extras.
            if j % num_types == i || next() < 0.06 {
                lines.push(Line::new(i, j));
                mu.push(0.5 + 4.0 * next());
                theta.push(next());
            }
        }
    }
    let lambda = (0..num_types).map(|_| 0.2 + 2.0 * next()).collect();
    LpProblem::new(num_types, num_servers, lines, lambda, mu, theta, 1e-6)
}

/// Interarrival/service exponential system for throughput benchmarks.
pub fn sim_config() -> SystemConfig {
    SystemConfig {
        num_types: 2,
        num_servers: 2,
        lines: vec![
            Line::new(0, 0),
            Line::new(0, 1),
            Line::new(1, 0),
            Line::new(1, 1),
        ],
        payoff: vec![0.9, 0.4, 0.3, 0.8],
        service: vec![ServiceSource::Exponential { mean: 1.0 }; 4],
        arrivals: vec![
            ArrivalSource::Exponential { mean: 1.5 },
            ArrivalSource::Exponential { mean: 2.0 },
        ],
        capacity: vec![CapacitySchedule::constant(1); 2],
    }
}

pub fn policy(kind: PolicyKind, h: f64) -> PolicySpec {
    let mut spec = PolicySpec::new(kind);
    spec.episode_length_h = h;
    spec
}
