//! Per-episode plan and estimator snapshots emitted into the metrics
//! stream for post-hoc analysis.

use serde::Serialize;

use crate::model::Line;

/// State captured at one episode boundary, in config-line space.
#[derive(Debug, Clone, Serialize)]
pub struct EpisodeSnapshot {
    pub episode: u64,
    pub lambda_hat: Vec<f64>,
    pub theta_bar: Vec<f64>,
    /// UCB values; `+∞` marks unexplored lines.
    pub theta_ucb: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub plan_rates: Vec<f64>,
    pub rejection_rates: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub forest_edges: Vec<Line>,
    /// `Σ_j (ρ_j - ρ̄)²` of the planned rates.
    pub plan_load_variance: f64,
    /// `Σ θ̂ x` of the planned rates (capped payoffs).
    pub linear_payoff_term: f64,
    pub used_fallback: bool,
}
