//! Routing-rate optimization: the payoff-maximizing transport LP, its
//! always-feasible rejection fallback, the quadratic load-fairness program
//! solved by Frank-Wolfe, and spanning-forest extraction from vertex
//! solutions.

mod enumerate;
mod forest;
mod frank_wolfe;
mod penalty;
mod simplex;

pub use enumerate::enumerate_best_vertex;
pub use forest::{extract_spanning_forest, ForestError};
pub use frank_wolfe::{solve_fairness, solve_fairness_fallback, solve_penalized};
pub use penalty::{CriticalLoad, Deviation, PenaltyObjective, SpareRouting, WaitingTime};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Line, RoutingPlan};
use simplex::Tableau;

/// Finite stand-in for the infinite optimism of unexplored lines: any value
/// above the maximum true payoff of 1 makes them win whenever capacity
/// allows.
pub const THETA_CAP: f64 = 2.0;

/// Pivot budget multiplier: the cap is 50 * (variables + constraints).
const ITER_CAP_FACTOR: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Linear,
    FairnessQuadratic,
    PluggablePenalty,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LpError {
    /// No nonnegative rates satisfy the equality and capacity constraints.
    #[error("routing problem is infeasible")]
    Infeasible,
    /// The fairness program's polytope is empty.
    #[error("fairness polytope is empty")]
    InfeasibleRegion,
    /// Pivot budget exhausted; degenerate cycling despite Bland's rule or
    /// an unbounded direction, either way a numerical breakdown.
    #[error("solver exceeded its iteration cap after {iterations} pivots")]
    NumericalFailure { iterations: usize },
}

/// One episode's routing-rate problem.
///
/// `lines` may be any subset of a system's compatibility set; `mu_hat` and
/// `theta_hat` are aligned with it and `lambda_hat` is per customer type.
/// `mu_hat` must be strictly positive on every line present, and
/// `theta_hat` entries may be `+∞` (replaced by [`THETA_CAP`] when solving).
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub num_types: usize,
    pub num_servers: usize,
    pub lines: Vec<Line>,
    pub lambda_hat: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub epsilon: f64,
    pub penalty_p: f64,
    pub gamma: f64,
    pub objective_kind: ObjectiveKind,
}

impl LpProblem {
    pub fn new(
        num_types: usize,
        num_servers: usize,
        lines: Vec<Line>,
        lambda_hat: Vec<f64>,
        mu_hat: Vec<f64>,
        theta_hat: Vec<f64>,
        epsilon: f64,
    ) -> Self {
        debug_assert_eq!(lines.len(), mu_hat.len());
        debug_assert_eq!(lines.len(), theta_hat.len());
        debug_assert_eq!(num_types, lambda_hat.len());
        debug_assert!(mu_hat.iter().all(|m| *m > 0.0));
        debug_assert!(epsilon > 0.0 && epsilon < 1.0);
        Self {
            num_types,
            num_servers,
            lines,
            lambda_hat,
            mu_hat,
            theta_hat,
            epsilon,
            penalty_p: 1e3,
            gamma: 0.0,
            objective_kind: ObjectiveKind::Linear,
        }
    }

    pub fn with_penalty(mut self, penalty_p: f64) -> Self {
        self.penalty_p = penalty_p;
        self
    }

    pub fn with_fairness(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self.objective_kind = ObjectiveKind::FairnessQuadratic;
        self
    }

    /// `theta_hat` with infinities replaced by [`THETA_CAP`].
    pub fn capped_theta(&self) -> Vec<f64> {
        self.theta_hat
            .iter()
            .map(|t| if t.is_finite() { *t } else { THETA_CAP })
            .collect()
    }

    /// Server loads `ρ_j = Σ_i x_ij / μ_ij` under the given rates.
    pub fn loads(&self, rates: &[f64]) -> Vec<f64> {
        let mut loads = vec![0.0; self.num_servers];
        for (id, line) in self.lines.iter().enumerate() {
            loads[line.server] += rates[id] / self.mu_hat[id];
        }
        loads
    }

    /// `Σ_j (ρ_j - ρ̄)²` under the given rates.
    pub fn load_variance(&self, rates: &[f64]) -> f64 {
        let loads = self.loads(rates);
        let mean = loads.iter().sum::<f64>() / self.num_servers as f64;
        loads.iter().map(|r| (r - mean) * (r - mean)).sum()
    }

    /// The linear payoff term `Σ θ̂ x` with capped coefficients.
    pub fn linear_payoff(&self, rates: &[f64]) -> f64 {
        let theta = self.capped_theta();
        rates.iter().zip(&theta).map(|(x, t)| x * t).sum()
    }
}

/// Column layout of the standard-form program shared by both linear solves
/// and the Frank-Wolfe linear minimization oracle.
pub(crate) struct Shape {
    /// Types with positive arrival estimate, ascending; one equality row each.
    pub active_types: Vec<usize>,
    /// Row index per type.
    pub row_of_type: Vec<Option<usize>>,
    /// Problem line ids whose type is active; one column each, in line order.
    pub active_lines: Vec<usize>,
    pub with_rejection: bool,
}

impl Shape {
    pub fn new(problem: &LpProblem, with_rejection: bool) -> Self {
        let mut row_of_type = vec![None; problem.num_types];
        let mut active_types = Vec::new();
        for (i, lambda) in problem.lambda_hat.iter().enumerate() {
            if *lambda > 0.0 {
                row_of_type[i] = Some(active_types.len());
                active_types.push(i);
            }
        }
        let active_lines = (0..problem.lines.len())
            .filter(|id| row_of_type[problem.lines[*id].customer_type].is_some())
            .collect();
        Self {
            active_types,
            row_of_type,
            active_lines,
            with_rejection,
        }
    }

    pub fn num_rows(&self, problem: &LpProblem) -> usize {
        self.active_types.len() + problem.num_servers
    }

    /// Structural columns: active lines, then rejection vars when present.
    pub fn num_structural(&self) -> usize {
        self.active_lines.len()
            + if self.with_rejection {
                self.active_types.len()
            } else {
                0
            }
    }

    /// Builds the tableau with slack columns appended after the structural
    /// ones and, when `artificials`, artificial columns for equality rows.
    /// Initial basis: rejection or artificial columns on type rows, slacks
    /// on capacity rows.
    fn tableau(&self, problem: &LpProblem, artificials: bool) -> Tableau {
        let num_type_rows = self.active_types.len();
        let rows = self.num_rows(problem);
        let structural = self.num_structural();
        let slack0 = structural;
        let art0 = slack0 + problem.num_servers;
        let cols = art0 + if artificials { num_type_rows } else { 0 };

        let mut a = vec![vec![0.0; cols]; rows];
        let mut b = vec![0.0; rows];
        for (col, id) in self.active_lines.iter().enumerate() {
            let line = problem.lines[*id];
            let row = self.row_of_type[line.customer_type].unwrap();
            a[row][col] = 1.0;
            a[num_type_rows + line.server][col] = 1.0 / problem.mu_hat[*id];
        }
        if self.with_rejection {
            for (k, _) in self.active_types.iter().enumerate() {
                a[k][self.active_lines.len() + k] = 1.0;
            }
        }
        for (k, i) in self.active_types.iter().enumerate() {
            b[k] = problem.lambda_hat[*i];
        }
        for j in 0..problem.num_servers {
            a[num_type_rows + j][slack0 + j] = 1.0;
            b[num_type_rows + j] = 1.0 - problem.epsilon;
        }
        if artificials {
            for k in 0..num_type_rows {
                a[k][art0 + k] = 1.0;
            }
        }

        let mut basis = Vec::with_capacity(rows);
        for k in 0..num_type_rows {
            basis.push(if artificials {
                art0 + k
            } else {
                self.active_lines.len() + k
            });
        }
        for j in 0..problem.num_servers {
            basis.push(slack0 + j);
        }
        Tableau::new(a, b, basis)
    }

    /// Expands a structural solution back into per-line rates and per-type
    /// rejection rates of the full problem.
    fn expand(&self, problem: &LpProblem, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut rates = vec![0.0; problem.lines.len()];
        for (col, id) in self.active_lines.iter().enumerate() {
            rates[*id] = x[col];
        }
        let mut rejection = Vec::new();
        if self.with_rejection {
            rejection = vec![0.0; problem.num_types];
            for (k, i) in self.active_types.iter().enumerate() {
                rejection[*i] = x[self.active_lines.len() + k];
            }
        }
        (rates, rejection)
    }

    /// Maximizes the given structural objective over the polytope and
    /// returns the expanded vertex. `Err(Infeasible)` only without
    /// rejection columns.
    pub(crate) fn maximize(
        &self,
        problem: &LpProblem,
        objective: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, f64), LpError> {
        debug_assert_eq!(objective.len(), self.num_structural());
        let rows = self.num_rows(problem);
        let structural = self.num_structural();
        let cap = ITER_CAP_FACTOR * (structural + problem.num_servers + rows);

        let mut tableau = self.tableau(problem, !self.with_rejection);
        let slack_cols = problem.num_servers;
        let active: Vec<usize> = (0..structural + slack_cols).collect();

        if !self.with_rejection && !self.active_types.is_empty() {
            // Phase one: drive the artificial variables to zero.
            let art0 = structural + slack_cols;
            let mut phase1 = vec![0.0; tableau.cols];
            for k in 0..self.active_types.len() {
                phase1[art0 + k] = -1.0;
            }
            let all: Vec<usize> = (0..tableau.cols).collect();
            tableau.maximize(&phase1, &all, cap)?;
            let infeasibility: f64 = (0..tableau.rows)
                .filter(|r| tableau.basis[*r] >= art0)
                .map(|r| tableau.b[r])
                .sum();
            if infeasibility > 1e-7 {
                return Err(LpError::Infeasible);
            }
            tableau.evict_artificials(art0)?;
        }

        let mut c = vec![0.0; tableau.cols];
        c[..structural].copy_from_slice(objective);
        tableau.maximize(&c, &active, cap)?;

        let x = tableau.solution(structural);
        let value = x.iter().zip(objective).map(|(xi, ci)| xi * ci).sum();
        let (rates, rejection) = self.expand(problem, &x);
        Ok((rates, rejection, value))
    }
}

/// Solves the primary routing LP: maximize `Σ θ̂_ij x_ij` subject to
/// per-type equality `Σ_j x_ij = λ̂_i` and per-server capacity
/// `Σ_i x_ij / μ̂_ij ≤ 1 - ε`. Returns a basic feasible solution, or
/// `Infeasible` when the constraints cannot be met.
pub fn solve_primary(problem: &LpProblem) -> Result<RoutingPlan, LpError> {
    let shape = Shape::new(problem, false);
    let theta = problem.capped_theta();
    let objective: Vec<f64> = shape.active_lines.iter().map(|id| theta[*id]).collect();
    let (rates, _, objective_value) = shape.maximize(problem, &objective)?;
    Ok(RoutingPlan {
        rates,
        rejection_rates: Vec::new(),
        objective_value,
        is_vertex: true,
    })
}

/// Solves the rejection fallback: a fictitious infinite-capacity server
/// absorbs unroutable arrival mass at penalty `p` per unit, so a plan
/// always exists.
pub fn solve_fallback(problem: &LpProblem) -> Result<RoutingPlan, LpError> {
    let shape = Shape::new(problem, true);
    let theta = problem.capped_theta();
    let mut objective: Vec<f64> = shape.active_lines.iter().map(|id| theta[*id]).collect();
    objective.extend(std::iter::repeat_n(
        -problem.penalty_p,
        shape.active_types.len(),
    ));
    let (rates, rejection_rates, objective_value) = shape.maximize(problem, &objective)?;
    Ok(RoutingPlan {
        rates,
        rejection_rates,
        objective_value,
        is_vertex: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_line(lambda: f64, mu: f64, theta: f64, epsilon: f64) -> LpProblem {
        LpProblem::new(
            1,
            1,
            vec![Line::new(0, 0)],
            vec![lambda],
            vec![mu],
            vec![theta],
            epsilon,
        )
    }

    #[test]
    fn single_line_feasible() {
        let plan = solve_primary(&single_line(1.0, 2.0, 0.5, 0.1)).unwrap();
        assert!((plan.rates[0] - 1.0).abs() < 1e-12);
        assert!((plan.objective_value - 0.5).abs() < 1e-12);
        assert!(plan.is_vertex);
        assert!(plan.rejection_rates.is_empty());
    }

    #[test]
    fn single_line_capacity_violated() {
        assert_eq!(
            solve_primary(&single_line(2.0, 2.0, 0.5, 0.1)),
            Err(LpError::Infeasible)
        );
    }

    #[test]
    fn fallback_splits_overload() {
        let plan = solve_fallback(&single_line(2.0, 2.0, 0.5, 0.1).with_penalty(1000.0)).unwrap();
        assert!((plan.rates[0] - 1.8).abs() < 1e-9, "{:?}", plan.rates);
        assert!((plan.rejection_rates[0] - 0.2).abs() < 1e-9);
        assert!(plan.is_vertex);
    }

    #[test]
    fn fallback_matches_primary_when_feasible() {
        let problem = LpProblem::new(
            2,
            2,
            vec![
                Line::new(0, 0),
                Line::new(0, 1),
                Line::new(1, 0),
                Line::new(1, 1),
            ],
            vec![0.8, 0.6],
            vec![2.0, 1.5, 1.0, 2.5],
            vec![0.9, 0.3, 0.5, 0.7],
            1e-6,
        );
        let primary = solve_primary(&problem).unwrap();
        let fallback = solve_fallback(&problem).unwrap();
        assert!((primary.objective_value - fallback.objective_value).abs() < 1e-9);
        assert!(fallback.total_rejection() < 1e-9);
    }

    #[test]
    fn zero_arrivals_solve_to_zero() {
        let problem = single_line(0.0, 2.0, 0.5, 0.1);
        let primary = solve_primary(&problem).unwrap();
        assert_eq!(primary.rates, vec![0.0]);
        assert_eq!(primary.objective_value, 0.0);
        let fallback = solve_fallback(&problem).unwrap();
        assert_eq!(fallback.rates, vec![0.0]);
        assert_eq!(fallback.objective_value, 0.0);
        assert_eq!(fallback.total_rejection(), 0.0);
    }

    #[test]
    fn infinite_theta_is_capped_and_preferred() {
        // Two servers, one type: the unexplored line must win.
        let problem = LpProblem::new(
            1,
            2,
            vec![Line::new(0, 0), Line::new(0, 1)],
            vec![0.5],
            vec![2.0, 2.0],
            vec![1.0, f64::INFINITY],
            0.1,
        );
        let plan = solve_primary(&problem).unwrap();
        assert!(plan.rates[1] > 0.4, "{:?}", plan.rates);
        assert!(plan.rates[0] < 1e-9);
    }

    #[test]
    fn theta_scaling_preserves_support() {
        let problem = LpProblem::new(
            2,
            2,
            vec![
                Line::new(0, 0),
                Line::new(0, 1),
                Line::new(1, 0),
                Line::new(1, 1),
            ],
            vec![1.0, 0.7],
            vec![2.0, 3.0, 1.0, 2.0],
            vec![0.8, 0.2, 0.4, 0.6],
            0.05,
        );
        let base = solve_primary(&problem).unwrap();
        let mut scaled = problem.clone();
        for t in &mut scaled.theta_hat {
            *t *= 37.5;
        }
        let plan = solve_primary(&scaled).unwrap();
        for (a, b) in base.rates.iter().zip(&plan.rates) {
            assert_eq!(*a > 1e-9, *b > 1e-9, "support changed");
        }
    }
}
