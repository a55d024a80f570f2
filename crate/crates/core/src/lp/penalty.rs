//! Pluggable penalty menu for the conditional-gradient path: convex terms
//! in the routing rates that are subtracted from the payoff objective with
//! a caller-chosen weight.

use super::LpProblem;

/// A convex penalty (or concave bonus, returned negated) expressed in the
/// routing rates and the implied server loads.
pub trait PenaltyObjective {
    fn value(&self, problem: &LpProblem, rates: &[f64], loads: &[f64]) -> f64;
    /// Gradient with respect to each line's rate, written into `out`.
    fn gradient(&self, problem: &LpProblem, rates: &[f64], loads: &[f64], out: &mut [f64]);
}

/// `Σ_j 1 / (1 - ρ_j)`, penalizing critically loaded servers. Finite on
/// the whole polytope since loads are capped at `1 - ε`.
pub struct CriticalLoad;

impl PenaltyObjective for CriticalLoad {
    fn value(&self, _problem: &LpProblem, _rates: &[f64], loads: &[f64]) -> f64 {
        loads.iter().map(|r| 1.0 / (1.0 - r)).sum()
    }

    fn gradient(&self, problem: &LpProblem, _rates: &[f64], loads: &[f64], out: &mut [f64]) {
        for (id, line) in problem.lines.iter().enumerate() {
            let denom = 1.0 - loads[line.server];
            out[id] = 1.0 / (denom * denom * problem.mu_hat[id]);
        }
    }
}

/// `Σ_j ρ_j / (1 - ρ_j)`, the heavy-traffic waiting proxy.
pub struct WaitingTime;

impl PenaltyObjective for WaitingTime {
    fn value(&self, _problem: &LpProblem, _rates: &[f64], loads: &[f64]) -> f64 {
        loads.iter().map(|r| r / (1.0 - r)).sum()
    }

    fn gradient(&self, problem: &LpProblem, _rates: &[f64], loads: &[f64], out: &mut [f64]) {
        for (id, line) in problem.lines.iter().enumerate() {
            let denom = 1.0 - loads[line.server];
            out[id] = 1.0 / (denom * denom * problem.mu_hat[id]);
        }
    }
}

/// `Σ (x - x⁰)²`, penalizing deviation from a reference plan.
pub struct Deviation {
    pub reference: Vec<f64>,
}

impl PenaltyObjective for Deviation {
    fn value(&self, _problem: &LpProblem, rates: &[f64], _loads: &[f64]) -> f64 {
        rates
            .iter()
            .zip(&self.reference)
            .map(|(x, x0)| (x - x0) * (x - x0))
            .sum()
    }

    fn gradient(&self, _problem: &LpProblem, rates: &[f64], _loads: &[f64], out: &mut [f64]) {
        for (id, x) in rates.iter().enumerate() {
            out[id] = 2.0 * (x - self.reference[id]);
        }
    }
}

/// Spare-routing bonus `Σ log(1 + x)`, expressed as a negative penalty so
/// the shared subtract-the-penalty convention adds it.
pub struct SpareRouting;

impl PenaltyObjective for SpareRouting {
    fn value(&self, _problem: &LpProblem, rates: &[f64], _loads: &[f64]) -> f64 {
        -rates.iter().map(|x| (1.0 + x).ln()).sum::<f64>()
    }

    fn gradient(&self, _problem: &LpProblem, rates: &[f64], _loads: &[f64], out: &mut [f64]) {
        for (id, x) in rates.iter().enumerate() {
            out[id] = -1.0 / (1.0 + x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve_penalized, solve_primary};
    use crate::model::Line;

    fn lopsided() -> LpProblem {
        LpProblem::new(
            1,
            2,
            vec![Line::new(0, 0), Line::new(0, 1)],
            vec![1.5],
            vec![2.0, 2.0],
            vec![0.9, 0.5],
            0.01,
        )
    }

    #[test]
    fn waiting_penalty_spreads_load() {
        let problem = lopsided();
        let unweighted = solve_primary(&problem).unwrap();
        assert!(unweighted.rates[1] < 1e-6 || unweighted.rates[0] > unweighted.rates[1]);
        let plan = solve_penalized(&problem, &WaitingTime, 2.0).unwrap();
        let loads = problem.loads(&plan.rates);
        assert!(
            (loads[0] - loads[1]).abs() < (1.0f64 - 1e-6),
            "loads {loads:?}"
        );
        assert!(
            plan.rates[1] > 0.05,
            "penalty had no effect: {:?}",
            plan.rates
        );
    }

    #[test]
    fn deviation_penalty_pins_reference() {
        let problem = lopsided();
        let reference = vec![0.6, 0.9];
        let plan = solve_penalized(
            &problem,
            &Deviation {
                reference: reference.clone(),
            },
            50.0,
        )
        .unwrap();
        for (x, x0) in plan.rates.iter().zip(&reference) {
            assert!((x - x0).abs() < 0.05, "{:?}", plan.rates);
        }
    }

    #[test]
    fn spare_routing_keeps_both_lines_active() {
        let plan = solve_penalized(&lopsided(), &SpareRouting, 1.0).unwrap();
        assert!(plan.rates.iter().all(|x| *x > 0.01), "{:?}", plan.rates);
    }

    #[test]
    fn critical_load_penalty_is_finite_on_polytope() {
        let plan = solve_penalized(&lopsided(), &CriticalLoad, 0.5).unwrap();
        assert!(plan.objective_value.is_finite());
    }
}
