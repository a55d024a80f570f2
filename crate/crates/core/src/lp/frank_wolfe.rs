//! Frank-Wolfe conditional gradient over the routing polytopes.
//!
//! Each iteration solves one linear program as the linear-maximization
//! oracle (reusing the simplex), so the quadratic fairness program and the
//! pluggable concave penalties need no dedicated QP machinery. For the
//! quadratic objective the step size comes from an exact line search.

use super::penalty::PenaltyObjective;
use super::{LpError, LpProblem, Shape};
use crate::model::RoutingPlan;

/// Relative duality-gap tolerance.
const GAP_TOL: f64 = 1e-6;
/// Conditional-gradient iteration budget: the solve stops here and returns
/// the current iterate even if the gap tolerance was not reached.
const MAX_ITERS: usize = 500;

/// Maximizes `Σ θ̂ x - γ Σ_j (ρ_j - ρ̄)²` over the primary polytope.
/// Returns `InfeasibleRegion` when the polytope is empty; callers then fall
/// back to [`solve_fairness_fallback`].
pub fn solve_fairness(problem: &LpProblem) -> Result<RoutingPlan, LpError> {
    solve_concave(problem, false, &FairnessObjective, problem.gamma)
}

/// The fairness objective over the rejection polytope, with the rejection
/// mass penalized linearly at `p` and the quadratic term retained. Always
/// feasible.
pub fn solve_fairness_fallback(problem: &LpProblem) -> Result<RoutingPlan, LpError> {
    solve_concave(problem, true, &FairnessObjective, problem.gamma)
}

/// Maximizes `Σ θ̂ x - weight * penalty(x)` over the primary polytope for
/// any concave-compatible penalty from the menu.
pub fn solve_penalized(
    problem: &LpProblem,
    penalty: &dyn PenaltyObjective,
    weight: f64,
) -> Result<RoutingPlan, LpError> {
    solve_concave(problem, false, &Pluggable { inner: penalty }, weight)
}

/// A smooth term subtracted from the linear payoff. `value`/`gradient` see
/// per-line rates and the implied server loads.
trait SmoothPenalty {
    fn value(&self, problem: &LpProblem, rates: &[f64], loads: &[f64]) -> f64;
    fn gradient(&self, problem: &LpProblem, rates: &[f64], loads: &[f64], out: &mut [f64]);
    /// Exact maximizing step along `x + t (s - x)`, if the penalty admits
    /// one; otherwise a golden-section search is used.
    fn exact_step(
        &self,
        _problem: &LpProblem,
        _weight: f64,
        _x: &FwPoint,
        _s: &FwPoint,
        _linear_slope: f64,
    ) -> Option<f64> {
        None
    }
}

struct FairnessObjective;

impl SmoothPenalty for FairnessObjective {
    fn value(&self, problem: &LpProblem, _rates: &[f64], loads: &[f64]) -> f64 {
        let mean = loads.iter().sum::<f64>() / problem.num_servers as f64;
        loads.iter().map(|r| (r - mean) * (r - mean)).sum()
    }

    fn gradient(&self, problem: &LpProblem, _rates: &[f64], loads: &[f64], out: &mut [f64]) {
        let mean = loads.iter().sum::<f64>() / problem.num_servers as f64;
        for (id, line) in problem.lines.iter().enumerate() {
            out[id] = 2.0 * (loads[line.server] - mean) / problem.mu_hat[id];
        }
    }

    fn exact_step(
        &self,
        problem: &LpProblem,
        weight: f64,
        x: &FwPoint,
        s: &FwPoint,
        linear_slope: f64,
    ) -> Option<f64> {
        // Along the segment the penalty is Σ_j (a_j + t c_j)² with
        // a = centered loads of x and c = centered loads of the direction.
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let loads_x = problem.loads(&x.rates);
        let loads_s = problem.loads(&s.rates);
        let mx = mean(&loads_x);
        let ms = mean(&loads_s);
        let mut ac = 0.0;
        let mut cc = 0.0;
        for j in 0..problem.num_servers {
            let a = loads_x[j] - mx;
            let c = (loads_s[j] - ms) - a;
            ac += a * c;
            cc += c * c;
        }
        let numerator = linear_slope - 2.0 * weight * ac;
        let step = if 2.0 * weight * cc > 1e-300 {
            numerator / (2.0 * weight * cc)
        } else if numerator > 0.0 {
            1.0
        } else {
            0.0
        };
        Some(step.clamp(0.0, 1.0))
    }
}

struct Pluggable<'a> {
    inner: &'a dyn PenaltyObjective,
}

impl SmoothPenalty for Pluggable<'_> {
    fn value(&self, problem: &LpProblem, rates: &[f64], loads: &[f64]) -> f64 {
        self.inner.value(problem, rates, loads)
    }

    fn gradient(&self, problem: &LpProblem, rates: &[f64], loads: &[f64], out: &mut [f64]) {
        self.inner.gradient(problem, rates, loads, out);
    }
}

/// An iterate: per-line rates plus per-type rejection rates (empty on the
/// primary polytope).
struct FwPoint {
    rates: Vec<f64>,
    rejection: Vec<f64>,
}

impl FwPoint {
    fn interpolate(&mut self, s: &FwPoint, t: f64) {
        for (x, sx) in self.rates.iter_mut().zip(&s.rates) {
            *x += t * (sx - *x);
        }
        for (x, sx) in self.rejection.iter_mut().zip(&s.rejection) {
            *x += t * (sx - *x);
        }
    }
}

fn solve_concave(
    problem: &LpProblem,
    with_rejection: bool,
    penalty: &dyn SmoothPenalty,
    weight: f64,
) -> Result<RoutingPlan, LpError> {
    let shape = Shape::new(problem, with_rejection);
    let theta = problem.capped_theta();
    let objective_of = |point: &FwPoint| -> f64 {
        let linear: f64 = point
            .rates
            .iter()
            .zip(&theta)
            .map(|(x, t)| x * t)
            .sum::<f64>()
            - problem.penalty_p * point.rejection.iter().sum::<f64>();
        linear - weight * penalty.value(problem, &point.rates, &problem.loads(&point.rates))
    };

    // Structural objective for the LMO given a full-space line gradient.
    let lmo = |grad_lines: &[f64]| -> Result<FwPoint, LpError> {
        let mut structural: Vec<f64> = shape
            .active_lines
            .iter()
            .map(|id| grad_lines[*id])
            .collect();
        if with_rejection {
            structural.extend(std::iter::repeat_n(
                -problem.penalty_p,
                shape.active_types.len(),
            ));
        }
        let (rates, rejection, _) = shape.maximize(problem, &structural).map_err(|e| {
            if e == LpError::Infeasible {
                LpError::InfeasibleRegion
            } else {
                e
            }
        })?;
        Ok(FwPoint { rates, rejection })
    };

    // Start from the payoff-maximizing vertex; with weight 0 this is
    // already optimal and the loop exits immediately.
    let mut x = lmo(&theta)?;
    let mut grad = vec![0.0; problem.lines.len()];

    for _ in 0..MAX_ITERS {
        let loads = problem.loads(&x.rates);
        penalty.gradient(problem, &x.rates, &loads, &mut grad);
        let mut grad_obj = vec![0.0; problem.lines.len()];
        for id in 0..problem.lines.len() {
            grad_obj[id] = theta[id] - weight * grad[id];
        }
        let s = lmo(&grad_obj)?;

        let mut gap = 0.0;
        let mut linear_slope = 0.0;
        for id in 0..problem.lines.len() {
            let d = s.rates[id] - x.rates[id];
            gap += grad_obj[id] * d;
            linear_slope += theta[id] * d;
        }
        for (sr, xr) in s.rejection.iter().zip(&x.rejection) {
            let d = sr - xr;
            gap += -problem.penalty_p * d;
            linear_slope += -problem.penalty_p * d;
        }
        if gap <= GAP_TOL * objective_of(&x).abs().max(1.0) {
            break;
        }

        let t = match penalty.exact_step(problem, weight, &x, &s, linear_slope) {
            Some(t) => t,
            None => golden_section(|t| {
                let mut trial = FwPoint {
                    rates: x.rates.clone(),
                    rejection: x.rejection.clone(),
                };
                trial.interpolate(&s, t);
                objective_of(&trial)
            }),
        };
        if t <= 0.0 {
            break;
        }
        x.interpolate(&s, t);
    }

    Ok(RoutingPlan {
        objective_value: objective_of(&x),
        rejection_rates: x.rejection,
        rates: x.rates,
        is_vertex: false,
    })
}

/// Maximizes a unimodal function on [0, 1].
fn golden_section(f: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..60 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = f(a);
        }
    }
    0.5 * (lo + hi)
}
