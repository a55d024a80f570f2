//! Routing policies: the episodic UCB-QR family with its two dispatch
//! subroutines and knowledge ablations, the oracle, and the four static
//! benchmarks.

mod snapshot;
mod statics;
mod ucbqr;

pub use snapshot::EpisodeSnapshot;
pub(crate) use ucbqr::{Dispatch, EpisodicPolicy, Knowledge};

use crate::engine::{Policy, SimError};
use crate::lp::LpProblem;
use crate::model::{PolicyKind, PolicySpec, RoutingPlan, SystemConfig};
use statics::StaticPolicy;

/// Builds the runtime for a policy spec. Oracle-flavored policies derive
/// their ground truth (payoffs, base service rates, realized per-episode
/// arrival rates) from the scenario config.
pub fn build_policy(
    config: &SystemConfig,
    spec: &PolicySpec,
    horizon: f64,
) -> Result<Box<dyn Policy>, SimError> {
    let know = |theta, lambda, mu| Knowledge { theta, lambda, mu };
    let episodic = |dispatch, knowledge| -> Result<Box<dyn Policy>, SimError> {
        Ok(Box::new(EpisodicPolicy::new(
            config, spec, dispatch, knowledge, horizon,
        )?))
    };
    match spec.kind {
        PolicyKind::Ucbqr => episodic(Dispatch::VirtualQueues, know(false, false, false)),
        PolicyKind::UcbqrTree => episodic(Dispatch::Tree, know(false, false, false)),
        PolicyKind::Oracle => episodic(Dispatch::VirtualQueues, know(true, true, true)),
        PolicyKind::UcbqrLambda => episodic(Dispatch::VirtualQueues, know(false, true, false)),
        PolicyKind::UcbqrMu => episodic(Dispatch::VirtualQueues, know(false, false, true)),
        PolicyKind::FcfsAlis | PolicyKind::Greedy | PolicyKind::Random | PolicyKind::ThetaMu => {
            Ok(Box::new(StaticPolicy::new(config, spec.kind)))
        }
    }
}

/// Builds a dispatcher that replays a fixed vertex plan instead of
/// learning and re-solving: the rate-replay harness behind the small-system
/// validation runs. `plan` lives in the line space of `problem`, whose
/// payoffs also break dispatch ties.
pub fn fixed_plan_policy(
    config: &SystemConfig,
    spec: &PolicySpec,
    problem: LpProblem,
    plan: RoutingPlan,
    tree_dispatch: bool,
) -> Result<Box<dyn Policy>, SimError> {
    let dispatch = if tree_dispatch {
        Dispatch::Tree
    } else {
        Dispatch::VirtualQueues
    };
    Ok(Box::new(EpisodicPolicy::with_fixed_plan(
        config, spec, dispatch, problem, plan,
    )?))
}
