//! The episodic LP-routing family: UCB-QR with virtual-queue dispatch,
//! the tree-dispatch variant, the all-knowing oracle, and the
//! partial-knowledge ablations.
//!
//! At each episode boundary the estimators fold in the samples observed
//! during the finished episode, the routing LP is re-solved (falling back
//! to the rejection formulation when infeasible), and the dispatch state
//! is rebuilt: virtual queues are emptied and waiting customers reassigned
//! by the fresh routing probabilities, or the spanning forest is
//! re-extracted from the new vertex plan.

use rand::RngExt;

use super::snapshot::EpisodeSnapshot;
use crate::engine::{Policy, SimError, Waiting, World};
use crate::estimators::{forecast_to_rate, HoltState, ServiceRateState, UcbState};
use crate::lp::{
    extract_spanning_forest, solve_fairness, solve_fairness_fallback, solve_fallback,
    solve_primary, ForestError, LpError, LpProblem,
};
use crate::model::{
    ArrivalSource, LineIndex, PolicySpec, RoutingPlan, ServerId, SpanningForest, SystemConfig,
    TypeId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Dispatch {
    /// Probabilistic assignment into per-server virtual queues.
    VirtualQueues,
    /// Spanning-forest priority rule over per-type queues.
    Tree,
}

/// Which quantities come from ground truth instead of the estimators.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Knowledge {
    pub theta: bool,
    pub lambda: bool,
    pub mu: bool,
}

/// True parameters derivable from the scenario: per-line payoff means,
/// per-line base service rates, and the realized per-episode arrival rates.
pub(crate) struct GroundTruth {
    theta: Vec<f64>,
    base_mu: Vec<f64>,
    lambda_per_episode: Vec<Vec<f64>>,
}

impl GroundTruth {
    pub fn from_config(
        config: &SystemConfig,
        episode_length: f64,
        horizon: f64,
    ) -> Result<Self, SimError> {
        let episodes = (horizon / episode_length).ceil() as usize + 1;
        let mut lambda_per_episode = vec![vec![0.0; config.num_types]; episodes];
        for (i, source) in config.arrivals.iter().enumerate() {
            match source {
                ArrivalSource::Timestamps { times } => {
                    for t in times {
                        let k = (t / episode_length).floor() as usize;
                        if k < episodes {
                            lambda_per_episode[k][i] += 1.0 / episode_length;
                        }
                    }
                }
                ArrivalSource::Exponential { mean } => {
                    for window in &mut lambda_per_episode {
                        window[i] = 1.0 / mean;
                    }
                }
            }
        }
        let mut base_mu = Vec::with_capacity(config.service.len());
        for (id, source) in config.service.iter().enumerate() {
            let mean = source.mean_duration();
            if !mean.is_finite() || mean <= 0.0 {
                return Err(SimError::MissingGroundTruth(format!(
                    "service source of line index {id} has no finite mean"
                )));
            }
            base_mu.push(1.0 / mean);
        }
        Ok(Self {
            theta: config.payoff.clone(),
            base_mu,
            lambda_per_episode,
        })
    }

    fn lambda_for(&self, episode: u64) -> &[f64] {
        let idx = (episode as usize - 1).min(self.lambda_per_episode.len() - 1);
        &self.lambda_per_episode[idx]
    }
}

pub(crate) struct EpisodicPolicy {
    spec: PolicySpec,
    dispatch: Dispatch,
    know: Knowledge,
    index: LineIndex,
    ucb: UcbState,
    holt: Vec<HoltState>,
    service: ServiceRateState,
    truth: Option<GroundTruth>,
    /// Fixed plan in config-line space plus its dispatch payoffs; set for
    /// rate-replay runs that bypass estimation and solving entirely.
    fixed: Option<(RoutingPlan, LpProblem)>,
    plan: RoutingPlan,
    used_fallback: bool,
    /// Per type: routing probabilities aligned with
    /// `index.servers_of_type`; empty when the type has no planned mass.
    probs: Vec<Vec<f64>>,
    forest: Option<SpanningForest>,
    parent_of_record: Vec<Option<ServerId>>,
    episode: u64,
    snapshots: Vec<EpisodeSnapshot>,
}

impl EpisodicPolicy {
    pub fn new(
        config: &SystemConfig,
        spec: &PolicySpec,
        dispatch: Dispatch,
        know: Knowledge,
        horizon: f64,
    ) -> Result<Self, SimError> {
        let index = LineIndex::from_config(config);
        let truth = if know.theta || know.lambda || know.mu {
            Some(GroundTruth::from_config(
                config,
                spec.episode_length_h,
                horizon,
            )?)
        } else {
            None
        };
        let num_lines = index.num_lines();
        Ok(Self {
            spec: spec.clone(),
            dispatch,
            know,
            ucb: UcbState::new(num_lines),
            holt: vec![HoltState::new(); config.num_types],
            service: ServiceRateState::new(num_lines, spec.mu_init),
            truth,
            fixed: None,
            plan: RoutingPlan {
                rates: vec![0.0; num_lines],
                rejection_rates: Vec::new(),
                objective_value: 0.0,
                is_vertex: true,
            },
            used_fallback: false,
            probs: vec![Vec::new(); config.num_types],
            forest: None,
            parent_of_record: vec![None; config.num_types],
            episode: 0,
            snapshots: Vec::new(),
            index,
        })
    }

    /// Replays a fixed vertex plan through the chosen dispatch rule. The
    /// plan must be in the line space of `problem`, which also supplies the
    /// payoffs used for dispatch tie-breaking and the loads for forest
    /// extraction.
    pub fn with_fixed_plan(
        config: &SystemConfig,
        spec: &PolicySpec,
        dispatch: Dispatch,
        problem: LpProblem,
        plan: RoutingPlan,
    ) -> Result<Self, SimError> {
        let mut policy = Self::new(config, spec, dispatch, Knowledge::default(), 0.0)?;
        if dispatch == Dispatch::Tree {
            let forest =
                extract_spanning_forest(&plan, &problem).map_err(|e| SimError::PolicyFailure {
                    episode: 0,
                    reason: e.to_string(),
                    partial: None,
                })?;
            for (i, parent) in forest.parent_of_queue.iter().enumerate() {
                policy.parent_of_record[i] = *parent;
            }
            policy.forest = Some(forest);
        }
        let expanded = expand_plan(&policy.index, &problem, &plan);
        policy.probs = routing_probabilities(&policy.index, &expanded);
        policy.plan = expanded;
        policy.fixed = Some((plan, problem));
        Ok(policy)
    }

    /// Payoff value used by dispatch decisions on a config line.
    fn dispatch_theta(&self, line: usize) -> f64 {
        if let Some((_, problem)) = &self.fixed {
            let target = self.index.line(line);
            return problem
                .lines
                .iter()
                .position(|l| *l == target)
                .map(|id| problem.theta_hat[id])
                .unwrap_or(0.0);
        }
        if self.know.theta {
            self.truth.as_ref().expect("truth present").theta[line]
        } else {
            self.ucb.ucb_value(line)
        }
    }

    fn refresh_estimators(&mut self, world: &mut World<'_>, episode: u64) {
        let observations = world.drain_observations();
        if episode <= 1 {
            return;
        }
        if !self.know.theta {
            self.ucb.update(episode, &observations.payoff);
        }
        if !self.know.lambda {
            for (state, count) in self.holt.iter_mut().zip(&observations.arrivals_per_type) {
                state.update(*count as f64, self.spec.holt_alpha, self.spec.holt_beta);
            }
        }
        if !self.know.mu {
            self.service.update(&observations.durations);
        }
    }

    /// Assembles this episode's problem over the usable lines: lines into
    /// servers with zero true capacity are left out when the true service
    /// rates are in play.
    fn build_problem(&self, world: &World<'_>, episode: u64) -> LpProblem {
        let lambda_hat: Vec<f64> = if self.know.lambda {
            self.truth
                .as_ref()
                .expect("truth present")
                .lambda_for(episode)
                .to_vec()
        } else {
            self.holt
                .iter()
                .map(|h| forecast_to_rate(h.forecast(), self.spec.episode_length_h))
                .collect()
        };

        let mut lines = Vec::new();
        let mut mu_hat = Vec::new();
        let mut theta_hat = Vec::new();
        for id in 0..self.index.num_lines() {
            let line = self.index.line(id);
            let mu = if self.know.mu {
                let truth = self.truth.as_ref().expect("truth present");
                truth.base_mu[id] * world.server(line.server).agent_count as f64
            } else {
                self.service.estimate(id)
            };
            if mu <= 0.0 {
                continue;
            }
            let theta = if self.know.theta {
                self.truth.as_ref().expect("truth present").theta[id]
            } else {
                self.ucb.ucb_value(id)
            };
            lines.push(line);
            mu_hat.push(mu);
            theta_hat.push(theta);
        }

        let mut problem = LpProblem::new(
            self.index.num_types(),
            self.index.num_servers(),
            lines,
            lambda_hat,
            mu_hat,
            theta_hat,
            self.spec.epsilon,
        )
        .with_penalty(self.spec.penalty_p);
        if self.spec.gamma > 0.0 {
            problem = problem.with_fairness(self.spec.gamma);
        }
        problem
    }

    fn solve(&mut self, problem: &LpProblem, episode: u64) -> Result<RoutingPlan, SimError> {
        let wrap = |e: LpError| SimError::PolicyFailure {
            episode,
            reason: e.to_string(),
            partial: None,
        };
        if self.spec.gamma > 0.0 {
            match solve_fairness(problem) {
                Ok(plan) => {
                    self.used_fallback = false;
                    Ok(plan)
                }
                Err(LpError::InfeasibleRegion) => {
                    self.used_fallback = true;
                    solve_fairness_fallback(problem).map_err(wrap)
                }
                Err(e) => Err(wrap(e)),
            }
        } else {
            match solve_primary(problem) {
                Ok(plan) => {
                    self.used_fallback = false;
                    Ok(plan)
                }
                Err(LpError::Infeasible) => {
                    self.used_fallback = true;
                    solve_fallback(problem).map_err(wrap)
                }
                Err(e) => Err(wrap(e)),
            }
        }
    }

    /// Categorical draw of a server for an arriving or reshuffled customer.
    /// Types without planned mass fall back to the uniform compatible
    /// choice.
    fn draw_server(&self, world: &mut World<'_>, customer_type: TypeId) -> ServerId {
        let servers = self.index.servers_of_type(customer_type);
        debug_assert!(!servers.is_empty());
        let weights = &self.probs[customer_type];
        if weights.is_empty() {
            return servers[world.policy_rng().random_range(0..servers.len())];
        }
        let u: f64 = world.policy_rng().random();
        let mut acc = 0.0;
        for (j, w) in servers.iter().zip(weights) {
            acc += w;
            if u < acc {
                return *j;
            }
        }
        *servers.last().expect("nonempty")
    }

    fn reshuffle_virtual_queues(&mut self, world: &mut World<'_>) -> Result<(), SimError> {
        let waiting = world.collect_waiting();
        match self.dispatch_mode() {
            Dispatch::VirtualQueues => {
                for w in waiting {
                    let server = self.draw_server(world, w.customer_type);
                    world.push_virtual_queue(server, w);
                }
                world.sort_virtual_queues();
            }
            Dispatch::Tree => {
                // Tree episodes keep customers in their own type queues;
                // collect_waiting returns them in arrival order.
                for w in waiting {
                    world.push_type_queue(w);
                }
            }
        }
        Ok(())
    }

    /// Tree dispatch degrades to virtual-queue dispatch for an episode when
    /// the vertex support was cyclic (numerical degeneracy).
    fn dispatch_mode(&self) -> Dispatch {
        match self.dispatch {
            Dispatch::Tree if self.forest.is_some() => Dispatch::Tree,
            Dispatch::Tree => Dispatch::VirtualQueues,
            Dispatch::VirtualQueues => Dispatch::VirtualQueues,
        }
    }

    fn tree_arrival(&mut self, world: &mut World<'_>, waiting: Waiting) -> Result<(), SimError> {
        let forest = self.forest.as_ref().expect("tree dispatch without forest");
        let i = waiting.customer_type;
        if forest.queue_in_forest(i) {
            // Idle child server with maximal payoff, then the parent.
            let mut best: Option<(ServerId, f64)> = None;
            for &j in &forest.children_of_queue[i] {
                if world.server(j).is_available() {
                    let score = self.dispatch_theta(self.index.line_id(i, j).unwrap());
                    if best.is_none_or(|(_, s)| score > s) {
                        best = Some((j, score));
                    }
                }
            }
            if let Some((j, _)) = best {
                return world.start_service(waiting, j);
            }
            let parent = forest.parent_of_queue[i].expect("queue in forest has a parent");
            if world.server(parent).is_available() {
                return world.start_service(waiting, parent);
            }
            world.push_type_queue(waiting);
            return Ok(());
        }
        // Types outside the forest: the parent of record from an earlier
        // episode, else FCFS-ALIS over compatible servers.
        if let Some(record) = self.parent_of_record[i] {
            if world.server(record).is_available() {
                return world.start_service(waiting, record);
            }
            world.push_type_queue(waiting);
            return Ok(());
        }
        let candidate = self
            .index
            .servers_of_type(i)
            .iter()
            .copied()
            .filter(|j| world.server(*j).is_available())
            .min_by(|a, b| {
                world
                    .server(*a)
                    .idle_since
                    .total_cmp(&world.server(*b).idle_since)
            });
        match candidate {
            Some(j) => world.start_service(waiting, j),
            None => {
                world.push_type_queue(waiting);
                Ok(())
            }
        }
    }

    fn tree_completion(&mut self, world: &mut World<'_>, server: ServerId) -> Result<(), SimError> {
        let forest = self.forest.as_ref().expect("tree dispatch without forest");
        // Non-empty child queue with maximal payoff first.
        let mut best: Option<(TypeId, f64)> = None;
        for &i in &forest.children_of_server[server] {
            if !world.type_queue(i).is_empty() {
                let score = self.dispatch_theta(self.index.line_id(i, server).unwrap());
                if best.is_none_or(|(_, s)| score > s) {
                    best = Some((i, score));
                }
            }
        }
        if let Some((i, _)) = best {
            let waiting = world.pop_type_queue(i).expect("checked non-empty");
            return world.start_service(waiting, server);
        }
        // Then the parent queue.
        if let Some(parent) = forest.parent_of_server[server] {
            if !world.type_queue(parent).is_empty() {
                let waiting = world.pop_type_queue(parent).expect("checked non-empty");
                return world.start_service(waiting, server);
            }
        }
        // Finally FCFS over compatible types outside the forest that point
        // here (or nowhere) as their parent of record.
        let mut candidate: Option<TypeId> = None;
        for &i in self.index.types_of_server(server) {
            if forest.queue_in_forest(i) || world.type_queue(i).is_empty() {
                continue;
            }
            if matches!(self.parent_of_record[i], Some(s) if s != server) {
                continue;
            }
            let arrival = world.type_queue(i).front().unwrap().arrival;
            if candidate.is_none_or(|c| arrival < world.type_queue(c).front().unwrap().arrival) {
                candidate = Some(i);
            }
        }
        if let Some(i) = candidate {
            let waiting = world.pop_type_queue(i).expect("checked non-empty");
            return world.start_service(waiting, server);
        }
        Ok(())
    }

    fn virtual_arrival(&mut self, world: &mut World<'_>, waiting: Waiting) -> Result<(), SimError> {
        let server = self.draw_server(world, waiting.customer_type);
        if world.server(server).is_available() {
            world.start_service(waiting, server)
        } else {
            world.push_virtual_queue(server, waiting);
            Ok(())
        }
    }

    fn virtual_completion(
        &mut self,
        world: &mut World<'_>,
        server: ServerId,
    ) -> Result<(), SimError> {
        if let Some(waiting) = world.pop_virtual_queue(server) {
            world.start_service(waiting, server)?;
        }
        Ok(())
    }

    fn record_snapshot(&mut self, problem: &LpProblem) {
        let flat_probs: Vec<f64> = (0..self.index.num_lines())
            .map(|id| {
                let line = self.index.line(id);
                let servers = self.index.servers_of_type(line.customer_type);
                let weights = &self.probs[line.customer_type];
                servers
                    .iter()
                    .position(|j| *j == line.server)
                    .and_then(|pos| weights.get(pos).copied())
                    .unwrap_or(0.0)
            })
            .collect();
        let expanded_loads = {
            // Plan is in config-line space; rebuild problem-space rates for
            // the variance bookkeeping.
            let mut rates = vec![0.0; problem.lines.len()];
            for (pid, line) in problem.lines.iter().enumerate() {
                if let Some(cid) = self.index.line_id(line.customer_type, line.server) {
                    rates[pid] = self.plan.rates[cid];
                }
            }
            rates
        };
        // Record the service rates the solve actually used; lines dropped
        // from the problem (zero true capacity) show up as zero.
        let mut effective_mu = vec![0.0; self.index.num_lines()];
        for (pid, line) in problem.lines.iter().enumerate() {
            if let Some(cid) = self.index.line_id(line.customer_type, line.server) {
                effective_mu[cid] = problem.mu_hat[pid];
            }
        }
        self.snapshots.push(EpisodeSnapshot {
            episode: self.episode,
            lambda_hat: problem.lambda_hat.clone(),
            theta_bar: (0..self.index.num_lines())
                .map(|id| self.ucb.empirical_mean(id))
                .collect(),
            theta_ucb: self.ucb.ucb_values().to_vec(),
            mu_hat: effective_mu,
            plan_rates: self.plan.rates.clone(),
            rejection_rates: self.plan.rejection_rates.clone(),
            probabilities: flat_probs,
            forest_edges: self.forest.as_ref().map(|f| f.edges()).unwrap_or_default(),
            plan_load_variance: problem.load_variance(&expanded_loads),
            linear_payoff_term: problem.linear_payoff(&expanded_loads),
            used_fallback: self.used_fallback,
        });
    }
}

/// Expands a problem-space plan into config-line space.
fn expand_plan(index: &LineIndex, problem: &LpProblem, plan: &RoutingPlan) -> RoutingPlan {
    let mut rates = vec![0.0; index.num_lines()];
    for (pid, line) in problem.lines.iter().enumerate() {
        if let Some(cid) = index.line_id(line.customer_type, line.server) {
            rates[cid] = plan.rates[pid];
        }
    }
    RoutingPlan {
        rates,
        rejection_rates: plan.rejection_rates.clone(),
        objective_value: plan.objective_value,
        is_vertex: plan.is_vertex,
    }
}

/// Normalizes a config-space plan into per-type routing probabilities over
/// the compatible servers, excluding any rejection mass.
fn routing_probabilities(index: &LineIndex, plan: &RoutingPlan) -> Vec<Vec<f64>> {
    (0..index.num_types())
        .map(|i| {
            let servers = index.servers_of_type(i);
            let rates: Vec<f64> = servers
                .iter()
                .map(|j| index.line_id(i, *j).map_or(0.0, |id| plan.rates[id]))
                .collect();
            let total: f64 = rates.iter().sum();
            if total > 0.0 {
                rates.iter().map(|r| r / total).collect()
            } else {
                Vec::new()
            }
        })
        .collect()
}

impl Policy for EpisodicPolicy {
    fn episode_begin(&mut self, world: &mut World<'_>, episode: u64) -> Result<(), SimError> {
        self.episode = episode;
        if self.fixed.is_some() {
            // Fixed-plan replay: nothing to learn and nothing to re-solve.
            let _ = world.drain_observations();
            return Ok(());
        }
        self.refresh_estimators(world, episode);
        let problem = self.build_problem(world, episode);
        let plan = self.solve(&problem, episode)?;

        if self.dispatch == Dispatch::Tree {
            match extract_spanning_forest(&plan, &problem) {
                Ok(forest) => {
                    for (i, parent) in forest.parent_of_queue.iter().enumerate() {
                        if parent.is_some() {
                            self.parent_of_record[i] = *parent;
                        }
                    }
                    self.forest = Some(forest);
                }
                Err(ForestError::CyclicSupport) => self.forest = None,
                Err(e) => {
                    return Err(SimError::PolicyFailure {
                        episode,
                        reason: e.to_string(),
                        partial: None,
                    })
                }
            }
        }

        self.plan = expand_plan(&self.index, &problem, &plan);
        self.probs = routing_probabilities(&self.index, &self.plan);
        self.record_snapshot(&problem);
        self.reshuffle_virtual_queues(world)?;
        Ok(())
    }

    fn on_arrival(&mut self, world: &mut World<'_>, waiting: Waiting) -> Result<(), SimError> {
        match self.dispatch_mode() {
            Dispatch::VirtualQueues => self.virtual_arrival(world, waiting),
            Dispatch::Tree => self.tree_arrival(world, waiting),
        }
    }

    fn on_completion(&mut self, world: &mut World<'_>, server: ServerId) -> Result<(), SimError> {
        match self.dispatch_mode() {
            Dispatch::VirtualQueues => self.virtual_completion(world, server),
            Dispatch::Tree => self.tree_completion(world, server),
        }
    }

    fn on_server_available(
        &mut self,
        world: &mut World<'_>,
        server: ServerId,
    ) -> Result<(), SimError> {
        self.on_completion(world, server)
    }

    fn take_snapshots(&mut self) -> Vec<EpisodeSnapshot> {
        std::mem::take(&mut self.snapshots)
    }
}
