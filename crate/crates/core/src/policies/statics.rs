//! The four static benchmark rules. Each covers both matching directions:
//! an arriving customer looking for an idle compatible server, and a
//! freshly idle server looking for a waiting compatible customer.

use rand::RngExt;

use crate::engine::{Policy, SimError, Waiting, World};
use crate::model::{LineIndex, PolicyKind, ServerId, SystemConfig};

pub(crate) struct StaticPolicy {
    kind: PolicyKind,
    index: LineIndex,
    /// True per-line payoff; greedy and θμ consult it.
    theta: Vec<f64>,
    /// Per-line base service rate at unit agent count.
    base_mu: Vec<f64>,
}

impl StaticPolicy {
    pub fn new(config: &SystemConfig, kind: PolicyKind) -> Self {
        debug_assert!(matches!(
            kind,
            PolicyKind::FcfsAlis | PolicyKind::Greedy | PolicyKind::Random | PolicyKind::ThetaMu
        ));
        let index = LineIndex::from_config(config);
        let base_mu = config
            .service
            .iter()
            .map(|s| 1.0 / s.mean_duration())
            .collect();
        Self {
            kind,
            index,
            theta: config.payoff.clone(),
            base_mu,
        }
    }

    fn theta_mu(&self, line: usize, count: u32) -> f64 {
        self.theta[line] * self.base_mu[line] * count as f64
    }

    fn pick_server(&self, world: &mut World<'_>, waiting: &Waiting) -> Option<ServerId> {
        let candidates: Vec<ServerId> = self
            .index
            .servers_of_type(waiting.customer_type)
            .iter()
            .copied()
            .filter(|j| world.server(*j).is_available())
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let choice = match self.kind {
            // Maximal idle time, i.e. earliest idle_since; ties fall to the
            // lowest index because iteration is ascending and strict.
            PolicyKind::FcfsAlis => *candidates
                .iter()
                .min_by(|a, b| {
                    world
                        .server(**a)
                        .idle_since
                        .total_cmp(&world.server(**b).idle_since)
                })
                .unwrap(),
            PolicyKind::Greedy => self.argmax(&candidates, |j| {
                self.theta[self.index.line_id(waiting.customer_type, j).unwrap()]
            }),
            PolicyKind::ThetaMu => self.argmax(&candidates, |j| {
                self.theta_mu(
                    self.index.line_id(waiting.customer_type, j).unwrap(),
                    world.server(j).agent_count,
                )
            }),
            PolicyKind::Random => candidates[world.policy_rng().random_range(0..candidates.len())],
            _ => unreachable!(),
        };
        Some(choice)
    }

    fn pick_customer(&self, world: &mut World<'_>, server: ServerId) -> Option<Waiting> {
        let candidates: Vec<usize> = self
            .index
            .types_of_server(server)
            .iter()
            .copied()
            .filter(|i| !world.type_queue(*i).is_empty())
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let chosen_type = match self.kind {
            // Maximal waiting time = earliest arrival among queue heads;
            // ties by lowest type index.
            PolicyKind::FcfsAlis => *candidates
                .iter()
                .min_by(|a, b| {
                    world
                        .type_queue(**a)
                        .front()
                        .unwrap()
                        .arrival
                        .total_cmp(&world.type_queue(**b).front().unwrap().arrival)
                })
                .unwrap(),
            PolicyKind::Greedy => self.argmax(&candidates, |i| {
                self.theta[self.index.line_id(i, server).unwrap()]
            }),
            PolicyKind::ThetaMu => self.argmax(&candidates, |i| {
                self.theta_mu(
                    self.index.line_id(i, server).unwrap(),
                    world.server(server).agent_count,
                )
            }),
            PolicyKind::Random => candidates[world.policy_rng().random_range(0..candidates.len())],
            _ => unreachable!(),
        };
        world.pop_type_queue(chosen_type)
    }

    /// First maximizer in ascending candidate order.
    fn argmax<T: Copy>(&self, candidates: &[T], score: impl Fn(T) -> f64) -> T {
        let mut best = candidates[0];
        let mut best_score = score(best);
        for c in &candidates[1..] {
            let s = score(*c);
            if s > best_score {
                best = *c;
                best_score = s;
            }
        }
        best
    }
}

impl Policy for StaticPolicy {
    fn episode_begin(&mut self, _world: &mut World<'_>, _episode: u64) -> Result<(), SimError> {
        Ok(())
    }

    fn on_arrival(&mut self, world: &mut World<'_>, waiting: Waiting) -> Result<(), SimError> {
        match self.pick_server(world, &waiting) {
            Some(server) => world.start_service(waiting, server),
            None => {
                world.push_type_queue(waiting);
                Ok(())
            }
        }
    }

    fn on_completion(&mut self, world: &mut World<'_>, server: ServerId) -> Result<(), SimError> {
        if let Some(waiting) = self.pick_customer(world, server) {
            world.start_service(waiting, server)?;
        }
        Ok(())
    }

    fn on_server_available(
        &mut self,
        world: &mut World<'_>,
        server: ServerId,
    ) -> Result<(), SimError> {
        self.on_completion(world, server)
    }
}
