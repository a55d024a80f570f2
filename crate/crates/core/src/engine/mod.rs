//! Discrete-event simulation core: the event queue, clock, server and
//! queue state, capacity-schedule updates, episode boundaries, and seeded
//! randomness split into named streams.
//!
//! A replication is strictly sequential and fully determined by
//! `(config, policy, seed, horizon)`. The root seed is split into
//! independent streams (per-type arrivals, per-line service, per-line
//! payoff, policy randomization) so that changing the policy does not
//! perturb the arrival or service draws; paired comparisons across
//! policies rely on this.

mod log;
mod world;

pub use log::{EventLog, LogKind, LogRecord};
pub use world::{Observations, ServerState, ServerStatus, Waiting, World};

use thiserror::Error;

use crate::model::{validate_config, ConfigViolation, PolicySpec, ServerId, SystemConfig};
use crate::policies::{self, EpisodeSnapshot};

pub type CustomerId = u64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration ({} violations)", .0.len())]
    ConfigInvalid(Vec<ConfigViolation>),
    /// A solver failure surfaced through a policy; the replication aborts
    /// and the partial log is attached for inspection.
    #[error("policy failure at episode {episode}: {reason}")]
    PolicyFailure {
        episode: u64,
        reason: String,
        partial: Option<Box<EventLog>>,
    },
    #[error("empirical service pool for line {line} is empty")]
    EmptyPool { line: usize },
    #[error("ground truth unavailable: {0}")]
    MissingGroundTruth(String),
}

/// Routing policy hooks invoked by the event loop. One instance per
/// replication; implementations own their estimator state.
pub trait Policy {
    /// Runs at t = 0 with `episode` = 1 and after every episode-end event.
    fn episode_begin(&mut self, world: &mut World<'_>, episode: u64) -> Result<(), SimError>;
    /// The customer has been logged and counted; the policy either starts
    /// service at an available server or enqueues the customer.
    fn on_arrival(&mut self, world: &mut World<'_>, waiting: Waiting) -> Result<(), SimError>;
    /// The server just turned idle after a departure.
    fn on_completion(&mut self, world: &mut World<'_>, server: ServerId) -> Result<(), SimError>;
    /// The server just turned active (agent count rose from zero).
    fn on_server_available(
        &mut self,
        world: &mut World<'_>,
        server: ServerId,
    ) -> Result<(), SimError>;
    /// Per-episode estimator and plan snapshots, if the policy records any.
    fn take_snapshots(&mut self) -> Vec<EpisodeSnapshot> {
        Vec::new()
    }
}

/// Full output of one replication.
pub struct ReplicationOutput {
    pub log: EventLog,
    pub snapshots: Vec<EpisodeSnapshot>,
}

/// Runs one replication and returns the event log.
pub fn run_replication(
    config: &SystemConfig,
    policy: &PolicySpec,
    seed: u64,
    horizon: f64,
) -> Result<EventLog, SimError> {
    run_replication_detailed(config, policy, seed, horizon).map(|out| out.log)
}

/// Runs one replication and returns the event log plus per-episode
/// estimator and plan snapshots.
pub fn run_replication_detailed(
    config: &SystemConfig,
    policy: &PolicySpec,
    seed: u64,
    horizon: f64,
) -> Result<ReplicationOutput, SimError> {
    let mut violations = validate_config(config);
    violations.extend(policy.validate());
    if !violations.is_empty() {
        return Err(SimError::ConfigInvalid(violations));
    }
    let runtime = policies::build_policy(config, policy, horizon)?;
    run_with_policy(config, runtime, policy.episode_length_h, seed, horizon)
}

/// Runs the event loop with an explicitly constructed policy, e.g. a
/// fixed-plan dispatcher. Episode-end events fire every `episode_length`
/// seconds regardless of other activity.
pub fn run_with_policy(
    config: &SystemConfig,
    mut policy: Box<dyn Policy>,
    episode_length: f64,
    seed: u64,
    horizon: f64,
) -> Result<ReplicationOutput, SimError> {
    assert!(horizon > 0.0, "horizon must be positive");
    assert!(episode_length > 0.0, "episode length must be positive");
    let mut world = World::new(config, seed, horizon);
    world.schedule_initial_events(episode_length);

    let result = drive(&mut world, policy.as_mut());
    match result {
        Ok(()) => {
            world.finalize();
            Ok(ReplicationOutput {
                log: world.into_log(),
                snapshots: policy.take_snapshots(),
            })
        }
        Err(SimError::PolicyFailure {
            episode,
            reason,
            partial: _,
        }) => Err(SimError::PolicyFailure {
            episode,
            reason,
            partial: Some(Box::new(world.into_log())),
        }),
        Err(other) => Err(other),
    }
}

fn drive(world: &mut World<'_>, policy: &mut dyn Policy) -> Result<(), SimError> {
    policy.episode_begin(world, 1)?;
    world.kick_available_servers(policy)?;
    while let Some(event) = world.pop_event() {
        world.advance(event, policy)?;
    }
    Ok(())
}
