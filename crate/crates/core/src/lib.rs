//! Discrete-event simulation and routing-policy library for skill-based
//! queueing systems.
//!
//! A skill-based queue routes heterogeneous customer types to compatible
//! servers. The central policy here is episodic UCB-driven queue routing:
//! at the start of each episode the payoff, arrival-rate, and service-rate
//! estimators are refreshed and an optimal-transport LP is re-solved for
//! the routing rates, which are then realized either through per-server
//! virtual queues or through a spanning-forest priority rule. Static
//! benchmarks (FCFS-ALIS, greedy, random, the payoff-weighted `θμ` rule)
//! and an all-knowing oracle share the same simulation core so that
//! policies can be compared on paired arrival and service draws.

pub mod data;
pub mod engine;
pub mod estimators;
pub mod lp;
pub mod metrics;
pub mod model;
pub mod policies;

pub use engine::{run_replication, run_replication_detailed, EventLog, LogKind, LogRecord};
pub use model::{
    validate_config, ArrivalSource, CapacitySchedule, CapacityStep, ConfigViolation, Line,
    LineIndex, PolicyKind, PolicySpec, RoutingPlan, ServiceSource, SpanningForest, SystemConfig,
};
