//! Shared scaffolding for the integration tests: small config builders and
//! a log auditor that replays customer lifecycles.

#![allow(dead_code)]

use std::collections::BTreeMap;

use skillqueue::{
    ArrivalSource, CapacitySchedule, EventLog, Line, LogKind, ServiceSource, SystemConfig,
};

/// Single-line M/M/1-style system: exponential interarrivals and service.
pub fn mm1(arrival_mean: f64, service_mean: f64) -> SystemConfig {
    SystemConfig {
        num_types: 1,
        num_servers: 1,
        lines: vec![Line::new(0, 0)],
        payoff: vec![1.0],
        service: vec![ServiceSource::Exponential { mean: service_mean }],
        arrivals: vec![ArrivalSource::Exponential { mean: arrival_mean }],
        capacity: vec![CapacitySchedule::constant(1)],
    }
}

/// Fully compatible system with explicit arrival lists.
pub fn explicit_config(
    num_types: usize,
    num_servers: usize,
    payoff: Vec<f64>,
    service: Vec<ServiceSource>,
    arrivals: Vec<Vec<f64>>,
    capacity: Vec<CapacitySchedule>,
) -> SystemConfig {
    let mut lines = Vec::new();
    for i in 0..num_types {
        for j in 0..num_servers {
            lines.push(Line::new(i, j));
        }
    }
    SystemConfig {
        num_types,
        num_servers,
        lines,
        payoff,
        service,
        arrivals: arrivals
            .into_iter()
            .map(|times| ArrivalSource::Timestamps { times })
            .collect(),
        capacity,
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Lifecycle {
    pub arrival: f64,
    pub service_start: Option<f64>,
    pub departure: Option<f64>,
    pub server: Option<usize>,
    pub customer_type: usize,
}

/// Replays the log and checks per-customer lifecycle consistency: each
/// customer arrives once, starts service at most once, departs at most
/// once, in nondecreasing time order, and conservation holds at the end.
/// Returns the per-customer lifecycles.
pub fn audit_log(log: &EventLog) -> BTreeMap<u64, Lifecycle> {
    let mut customers: BTreeMap<u64, Lifecycle> = BTreeMap::new();
    let mut last_time = 0.0f64;
    for record in &log.records {
        assert!(record.time >= last_time, "log out of order at {record:?}");
        last_time = record.time;
        match record.kind {
            LogKind::Arrival => {
                let id = record.customer.expect("arrival has id");
                let prev = customers.insert(
                    id,
                    Lifecycle {
                        arrival: record.time,
                        customer_type: record.customer_type.expect("arrival has type"),
                        ..Default::default()
                    },
                );
                assert!(prev.is_none(), "customer {id} arrived twice");
            }
            LogKind::ServiceStart => {
                let id = record.customer.expect("start has id");
                let entry = customers.get_mut(&id).expect("service before arrival");
                assert!(entry.service_start.is_none(), "customer {id} served twice");
                assert!(record.time >= entry.arrival);
                entry.service_start = Some(record.time);
                entry.server = record.server;
            }
            LogKind::Departure => {
                let id = record.customer.expect("departure has id");
                let entry = customers.get_mut(&id).expect("departure before arrival");
                let started = entry.service_start.expect("departure before service");
                assert!(entry.departure.is_none(), "customer {id} departed twice");
                assert!(record.time >= started);
                assert_eq!(record.server, entry.server, "customer {id} moved servers");
                entry.departure = Some(record.time);
            }
            LogKind::ScheduleUpdate | LogKind::EpisodeEnd => {}
        }
    }
    // Conservation: everyone who arrived is accounted for.
    let arrived = customers.len();
    let departed = customers.values().filter(|c| c.departure.is_some()).count();
    let in_service = customers
        .values()
        .filter(|c| c.service_start.is_some() && c.departure.is_none())
        .count();
    let queued = arrived - departed - in_service;
    assert_eq!(arrived, departed + in_service + queued);
    customers
}

/// Mean waiting time of served customers.
pub fn mean_wait(customers: &BTreeMap<u64, Lifecycle>) -> f64 {
    let waits: Vec<f64> = customers
        .values()
        .filter_map(|c| c.service_start.map(|s| s - c.arrival))
        .collect();
    waits.iter().sum::<f64>() / waits.len() as f64
}
