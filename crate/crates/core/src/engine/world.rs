//! Mutable simulation state: clock, event heap, servers, real and virtual
//! queues, per-stream RNGs, the record log, and the per-episode
//! observation buffers handed to policies.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, Exp, LogNormal};
use rand_pcg::Pcg64;

use super::log::{EventLog, LogKind, LogRecord};
use super::{CustomerId, Policy, SimError};
use crate::model::{ArrivalSource, LineIndex, ServerId, ServiceSource, SystemConfig, TypeId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(super) enum EventKind {
    Arrival { customer_type: TypeId },
    Departure { server: ServerId, generation: u64 },
    ScheduleUpdate { server: ServerId, count: u32 },
    EpisodeEnd { index: u64 },
}

#[derive(Debug, Clone, Copy)]
pub(super) struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for Event {}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServerStatus {
    Idle,
    Busy {
        customer: CustomerId,
        line: usize,
        started_at: f64,
    },
    Inactive,
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub status: ServerStatus,
    pub agent_count: u32,
    /// Agent count under which the current completion time was computed.
    pub pace_count: u32,
    pub scheduled_departure: f64,
    pub generation: u64,
    pub cumulative_busy: f64,
    /// Instant the server last became idle; drives ALIS tie-breaking.
    pub idle_since: f64,
}

impl ServerState {
    fn new() -> Self {
        Self {
            status: ServerStatus::Inactive,
            agent_count: 0,
            pace_count: 0,
            scheduled_departure: 0.0,
            generation: 0,
            cumulative_busy: 0.0,
            idle_since: 0.0,
        }
    }

    /// Idle and staffed.
    pub fn is_available(&self) -> bool {
        matches!(self.status, ServerStatus::Idle)
    }
}

/// A customer waiting for service.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waiting {
    pub customer: CustomerId,
    pub customer_type: TypeId,
    pub arrival: f64,
}

/// Samples observed during one episode, drained by the policy at the next
/// episode boundary.
#[derive(Debug, Clone)]
pub struct Observations {
    /// Bernoulli payoff draws per line.
    pub payoff: Vec<Vec<bool>>,
    /// Realized wall-clock service durations per line.
    pub durations: Vec<Vec<f64>>,
    pub arrivals_per_type: Vec<u64>,
}

impl Observations {
    fn new(num_lines: usize, num_types: usize) -> Self {
        Self {
            payoff: vec![Vec::new(); num_lines],
            durations: vec![Vec::new(); num_lines],
            arrivals_per_type: vec![0; num_types],
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_rng(seed: u64, stream: u64, index: u64) -> Pcg64 {
    Pcg64::seed_from_u64(splitmix(
        seed ^ splitmix(stream.wrapping_mul(0x7C15).wrapping_add(index)),
    ))
}

pub struct World<'a> {
    pub config: &'a SystemConfig,
    index: LineIndex,
    now: f64,
    horizon: f64,
    seq: u64,
    heap: BinaryHeap<Event>,
    servers: Vec<ServerState>,
    type_queues: Vec<VecDeque<Waiting>>,
    virtual_queues: Vec<VecDeque<Waiting>>,
    /// Arrival time and type per customer id.
    customers: Vec<(f64, TypeId)>,
    /// Next index into explicit arrival lists.
    next_arrival: Vec<usize>,
    rng_arrival: Vec<Pcg64>,
    rng_service: Vec<Pcg64>,
    rng_payoff: Vec<Pcg64>,
    rng_policy: Pcg64,
    records: Vec<LogRecord>,
    observations: Observations,
    total_arrivals: u64,
    total_departures: u64,
    in_service: u64,
}

impl<'a> World<'a> {
    pub fn new(config: &'a SystemConfig, seed: u64, horizon: f64) -> Self {
        let index = LineIndex::from_config(config);
        let num_lines = index.num_lines();
        Self {
            config,
            now: 0.0,
            horizon,
            seq: 0,
            heap: BinaryHeap::new(),
            servers: vec![ServerState::new(); config.num_servers],
            type_queues: vec![VecDeque::new(); config.num_types],
            virtual_queues: vec![VecDeque::new(); config.num_servers],
            customers: Vec::new(),
            next_arrival: vec![0; config.num_types],
            rng_arrival: (0..config.num_types)
                .map(|i| stream_rng(seed, 1, i as u64))
                .collect(),
            rng_service: (0..num_lines)
                .map(|l| stream_rng(seed, 2, l as u64))
                .collect(),
            rng_payoff: (0..num_lines)
                .map(|l| stream_rng(seed, 3, l as u64))
                .collect(),
            rng_policy: stream_rng(seed, 4, 0),
            records: Vec::new(),
            observations: Observations::new(num_lines, config.num_types),
            total_arrivals: 0,
            total_departures: 0,
            in_service: 0,
            index,
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn line_index(&self) -> &LineIndex {
        &self.index
    }

    pub fn server(&self, server: ServerId) -> &ServerState {
        &self.servers[server]
    }

    pub fn num_servers(&self) -> usize {
        self.servers.len()
    }

    pub fn policy_rng(&mut self) -> &mut Pcg64 {
        &mut self.rng_policy
    }

    pub fn type_queue(&self, customer_type: TypeId) -> &VecDeque<Waiting> {
        &self.type_queues[customer_type]
    }

    pub fn virtual_queue(&self, server: ServerId) -> &VecDeque<Waiting> {
        &self.virtual_queues[server]
    }

    pub fn push_type_queue(&mut self, waiting: Waiting) {
        self.type_queues[waiting.customer_type].push_back(waiting);
    }

    pub fn pop_type_queue(&mut self, customer_type: TypeId) -> Option<Waiting> {
        self.type_queues[customer_type].pop_front()
    }

    pub fn push_virtual_queue(&mut self, server: ServerId, waiting: Waiting) {
        self.virtual_queues[server].push_back(waiting);
    }

    pub fn pop_virtual_queue(&mut self, server: ServerId) -> Option<Waiting> {
        self.virtual_queues[server].pop_front()
    }

    /// Drains every real and virtual queue, returning the waiting
    /// population ordered by (arrival, id). Policies redistribute it at
    /// episode boundaries.
    pub fn collect_waiting(&mut self) -> Vec<Waiting> {
        let mut all = Vec::new();
        for queue in self
            .type_queues
            .iter_mut()
            .chain(self.virtual_queues.iter_mut())
        {
            all.extend(queue.drain(..));
        }
        all.sort_unstable_by(|a, b| {
            a.arrival
                .total_cmp(&b.arrival)
                .then_with(|| a.customer.cmp(&b.customer))
        });
        all
    }

    /// Restores arrival-time order inside every virtual queue.
    pub fn sort_virtual_queues(&mut self) {
        for queue in &mut self.virtual_queues {
            let mut v: Vec<Waiting> = queue.drain(..).collect();
            v.sort_unstable_by(|a, b| {
                a.arrival
                    .total_cmp(&b.arrival)
                    .then_with(|| a.customer.cmp(&b.customer))
            });
            queue.extend(v);
        }
    }

    /// Hands the buffered samples of the finished episode to the caller
    /// and resets the buffers.
    pub fn drain_observations(&mut self) -> Observations {
        std::mem::replace(
            &mut self.observations,
            Observations::new(self.index.num_lines(), self.config.num_types),
        )
    }

    fn push_event(&mut self, time: f64, kind: EventKind) {
        if time <= self.horizon {
            let event = Event {
                time,
                seq: self.seq,
                kind,
            };
            self.seq += 1;
            self.heap.push(event);
        }
    }

    fn log(&mut self, record: LogRecord) {
        self.records.push(record);
    }

    fn log_event(
        &mut self,
        kind: LogKind,
        customer_type: Option<TypeId>,
        server: Option<ServerId>,
        customer: Option<u64>,
        value: Option<f64>,
    ) {
        let record = LogRecord {
            time: self.now,
            seq: self.seq,
            kind,
            customer_type,
            server,
            customer,
            value,
        };
        self.seq += 1;
        self.log(record);
    }

    pub(super) fn schedule_initial_events(&mut self, episode_length: f64) {
        let config = self.config;
        // Counts at t = 0 take effect before the first episode begins;
        // later breakpoints become events.
        for (server, schedule) in config.capacity.iter().enumerate() {
            let initial = schedule.count_at(0.0);
            let state = &mut self.servers[server];
            state.agent_count = initial;
            state.status = if initial > 0 {
                ServerStatus::Idle
            } else {
                ServerStatus::Inactive
            };
            if schedule.steps.iter().any(|s| s.at <= 0.0) {
                self.log_event(
                    LogKind::ScheduleUpdate,
                    None,
                    Some(server),
                    None,
                    Some(initial as f64),
                );
            }
            for step in &schedule.steps {
                if step.at > 0.0 {
                    self.push_event(
                        step.at,
                        EventKind::ScheduleUpdate {
                            server,
                            count: step.count,
                        },
                    );
                }
            }
        }
        for customer_type in 0..self.config.num_types {
            self.schedule_next_arrival(customer_type);
        }
        let mut k = 1u64;
        loop {
            let t = k as f64 * episode_length;
            if t > self.horizon {
                break;
            }
            self.push_event(t, EventKind::EpisodeEnd { index: k });
            k += 1;
        }
    }

    fn schedule_next_arrival(&mut self, customer_type: TypeId) {
        let config = self.config;
        match &config.arrivals[customer_type] {
            ArrivalSource::Timestamps { times } => {
                let idx = self.next_arrival[customer_type];
                if let Some(t) = times.get(idx).copied() {
                    self.next_arrival[customer_type] = idx + 1;
                    self.push_event(t, EventKind::Arrival { customer_type });
                }
            }
            ArrivalSource::Exponential { mean } => {
                let gap = Exp::new(1.0 / mean)
                    .expect("validated mean")
                    .sample(&mut self.rng_arrival[customer_type]);
                self.push_event(self.now + gap, EventKind::Arrival { customer_type });
            }
        }
    }

    /// Draws a base service duration for a line (at unit agent count).
    pub fn sample_base_duration(&mut self, line: usize) -> Result<f64, SimError> {
        let config = self.config;
        match &config.service[line] {
            ServiceSource::Empirical { samples } => {
                if samples.is_empty() {
                    return Err(SimError::EmptyPool { line });
                }
                let idx = self.rng_service[line].random_range(0..samples.len());
                Ok(samples[idx])
            }
            ServiceSource::Exponential { mean } => Ok(Exp::new(1.0 / mean)
                .expect("validated mean")
                .sample(&mut self.rng_service[line])),
            ServiceSource::LogNormal { location, scale } => Ok(LogNormal::new(*location, *scale)
                .expect("validated scale")
                .sample(&mut self.rng_service[line])),
        }
    }

    /// Draws a wall-clock service duration for a line under the given
    /// agent count: the base draw scales inversely with the count.
    pub fn sample_service_duration(
        &mut self,
        line: usize,
        server_count: u32,
    ) -> Result<f64, SimError> {
        debug_assert!(server_count >= 1);
        Ok(self.sample_base_duration(line)? / server_count as f64)
    }

    /// Starts service of `waiting` at an available server: samples the
    /// duration (scaled by the active agent count), schedules the
    /// departure, and logs the service start.
    pub fn start_service(&mut self, waiting: Waiting, server: ServerId) -> Result<(), SimError> {
        let line = self
            .index
            .line_id(waiting.customer_type, server)
            .expect("service on a compatible line");
        debug_assert!(self.servers[server].is_available());
        let count = self.servers[server].agent_count;
        debug_assert!(count > 0);
        let duration = self.sample_service_duration(line, count)?;

        let state = &mut self.servers[server];
        state.status = ServerStatus::Busy {
            customer: waiting.customer,
            line,
            started_at: self.now,
        };
        state.pace_count = count;
        state.generation += 1;
        state.scheduled_departure = self.now + duration;
        let generation = state.generation;
        let departure_time = state.scheduled_departure;
        self.in_service += 1;

        self.log_event(
            LogKind::ServiceStart,
            Some(waiting.customer_type),
            Some(server),
            Some(waiting.customer),
            None,
        );
        self.push_event(departure_time, EventKind::Departure { server, generation });
        Ok(())
    }

    pub(super) fn pop_event(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub(super) fn advance(
        &mut self,
        event: Event,
        policy: &mut dyn Policy,
    ) -> Result<(), SimError> {
        debug_assert!(event.time >= self.now);
        self.now = event.time;
        match event.kind {
            EventKind::Arrival { customer_type } => {
                let customer = self.customers.len() as CustomerId;
                self.customers.push((self.now, customer_type));
                self.total_arrivals += 1;
                self.observations.arrivals_per_type[customer_type] += 1;
                self.log_event(
                    LogKind::Arrival,
                    Some(customer_type),
                    None,
                    Some(customer),
                    None,
                );
                self.schedule_next_arrival(customer_type);
                let waiting = Waiting {
                    customer,
                    customer_type,
                    arrival: self.now,
                };
                policy.on_arrival(self, waiting)?;
            }
            EventKind::Departure { server, generation } => {
                if self.servers[server].generation != generation {
                    return Ok(()); // superseded by a capacity rescale
                }
                let ServerStatus::Busy {
                    customer,
                    line,
                    started_at,
                } = self.servers[server].status
                else {
                    debug_assert!(false, "departure from a non-busy server");
                    return Ok(());
                };
                let theta = self.config.payoff[line];
                let success = self.rng_payoff[line].random::<f64>() < theta;
                let duration = self.now - started_at;
                self.observations.payoff[line].push(success);
                self.observations.durations[line].push(duration);
                self.total_departures += 1;
                self.in_service -= 1;

                let state = &mut self.servers[server];
                state.cumulative_busy += duration;
                state.status = if state.agent_count == 0 {
                    ServerStatus::Inactive
                } else {
                    state.idle_since = self.now;
                    ServerStatus::Idle
                };
                let customer_type = self.index.line(line).customer_type;
                self.log_event(
                    LogKind::Departure,
                    Some(customer_type),
                    Some(server),
                    Some(customer),
                    Some(if success { 1.0 } else { 0.0 }),
                );
                if self.servers[server].is_available() {
                    policy.on_completion(self, server)?;
                }
            }
            EventKind::ScheduleUpdate { server, count } => {
                self.log_event(
                    LogKind::ScheduleUpdate,
                    None,
                    Some(server),
                    None,
                    Some(count as f64),
                );
                self.apply_schedule_update(server, count, policy)?;
            }
            EventKind::EpisodeEnd { index } => {
                self.log_event(LogKind::EpisodeEnd, None, None, None, Some(index as f64));
                debug_assert!(self.conservation_holds());
                if self.now < self.horizon {
                    policy.episode_begin(self, index + 1)?;
                    self.kick_available_servers(policy)?;
                }
            }
        }
        Ok(())
    }

    /// Applies a new agent count. A running service keeps its sampled work:
    /// the remaining wall-clock time is rescaled by `pace/new` when the
    /// count stays positive, and completes at its already-scheduled time
    /// when the count drops to zero (the server then goes inactive).
    fn apply_schedule_update(
        &mut self,
        server: ServerId,
        count: u32,
        policy: &mut dyn Policy,
    ) -> Result<(), SimError> {
        let state = &mut self.servers[server];
        state.agent_count = count;
        match state.status {
            ServerStatus::Busy { .. } => {
                if count > 0 && count != state.pace_count {
                    let remaining = (state.scheduled_departure - self.now).max(0.0);
                    let rescaled = remaining * state.pace_count as f64 / count as f64;
                    state.pace_count = count;
                    state.generation += 1;
                    state.scheduled_departure = self.now + rescaled;
                    let generation = state.generation;
                    let time = state.scheduled_departure;
                    self.push_event(time, EventKind::Departure { server, generation });
                }
            }
            ServerStatus::Idle => {
                if count == 0 {
                    state.status = ServerStatus::Inactive;
                }
            }
            ServerStatus::Inactive => {
                if count > 0 {
                    state.status = ServerStatus::Idle;
                    state.idle_since = self.now;
                    policy.on_server_available(self, server)?;
                }
            }
        }
        Ok(())
    }

    /// Offers every available server to the policy, ascending by index.
    /// Used after episode-boundary reshuffles so fresh plans can seize
    /// idle capacity immediately.
    pub(super) fn kick_available_servers(
        &mut self,
        policy: &mut dyn Policy,
    ) -> Result<(), SimError> {
        for server in 0..self.servers.len() {
            if self.servers[server].is_available() {
                policy.on_server_available(self, server)?;
            }
        }
        Ok(())
    }

    fn conservation_holds(&self) -> bool {
        let queued: usize = self.type_queues.iter().map(VecDeque::len).sum::<usize>()
            + self.virtual_queues.iter().map(VecDeque::len).sum::<usize>();
        self.total_arrivals == self.total_departures + self.in_service + queued as u64
    }

    pub(super) fn finalize(&mut self) {
        for state in &mut self.servers {
            if let ServerStatus::Busy { started_at, .. } = state.status {
                state.cumulative_busy += self.horizon - started_at;
            }
        }
        debug_assert!(self.conservation_holds());
    }

    pub(super) fn into_log(self) -> EventLog {
        EventLog {
            horizon: self.horizon,
            num_types: self.config.num_types,
            num_servers: self.config.num_servers,
            records: self.records,
        }
    }
}
