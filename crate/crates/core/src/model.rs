//! Domain types shared across the solver, estimators, simulation engine,
//! and policies: the static system description, routing plans, spanning
//! forests, and policy parameter bundles.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Customer type index, `0..num_types`.
pub type TypeId = usize;
/// Server (agent group) index, `0..num_servers`.
pub type ServerId = usize;

/// A compatible (customer type, server) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Line {
    pub customer_type: TypeId,
    pub server: ServerId,
}

impl Line {
    pub fn new(customer_type: TypeId, server: ServerId) -> Self {
        Self {
            customer_type,
            server,
        }
    }
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.customer_type, self.server)
    }
}

/// How arrivals of one customer type are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalSource {
    /// Explicit arrival instants, seconds from simulation start, sorted ascending.
    Timestamps { times: Vec<f64> },
    /// Renewal process with exponential interarrival times (`mean` seconds).
    Exponential { mean: f64 },
}

/// How service durations on one line are produced. Durations are in seconds
/// at unit agent count; the engine divides by the active agent count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServiceSource {
    /// Empirical pool sampled uniformly with replacement.
    Empirical {
        samples: Vec<f64>,
    },
    Exponential {
        mean: f64,
    },
    /// Log-normal with the given parameters of the underlying normal.
    LogNormal {
        location: f64,
        scale: f64,
    },
}

impl ServiceSource {
    /// Mean base duration in seconds (at unit agent count).
    pub fn mean_duration(&self) -> f64 {
        match self {
            ServiceSource::Empirical { samples } => {
                if samples.is_empty() {
                    f64::NAN
                } else {
                    samples.iter().sum::<f64>() / samples.len() as f64
                }
            }
            ServiceSource::Exponential { mean } => *mean,
            ServiceSource::LogNormal { location, scale } => (location + scale * scale / 2.0).exp(),
        }
    }
}

/// One step of a piecewise-constant agent-count function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityStep {
    /// Time in seconds at which `count` becomes effective.
    pub at: f64,
    pub count: u32,
}

/// Piecewise-constant number of active agents behind one server. Before the
/// first step the count is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitySchedule {
    pub steps: Vec<CapacityStep>,
}

impl CapacitySchedule {
    pub fn constant(count: u32) -> Self {
        Self {
            steps: vec![CapacityStep { at: 0.0, count }],
        }
    }

    pub fn count_at(&self, t: f64) -> u32 {
        let mut current = 0;
        for step in &self.steps {
            if step.at <= t {
                current = step.count;
            } else {
                break;
            }
        }
        current
    }
}

/// Static description of a skill-based queueing system.
///
/// Per-line data (`payoff`, `service`) is aligned with `lines`; `arrivals`
/// is per customer type and `capacity` per server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_types: usize,
    pub num_servers: usize,
    pub lines: Vec<Line>,
    /// Bernoulli payoff mean per line, in [0, 1].
    pub payoff: Vec<f64>,
    pub service: Vec<ServiceSource>,
    pub arrivals: Vec<ArrivalSource>,
    pub capacity: Vec<CapacitySchedule>,
}

/// A failed config invariant; `field` names the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigViolation {
    pub field: String,
    pub message: String,
}

impl ConfigViolation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks every `SystemConfig` invariant. Returns an empty list iff the
/// config is valid; never panics on malformed input.
pub fn validate_config(config: &SystemConfig) -> Vec<ConfigViolation> {
    let mut out = Vec::new();
    if config.num_types == 0 {
        out.push(ConfigViolation::new("num_types", "must be positive"));
    }
    if config.num_servers == 0 {
        out.push(ConfigViolation::new("num_servers", "must be positive"));
    }
    if config.payoff.len() != config.lines.len() {
        out.push(ConfigViolation::new(
            "payoff",
            format!(
                "{} entries for {} lines",
                config.payoff.len(),
                config.lines.len()
            ),
        ));
    }
    if config.service.len() != config.lines.len() {
        out.push(ConfigViolation::new(
            "service",
            format!(
                "{} entries for {} lines",
                config.service.len(),
                config.lines.len()
            ),
        ));
    }
    if config.arrivals.len() != config.num_types {
        out.push(ConfigViolation::new(
            "arrivals",
            format!(
                "{} sources for {} types",
                config.arrivals.len(),
                config.num_types
            ),
        ));
    }
    if config.capacity.len() != config.num_servers {
        out.push(ConfigViolation::new(
            "capacity",
            format!(
                "{} schedules for {} servers",
                config.capacity.len(),
                config.num_servers
            ),
        ));
    }

    let mut seen = BTreeMap::new();
    let mut covered = vec![false; config.num_types];
    for (id, line) in config.lines.iter().enumerate() {
        if line.customer_type >= config.num_types {
            out.push(ConfigViolation::new(
                "lines",
                format!("line {line} references unknown customer type"),
            ));
        } else {
            covered[line.customer_type] = true;
        }
        if line.server >= config.num_servers {
            out.push(ConfigViolation::new(
                "lines",
                format!("line {line} references unknown server"),
            ));
        }
        if let Some(first) = seen.insert((line.customer_type, line.server), id) {
            out.push(ConfigViolation::new(
                "lines",
                format!("line {line} duplicates entry {first}"),
            ));
        }
    }
    for (i, covered) in covered.iter().enumerate() {
        if !covered {
            out.push(ConfigViolation::new(
                "lines",
                format!("customer type {i} has no compatible server"),
            ));
        }
    }

    for (id, theta) in config.payoff.iter().enumerate() {
        if !theta.is_finite() || *theta < 0.0 || *theta > 1.0 {
            out.push(ConfigViolation::new(
                "payoff",
                format!("theta for line index {id} is {theta}, outside [0, 1]"),
            ));
        }
    }

    for (id, source) in config.service.iter().enumerate() {
        match source {
            ServiceSource::Empirical { samples } => {
                if samples.is_empty() {
                    out.push(ConfigViolation::new(
                        "service",
                        format!("empirical pool for line index {id} is empty"),
                    ));
                } else if samples.iter().any(|s| !s.is_finite() || *s <= 0.0) {
                    out.push(ConfigViolation::new(
                        "service",
                        format!("empirical pool for line index {id} has non-positive durations"),
                    ));
                }
            }
            ServiceSource::Exponential { mean } => {
                if !mean.is_finite() || *mean <= 0.0 {
                    out.push(ConfigViolation::new(
                        "service",
                        format!("exponential mean for line index {id} must be positive"),
                    ));
                }
            }
            ServiceSource::LogNormal { scale, .. } => {
                if !scale.is_finite() || *scale < 0.0 {
                    out.push(ConfigViolation::new(
                        "service",
                        format!("log-normal scale for line index {id} must be nonnegative"),
                    ));
                }
            }
        }
    }

    for (i, source) in config.arrivals.iter().enumerate() {
        match source {
            ArrivalSource::Timestamps { times } => {
                if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
                    out.push(ConfigViolation::new(
                        "arrivals",
                        format!("type {i} has negative or non-finite arrival times"),
                    ));
                }
                if times.windows(2).any(|w| w[0] > w[1]) {
                    out.push(ConfigViolation::new(
                        "arrivals",
                        format!("type {i} arrival times are not sorted"),
                    ));
                }
            }
            ArrivalSource::Exponential { mean } => {
                if !mean.is_finite() || *mean <= 0.0 {
                    out.push(ConfigViolation::new(
                        "arrivals",
                        format!("type {i} interarrival mean must be positive"),
                    ));
                }
            }
        }
    }

    for (j, schedule) in config.capacity.iter().enumerate() {
        if schedule.steps.is_empty() {
            out.push(ConfigViolation::new(
                "capacity",
                format!("server {j} has an empty schedule"),
            ));
        }
        if schedule.steps.iter().any(|s| !s.at.is_finite()) {
            out.push(ConfigViolation::new(
                "capacity",
                format!("server {j} has a non-finite breakpoint"),
            ));
        }
        if schedule.steps.windows(2).any(|w| w[0].at >= w[1].at) {
            out.push(ConfigViolation::new(
                "capacity",
                format!("server {j} breakpoints are not strictly increasing"),
            ));
        }
    }

    out
}

/// Fast lookup structure over a config's compatibility lines.
#[derive(Debug, Clone)]
pub struct LineIndex {
    num_types: usize,
    num_servers: usize,
    lines: Vec<Line>,
    dense: Vec<Option<usize>>,
    servers_of_type: Vec<Vec<ServerId>>,
    types_of_server: Vec<Vec<TypeId>>,
}

impl LineIndex {
    pub fn new(num_types: usize, num_servers: usize, lines: &[Line]) -> Self {
        let mut dense = vec![None; num_types * num_servers];
        let mut servers_of_type = vec![Vec::new(); num_types];
        let mut types_of_server = vec![Vec::new(); num_servers];
        for (id, line) in lines.iter().enumerate() {
            dense[line.customer_type * num_servers + line.server] = Some(id);
            servers_of_type[line.customer_type].push(line.server);
            types_of_server[line.server].push(line.customer_type);
        }
        for list in &mut servers_of_type {
            list.sort_unstable();
        }
        for list in &mut types_of_server {
            list.sort_unstable();
        }
        Self {
            num_types,
            num_servers,
            lines: lines.to_vec(),
            dense,
            servers_of_type,
            types_of_server,
        }
    }

    pub fn from_config(config: &SystemConfig) -> Self {
        Self::new(config.num_types, config.num_servers, &config.lines)
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn num_servers(&self) -> usize {
        self.num_servers
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn line(&self, id: usize) -> Line {
        self.lines[id]
    }

    pub fn line_id(&self, customer_type: TypeId, server: ServerId) -> Option<usize> {
        self.dense[customer_type * self.num_servers + server]
    }

    /// Compatible servers of a type, ascending.
    pub fn servers_of_type(&self, customer_type: TypeId) -> &[ServerId] {
        &self.servers_of_type[customer_type]
    }

    /// Compatible types of a server, ascending.
    pub fn types_of_server(&self, server: ServerId) -> &[TypeId] {
        &self.types_of_server[server]
    }
}

/// Routing rates produced by one optimization solve.
///
/// `rates` is aligned with the line order of the problem that produced the
/// plan. `rejection_rates` is per customer type and empty when the primary
/// formulation was feasible. `is_vertex` is true iff the plan is a basic
/// feasible solution (simplex path), which is what spanning-forest
/// extraction requires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingPlan {
    pub rates: Vec<f64>,
    pub rejection_rates: Vec<f64>,
    pub objective_value: f64,
    pub is_vertex: bool,
}

impl RoutingPlan {
    pub fn total_rejection(&self) -> f64 {
        self.rejection_rates.iter().sum()
    }
}

/// Spanning forest induced on the bipartite compatibility graph by the
/// positive-rate lines of a vertex solution. Levels alternate: every queue's
/// parent is a server and vice versa; roots are slack servers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanningForest {
    pub parent_of_queue: Vec<Option<ServerId>>,
    pub parent_of_server: Vec<Option<TypeId>>,
    pub children_of_server: Vec<Vec<TypeId>>,
    pub children_of_queue: Vec<Vec<ServerId>>,
    pub roots: Vec<ServerId>,
}

impl SpanningForest {
    pub fn queue_in_forest(&self, customer_type: TypeId) -> bool {
        self.parent_of_queue[customer_type].is_some()
    }

    pub fn server_in_forest(&self, server: ServerId) -> bool {
        self.parent_of_server[server].is_some() || self.roots.contains(&server)
    }

    /// Forest edges as lines, sorted.
    pub fn edges(&self) -> Vec<Line> {
        let mut edges = Vec::new();
        for (i, parent) in self.parent_of_queue.iter().enumerate() {
            if let Some(j) = parent {
                edges.push(Line::new(i, *j));
            }
        }
        for (j, parent) in self.parent_of_server.iter().enumerate() {
            if let Some(i) = parent {
                edges.push(Line::new(*i, j));
            }
        }
        edges.sort_unstable();
        edges
    }
}

/// Which routing policy runs and with which parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PolicyKind {
    /// Episodic LP routing with UCB payoff estimates and virtual queues.
    Ucbqr,
    /// Same learner, dispatching through the spanning-forest priority rule.
    UcbqrTree,
    /// Episodic LP routing with true payoff, arrival, and service rates.
    Oracle,
    FcfsAlis,
    Greedy,
    Random,
    ThetaMu,
    /// UCB-QR with the true arrival rates.
    UcbqrLambda,
    /// UCB-QR with the true service rates.
    UcbqrMu,
}

impl PolicyKind {
    pub fn is_episodic(self) -> bool {
        matches!(
            self,
            PolicyKind::Ucbqr
                | PolicyKind::UcbqrTree
                | PolicyKind::Oracle
                | PolicyKind::UcbqrLambda
                | PolicyKind::UcbqrMu
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Ucbqr => "UCBQR",
            PolicyKind::UcbqrTree => "UCBQR_TREE",
            PolicyKind::Oracle => "ORACLE",
            PolicyKind::FcfsAlis => "FCFS_ALIS",
            PolicyKind::Greedy => "GREEDY",
            PolicyKind::Random => "RANDOM",
            PolicyKind::ThetaMu => "THETA_MU",
            PolicyKind::UcbqrLambda => "UCBQR_LAMBDA",
            PolicyKind::UcbqrMu => "UCBQR_MU",
        }
    }
}

fn default_episode_length() -> f64 {
    120.0
}
fn default_epsilon() -> f64 {
    1e-6
}
fn default_penalty() -> f64 {
    1e3
}
fn default_gamma() -> f64 {
    0.0
}
fn default_alpha() -> f64 {
    0.5
}
fn default_beta() -> f64 {
    0.2
}
fn default_mu_init() -> f64 {
    1e-3
}

/// A routing policy under test plus its parameters. Defaults mirror the
/// reference experiment settings: h = 120 s, ε = 1e-6, p = 1e3, α = 0.5,
/// β = 0.2, μ-init = 1e-3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    #[serde(default = "default_episode_length")]
    pub episode_length_h: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_penalty")]
    pub penalty_p: f64,
    /// Fairness weight; 0 disables the quadratic load term.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_alpha")]
    pub holt_alpha: f64,
    #[serde(default = "default_beta")]
    pub holt_beta: f64,
    #[serde(default = "default_mu_init")]
    pub mu_init: f64,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            episode_length_h: default_episode_length(),
            epsilon: default_epsilon(),
            penalty_p: default_penalty(),
            gamma: default_gamma(),
            holt_alpha: default_alpha(),
            holt_beta: default_beta(),
            mu_init: default_mu_init(),
        }
    }

    pub fn validate(&self) -> Vec<ConfigViolation> {
        let mut out = Vec::new();
        if self.kind.is_episodic() && !(self.episode_length_h > 0.0) {
            out.push(ConfigViolation::new(
                "episode_length_h",
                "must be positive for episodic policies",
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            out.push(ConfigViolation::new("epsilon", "must lie in (0, 1)"));
        }
        if !(self.penalty_p > 0.0) {
            out.push(ConfigViolation::new("penalty_p", "must be positive"));
        }
        if !(self.gamma >= 0.0) {
            out.push(ConfigViolation::new("gamma", "must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.holt_alpha) {
            out.push(ConfigViolation::new("holt_alpha", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.holt_beta) {
            out.push(ConfigViolation::new("holt_beta", "must lie in [0, 1]"));
        }
        if !(self.mu_init > 0.0) {
            out.push(ConfigViolation::new("mu_init", "must be positive"));
        }
        // The forest property the tree rule relies on does not survive a
        // quadratic objective; reject the combination up front.
        if self.kind == PolicyKind::UcbqrTree && self.gamma > 0.0 {
            out.push(ConfigViolation::new(
                "gamma",
                "tree dispatch requires gamma = 0",
            ));
        }
        out
    }
}
