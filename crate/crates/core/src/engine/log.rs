//! The simulator's output: a timestamped record stream covering arrivals,
//! service starts, departures, agent-schedule updates, and episode ends.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::model::{ServerId, TypeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogKind {
    Arrival,
    ServiceStart,
    Departure,
    ScheduleUpdate,
    EpisodeEnd,
}

impl fmt::Display for LogKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self {
            LogKind::Arrival => "arrival",
            LogKind::ServiceStart => "service_start",
            LogKind::Departure => "departure",
            LogKind::ScheduleUpdate => "schedule_update",
            LogKind::EpisodeEnd => "episode_end",
        };
        f.write_str(label)
    }
}

/// One event record. `value` is kind-specific: the payoff draw (0/1) on
/// departures, the new agent count on schedule updates, and the episode
/// index on episode ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub time: f64,
    pub seq: u64,
    pub kind: LogKind,
    pub customer_type: Option<TypeId>,
    pub server: Option<ServerId>,
    pub customer: Option<u64>,
    pub value: Option<f64>,
}

/// Complete, ordered record of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub horizon: f64,
    pub num_types: usize,
    pub num_servers: usize,
    pub records: Vec<LogRecord>,
}

impl EventLog {
    /// Tab-separated line-oriented form: one line per record with fields
    /// (time, sequence, kind, type, server, customer_id, value); fields
    /// that do not apply are left empty.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        fn opt<T: fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map(|x| x.to_string()).unwrap_or_default()
        }
        for r in &self.records {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.time,
                r.seq,
                r.kind,
                opt(&r.customer_type),
                opt(&r.server),
                opt(&r.customer),
                opt(&r.value),
            )?;
        }
        Ok(())
    }

    pub fn to_tsv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).expect("write to vec");
        String::from_utf8(buf).expect("tsv is utf8")
    }
}
