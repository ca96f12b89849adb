//! ShellMon telemetry framework.
//!
//! Agents run a three-stage collection cycle (accumulate device counters into
//! the `node_util` store, stamp them with `source_id` and a timestamp, send).
//! The server collects batches either by polling (request-response) or by
//! consuming a publish-subscribe bus, and writes them into a [`KpiStore`]
//! that the routing pipeline reads through immutable [`KpiSnapshot`]s.

mod agent;
mod registry;
mod server;
mod store;

pub use agent::{Agent, DeviceKpiSource, DeviceReadFailure, ReadOutcome};
pub use registry::{load_host_registry, HostRegistry, HostState};
pub(crate) use server::{decode_batch, serve_poll};
pub use server::{
    topic_for, LoopbackPoll, MessageBus, PollRequest, PollTransport, ShellMon, ShellMonConfig,
    Subscription,
};
pub use store::{IngestOutcome, KpiStore, StoreStats};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShellmonError {
    #[error("cannot parse host file: {0}")]
    ParseError(String),
    #[error("source_id {0} appears more than once")]
    DuplicateSourceId(String),
    #[error("unknown {field} {value:?} for host {source_id}")]
    UnknownMode {
        source_id: String,
        field: &'static str,
        value: String,
    },
    #[error("unknown source {0}")]
    UnknownSource(String),
    #[error("host {0} is unreachable")]
    HostUnreachable(String),
    #[error("host {0} is not a {1} host")]
    WrongMode(String, &'static str),
    #[error("malformed batch from {source_id}: {reason}")]
    MalformedBatch { source_id: String, reason: String },
    #[error("message bus unreachable")]
    BusUnreachable,
    #[error("device read failed on every counter of {0}")]
    DeviceReadFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionMode {
    Pull,
    Push,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CollectionMode {
    #[serde(rename = "agent-based")]
    AgentBased,
    #[serde(rename = "agent-less")]
    AgentLess,
}

/// One row of the host file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostRecord {
    pub source_id: String,
    pub hostname: String,
    pub port: u16,
    pub credentials: String,
    pub content_type: String,
    pub connection_mode: ConnectionMode,
    pub collection_mode: CollectionMode,
}

/// A timestamped measurement of one link or node, tagged with its source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSample {
    pub source_id: String,
    pub id: String,
    pub ts_ms: u64,
    pub values: BTreeMap<String, f64>,
}

/// Wire form of a sample inside a batch (the source is batch-level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiRecord {
    pub id: String,
    pub ts_ms: u64,
    pub values: BTreeMap<String, f64>,
}

/// `{source_id, batch_seq, samples: [{id, ts_ms, values}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiBatch {
    pub source_id: String,
    pub batch_seq: u64,
    pub samples: Vec<KpiRecord>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub partial: bool,
}

impl KpiBatch {
    pub fn to_samples(&self) -> impl Iterator<Item = KpiSample> + '_ {
        self.samples.iter().map(|r| KpiSample {
            source_id: self.source_id.clone(),
            id: r.id.clone(),
            ts_ms: r.ts_ms,
            values: r.values.clone(),
        })
    }

    /// Internal consistency: nonempty, finite values, strictly increasing
    /// timestamps per id.
    pub fn check(&self) -> Result<(), ShellmonError> {
        let bad = |reason: String| ShellmonError::MalformedBatch {
            source_id: self.source_id.clone(),
            reason,
        };
        if self.samples.is_empty() {
            return Err(bad("empty batch".into()));
        }
        let mut last: BTreeMap<&str, u64> = BTreeMap::new();
        for r in &self.samples {
            if let Some(prev) = last.insert(&r.id, r.ts_ms) {
                if r.ts_ms <= prev {
                    return Err(bad(format!("non-monotonic timestamp on {}", r.id)));
                }
            }
            if let Some((k, _)) = r.values.iter().find(|(_, v)| !v.is_finite()) {
                return Err(bad(format!("non-finite {k} on {}", r.id)));
            }
        }
        Ok(())
    }
}

/// Latest sample per link/node at or before `as_of`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSnapshot {
    pub as_of: u64,
    entries: BTreeMap<String, KpiSample>,
}

impl KpiSnapshot {
    pub fn empty(as_of: u64) -> Self {
        KpiSnapshot {
            as_of,
            entries: BTreeMap::new(),
        }
    }

    /// Adds an entry, keeping the newer one on conflict. Samples after
    /// `as_of` are ignored.
    pub fn insert(&mut self, s: KpiSample) {
        if s.ts_ms > self.as_of {
            return;
        }
        match self.entries.get(&s.id) {
            Some(cur) if (cur.ts_ms, &s.source_id) >= (s.ts_ms, &cur.source_id) => {}
            _ => {
                self.entries.insert(s.id.clone(), s);
            }
        }
    }

    pub fn get(&self, id: &str) -> Option<&KpiSample> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &KpiSample)> {
        self.entries.iter()
    }
}
