use std::collections::BTreeMap;
use std::fmt;

use super::{CollectionMode, KpiBatch, KpiRecord, ShellmonError};
use crate::metric::AttributeSample;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceReadFailure(pub String);

impl fmt::Display for DeviceReadFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "device read failure: {}", self.0)
    }
}

/// One counter read: id of the link/node and its attribute values.
pub type ReadOutcome = (String, Result<AttributeSample, DeviceReadFailure>);

/// Source of device-level KPI counters.
pub trait DeviceKpiSource: Send {
    fn read_counters(&mut self, now_ms: u64) -> Vec<ReadOutcome>;
}

/// A telemetry agent. Agent-based agents run the cycle on the device;
/// agent-less ones run it in the NetMon middleware against a remote session.
/// Both honour the same cycle contract.
pub struct Agent {
    source_id: String,
    mode: CollectionMode,
    device: Box<dyn DeviceKpiSource>,
    /// Accumulator output: latest counters per id.
    node_util: BTreeMap<String, AttributeSample>,
    next_seq: u64,
    last_ts: Option<u64>,
    up: bool,
}

impl fmt::Debug for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Agent")
            .field("source_id", &self.source_id)
            .field("mode", &self.mode)
            .field("next_seq", &self.next_seq)
            .field("up", &self.up)
            .finish()
    }
}

impl Agent {
    pub fn new(
        source_id: impl Into<String>,
        mode: CollectionMode,
        device: Box<dyn DeviceKpiSource>,
    ) -> Self {
        Agent {
            source_id: source_id.into(),
            mode,
            device,
            node_util: BTreeMap::new(),
            next_seq: 0,
            last_ts: None,
            up: true,
        }
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn mode(&self) -> CollectionMode {
        self.mode
    }

    pub fn is_up(&self) -> bool {
        self.up
    }

    pub fn set_up(&mut self, up: bool) {
        self.up = up;
    }

    pub fn node_util(&self) -> &BTreeMap<String, AttributeSample> {
        &self.node_util
    }

    /// Accumulator -> Collector -> Sender. Every sample of one cycle carries
    /// the same timestamp; cycle timestamps strictly increase.
    pub fn collect_cycle(&mut self, now_ms: u64) -> Result<KpiBatch, ShellmonError> {
        // Accumulator
        let reads = self.device.read_counters(now_ms);
        let mut partial = false;
        let mut fresh = Vec::with_capacity(reads.len());
        for (id, r) in reads {
            match r {
                Ok(values) => {
                    self.node_util.insert(id.clone(), values);
                    fresh.push(id);
                }
                Err(_) => partial = true,
            }
        }
        if fresh.is_empty() {
            return Err(ShellmonError::DeviceReadFailure(self.source_id.clone()));
        }

        // Collector
        let ts = match self.last_ts {
            Some(last) if now_ms <= last => last + 1,
            _ => now_ms,
        };
        self.last_ts = Some(ts);
        let samples = fresh
            .into_iter()
            .map(|id| KpiRecord {
                values: self.node_util[&id].clone(),
                id,
                ts_ms: ts,
            })
            .collect();

        // Sender hands the drained batch to the transport.
        let batch = KpiBatch {
            source_id: self.source_id.clone(),
            batch_seq: self.next_seq,
            samples,
            partial,
        };
        self.next_seq += 1;
        Ok(batch)
    }
}
