use std::collections::BTreeMap;

use serde::Deserialize;

use super::{CollectionMode, ConnectionMode, HostRecord, ShellmonError};

/// Liveness bookkeeping per host.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HostState {
    pub consecutive_misses: u32,
    pub down: bool,
}

#[derive(Debug, Clone, Default)]
pub struct HostRegistry {
    hosts: BTreeMap<String, HostRecord>,
    state: BTreeMap<String, HostState>,
}

// Modes are read as plain strings first so an unknown value surfaces as
// UnknownMode rather than a generic parse failure.
#[derive(Deserialize)]
struct RawHost {
    source_id: String,
    hostname: String,
    port: u16,
    credentials: String,
    content_type: String,
    connection_mode: String,
    collection_mode: String,
}

/// Parses the JSON host file (an array of host records).
pub fn load_host_registry(document: &str) -> Result<HostRegistry, ShellmonError> {
    let raw: Vec<RawHost> =
        serde_json::from_str(document).map_err(|e| ShellmonError::ParseError(e.to_string()))?;
    let mut reg = HostRegistry::default();
    for h in raw {
        let connection_mode = match h.connection_mode.as_str() {
            "pull" => ConnectionMode::Pull,
            "push" => ConnectionMode::Push,
            other => {
                return Err(ShellmonError::UnknownMode {
                    source_id: h.source_id,
                    field: "connection_mode",
                    value: other.to_string(),
                })
            }
        };
        let collection_mode = match h.collection_mode.as_str() {
            "agent-based" => CollectionMode::AgentBased,
            "agent-less" => CollectionMode::AgentLess,
            other => {
                return Err(ShellmonError::UnknownMode {
                    source_id: h.source_id,
                    field: "collection_mode",
                    value: other.to_string(),
                })
            }
        };
        reg.insert(HostRecord {
            source_id: h.source_id,
            hostname: h.hostname,
            port: h.port,
            credentials: h.credentials,
            content_type: h.content_type,
            connection_mode,
            collection_mode,
        })?;
    }
    Ok(reg)
}

impl HostRegistry {
    pub fn insert(&mut self, host: HostRecord) -> Result<(), ShellmonError> {
        if self.hosts.contains_key(&host.source_id) {
            return Err(ShellmonError::DuplicateSourceId(host.source_id));
        }
        self.state
            .insert(host.source_id.clone(), HostState::default());
        self.hosts.insert(host.source_id.clone(), host);
        Ok(())
    }

    pub fn get(&self, source_id: &str) -> Option<&HostRecord> {
        self.hosts.get(source_id)
    }

    pub fn hosts(&self) -> impl Iterator<Item = &HostRecord> {
        self.hosts.values()
    }

    pub fn len(&self) -> usize {
        self.hosts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hosts.is_empty()
    }

    pub fn state(&self, source_id: &str) -> Option<HostState> {
        self.state.get(source_id).copied()
    }

    pub fn is_down(&self, source_id: &str) -> bool {
        self.state.get(source_id).is_some_and(|s| s.down)
    }

    /// Records a failed poll; returns true when this miss marks the host down.
    pub(crate) fn record_miss(&mut self, source_id: &str, threshold: u32) -> bool {
        let st = self.state.entry(source_id.to_string()).or_default();
        st.consecutive_misses += 1;
        let newly = !st.down && st.consecutive_misses >= threshold;
        if newly {
            st.down = true;
        }
        newly
    }

    pub(crate) fn record_success(&mut self, source_id: &str) {
        self.state
            .insert(source_id.to_string(), HostState::default());
    }

    pub fn to_json(&self) -> String {
        let hosts: Vec<&HostRecord> = self.hosts.values().collect();
        serde_json::to_string_pretty(&hosts).expect("host records serialize")
    }
}
