//! Deterministic hybrid-SDN simulator.
//!
//! A [`Simulation`] owns every controller's live topology, a logical clock,
//! the KPI generators of each link and the installed forwarding state. Time
//! moves only through [`Simulation::advance`]; a fixed seed gives identical
//! event order, KPI streams and exports.

mod device;
mod kpi;
mod sim;

pub use device::{SimAdapter, SimDevice};
pub use kpi::{KpiProcesses, KpiStream, ProcessParams};
pub use sim::{
    load_scenario, Advance, InstallAck, InstallRecord, SimClock, SimController, SimLink, SimSource,
    SimSwitch, Simulation, Walk, WalkOutcome,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::ControllerKind;
use crate::shellmon::ConnectionMode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetsimError {
    #[error("bad scenario: {0}")]
    BadSpec(String),
    #[error("clock at {now} ms cannot go back to {to} ms")]
    ClockRegression { now: u64, to: u64 },
    #[error("unknown controller {0}")]
    UnknownController(String),
    #[error("unknown device {0}")]
    UnknownDevice(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// Erdős–Rényi graph: every pair linked with probability `edge_prob`.
    Gnp { nodes: usize, edge_prob: f64 },
    /// A ring with random chords until every node reaches `degree`.
    PartialMesh { nodes: usize, degree: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EdgeSpec {
    Pair(String, String),
    Full {
        a: String,
        b: String,
        #[serde(default)]
        id: Option<String>,
        /// Static cost used when no telemetry weighs the link.
        #[serde(default)]
        cost: Option<f64>,
    },
}

/// Either an explicit edge list or a generator. Generated switches are named
/// `s1..sN`; links without an id are numbered `l1..` in edge order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<EdgeSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub node_costs: BTreeMap<String, f64>,
    #[serde(default)]
    pub hosts_per_switch: usize,
    /// Defaults to the highest-degree switch of the initial topology.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designated: Option<String>,
}

fn d_kind() -> ControllerKind {
    ControllerKind::Sdn
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub controller_id: String,
    #[serde(default = "d_kind")]
    pub kind: ControllerKind,
    pub topology: TopologySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FailLink,
    RestoreLink,
    AddLink,
    RemoveNode,
}

/// A scheduled topology event. `target` is a qualified link (`c1:l3`) or
/// node (`c1:s3`); `add_link` names its endpoints by local id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub at_ms: u64,
    pub kind: EventKind,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
}

impl ScenarioEvent {
    pub fn describe(&self) -> String {
        match (self.kind, &self.a, &self.b) {
            (EventKind::AddLink, Some(a), Some(b)) => format!("add_link {} ({a}-{b})", self.target),
            (EventKind::FailLink, ..) => format!("fail_link {}", self.target),
            (EventKind::RestoreLink, ..) => format!("restore_link {}", self.target),
            (EventKind::AddLink, ..) => format!("add_link {}", self.target),
            (EventKind::RemoveNode, ..) => format!("remove_node {}", self.target),
        }
    }
}

fn d_mode() -> ConnectionMode {
    ConnectionMode::Pull
}

/// How the run collects telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySpec {
    #[serde(default = "d_mode")]
    pub mode: ConnectionMode,
    /// Agents that never answer.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub down_sources: Vec<String>,
}

impl Default for TelemetrySpec {
    fn default() -> Self {
        TelemetrySpec {
            mode: d_mode(),
            down_sources: Vec::new(),
        }
    }
}

fn d_intent_at() -> u64 {
    1000
}

/// When the orchestrator submits the intent and stops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(default = "d_intent_at")]
    pub intent_at_ms: u64,
    /// Defaults to one second after the later of the intent and the last event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_ms: Option<u64>,
    /// Re-rank with fresh telemetry at this interval after the intent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refresh_ms: Option<u64>,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            intent_at_ms: d_intent_at(),
            end_ms: None,
            refresh_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub controllers: Vec<ControllerSpec>,
    #[serde(default)]
    pub kpi_processes: KpiProcesses,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
    #[serde(default)]
    pub telemetry: TelemetrySpec,
    #[serde(default)]
    pub schedule: Schedule,
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, NetsimError> {
        serde_json::from_str(text).map_err(|e| NetsimError::BadSpec(e.to_string()))
    }

    pub fn end_ms(&self) -> u64 {
        self.schedule.end_ms.unwrap_or_else(|| {
            let last = self.events.iter().map(|e| e.at_ms).max().unwrap_or(0);
            last.max(self.schedule.intent_at_ms) + 1000
        })
    }

    /// The six-switch proof-of-concept: ring s1..s6 plus chords s1-s4 and
    /// s2-s5 (8 links, every degree >= 2), two hosts per switch, one
    /// controller.
    pub fn poc(seed: u64) -> Self {
        let ring = [
            ("s1", "s2"),
            ("s2", "s3"),
            ("s3", "s4"),
            ("s4", "s5"),
            ("s5", "s6"),
            ("s6", "s1"),
        ];
        let chords = [("s1", "s4"), ("s2", "s5")];
        ScenarioSpec {
            seed,
            controllers: vec![ControllerSpec {
                controller_id: "c1".into(),
                kind: ControllerKind::Sdn,
                topology: TopologySpec {
                    edges: ring
                        .iter()
                        .chain(chords.iter())
                        .map(|(a, b)| EdgeSpec::Pair(a.to_string(), b.to_string()))
                        .collect(),
                    hosts_per_switch: 2,
                    ..TopologySpec::default()
                },
            }],
            kpi_processes: KpiProcesses::default(),
            events: Vec::new(),
            telemetry: TelemetrySpec::default(),
            schedule: Schedule::default(),
        }
    }
}
