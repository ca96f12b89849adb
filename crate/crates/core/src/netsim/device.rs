use std::sync::{Arc, Mutex};

use super::{NetsimError, Simulation};
use crate::client::{AdapterError, ControllerAdapter, ControllerEndpoint, ControllerSection};
use crate::shellmon::{DeviceKpiSource, ReadOutcome};

/// Counter source of one simulated switch, for a telemetry agent.
#[derive(Debug, Clone)]
pub struct SimDevice {
    sim: Arc<Mutex<Simulation>>,
    controller: String,
    switch: String,
}

impl SimDevice {
    pub fn new(sim: Arc<Mutex<Simulation>>, controller: &str, switch: &str) -> Self {
        SimDevice {
            sim,
            controller: controller.to_string(),
            switch: switch.to_string(),
        }
    }
}

impl DeviceKpiSource for SimDevice {
    fn read_counters(&mut self, _now_ms: u64) -> Vec<ReadOutcome> {
        self.sim
            .lock()
            .expect("simulation lock")
            .read_device(&self.controller, &self.switch)
    }
}

/// Controller management interface served by the simulator.
#[derive(Debug, Clone)]
pub struct SimAdapter {
    sim: Arc<Mutex<Simulation>>,
}

impl SimAdapter {
    pub fn new(sim: Arc<Mutex<Simulation>>) -> Self {
        SimAdapter { sim }
    }
}

fn adapter_error(e: NetsimError) -> AdapterError {
    match e {
        NetsimError::UnknownController(c) => AdapterError::Unreachable(c),
        other => AdapterError::Rejected(other.to_string()),
    }
}

impl ControllerAdapter for SimAdapter {
    fn fetch_topology(&self, ep: &ControllerEndpoint) -> Result<String, AdapterError> {
        let doc = self
            .sim
            .lock()
            .expect("simulation lock")
            .export_topology(&ep.controller_id)
            .map_err(adapter_error)?;
        Ok(serde_json::to_string(&doc).expect("document serializes"))
    }

    fn install(
        &self,
        ep: &ControllerEndpoint,
        section: &ControllerSection,
    ) -> Result<(), AdapterError> {
        self.sim
            .lock()
            .expect("simulation lock")
            .apply_install(&ep.controller_id, section)
            .map(|_| ())
            .map_err(adapter_error)
    }
}
