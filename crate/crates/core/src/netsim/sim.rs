use std::collections::{BTreeMap, BTreeSet};

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    ControllerSpec, EdgeSpec, EventKind, GeneratorSpec, KpiProcesses, KpiStream, NetsimError,
    ScenarioEvent, ScenarioSpec,
};
use crate::client::{ControllerKind, ControllerSection, NextHop};
use crate::graph::{LinkEntry, NodeEntry, NodeId, TopologyDocument};
use crate::metric::AttributeSample;
use crate::shellmon::{DeviceReadFailure, KpiSample, ReadOutcome};

/// Logical time. Moves forward only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    now_ms: u64,
}

impl SimClock {
    pub fn now(&self) -> u64 {
        self.now_ms
    }

    pub fn advance_to(&mut self, to_ms: u64) -> Result<(), NetsimError> {
        if to_ms < self.now_ms {
            return Err(NetsimError::ClockRegression {
                now: self.now_ms,
                to: to_ms,
            });
        }
        self.now_ms = to_ms;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSwitch {
    pub cost: f64,
    pub hosts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLink {
    pub id: String,
    pub a: String,
    pub b: String,
    pub cost: Option<f64>,
    pub usable: bool,
}

/// One controller's live view and its installed forwarding state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimController {
    pub controller_id: String,
    pub kind: ControllerKind,
    pub switches: BTreeMap<String, SimSwitch>,
    pub links: Vec<SimLink>,
    pub designated: String,
    routes: BTreeMap<(NodeId, NodeId), Vec<NextHop>>,
}

impl SimController {
    fn present(&self, l: &SimLink) -> bool {
        self.switches.contains_key(&l.a) && self.switches.contains_key(&l.b)
    }

    /// Whether traffic can cross between two local switches right now.
    fn live_between(&self, u: &str, v: &str) -> bool {
        self.links.iter().any(|l| {
            l.usable && self.present(l) && ((l.a == u && l.b == v) || (l.a == v && l.b == u))
        })
    }

    pub fn routes(&self) -> &BTreeMap<(NodeId, NodeId), Vec<NextHop>> {
        &self.routes
    }
}

/// Telemetry source backed by one simulated switch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimSource {
    pub source_id: String,
    pub controller_id: String,
    pub switch: String,
}

/// Everything one [`Simulation::advance`] produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Advance {
    pub events: Vec<ScenarioEvent>,
    pub samples: Vec<KpiSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstallAck {
    pub entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstallRecord {
    pub at_ms: u64,
    pub controller_id: String,
    pub entries: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkOutcome {
    Delivered,
    /// A device on the way has no entry for the destination.
    NoRoute,
    /// Every installed next hop of a device is dead.
    Blackhole,
    Loop,
}

/// Result of forwarding along installed next hops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Walk {
    pub outcome: WalkOutcome,
    pub path: Vec<NodeId>,
}

impl Walk {
    pub fn delivered(&self) -> bool {
        self.outcome == WalkOutcome::Delivered
    }
}

/// The simulation instance.
#[derive(Debug, Clone)]
pub struct Simulation {
    seed: u64,
    clock: SimClock,
    controllers: BTreeMap<String, SimController>,
    kpi: KpiProcesses,
    streams: BTreeMap<String, Vec<KpiStream>>,
    counters: BTreeMap<String, AttributeSample>,
    events: Vec<ScenarioEvent>,
    next_event: usize,
    next_tick: u64,
    installs: Vec<InstallRecord>,
}

pub fn source_id(controller: &str, switch: &str) -> String {
    format!("{controller}-{switch}")
}

fn bad(msg: impl Into<String>) -> NetsimError {
    NetsimError::BadSpec(msg.into())
}

fn check_local(what: &str, id: &str) -> Result<(), NetsimError> {
    if id.is_empty() || id.contains(':') || id.contains('#') {
        return Err(bad(format!("bad {what} id {id:?}")));
    }
    Ok(())
}

fn generate(
    seed: u64,
    index: usize,
    g: &GeneratorSpec,
) -> Result<(Vec<String>, Vec<(String, String)>), NetsimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    let name = |i: usize| format!("s{}", i + 1);
    match *g {
        GeneratorSpec::Gnp { nodes, edge_prob } => {
            if nodes == 0 || !(0.0..=1.0).contains(&edge_prob) {
                return Err(bad(format!("bad gnp parameters ({nodes}, {edge_prob})")));
            }
            let mut edges = Vec::new();
            for i in 0..nodes {
                for j in i + 1..nodes {
                    if rng.random::<f64>() < edge_prob {
                        edges.push((name(i), name(j)));
                    }
                }
            }
            Ok(((0..nodes).map(name).collect(), edges))
        }
        GeneratorSpec::PartialMesh { nodes, degree } => {
            if nodes < 3 || degree < 2 || degree >= nodes {
                return Err(bad(format!(
                    "bad partial mesh parameters ({nodes}, {degree})"
                )));
            }
            let mut adj = vec![BTreeSet::new(); nodes];
            let mut edges = Vec::new();
            let mut link = |i: usize, j: usize, adj: &mut Vec<BTreeSet<usize>>| {
                adj[i].insert(j);
                adj[j].insert(i);
                edges.push((name(i.min(j)), name(i.max(j))));
            };
            for i in 0..nodes {
                link(i, (i + 1) % nodes, &mut adj);
            }
            for i in 0..nodes {
                while adj[i].len() < degree {
                    let free: Vec<usize> = (0..nodes)
                        .filter(|&j| j != i && !adj[i].contains(&j))
                        .collect();
                    let short: Vec<usize> = free
                        .iter()
                        .copied()
                        .filter(|&j| adj[j].len() < degree)
                        .collect();
                    let pool = if short.is_empty() { &free } else { &short };
                    let j = pool[rng.random_range(0..pool.len())];
                    link(i, j, &mut adj);
                }
            }
            Ok(((0..nodes).map(name).collect(), edges))
        }
    }
}

fn build_controller(
    seed: u64,
    index: usize,
    spec: &ControllerSpec,
) -> Result<SimController, NetsimError> {
    let ctrl = &spec.controller_id;
    check_local("controller", ctrl)?;
    if ctrl == crate::graph::PSEUDO_NS {
        return Err(bad("controller id 'pseudo' is reserved"));
    }
    let t = &spec.topology;
    let mut names: Vec<String> = Vec::new();
    let mut links: Vec<SimLink> = Vec::new();
    match (&t.generator, t.edges.is_empty()) {
        (Some(_), false) => return Err(bad(format!("{ctrl}: both generator and edges given"))),
        (Some(g), true) => {
            let (nodes, edges) = generate(seed, index, g)?;
            names = nodes;
            for (i, (a, b)) in edges.into_iter().enumerate() {
                links.push(SimLink {
                    id: format!("l{}", i + 1),
                    a,
                    b,
                    cost: None,
                    usable: true,
                });
            }
        }
        (None, _) => {
            names.extend(t.nodes.iter().cloned());
            for (i, e) in t.edges.iter().enumerate() {
                let (a, b, id, cost) = match e {
                    EdgeSpec::Pair(a, b) => (a, b, None, None),
                    EdgeSpec::Full { a, b, id, cost } => (a, b, id.clone(), *cost),
                };
                if let Some(c) = cost {
                    if !c.is_finite() || c < 0.0 {
                        return Err(bad(format!("{ctrl}: bad link cost {c}")));
                    }
                }
                names.push(a.clone());
                names.push(b.clone());
                links.push(SimLink {
                    id: id.unwrap_or_else(|| format!("l{}", i + 1)),
                    a: a.clone(),
                    b: b.clone(),
                    cost,
                    usable: true,
                });
            }
        }
    }
    let mut switches = BTreeMap::new();
    for n in names {
        check_local("switch", &n)?;
        let hosts = (1..=t.hosts_per_switch)
            .map(|h| format!("{n}-h{h}"))
            .collect();
        switches.entry(n).or_insert(SimSwitch { cost: 0.0, hosts });
    }
    if switches.is_empty() {
        return Err(bad(format!("{ctrl}: empty topology")));
    }
    for (n, c) in &t.node_costs {
        let sw = switches
            .get_mut(n)
            .ok_or_else(|| bad(format!("{ctrl}: node cost for unknown switch {n}")))?;
        if !c.is_finite() || *c < 0.0 {
            return Err(bad(format!("{ctrl}: bad node cost {c} on {n}")));
        }
        sw.cost = *c;
    }
    let mut ids = BTreeSet::new();
    let mut pairs = BTreeSet::new();
    for l in &links {
        check_local("link", &l.id)?;
        if !ids.insert(l.id.clone()) {
            return Err(bad(format!("{ctrl}: duplicate link id {}", l.id)));
        }
        if l.a == l.b {
            return Err(bad(format!("{ctrl}: self-loop on {}", l.a)));
        }
        let key = if l.a < l.b {
            (&l.a, &l.b)
        } else {
            (&l.b, &l.a)
        };
        if !pairs.insert(key) {
            return Err(bad(format!("{ctrl}: parallel link {}-{}", l.a, l.b)));
        }
    }
    let designated = match &t.designated {
        Some(d) if switches.contains_key(d) => d.clone(),
        Some(d) => return Err(bad(format!("{ctrl}: designated switch {d} does not exist"))),
        None => {
            let mut degree: BTreeMap<&String, usize> = switches.keys().map(|k| (k, 0)).collect();
            for l in &links {
                *degree.get_mut(&l.a).expect("endpoint") += 1;
                *degree.get_mut(&l.b).expect("endpoint") += 1;
            }
            let mut best: Option<(&String, usize)> = None;
            for (n, d) in degree {
                if best.is_none_or(|(_, bd)| d > bd) {
                    best = Some((n, d));
                }
            }
            best.expect("nonempty").0.clone()
        }
    };
    Ok(SimController {
        controller_id: ctrl.clone(),
        kind: spec.kind,
        switches,
        links,
        designated,
        routes: BTreeMap::new(),
    })
}

/// Checks that every event is in time order and that its target exists
/// when it fires.
fn check_events(
    controllers: &BTreeMap<String, SimController>,
    events: &[ScenarioEvent],
) -> Result<(), NetsimError> {
    let mut nodes: BTreeSet<(String, String)> = BTreeSet::new();
    let mut links: BTreeMap<(String, String), (String, String)> = BTreeMap::new();
    for c in controllers.values() {
        for s in c.switches.keys() {
            nodes.insert((c.controller_id.clone(), s.clone()));
        }
        for l in &c.links {
            links.insert(
                (c.controller_id.clone(), l.id.clone()),
                (l.a.clone(), l.b.clone()),
            );
        }
    }
    let mut prev = 0;
    for (i, e) in events.iter().enumerate() {
        if e.at_ms < prev {
            return Err(bad(format!(
                "event {i} at {} ms is before {prev} ms",
                e.at_ms
            )));
        }
        prev = e.at_ms;
        let (ctrl, local) = e
            .target
            .split_once(':')
            .ok_or_else(|| bad(format!("event {i}: target {:?} is not qualified", e.target)))?;
        let c = controllers
            .get(ctrl)
            .ok_or_else(|| bad(format!("event {i}: unknown controller {ctrl}")))?;
        let key = (ctrl.to_string(), local.to_string());
        let unknown = || bad(format!("event {i}: unknown target {}", e.target));
        match e.kind {
            EventKind::FailLink | EventKind::RestoreLink => {
                let (a, b) = links.get(&key).ok_or_else(unknown)?;
                if !nodes.contains(&(ctrl.to_string(), a.clone()))
                    || !nodes.contains(&(ctrl.to_string(), b.clone()))
                {
                    return Err(bad(format!(
                        "event {i}: link {} lost an endpoint",
                        e.target
                    )));
                }
            }
            EventKind::RemoveNode => {
                if !nodes.remove(&key) {
                    return Err(unknown());
                }
                if c.designated == local && controllers.len() > 1 {
                    return Err(bad(format!("event {i}: {} is a designated node", e.target)));
                }
            }
            EventKind::AddLink => {
                check_local("link", local)?;
                let (Some(a), Some(b)) = (&e.a, &e.b) else {
                    return Err(bad(format!("event {i}: add_link needs a and b")));
                };
                if links.contains_key(&key) {
                    return Err(bad(format!("event {i}: link {} exists", e.target)));
                }
                for end in [a, b] {
                    if !nodes.contains(&(ctrl.to_string(), end.clone())) {
                        return Err(bad(format!("event {i}: unknown endpoint {end}")));
                    }
                }
                if a == b {
                    return Err(bad(format!("event {i}: self-loop")));
                }
                let parallel = links.iter().any(|((lc, _), (x, y))| {
                    lc == ctrl && ((x == a && y == b) || (x == b && y == a))
                });
                if parallel {
                    return Err(bad(format!("event {i}: parallel link {a}-{b}")));
                }
                if e.cost.is_some_and(|c| !c.is_finite() || c < 0.0) {
                    return Err(bad(format!("event {i}: bad cost")));
                }
                links.insert(key, (a.clone(), b.clone()));
            }
        }
    }
    Ok(())
}

/// Instantiates the controllers and generators of `spec`, clock at 0.
pub fn load_scenario(spec: &ScenarioSpec) -> Result<Simulation, NetsimError> {
    if spec.controllers.is_empty() {
        return Err(bad("no controllers"));
    }
    spec.kpi_processes.check()?;
    let mut controllers = BTreeMap::new();
    for (i, c) in spec.controllers.iter().enumerate() {
        let built = build_controller(spec.seed, i, c)?;
        if controllers.insert(c.controller_id.clone(), built).is_some() {
            return Err(bad(format!("duplicate controller {}", c.controller_id)));
        }
    }
    check_events(&controllers, &spec.events)?;
    let mut sim = Simulation {
        seed: spec.seed,
        clock: SimClock::default(),
        controllers,
        kpi: spec.kpi_processes.clone(),
        streams: BTreeMap::new(),
        counters: BTreeMap::new(),
        events: spec.events.clone(),
        next_event: 0,
        next_tick: spec.kpi_processes.period_ms,
        installs: Vec::new(),
    };
    let ids: Vec<String> = sim
        .controllers
        .values()
        .flat_map(|c| {
            c.links
                .iter()
                .map(move |l| format!("{}:{}", c.controller_id, l.id))
        })
        .collect();
    for id in ids {
        sim.add_streams(&id);
    }
    Ok(sim)
}

impl Simulation {
    fn add_streams(&mut self, link: &str) {
        let streams = self
            .kpi
            .for_link(link)
            .into_iter()
            .map(|(attr, p)| KpiStream::new(self.seed, link, &attr, p))
            .collect();
        self.streams.insert(link.to_string(), streams);
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn period_ms(&self) -> u64 {
        self.kpi.period_ms
    }

    pub fn controllers(&self) -> impl Iterator<Item = &SimController> {
        self.controllers.values()
    }

    pub fn controller(&self, id: &str) -> Result<&SimController, NetsimError> {
        self.controllers
            .get(id)
            .ok_or_else(|| NetsimError::UnknownController(id.to_string()))
    }

    pub fn events(&self) -> &[ScenarioEvent] {
        &self.events
    }

    pub fn installs(&self) -> &[InstallRecord] {
        &self.installs
    }

    /// Current device counters of a link.
    pub fn counters(&self, link: &str) -> Option<&AttributeSample> {
        self.counters.get(link)
    }

    /// One telemetry source per switch, including removed ones.
    pub fn sources(&self) -> Vec<SimSource> {
        let mut out = Vec::new();
        for c in self.controllers.values() {
            for s in c.switches.keys() {
                out.push(SimSource {
                    source_id: source_id(&c.controller_id, s),
                    controller_id: c.controller_id.clone(),
                    switch: s.clone(),
                });
            }
        }
        out
    }

    /// Links a source reports: those whose `a` end is its switch.
    pub fn source_links(&self, controller: &str, switch: &str) -> Vec<String> {
        self.controllers
            .get(controller)
            .map(|c| {
                c.links
                    .iter()
                    .filter(|l| l.a == switch)
                    .map(|l| format!("{controller}:{}", l.id))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Moves the clock to `to_ms`, applying due events and emitting KPI
    /// samples on every period boundary. Events precede samples at the
    /// same instant.
    pub fn advance(&mut self, to_ms: u64) -> Result<Advance, NetsimError> {
        if to_ms < self.clock.now() {
            return Err(NetsimError::ClockRegression {
                now: self.clock.now(),
                to: to_ms,
            });
        }
        let mut out = Advance::default();
        loop {
            let ev = self
                .events
                .get(self.next_event)
                .map(|e| e.at_ms)
                .filter(|&t| t <= to_ms);
            let tick = Some(self.next_tick).filter(|&t| t <= to_ms);
            match (ev, tick) {
                (Some(e), t) if t.is_none_or(|t| e <= t) => {
                    let event = self.events[self.next_event].clone();
                    self.next_event += 1;
                    self.clock.advance_to(e)?;
                    self.apply_event(&event);
                    out.events.push(event);
                }
                (_, Some(t)) => {
                    self.clock.advance_to(t)?;
                    self.emit(t, &mut out.samples);
                    self.next_tick += self.kpi.period_ms;
                }
                _ => break,
            }
        }
        self.clock.advance_to(to_ms)?;
        Ok(out)
    }

    fn apply_event(&mut self, e: &ScenarioEvent) {
        debug!("t={} {}", self.clock.now(), e.describe());
        let (ctrl, local) = e.target.split_once(':').expect("checked at load");
        let c = self.controllers.get_mut(ctrl).expect("checked at load");
        match e.kind {
            EventKind::FailLink | EventKind::RestoreLink => {
                let l = c
                    .links
                    .iter_mut()
                    .find(|l| l.id == local)
                    .expect("checked at load");
                l.usable = e.kind == EventKind::RestoreLink;
            }
            EventKind::RemoveNode => {
                c.switches.remove(local);
            }
            EventKind::AddLink => {
                c.links.push(SimLink {
                    id: local.to_string(),
                    a: e.a.clone().expect("checked at load"),
                    b: e.b.clone().expect("checked at load"),
                    cost: e.cost,
                    usable: true,
                });
                self.add_streams(&e.target);
            }
        }
    }

    fn emit(&mut self, t: u64, out: &mut Vec<KpiSample>) {
        for c in self.controllers.values() {
            for l in c.links.iter().filter(|l| l.usable && c.present(l)) {
                let id = format!("{}:{}", c.controller_id, l.id);
                let streams = self.streams.get_mut(&id).expect("streams per link");
                let values: AttributeSample = streams
                    .iter_mut()
                    .map(|s| (s.attribute().to_string(), s.sample(t)))
                    .collect();
                self.counters.insert(id.clone(), values.clone());
                out.push(KpiSample {
                    source_id: source_id(&c.controller_id, &l.a),
                    id,
                    ts_ms: t,
                    values,
                });
            }
        }
    }

    /// Counter reads of one switch. Failed links and links that were never
    /// sampled fail the read.
    pub fn read_device(&self, controller: &str, switch: &str) -> Vec<ReadOutcome> {
        let Some(c) = self.controllers.get(controller) else {
            return Vec::new();
        };
        if !c.switches.contains_key(switch) {
            return Vec::new();
        }
        c.links
            .iter()
            .filter(|l| l.a == switch)
            .map(|l| {
                let id = format!("{controller}:{}", l.id);
                let r = match self.counters.get(&id) {
                    Some(v) if l.usable && c.present(l) => Ok(v.clone()),
                    _ => Err(DeviceReadFailure(id.clone())),
                };
                (id, r)
            })
            .collect()
    }

    /// The controller's current view in the export format. Failed links stay
    /// with `usable = false`; removed switches and their links are gone.
    pub fn export_topology(&self, controller: &str) -> Result<TopologyDocument, NetsimError> {
        let c = self.controller(controller)?;
        Ok(TopologyDocument {
            controller_id: c.controller_id.clone(),
            nodes: c
                .switches
                .iter()
                .map(|(id, s)| NodeEntry {
                    id: id.clone(),
                    cost: s.cost,
                })
                .collect(),
            links: c
                .links
                .iter()
                .filter(|l| c.present(l))
                .map(|l| LinkEntry {
                    a: l.a.clone(),
                    b: l.b.clone(),
                    link_id: l.id.clone(),
                    attrs: l
                        .cost
                        .map(|v| ("cost".to_string(), v))
                        .into_iter()
                        .collect(),
                    usable: l.usable,
                })
                .collect(),
            // a removed designated switch leaves the choice to the importer
            designated: c
                .switches
                .contains_key(&c.designated)
                .then(|| c.designated.clone()),
        })
    }

    /// Replaces the installed next hops of every (device, destination) in
    /// the section. Devices must be live switches of `controller`.
    pub fn apply_install(
        &mut self,
        controller: &str,
        section: &ControllerSection,
    ) -> Result<InstallAck, NetsimError> {
        let c = self
            .controllers
            .get(controller)
            .ok_or_else(|| NetsimError::UnknownController(controller.to_string()))?;
        let own = |n: &NodeId| n.ns() == controller && c.switches.contains_key(n.local());
        for e in &section.entries {
            if !own(&e.device) {
                return Err(NetsimError::UnknownDevice(e.device.to_string()));
            }
            for h in &e.next_hops {
                if let NextHop::Device { node } = h {
                    if !own(node) {
                        return Err(NetsimError::UnknownDevice(node.to_string()));
                    }
                }
            }
        }
        if section.entries.is_empty() {
            return Ok(InstallAck { entries: 0 });
        }
        let c = self
            .controllers
            .get_mut(controller)
            .expect("looked up above");
        for e in &section.entries {
            c.routes
                .insert((e.device.clone(), e.dst.clone()), e.next_hops.clone());
        }
        self.installs.push(InstallRecord {
            at_ms: self.clock.now(),
            controller_id: controller.to_string(),
            entries: section.entries.len(),
        });
        Ok(InstallAck {
            entries: section.entries.len(),
        })
    }

    pub fn installed(&self, device: &NodeId, dst: &NodeId) -> Option<&[NextHop]> {
        self.controllers
            .get(device.ns())
            .and_then(|c| c.routes.get(&(device.clone(), dst.clone())))
            .map(Vec::as_slice)
    }

    fn alive(&self, n: &NodeId) -> bool {
        self.controllers
            .get(n.ns())
            .is_some_and(|c| c.switches.contains_key(n.local()))
    }

    /// Forwards from `src` towards `dst`, taking at every device the first
    /// installed next hop that is currently reachable.
    pub fn walk(&self, src: &NodeId, dst: &NodeId) -> Result<Walk, NetsimError> {
        for n in [src, dst] {
            if !self.alive(n) {
                return Err(NetsimError::UnknownDevice(n.to_string()));
            }
        }
        let mut path = vec![src.clone()];
        let mut seen = BTreeSet::from([src.clone()]);
        let mut cur = src.clone();
        loop {
            if &cur == dst {
                return Ok(Walk {
                    outcome: WalkOutcome::Delivered,
                    path,
                });
            }
            let Some(hops) = self.installed(&cur, dst) else {
                return Ok(Walk {
                    outcome: WalkOutcome::NoRoute,
                    path,
                });
            };
            let c = &self.controllers[cur.ns()];
            let next = hops.iter().find_map(|h| match h {
                NextHop::Device { node } => c
                    .live_between(cur.local(), node.local())
                    .then(|| node.clone()),
                NextHop::Exterior { via } => self.alive(via).then(|| via.clone()),
            });
            let Some(next) = next else {
                return Ok(Walk {
                    outcome: WalkOutcome::Blackhole,
                    path,
                });
            };
            path.push(next.clone());
            if !seen.insert(next.clone()) {
                return Ok(Walk {
                    outcome: WalkOutcome::Loop,
                    path,
                });
            }
            cur = next;
        }
    }
}
