//! End-to-end runs: simulator, telemetry, routing server and client wired
//! together on one logical clock, producing a [`RunReport`].
//!
//! The report is the machine-readable record of a run. It carries every
//! ranked route table the client received, the weighted graph behind each
//! of them, one entry per topology change and a telemetry summary, and it
//! contains no wall-clock data, so equal inputs give byte-identical reports.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{
    ClientConfig, ClientError, ControllerAdapter, IraasClient, LocalTransport, PipelineOutcome,
    RouteIntent, RouteTransport,
};
use crate::graph::{GraphDoc, NodeId};
use crate::metric::{evaluate_metric, sharpe_score, AttributeSample};
use crate::netsim::{load_scenario, NetsimError, ScenarioSpec, SimAdapter, SimDevice, Simulation};
use crate::route::{PairResponse, RouteServer, ServerConfig, Warning};
use crate::shellmon::{
    Agent, CollectionMode, ConnectionMode, HostRecord, HostRegistry, LoopbackPoll, MessageBus,
    PollTransport, ShellMon, ShellMonConfig, StoreStats, Subscription,
};
use crate::wire::{
    agent_service, bus_service, controller_service, route_service, TcpControllerAdapter, TcpPoll,
    TcpPublisher, TcpRouteTransport, WireServer,
};

pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_PIPELINE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("cannot parse {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("{message}")]
    Validation { code: String, message: String },
    #[error("{message}")]
    Runtime { code: String, message: String },
    #[error("unknown pair {src} -> {dst}")]
    UnknownPair { src: String, dst: String },
    #[error("unknown source {0}")]
    UnknownSource(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Io { .. } => EXIT_IO,
            PipelineError::Parse { .. } | PipelineError::Validation { .. } => EXIT_VALIDATION,
            PipelineError::Runtime { .. }
            | PipelineError::UnknownPair { .. }
            | PipelineError::UnknownSource(_) => EXIT_PIPELINE,
        }
    }

    /// Module-qualified error code, e.g. `metric-engine.WeightSumViolation`.
    pub fn code(&self) -> String {
        match self {
            PipelineError::Io { .. } => "iraas-cli.Io".into(),
            PipelineError::Parse { .. } => "iraas-cli.ParseError".into(),
            PipelineError::Validation { code, .. } | PipelineError::Runtime { code, .. } => {
                code.clone()
            }
            PipelineError::UnknownPair { .. } => "iraas-cli.UnknownPair".into(),
            PipelineError::UnknownSource(_) => "iraas-cli.UnknownSource".into(),
        }
    }
}

fn client_module(e: &ClientError) -> &'static str {
    match e {
        ClientError::Metric(_) => "metric-engine",
        ClientError::Graph(_) | ClientError::MalformedTopologyDocument { .. } => "graph-model",
        ClientError::Server { .. } => "route-engine",
        _ => "iraas-client",
    }
}

impl From<ClientError> for PipelineError {
    fn from(e: ClientError) -> Self {
        let code = format!("{}.{}", client_module(&e), e.code());
        let message = e.to_string();
        if e.is_validation() {
            PipelineError::Validation { code, message }
        } else {
            PipelineError::Runtime { code, message }
        }
    }
}

fn netsim_error(e: NetsimError) -> PipelineError {
    let name = match &e {
        NetsimError::BadSpec(_) => "BadSpec",
        NetsimError::ClockRegression { .. } => "ClockRegression",
        NetsimError::UnknownController(_) => "UnknownController",
        NetsimError::UnknownDevice(_) => "UnknownDevice",
    };
    let code = format!("netsim.{name}");
    let message = e.to_string();
    if matches!(e, NetsimError::BadSpec(_)) {
        PipelineError::Validation { code, message }
    } else {
        PipelineError::Runtime { code, message }
    }
}

fn read_file(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn load_scenario_file(path: &Path) -> Result<ScenarioSpec, PipelineError> {
    serde_json::from_str(&read_file(path)?).map_err(|e| PipelineError::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn load_intent_file(path: &Path) -> Result<RouteIntent, PipelineError> {
    serde_json::from_str(&read_file(path)?).map_err(|e| PipelineError::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn load_report(path: &Path) -> Result<RunReport, PipelineError> {
    serde_json::from_str(&read_file(path)?).map_err(|e| PipelineError::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the scenario seed.
    pub seed: Option<u64>,
    /// Split client, server, controllers and telemetry across sockets.
    pub distributed: bool,
    /// Recorded in the report as given.
    pub scenario_path: String,
    pub intent_path: String,
}

/// One route table as received by the client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub at_ms: u64,
    /// `intent`, `refresh` or the scenario events that caused the update.
    pub cause: String,
    pub recompute_counter: u64,
    /// Server-side weighted graph the table was ranked on.
    pub graph: GraphDoc,
    pub pairs: Vec<PairResponse>,
}

/// Reaction to a batch of scenario events applied at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceEvent {
    pub at_ms: u64,
    pub events: Vec<String>,
    pub deltas: usize,
    /// The change could not be expressed as deltas and routes were
    /// requested again.
    pub rebuilt: bool,
    pub recompute_before: u64,
    pub recompute_after: u64,
    pub recompute_delta: u64,
    /// Logical time from the event to the route table reflecting it.
    pub switchover_ms: u64,
    /// Pairs whose ranked routes changed, as `src -> dst`.
    pub changed_pairs: Vec<String>,
    /// Forwarding walks over the installed state between live switches.
    pub walks_checked: usize,
    pub walks_delivered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSummary {
    pub link: String,
    pub attributes: BTreeMap<String, AttributeStats>,
    /// Sharpe score of the link's cost series under the intent metric.
    #[serde(with = "crate::ext::opt")]
    pub reliability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub source_id: String,
    pub links: Vec<LinkSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryReport {
    pub mode: ConnectionMode,
    pub samples: usize,
    pub batches: u64,
    pub duplicates: u64,
    pub malformed: u64,
    pub sources: Vec<SourceSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub intent: String,
    pub intent_id: String,
    pub seed: u64,
    pub end_ms: u64,
    pub policy_checksum: String,
    pub unreachable_controllers: Vec<String>,
    pub timeline: Vec<TimelineEntry>,
    pub convergence: Vec<ConvergenceEvent>,
    pub warnings: Vec<Warning>,
    pub telemetry: TelemetryReport,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Route table in force at the end of the run.
    pub fn final_pairs(&self) -> &[PairResponse] {
        self.timeline
            .last()
            .map(|e| e.pairs.as_slice())
            .unwrap_or(&[])
    }

    pub fn routes(&self, src: &str, dst: &str) -> Result<&PairResponse, PipelineError> {
        let unknown = || PipelineError::UnknownPair {
            src: src.to_string(),
            dst: dst.to_string(),
        };
        let (s, d) = (
            NodeId::parse(src).map_err(|_| unknown())?,
            NodeId::parse(dst).map_err(|_| unknown())?,
        );
        self.final_pairs()
            .iter()
            .find(|p| p.src == s && p.dst == d)
            .ok_or_else(unknown)
    }

    pub fn source(&self, source_id: &str) -> Result<&SourceSummary, PipelineError> {
        self.telemetry
            .sources
            .iter()
            .find(|s| s.source_id == source_id)
            .ok_or_else(|| PipelineError::UnknownSource(source_id.to_string()))
    }
}

fn stats(values: &[f64]) -> AttributeStats {
    let n = values.len();
    if n == 0 {
        return AttributeStats {
            count: 0,
            mean: 0.0,
            std: 0.0,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    AttributeStats {
        count: n,
        mean,
        std: var.sqrt(),
    }
}

/// Telemetry transports of one run.
enum Telemetry {
    Pull(Box<dyn PollTransport>),
    Push {
        agents: Vec<Arc<Mutex<Agent>>>,
        publish: Box<
            dyn Fn(&str, &crate::shellmon::KpiBatch) -> Result<(), crate::shellmon::ShellmonError>,
        >,
        subscription: Subscription,
    },
}

struct Harness {
    sim: Arc<Mutex<Simulation>>,
    now: Arc<AtomicU64>,
    shellmon: ShellMon,
    telemetry: Telemetry,
    server: Arc<RouteServer>,
    client: IraasClient,
    domain: String,
    // kept alive for the duration of the run
    _endpoints: Vec<WireServer>,
}

fn io_error(what: &str, e: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: what.to_string(),
        reason: e.to_string(),
    }
}

fn setup(spec: &ScenarioSpec, opts: &RunOptions) -> Result<Harness, PipelineError> {
    let sim = load_scenario(spec).map_err(netsim_error)?;
    let sources = sim.sources();
    let sim = Arc::new(Mutex::new(sim));
    let down: BTreeSet<&str> = spec
        .telemetry
        .down_sources
        .iter()
        .map(String::as_str)
        .collect();
    let mut endpoints = Vec::new();

    let mut agents = BTreeMap::new();
    for s in &sources {
        let mut agent = Agent::new(
            s.source_id.clone(),
            CollectionMode::AgentBased,
            Box::new(SimDevice::new(
                Arc::clone(&sim),
                &s.controller_id,
                &s.switch,
            )),
        );
        agent.set_up(!down.contains(s.source_id.as_str()));
        agents.insert(s.source_id.clone(), Arc::new(Mutex::new(agent)));
    }

    let agent_port = if opts.distributed && spec.telemetry.mode == ConnectionMode::Pull {
        let ep = WireServer::bind(agent_service(agents.clone()))
            .map_err(|e| io_error("agent endpoint", e))?;
        let port = ep.addr().port();
        endpoints.push(ep);
        port
    } else {
        0
    };
    let mut registry = HostRegistry::default();
    for s in &sources {
        registry
            .insert(HostRecord {
                source_id: s.source_id.clone(),
                hostname: "127.0.0.1".into(),
                port: agent_port,
                credentials: String::new(),
                content_type: "application/json".into(),
                connection_mode: spec.telemetry.mode,
                collection_mode: CollectionMode::AgentBased,
            })
            .map_err(|e| PipelineError::Validation {
                code: "shellmon.DuplicateSourceId".into(),
                message: e.to_string(),
            })?;
    }
    let period = sim.lock().expect("simulation lock").period_ms();
    let config = ShellMonConfig {
        poll_interval_ms: period,
        ..ShellMonConfig::default()
    };
    let domain = config.domain.clone();
    let shellmon = ShellMon::new(config, registry);

    let telemetry = match spec.telemetry.mode {
        ConnectionMode::Pull => {
            let transport: Box<dyn PollTransport> = if opts.distributed {
                Box::new(TcpPoll)
            } else {
                let mut lb = LoopbackPoll::new();
                for a in agents.values() {
                    lb.register(Arc::clone(a));
                }
                Box::new(lb)
            };
            Telemetry::Pull(transport)
        }
        ConnectionMode::Push => {
            let bus = MessageBus::new();
            let subscription = shellmon
                .run_subscription(&shellmon.push_topics(), &bus)
                .expect("fresh bus accepts subscriptions");
            let publish: Box<
                dyn Fn(
                    &str,
                    &crate::shellmon::KpiBatch,
                ) -> Result<(), crate::shellmon::ShellmonError>,
            > = if opts.distributed {
                let ep = WireServer::bind(bus_service(Arc::clone(&bus)))
                    .map_err(|e| io_error("bus endpoint", e))?;
                let publisher = TcpPublisher {
                    addr: ep.addr().to_string(),
                };
                endpoints.push(ep);
                Box::new(move |domain, batch| publisher.publish_batch(domain, batch))
            } else {
                Box::new(move |domain, batch| bus.publish_batch(domain, batch).map(|_| ()))
            };
            Telemetry::Push {
                agents: agents.values().cloned().collect(),
                publish,
                subscription,
            }
        }
    };

    let server = Arc::new(RouteServer::new(
        ServerConfig::default(),
        Some(Arc::clone(shellmon.store())),
    ));
    let sim_adapter: Arc<dyn ControllerAdapter> = Arc::new(SimAdapter::new(Arc::clone(&sim)));
    let (adapter, transport): (Arc<dyn ControllerAdapter>, Arc<dyn RouteTransport>) =
        if opts.distributed {
            let ctrl = WireServer::bind(controller_service(sim_adapter))
                .map_err(|e| io_error("controller endpoint", e))?;
            let route = WireServer::bind(route_service(Arc::clone(&server)))
                .map_err(|e| io_error("route endpoint", e))?;
            let pair = (
                Arc::new(TcpControllerAdapter {
                    addr: ctrl.addr().to_string(),
                }) as Arc<dyn ControllerAdapter>,
                Arc::new(TcpRouteTransport {
                    addr: route.addr().to_string(),
                    timeout: Some(Duration::from_secs(60)),
                }) as Arc<dyn RouteTransport>,
            );
            endpoints.push(ctrl);
            endpoints.push(route);
            pair
        } else {
            (sim_adapter, Arc::new(LocalTransport(Arc::clone(&server))))
        };
    let now = Arc::new(AtomicU64::new(0));
    let clock = Arc::clone(&now);
    let client = IraasClient::new(
        ClientConfig {
            timeout: Duration::from_secs(60),
            clock: Arc::new(move || clock.load(Ordering::SeqCst)),
            ..ClientConfig::default()
        },
        adapter,
        transport,
    );
    Ok(Harness {
        sim,
        now,
        shellmon,
        telemetry,
        server,
        client,
        domain,
        _endpoints: endpoints,
    })
}

impl Harness {
    fn collect(&self, t: u64) {
        match &self.telemetry {
            Telemetry::Pull(transport) => {
                for (id, r) in self.shellmon.poll_all(transport.as_ref(), t) {
                    if let Err(e) = r {
                        debug!("t={t} poll {id}: {e}");
                    }
                }
            }
            Telemetry::Push {
                agents,
                publish,
                subscription,
            } => {
                for a in agents {
                    let mut agent = a.lock().expect("agent lock");
                    if !agent.is_up() {
                        continue;
                    }
                    match agent.collect_cycle(t) {
                        Ok(batch) => {
                            if let Err(e) = publish(&self.domain, &batch) {
                                warn!("t={t} publish {}: {e}", agent.source_id());
                            }
                        }
                        Err(e) => debug!("t={t} collect {}: {e}", agent.source_id()),
                    }
                }
                subscription.drain_into(self.shellmon.store());
            }
        }
    }

    fn entry(
        &self,
        at_ms: u64,
        cause: String,
        out: &PipelineOutcome,
    ) -> Result<TimelineEntry, PipelineError> {
        let graph = self
            .server
            .weighted_graph(&out.response.intent_id)
            .map_err(|e| PipelineError::Runtime {
                code: format!("route-engine.{}", e.code()),
                message: e.to_string(),
            })?;
        Ok(TimelineEntry {
            at_ms,
            cause,
            recompute_counter: out.response.recompute_counter,
            graph: graph.to_doc(),
            pairs: out.response.pairs.clone(),
        })
    }

    /// Walks the installed state between every pair of live switches.
    fn walks(&self, pairs: &[PairResponse]) -> (usize, usize) {
        let sim = self.sim.lock().expect("simulation lock");
        let mut checked = 0;
        let mut delivered = 0;
        for p in pairs
            .iter()
            .filter(|p| !p.src.is_pseudo() && !p.dst.is_pseudo() && !p.unreachable)
        {
            if let Ok(w) = sim.walk(&p.src, &p.dst) {
                checked += 1;
                if w.delivered() {
                    delivered += 1;
                }
            }
        }
        (checked, delivered)
    }
}

fn changed_pairs(before: &[PairResponse], after: &[PairResponse]) -> Vec<String> {
    let old: BTreeMap<(&NodeId, &NodeId), &PairResponse> =
        before.iter().map(|p| ((&p.src, &p.dst), p)).collect();
    after
        .iter()
        .filter(|p| {
            old.get(&(&p.src, &p.dst))
                .is_none_or(|o| o.routes != p.routes || o.unreachable != p.unreachable)
        })
        .map(|p| format!("{} -> {}", p.src, p.dst))
        .collect()
}

fn telemetry_report(h: &Harness, intent: &RouteIntent, spec: &ScenarioSpec) -> TelemetryReport {
    let store = h.shellmon.store();
    let StoreStats {
        samples,
        batches,
        duplicates,
        malformed,
    } = store.stats();
    let metric = intent.metric.clone().validate().ok();
    let sim = h.sim.lock().expect("simulation lock");
    let mut sources = Vec::new();
    for s in sim.sources() {
        let mut links = Vec::new();
        for link in sim.source_links(&s.controller_id, &s.switch) {
            let series = store.series(&s.source_id, &link);
            let mut per_attr: BTreeMap<String, Vec<f64>> = spec
                .kpi_processes
                .for_link(&link)
                .keys()
                .map(|k| (k.clone(), Vec::new()))
                .collect();
            for sample in &series {
                for (k, v) in &sample.values {
                    per_attr.entry(k.clone()).or_default().push(*v);
                }
            }
            let reliability = metric.as_ref().and_then(|m| {
                let costs: Vec<f64> = series
                    .iter()
                    .filter_map(|x| evaluate_metric(m, &x.values as &AttributeSample).ok())
                    .collect();
                sharpe_score(costs, m.params.risk_free, m.params.epsilon)
            });
            links.push(LinkSummary {
                link,
                attributes: per_attr
                    .iter()
                    .map(|(k, v)| (k.clone(), stats(v)))
                    .collect(),
                reliability,
            });
        }
        sources.push(SourceSummary {
            source_id: s.source_id,
            links,
        });
    }
    TelemetryReport {
        mode: spec.telemetry.mode,
        samples,
        batches,
        duplicates,
        malformed,
        sources,
    }
}

/// Runs a scenario with an intent to the end of its schedule.
pub fn run(
    spec: &ScenarioSpec,
    intent: &RouteIntent,
    opts: &RunOptions,
) -> Result<RunReport, PipelineError> {
    // nothing is started for an invalid intent
    intent.validate()?;
    let mut spec = spec.clone();
    if let Some(seed) = opts.seed {
        spec.seed = seed;
    }
    let h = setup(&spec, opts)?;
    let period = h.sim.lock().expect("simulation lock").period_ms();
    let end = spec.end_ms();
    let intent_at = spec.schedule.intent_at_ms;

    let mut times: BTreeSet<u64> = (0..=end).step_by(period.max(1) as usize).collect();
    times.extend(spec.events.iter().map(|e| e.at_ms).filter(|&t| t <= end));
    times.insert(intent_at.min(end));
    if let Some(every) = spec.schedule.refresh_ms.filter(|&r| r > 0) {
        times.extend((intent_at..=end).step_by(every as usize).skip(1));
    }
    let refresh_at: BTreeSet<u64> = spec
        .schedule
        .refresh_ms
        .filter(|&r| r > 0)
        .map(|r| (intent_at..=end).step_by(r as usize).skip(1).collect())
        .unwrap_or_default();

    let id = intent.intent_id.clone();
    let mut timeline: Vec<TimelineEntry> = Vec::new();
    let mut convergence = Vec::new();
    let mut first: Option<PipelineOutcome> = None;
    for t in times {
        let adv = h
            .sim
            .lock()
            .expect("simulation lock")
            .advance(t)
            .map_err(netsim_error)?;
        h.now.store(t, Ordering::SeqCst);
        if t % period == 0 {
            h.collect(t);
        }
        if t == intent_at.min(end) && first.is_none() {
            info!("t={t} submitting intent {id}");
            h.client.submit_intent(intent.clone())?;
            let out = h.client.wait(&id)?;
            timeline.push(h.entry(t, "intent".into(), &out)?);
            first = Some(out);
            // events at this instant are already in the fetched topology
            continue;
        }
        if first.is_none() {
            continue;
        }
        if !adv.events.is_empty() {
            let before = timeline.last().expect("intent entry").clone();
            let sync = h.client.sync(&id)?;
            let resp = &sync.outcome.response;
            let cause = adv.events.iter().map(|e| e.describe()).collect::<Vec<_>>();
            let entry = h.entry(t, cause.join("; "), &sync.outcome)?;
            let (walks_checked, walks_delivered) = h.walks(&resp.pairs);
            convergence.push(ConvergenceEvent {
                at_ms: t,
                events: cause,
                deltas: sync.deltas.len(),
                rebuilt: sync.rebuilt,
                recompute_before: before.recompute_counter,
                recompute_after: resp.recompute_counter,
                recompute_delta: resp
                    .recompute_counter
                    .saturating_sub(before.recompute_counter),
                switchover_ms: resp.as_of_ms.saturating_sub(t),
                changed_pairs: changed_pairs(&before.pairs, &resp.pairs),
                walks_checked,
                walks_delivered,
            });
            timeline.push(entry);
        }
        if refresh_at.contains(&t) {
            let out = h.client.refresh(&id)?;
            timeline.push(h.entry(t, "refresh".into(), &out)?);
        }
    }
    let first = first.expect("intent submitted before end");
    let last_warnings = match h.client.wait(&id) {
        Ok(o) => o.response.warnings,
        Err(_) => first.response.warnings.clone(),
    };
    let telemetry = telemetry_report(&h, intent, &spec);
    Ok(RunReport {
        scenario: opts.scenario_path.clone(),
        intent: opts.intent_path.clone(),
        intent_id: id,
        seed: spec.seed,
        end_ms: end,
        policy_checksum: first.checksum.clone(),
        unreachable_controllers: first.unreachable_controllers.clone(),
        timeline,
        convergence,
        warnings: last_warnings,
        telemetry,
    })
}

/// Reads both files, runs, and returns the report.
pub fn run_files(
    scenario: &Path,
    intent_path: &Path,
    opts: &RunOptions,
) -> Result<RunReport, PipelineError> {
    let spec = load_scenario_file(scenario)?;
    let intent = load_intent_file(intent_path)?;
    let opts = RunOptions {
        scenario_path: scenario.display().to_string(),
        intent_path: intent_path.display().to_string(),
        ..opts.clone()
    };
    run(&spec, &intent, &opts)
}
