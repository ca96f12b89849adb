//! The routing client: intent intake, topology collection, policy building,
//! the exchange with the routing server and install planning.
//!
//! [`IraasClient::submit_intent`] validates an intent and runs the pipeline
//! on its own thread. Controllers are reached through a [`ControllerAdapter`]
//! and the server through a [`RouteTransport`], so the same client drives the
//! in-process simulator and the socket transports.

mod plan;

pub use plan::{plan_install, ControllerSection, InstallEntry, InstallPlan, NextHop, RouteSegment};

use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    fuse_topologies, normalize_costs, ControllerTopology, FusedGraph, GraphError, NodeId,
    NormalizedGraph, TopologyDocument,
};
use crate::metric::{MetricError, MetricSpec};
use crate::route::{
    Algorithm, PolicyPackage, Ranking, RouteError, RouteResponse, RouteServer, RoutingLogic,
    TopologyDelta,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("intent {0} already submitted")]
    DuplicateIntentId(String),
    #[error("intent names no controllers")]
    NoControllers,
    #[error("controller {0} listed more than once")]
    DuplicateController(String),
    #[error("invalid intent: {0}")]
    InvalidIntent(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("no controller responded")]
    AllControllersUnreachable,
    #[error("controller {0} unreachable in strict mode")]
    ControllerUnreachable(String),
    #[error("malformed topology document from {controller}: {reason}")]
    MalformedTopologyDocument { controller: String, reason: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("route server unreachable: {0}")]
    ServerUnreachable(String),
    #[error("route server did not answer in time")]
    Timeout,
    #[error("route response rejected: {0}")]
    ResponseValidationFailed(String),
    #[error("route server error {code}: {message}")]
    Server { code: String, message: String },
    #[error("node {0} belongs to no known controller")]
    UnknownControllerForNode(String),
    #[error("install on {controller} failed: {reason}")]
    InstallFailed { controller: String, reason: String },
    #[error("unknown intent {0}")]
    UnknownIntent(String),
}

impl ClientError {
    /// Whether the error is an intent validation failure (as opposed to a
    /// runtime failure of the pipeline).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            ClientError::DuplicateIntentId(_)
                | ClientError::NoControllers
                | ClientError::DuplicateController(_)
                | ClientError::InvalidIntent(_)
                | ClientError::Metric(_)
        )
    }

    pub fn code(&self) -> String {
        match self {
            ClientError::DuplicateIntentId(_) => "DuplicateIntentId".into(),
            ClientError::NoControllers => "NoControllers".into(),
            ClientError::DuplicateController(_) => "DuplicateController".into(),
            ClientError::InvalidIntent(_) => "InvalidIntent".into(),
            ClientError::Metric(MetricError::WeightSumViolation { .. }) => {
                "WeightSumViolation".into()
            }
            ClientError::Metric(_) => "MetricError".into(),
            ClientError::AllControllersUnreachable => "AllControllersUnreachable".into(),
            ClientError::ControllerUnreachable(_) => "ControllerUnreachable".into(),
            ClientError::MalformedTopologyDocument { .. } => "MalformedTopologyDocument".into(),
            ClientError::Graph(_) => "GraphError".into(),
            ClientError::ServerUnreachable(_) => "ServerUnreachable".into(),
            ClientError::Timeout => "Timeout".into(),
            ClientError::ResponseValidationFailed(_) => "ResponseValidationFailed".into(),
            ClientError::Server { code, .. } => code.clone(),
            ClientError::UnknownControllerForNode(_) => "UnknownControllerForNode".into(),
            ClientError::InstallFailed { .. } => "InstallFailed".into(),
            ClientError::UnknownIntent(_) => "UnknownIntent".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Sdn,
    NonSdn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerEndpoint {
    pub controller_id: String,
    pub kind: ControllerKind,
    /// `host:port` of the controller's management interface.
    pub address: String,
    /// Passed through to the adapter untouched.
    #[serde(default)]
    pub credentials: String,
}

fn d_k() -> usize {
    crate::route::DEFAULT_K
}

/// A route intent as submitted by an administrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteIntent {
    pub intent_id: String,
    pub controllers: Vec<ControllerEndpoint>,
    pub metric: MetricSpec,
    pub algorithm: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff_diameter: Option<usize>,
    #[serde(default = "d_k")]
    pub k_alternates: usize,
    pub pseudo_cost: f64,
    #[serde(default)]
    pub ranking: Ranking,
    /// Require every controller to respond.
    #[serde(default)]
    pub strict: bool,
}

impl RouteIntent {
    /// Local pre-flight checks, run before any controller is contacted.
    pub fn validate(&self) -> Result<(), ClientError> {
        if self.intent_id.is_empty() {
            return Err(ClientError::InvalidIntent("empty intent_id".into()));
        }
        if self.controllers.is_empty() {
            return Err(ClientError::NoControllers);
        }
        let mut seen = BTreeSet::new();
        for c in &self.controllers {
            if !seen.insert(c.controller_id.as_str()) {
                return Err(ClientError::DuplicateController(c.controller_id.clone()));
            }
        }
        self.metric.clone().validate()?;
        Algorithm::parse(&self.algorithm).map_err(|e| ClientError::InvalidIntent(e.to_string()))?;
        if self.cutoff_diameter == Some(0) {
            return Err(ClientError::InvalidIntent(
                "cutoff_diameter must be >= 1".into(),
            ));
        }
        if self.k_alternates == 0 {
            return Err(ClientError::InvalidIntent(
                "k_alternates must be >= 1".into(),
            ));
        }
        if !(self.pseudo_cost.is_finite() && self.pseudo_cost > 0.0) {
            return Err(ClientError::InvalidIntent(format!(
                "pseudo_cost must be finite and > 0, got {}",
                self.pseudo_cost
            )));
        }
        Ok(())
    }

    pub fn logic(&self) -> RoutingLogic {
        RoutingLogic {
            metric: self.metric.clone(),
            algorithm: self.algorithm.clone(),
            cutoff_diameter: self.cutoff_diameter,
            k_alternates: self.k_alternates,
            seed_costs: BTreeMap::new(),
            ranking: self.ranking,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentStatus {
    Accepted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentAck {
    pub intent_id: String,
    pub status: IntentStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdapterError {
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("rejected: {0}")]
    Rejected(String),
}

/// Management interface of a downstream controller.
pub trait ControllerAdapter: Send + Sync {
    /// Raw topology export document (JSON).
    fn fetch_topology(&self, endpoint: &ControllerEndpoint) -> Result<String, AdapterError>;
    fn install(
        &self,
        endpoint: &ControllerEndpoint,
        section: &ControllerSection,
    ) -> Result<(), AdapterError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("timed out")]
    Timeout,
    #[error("{code}: {message}")]
    Remote { code: String, message: String },
}

/// Carries requests to the routing server. Responses are returned as the
/// JSON `route_response` document.
pub trait RouteTransport: Send + Sync {
    fn route_request(&self, wire: &[u8], as_of: u64) -> Result<Vec<u8>, TransportError>;
    fn refresh(&self, intent_id: &str, as_of: u64) -> Result<Vec<u8>, TransportError>;
    fn delta(
        &self,
        intent_id: &str,
        delta: &TopologyDelta,
        as_of: u64,
    ) -> Result<Vec<u8>, TransportError>;
}

/// Calls a server living in the same process.
pub struct LocalTransport(pub Arc<RouteServer>);

fn encode(r: Result<RouteResponse, RouteError>) -> Result<Vec<u8>, TransportError> {
    match r {
        Ok(resp) => Ok(serde_json::to_vec(&resp).expect("response serializes")),
        Err(e) => Err(TransportError::Remote {
            code: e.code().to_string(),
            message: e.to_string(),
        }),
    }
}

impl RouteTransport for LocalTransport {
    fn route_request(&self, wire: &[u8], as_of: u64) -> Result<Vec<u8>, TransportError> {
        encode(self.0.route_request(wire, as_of))
    }

    fn refresh(&self, intent_id: &str, as_of: u64) -> Result<Vec<u8>, TransportError> {
        encode(self.0.refresh(intent_id, as_of))
    }

    fn delta(
        &self,
        intent_id: &str,
        delta: &TopologyDelta,
        as_of: u64,
    ) -> Result<Vec<u8>, TransportError> {
        encode(self.0.delta(intent_id, delta, as_of))
    }
}

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

#[derive(Clone)]
pub struct ClientConfig {
    pub timeout: Duration,
    pub attempts: u32,
    /// First retry delay; doubles on every further attempt.
    pub backoff: Duration,
    /// Logical time handed to the server with each request.
    pub clock: Clock,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            timeout: Duration::from_secs(30),
            attempts: 3,
            backoff: Duration::from_millis(50),
            clock: Arc::new(|| 0),
        }
    }
}

impl std::fmt::Debug for ClientConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientConfig")
            .field("timeout", &self.timeout)
            .field("attempts", &self.attempts)
            .field("backoff", &self.backoff)
            .finish()
    }
}

/// Result of fetching every controller of an intent.
#[derive(Debug, Clone, PartialEq)]
pub struct FetchOutcome {
    pub topologies: Vec<ControllerTopology>,
    pub unreachable: Vec<String>,
}

/// Fetches and parses every controller's topology, in parallel. Results
/// keep endpoint order.
pub fn fetch_topologies(
    adapter: &dyn ControllerAdapter,
    endpoints: &[ControllerEndpoint],
    strict: bool,
) -> Result<FetchOutcome, ClientError> {
    if endpoints.is_empty() {
        return Err(ClientError::NoControllers);
    }
    let raw: Vec<Result<String, AdapterError>> = thread::scope(|s| {
        let handles: Vec<_> = endpoints
            .iter()
            .map(|ep| s.spawn(move || adapter.fetch_topology(ep)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fetch thread panicked"))
            .collect()
    });
    let mut out = FetchOutcome {
        topologies: Vec::new(),
        unreachable: Vec::new(),
    };
    for (ep, r) in endpoints.iter().zip(raw) {
        let malformed = |reason: String| ClientError::MalformedTopologyDocument {
            controller: ep.controller_id.clone(),
            reason,
        };
        match r {
            Ok(text) => {
                let doc: TopologyDocument =
                    serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
                if doc.controller_id != ep.controller_id {
                    return Err(malformed(format!(
                        "document names controller {}",
                        doc.controller_id
                    )));
                }
                let topo = ControllerTopology::from_document(&doc)
                    .map_err(|e| malformed(e.to_string()))?;
                out.topologies.push(topo);
            }
            Err(e) => {
                warn!("controller {} unreachable: {e}", ep.controller_id);
                if strict {
                    return Err(ClientError::ControllerUnreachable(ep.controller_id.clone()));
                }
                out.unreachable.push(ep.controller_id.clone());
            }
        }
    }
    if out.topologies.is_empty() {
        return Err(ClientError::AllControllersUnreachable);
    }
    Ok(out)
}

fn fuse_and_normalize(
    intent: &RouteIntent,
    topologies: &[ControllerTopology],
) -> Result<(FusedGraph, NormalizedGraph), ClientError> {
    let fused = fuse_topologies(topologies, intent.pseudo_cost)?;
    let graph = normalize_costs(&fused, &fused.node_costs)?;
    Ok((fused, graph))
}

/// Fuses, normalizes and seals the policy for `intent`. Byte-identical for
/// identical inputs.
pub fn build_policy(
    intent: &RouteIntent,
    topologies: &[ControllerTopology],
) -> Result<PolicyPackage, ClientError> {
    let (_, graph) = fuse_and_normalize(intent, topologies)?;
    Ok(PolicyPackage::seal(
        &intent.intent_id,
        &graph,
        intent.logic(),
    ))
}

/// Checks that a response belongs to `intent_id` and names only nodes of
/// `graph`.
pub fn validate_response(
    resp: &RouteResponse,
    intent_id: &str,
    graph: &NormalizedGraph,
) -> Result<(), ClientError> {
    let bad = |m: String| Err(ClientError::ResponseValidationFailed(m));
    if resp.intent_id != intent_id {
        return bad(format!("response for intent {}", resp.intent_id));
    }
    let known = |n: &NodeId| graph.contains(n) && graph.src_vertex(n).is_some();
    for p in &resp.pairs {
        for n in [&p.src, &p.dst] {
            if !known(n) {
                return bad(format!("unknown node {n}"));
            }
        }
        for (i, r) in p.routes.iter().enumerate() {
            if r.rank != i + 1 {
                return bad(format!("ranks of {}->{} are not 1..n", p.src, p.dst));
            }
            if r.path.first() != Some(&p.src) || r.path.last() != Some(&p.dst) {
                return bad(format!("route of {}->{} has wrong endpoints", p.src, p.dst));
            }
            if let Some(n) = r.path.iter().find(|n| !known(n)) {
                return bad(format!("unknown node {n}"));
            }
        }
    }
    Ok(())
}

/// Runs one server call under the deadline and retry policy. Only
/// unreachability is retried.
fn call_server<F>(config: &ClientConfig, call: F) -> Result<Vec<u8>, ClientError>
where
    F: Fn() -> Result<Vec<u8>, TransportError> + Send + Sync + 'static,
{
    let call = Arc::new(call);
    let mut delay = config.backoff;
    let mut last = String::new();
    for attempt in 1..=config.attempts.max(1) {
        let (tx, rx) = mpsc::channel();
        let c = Arc::clone(&call);
        thread::spawn(move || {
            let _ = tx.send(c());
        });
        match rx.recv_timeout(config.timeout) {
            Err(_) | Ok(Err(TransportError::Timeout)) => return Err(ClientError::Timeout),
            Ok(Ok(bytes)) => return Ok(bytes),
            Ok(Err(TransportError::Remote { code, message })) => {
                return Err(ClientError::Server { code, message })
            }
            Ok(Err(TransportError::Unreachable(m))) => {
                debug!("server unreachable on attempt {attempt}: {m}");
                last = m;
                if attempt < config.attempts {
                    thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
    }
    Err(ClientError::ServerUnreachable(last))
}

fn decode_response(bytes: &[u8]) -> Result<RouteResponse, ClientError> {
    serde_json::from_slice(bytes).map_err(|e| ClientError::ResponseValidationFailed(e.to_string()))
}

/// Sends the package and validates the answer.
pub fn request_routes(
    config: &ClientConfig,
    transport: Arc<dyn RouteTransport>,
    pkg: &PolicyPackage,
) -> Result<RouteResponse, ClientError> {
    let graph = NormalizedGraph::from_doc(&pkg.body.graph)?;
    let wire = pkg.to_bytes();
    let as_of = (config.clock)();
    let bytes = call_server(config, move || transport.route_request(&wire, as_of))?;
    let resp = decode_response(&bytes)?;
    validate_response(&resp, &pkg.body.intent_id, &graph)?;
    Ok(resp)
}

/// What one pipeline run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub response: RouteResponse,
    pub plan: InstallPlan,
    pub checksum: String,
    pub unreachable_controllers: Vec<String>,
}

/// What a resynchronization produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncOutcome {
    pub deltas: Vec<TopologyDelta>,
    /// A structural change (designated node, node cost) forced a new request.
    pub rebuilt: bool,
    pub outcome: PipelineOutcome,
}

struct Session {
    intent: RouteIntent,
    topologies: BTreeMap<String, ControllerTopology>,
    fused: Option<FusedGraph>,
    graph: Option<NormalizedGraph>,
    outcome: Option<Result<PipelineOutcome, ClientError>>,
}

struct Inner {
    config: ClientConfig,
    adapter: Arc<dyn ControllerAdapter>,
    transport: Arc<dyn RouteTransport>,
    sessions: Mutex<BTreeMap<String, Arc<Mutex<Session>>>>,
    running: Mutex<BTreeMap<String, JoinHandle<()>>>,
}

/// The client. Pipelines for one intent are serialized; distinct intents
/// run concurrently.
#[derive(Clone)]
pub struct IraasClient {
    inner: Arc<Inner>,
}

impl IraasClient {
    pub fn new(
        config: ClientConfig,
        adapter: Arc<dyn ControllerAdapter>,
        transport: Arc<dyn RouteTransport>,
    ) -> Self {
        IraasClient {
            inner: Arc::new(Inner {
                config,
                adapter,
                transport,
                sessions: Mutex::new(BTreeMap::new()),
                running: Mutex::new(BTreeMap::new()),
            }),
        }
    }

    /// Validates and registers the intent, then starts its pipeline in the
    /// background.
    pub fn submit_intent(&self, intent: RouteIntent) -> Result<IntentAck, ClientError> {
        intent.validate()?;
        let id = intent.intent_id.clone();
        let session = {
            let mut sessions = self.inner.sessions.lock().expect("session map poisoned");
            if sessions.contains_key(&id) {
                return Err(ClientError::DuplicateIntentId(id));
            }
            let s = Arc::new(Mutex::new(Session {
                intent,
                topologies: BTreeMap::new(),
                fused: None,
                graph: None,
                outcome: None,
            }));
            sessions.insert(id.clone(), Arc::clone(&s));
            s
        };
        info!("intent {id} accepted");
        let inner = Arc::clone(&self.inner);
        let handle = thread::spawn(move || {
            let mut s = session.lock().expect("session poisoned");
            let r = inner.run(&mut s);
            if let Err(e) = &r {
                warn!("intent {} failed: {e}", s.intent.intent_id);
            }
            s.outcome = Some(r);
        });
        self.inner
            .running
            .lock()
            .expect("handle map poisoned")
            .insert(id.clone(), handle);
        Ok(IntentAck {
            intent_id: id,
            status: IntentStatus::Accepted,
        })
    }

    fn session(&self, intent_id: &str) -> Result<Arc<Mutex<Session>>, ClientError> {
        self.inner
            .sessions
            .lock()
            .expect("session map poisoned")
            .get(intent_id)
            .cloned()
            .ok_or_else(|| ClientError::UnknownIntent(intent_id.to_string()))
    }

    /// Blocks until the intent's initial pipeline finished.
    pub fn wait(&self, intent_id: &str) -> Result<PipelineOutcome, ClientError> {
        let session = self.session(intent_id)?;
        let handle = self
            .inner
            .running
            .lock()
            .expect("handle map poisoned")
            .remove(intent_id);
        if let Some(h) = handle {
            h.join().expect("pipeline thread panicked");
        }
        let s = session.lock().expect("session poisoned");
        s.outcome.clone().expect("pipeline finished")
    }

    /// Current fused graph as sent to the server.
    pub fn graph(&self, intent_id: &str) -> Result<Option<NormalizedGraph>, ClientError> {
        Ok(self
            .session(intent_id)?
            .lock()
            .expect("session poisoned")
            .graph
            .clone())
    }

    /// Re-reads every controller and forwards the differences to the server
    /// as topology deltas, then re-plans and installs.
    pub fn sync(&self, intent_id: &str) -> Result<SyncOutcome, ClientError> {
        self.wait(intent_id)?;
        let session = self.session(intent_id)?;
        let mut s = session.lock().expect("session poisoned");
        let r = self.inner.sync(&mut s);
        if let Ok(o) = &r {
            s.outcome = Some(Ok(o.outcome.clone()));
        }
        r
    }

    /// Asks the server to re-weigh and re-rank with current telemetry.
    pub fn refresh(&self, intent_id: &str) -> Result<PipelineOutcome, ClientError> {
        self.wait(intent_id)?;
        let session = self.session(intent_id)?;
        let mut s = session.lock().expect("session poisoned");
        let inner = &self.inner;
        let id = intent_id.to_string();
        let transport = Arc::clone(&inner.transport);
        let as_of = (inner.config.clock)();
        let bytes = call_server(&inner.config, move || transport.refresh(&id, as_of))?;
        let out = inner.finish(&s, &bytes)?;
        s.outcome = Some(Ok(out.clone()));
        Ok(out)
    }
}

impl Inner {
    fn run(&self, s: &mut Session) -> Result<PipelineOutcome, ClientError> {
        let fetched = fetch_topologies(
            self.adapter.as_ref(),
            &s.intent.controllers,
            s.intent.strict,
        )?;
        let (fused, graph) = fuse_and_normalize(&s.intent, &fetched.topologies)?;
        s.topologies = fetched
            .topologies
            .into_iter()
            .map(|t| (t.controller_id.clone(), t))
            .collect();
        let pkg = PolicyPackage::seal(&s.intent.intent_id, &graph, s.intent.logic());
        s.fused = Some(fused);
        s.graph = Some(graph);
        let response = request_routes(&self.config, Arc::clone(&self.transport), &pkg)?;
        let mut out = self.deliver(s, response)?;
        out.checksum = pkg.checksum;
        out.unreachable_controllers = fetched.unreachable;
        Ok(out)
    }

    fn finish(&self, s: &Session, bytes: &[u8]) -> Result<PipelineOutcome, ClientError> {
        let resp = decode_response(bytes)?;
        validate_response(
            &resp,
            &s.intent.intent_id,
            s.graph.as_ref().expect("pipeline ran"),
        )?;
        let mut out = self.deliver(s, resp)?;
        if let Some(Ok(prev)) = &s.outcome {
            out.checksum = prev.checksum.clone();
            out.unreachable_controllers = prev.unreachable_controllers.clone();
        }
        Ok(out)
    }

    /// Plans the install and hands every section to its controller.
    fn deliver(
        &self,
        s: &Session,
        response: RouteResponse,
    ) -> Result<PipelineOutcome, ClientError> {
        let known: BTreeSet<String> = s.topologies.keys().cloned().collect();
        let plan = plan_install(&response, &known)?;
        for (ctrl, section) in &plan.sections {
            let ep = s
                .intent
                .controllers
                .iter()
                .find(|e| &e.controller_id == ctrl)
                .expect("planned controllers come from the intent");
            self.adapter
                .install(ep, section)
                .map_err(|e| ClientError::InstallFailed {
                    controller: ctrl.clone(),
                    reason: e.to_string(),
                })?;
        }
        Ok(PipelineOutcome {
            response,
            plan,
            checksum: String::new(),
            unreachable_controllers: Vec::new(),
        })
    }

    fn sync(&self, s: &mut Session) -> Result<SyncOutcome, ClientError> {
        let fetched = fetch_topologies(
            self.adapter.as_ref(),
            &s.intent.controllers,
            s.intent.strict,
        )?;
        // a controller that stopped answering keeps its last known view
        let mut topologies = s.topologies.clone();
        for t in fetched.topologies {
            topologies.insert(t.controller_id.clone(), t);
        }
        let list: Vec<ControllerTopology> = topologies.values().cloned().collect();
        let (fused, graph) = fuse_and_normalize(&s.intent, &list)?;
        let old = s.fused.as_ref().expect("pipeline ran");
        let diff = diff_topologies(old, &fused);
        s.topologies = topologies;
        match diff {
            None => {
                info!("structural change, requesting routes again");
                let pkg = PolicyPackage::seal(&s.intent.intent_id, &graph, s.intent.logic());
                s.fused = Some(fused);
                s.graph = Some(graph);
                let response = request_routes(&self.config, Arc::clone(&self.transport), &pkg)?;
                let mut out = self.deliver(s, response)?;
                out.checksum = pkg.checksum;
                out.unreachable_controllers = fetched.unreachable;
                Ok(SyncOutcome {
                    deltas: Vec::new(),
                    rebuilt: true,
                    outcome: out,
                })
            }
            Some(deltas) if deltas.is_empty() => Ok(SyncOutcome {
                deltas,
                rebuilt: false,
                outcome: s.outcome.clone().expect("pipeline ran")?,
            }),
            Some(deltas) => {
                let mut last = None;
                for d in &deltas {
                    debug!("delta {d:?}");
                    let transport = Arc::clone(&self.transport);
                    let id = s.intent.intent_id.clone();
                    let delta = d.clone();
                    let as_of = (self.config.clock)();
                    last = Some(call_server(&self.config, move || {
                        transport.delta(&id, &delta, as_of)
                    })?);
                }
                s.fused = Some(fused);
                s.graph = Some(graph);
                let out = self.finish(s, &last.expect("at least one delta"))?;
                Ok(SyncOutcome {
                    deltas,
                    rebuilt: false,
                    outcome: out,
                })
            }
        }
    }
}

fn static_cost(l: &crate::graph::Link) -> f64 {
    l.attrs.get("cost").copied().unwrap_or(1.0)
}

/// Topology deltas turning `old` into `new`, or `None` when the change is
/// not expressible as deltas (designated nodes, node costs, pseudo links).
/// Links that vanish with a removed node are covered by the node removal.
pub fn diff_topologies(old: &FusedGraph, new: &FusedGraph) -> Option<Vec<TopologyDelta>> {
    if old.designated != new.designated
        || old.pseudo_node != new.pseudo_node
        || old.pseudo_links != new.pseudo_links
    {
        return None;
    }
    for n in old.nodes.intersection(&new.nodes) {
        let c = |g: &FusedGraph| g.node_costs.get(n).copied().unwrap_or(0.0);
        if c(old) != c(new) {
            return None;
        }
    }
    let mut out = Vec::new();
    for n in new.nodes.difference(&old.nodes) {
        out.push(TopologyDelta::NodeAdded {
            node: n.clone(),
            cost: new.node_costs.get(n).copied().unwrap_or(0.0),
        });
    }
    let old_links: BTreeMap<_, _> = old.links.iter().map(|l| (&l.id, l)).collect();
    let new_links: BTreeMap<_, _> = new.links.iter().map(|l| (&l.id, l)).collect();
    for (id, l) in &new_links {
        let revived = match old_links.get(id) {
            None => true,
            Some(o) => !o.usable && l.usable,
        };
        if revived && l.usable {
            out.push(TopologyDelta::LinkAdded {
                link: (*id).clone(),
                a: l.a.clone(),
                b: l.b.clone(),
                cost: static_cost(l),
            });
        }
    }
    for (id, l) in &old_links {
        let gone_node = !new.nodes.contains(&l.a) || !new.nodes.contains(&l.b);
        let dead = match new_links.get(id) {
            None => true,
            Some(n) => !n.usable,
        };
        if l.usable && dead && !gone_node {
            out.push(TopologyDelta::LinkRemoved {
                link: (*id).clone(),
            });
        }
    }
    for n in old.nodes.difference(&new.nodes) {
        out.push(TopologyDelta::NodeRemoved { node: n.clone() });
    }
    Some(out)
}

#[cfg(test)]
pub(crate) mod tests;
