use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::*;
use crate::graph::{LinkEntry, NodeEntry};
use crate::route::{RouteEntry, ServerConfig};

/// Controllers kept as documents; `None` means unreachable.
#[derive(Default)]
pub(crate) struct FakeAdapter {
    pub docs: Mutex<BTreeMap<String, Option<String>>>,
    pub fetches: AtomicUsize,
    pub installs: Mutex<Vec<(String, ControllerSection)>>,
}

impl FakeAdapter {
    pub fn with(docs: &[TopologyDocument]) -> Self {
        let a = FakeAdapter::default();
        for d in docs {
            a.set(d);
        }
        a
    }

    pub fn set(&self, d: &TopologyDocument) {
        self.docs.lock().unwrap().insert(
            d.controller_id.clone(),
            Some(serde_json::to_string(d).unwrap()),
        );
    }

    pub fn down(&self, id: &str) {
        self.docs.lock().unwrap().insert(id.to_string(), None);
    }
}

impl ControllerAdapter for FakeAdapter {
    fn fetch_topology(&self, ep: &ControllerEndpoint) -> Result<String, AdapterError> {
        self.fetches.fetch_add(1, Ordering::SeqCst);
        self.docs
            .lock()
            .unwrap()
            .get(&ep.controller_id)
            .cloned()
            .flatten()
            .ok_or_else(|| AdapterError::Unreachable(ep.controller_id.clone()))
    }

    fn install(
        &self,
        ep: &ControllerEndpoint,
        section: &ControllerSection,
    ) -> Result<(), AdapterError> {
        self.installs
            .lock()
            .unwrap()
            .push((ep.controller_id.clone(), section.clone()));
        Ok(())
    }
}

pub(crate) fn doc(
    ctrl: &str,
    edges: &[(&str, &str, f64)],
    designated: Option<&str>,
) -> TopologyDocument {
    let mut nodes: Vec<String> = edges
        .iter()
        .flat_map(|(a, b, _)| [a.to_string(), b.to_string()])
        .collect();
    nodes.sort();
    nodes.dedup();
    TopologyDocument {
        controller_id: ctrl.into(),
        nodes: nodes
            .into_iter()
            .map(|id| NodeEntry { id, cost: 0.0 })
            .collect(),
        links: edges
            .iter()
            .enumerate()
            .map(|(i, (a, b, c))| LinkEntry {
                a: a.to_string(),
                b: b.to_string(),
                link_id: format!("l{}", i + 1),
                attrs: BTreeMap::from([("cost".to_string(), *c)]),
                usable: true,
            })
            .collect(),
        designated: designated.map(str::to_string),
    }
}

fn triangle(ctrl: &str) -> TopologyDocument {
    doc(
        ctrl,
        &[("a", "b", 1.0), ("b", "c", 1.0), ("a", "c", 3.0)],
        Some("a"),
    )
}

fn endpoint(id: &str) -> ControllerEndpoint {
    ControllerEndpoint {
        controller_id: id.into(),
        kind: ControllerKind::Sdn,
        address: format!("{id}.local:830"),
        credentials: "secret".into(),
    }
}

pub(crate) fn intent(id: &str, ctrls: &[&str]) -> RouteIntent {
    RouteIntent {
        intent_id: id.into(),
        controllers: ctrls.iter().map(|c| endpoint(c)).collect(),
        metric: MetricSpec::weighted_sum("lat", &[("latency", 1.0)]),
        algorithm: "spf".into(),
        cutoff_diameter: None,
        k_alternates: 3,
        pseudo_cost: 100.0,
        ranking: Ranking::ByCost,
        strict: false,
    }
}

fn n(s: &str) -> NodeId {
    NodeId::parse(s).unwrap()
}

fn client(adapter: Arc<FakeAdapter>) -> IraasClient {
    let server = Arc::new(RouteServer::new(ServerConfig::default(), None));
    IraasClient::new(
        ClientConfig::default(),
        adapter,
        Arc::new(LocalTransport(server)),
    )
}

#[test]
fn intent_document_round_trips() {
    let text = r#"{"intent_id":"i1","controllers":[{"controller_id":"c1","kind":"non-sdn","address":"10.0.0.1:830"}],
        "metric":{"name":"lat","kind":"weighted_sum","attributes":["latency"],"weights":[1.0],"transforms":["identity"]},
        "algorithm":"spf","pseudo_cost":50}"#;
    let i: RouteIntent = serde_json::from_str(text).unwrap();
    assert_eq!(i.k_alternates, 3);
    assert_eq!(i.controllers[0].kind, ControllerKind::NonSdn);
    assert_eq!(i.ranking, Ranking::ByCost);
    i.validate().unwrap();
}

#[test]
fn submit_accepts_and_runs_the_pipeline() {
    let adapter = Arc::new(FakeAdapter::with(&[triangle("c1")]));
    let c = client(Arc::clone(&adapter));
    let ack = c.submit_intent(intent("i1", &["c1"])).unwrap();
    assert_eq!(ack.status, IntentStatus::Accepted);
    let out = c.wait("i1").unwrap();
    assert_eq!(out.response.pairs.len(), 6);
    let ac = out.response.pair(&n("c1:a"), &n("c1:c")).unwrap();
    assert_eq!(ac.routes[0].path, vec![n("c1:a"), n("c1:b"), n("c1:c")]);
    assert_eq!(ac.routes[0].cost, 2.0);
    assert_eq!(adapter.installs.lock().unwrap().len(), 1);
}

#[test]
fn bad_weights_rejected_before_any_controller_contact() {
    let adapter = Arc::new(FakeAdapter::with(&[triangle("c1")]));
    let c = client(Arc::clone(&adapter));
    let mut i = intent("i1", &["c1"]);
    i.metric = MetricSpec::weighted_sum("x", &[("latency", 0.5), ("load", 0.4)]);
    let err = c.submit_intent(i).unwrap_err();
    assert!(matches!(
        err,
        ClientError::Metric(MetricError::WeightSumViolation { .. })
    ));
    assert_eq!(err.code(), "WeightSumViolation");
    assert!(err.is_validation());
    assert_eq!(adapter.fetches.load(Ordering::SeqCst), 0);
}

#[test]
fn reused_intent_id_and_empty_controllers() {
    let c = client(Arc::new(FakeAdapter::with(&[triangle("c1")])));
    c.submit_intent(intent("i1", &["c1"])).unwrap();
    assert_eq!(
        c.submit_intent(intent("i1", &["c1"])).unwrap_err(),
        ClientError::DuplicateIntentId("i1".into())
    );
    assert_eq!(
        c.submit_intent(intent("i2", &[])).unwrap_err(),
        ClientError::NoControllers
    );
    assert_eq!(
        c.submit_intent(intent("i3", &["c1", "c1"])).unwrap_err(),
        ClientError::DuplicateController("c1".into())
    );
    let mut bad = intent("i4", &["c1"]);
    bad.pseudo_cost = 0.0;
    assert!(matches!(
        c.submit_intent(bad),
        Err(ClientError::InvalidIntent(_))
    ));
}

#[test]
fn fetch_modes() {
    let adapter = FakeAdapter::with(&[triangle("c1"), triangle("c2")]);
    let eps = [endpoint("c1"), endpoint("c2")];
    assert_eq!(
        fetch_topologies(&adapter, &eps, false)
            .unwrap()
            .topologies
            .len(),
        2
    );
    adapter.down("c2");
    let lenient = fetch_topologies(&adapter, &eps, false).unwrap();
    assert_eq!(lenient.topologies.len(), 1);
    assert_eq!(lenient.unreachable, vec!["c2".to_string()]);
    assert_eq!(
        fetch_topologies(&adapter, &eps, true).unwrap_err(),
        ClientError::ControllerUnreachable("c2".into())
    );
    adapter.down("c1");
    assert_eq!(
        fetch_topologies(&adapter, &eps, false).unwrap_err(),
        ClientError::AllControllersUnreachable
    );
}

#[test]
fn missing_designated_defaults_to_highest_degree() {
    let d = doc(
        "c1",
        &[
            ("p", "q", 1.0),
            ("q", "r", 1.0),
            ("q", "s", 1.0),
            ("r", "s", 1.0),
        ],
        None,
    );
    // degree count on the document itself
    let mut degree: BTreeMap<&str, usize> = BTreeMap::new();
    for l in &d.links {
        *degree.entry(&l.a).or_default() += 1;
        *degree.entry(&l.b).or_default() += 1;
    }
    let best = degree
        .iter()
        .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(x.0)))
        .unwrap()
        .0;
    let adapter = FakeAdapter::with(&[d.clone()]);
    let out = fetch_topologies(&adapter, &[endpoint("c1")], false).unwrap();
    assert_eq!(out.topologies[0].designated, NodeId::new("c1", best));
    assert_eq!(best, &"q");
}

#[test]
fn malformed_documents_are_named() {
    let adapter = FakeAdapter::default();
    adapter.docs.lock().unwrap().insert(
        "c1".into(),
        Some("{\"controller_id\":\"c1\",\"nodes\":".into()),
    );
    assert!(matches!(
        fetch_topologies(&adapter, &[endpoint("c1")], false),
        Err(ClientError::MalformedTopologyDocument { controller, .. }) if controller == "c1"
    ));
    adapter.set(&triangle("other"));
    adapter.docs.lock().unwrap().insert(
        "c1".into(),
        Some(serde_json::to_string(&triangle("other")).unwrap()),
    );
    assert!(matches!(
        fetch_topologies(&adapter, &[endpoint("c1")], false),
        Err(ClientError::MalformedTopologyDocument { .. })
    ));
}

fn topologies(docs: &[TopologyDocument]) -> Vec<ControllerTopology> {
    docs.iter()
        .map(|d| ControllerTopology::from_document(d).unwrap())
        .collect()
}

#[test]
fn build_policy_counts_and_determinism() {
    let two = topologies(&[triangle("c1"), triangle("c2")]);
    let pkg = build_policy(&intent("i", &["c1", "c2"]), &two).unwrap();
    let g = NormalizedGraph::from_doc(&pkg.body.graph).unwrap();
    assert_eq!(g.originals().len(), 7);
    assert!(g.pseudo_node().is_some());

    let one = topologies(&[triangle("c1")]);
    let single = build_policy(&intent("i", &["c1"]), &one).unwrap();
    let g1 = NormalizedGraph::from_doc(&single.body.graph).unwrap();
    assert!(g1.pseudo_node().is_none());
    assert_eq!(g1.originals().len(), 3);

    let again = build_policy(&intent("i", &["c1", "c2"]), &two).unwrap();
    assert_eq!(again.checksum, pkg.checksum);
    assert_eq!(again.to_bytes(), pkg.to_bytes());
    crate::route::check_integrity(&pkg.to_bytes()).unwrap();
}

struct Scripted {
    calls: AtomicUsize,
    reply: Box<dyn Fn(usize) -> Result<Vec<u8>, TransportError> + Send + Sync>,
}

impl RouteTransport for Scripted {
    fn route_request(&self, _: &[u8], _: u64) -> Result<Vec<u8>, TransportError> {
        let i = self.calls.fetch_add(1, Ordering::SeqCst);
        (self.reply)(i)
    }
    fn refresh(&self, _: &str, _: u64) -> Result<Vec<u8>, TransportError> {
        unreachable!()
    }
    fn delta(&self, _: &str, _: &TopologyDelta, _: u64) -> Result<Vec<u8>, TransportError> {
        unreachable!()
    }
}

fn quick() -> ClientConfig {
    ClientConfig {
        timeout: Duration::from_millis(200),
        backoff: Duration::from_millis(1),
        ..ClientConfig::default()
    }
}

#[test]
fn healthy_server_populates_response() {
    let pkg = build_policy(&intent("i", &["c1"]), &topologies(&[triangle("c1")])).unwrap();
    let server = Arc::new(RouteServer::new(ServerConfig::default(), None));
    let resp = request_routes(&quick(), Arc::new(LocalTransport(server)), &pkg).unwrap();
    assert_eq!(resp.intent_id, "i");
    assert_eq!(resp.pairs.len(), 6);
}

#[test]
fn unreachable_server_is_retried_three_times() {
    let pkg = build_policy(&intent("i", &["c1"]), &topologies(&[triangle("c1")])).unwrap();
    let t = Arc::new(Scripted {
        calls: AtomicUsize::new(0),
        reply: Box::new(|_| Err(TransportError::Unreachable("refused".into()))),
    });
    let err = request_routes(&quick(), t.clone(), &pkg).unwrap_err();
    assert_eq!(err, ClientError::ServerUnreachable("refused".into()));
    assert_eq!(t.calls.load(Ordering::SeqCst), 3);

    // recovers on the third attempt
    let server = RouteServer::new(ServerConfig::default(), None);
    let good = serde_json::to_vec(&server.route_request(&pkg.to_bytes(), 0).unwrap()).unwrap();
    let t = Arc::new(Scripted {
        calls: AtomicUsize::new(0),
        reply: Box::new(move |i| {
            if i < 2 {
                Err(TransportError::Unreachable("refused".into()))
            } else {
                Ok(good.clone())
            }
        }),
    });
    assert!(request_routes(&quick(), t, &pkg).is_ok());
}

#[test]
fn slow_server_times_out() {
    let pkg = build_policy(&intent("i", &["c1"]), &topologies(&[triangle("c1")])).unwrap();
    let t = Arc::new(Scripted {
        calls: AtomicUsize::new(0),
        reply: Box::new(|_| {
            std::thread::sleep(Duration::from_millis(600));
            Ok(Vec::new())
        }),
    });
    assert_eq!(
        request_routes(&quick(), t, &pkg).unwrap_err(),
        ClientError::Timeout
    );
}

#[test]
fn response_naming_unknown_node_is_rejected() {
    let pkg = build_policy(&intent("i", &["c1"]), &topologies(&[triangle("c1")])).unwrap();
    let server = RouteServer::new(ServerConfig::default(), None);
    let mut resp = server.route_request(&pkg.to_bytes(), 0).unwrap();
    resp.pairs[0].routes[0].path.insert(1, n("c1:ghost"));
    let bytes = serde_json::to_vec(&resp).unwrap();
    let t = Arc::new(Scripted {
        calls: AtomicUsize::new(0),
        reply: Box::new(move |_| Ok(bytes.clone())),
    });
    assert!(matches!(
        request_routes(&quick(), t, &pkg),
        Err(ClientError::ResponseValidationFailed(_))
    ));
}

#[test]
fn server_errors_keep_their_code() {
    let pkg = build_policy(&intent("i", &["c1"]), &topologies(&[triangle("c1")])).unwrap();
    let mut bytes = pkg.to_bytes();
    let last = bytes.len() - 2;
    bytes[last] ^= 1;
    let server = Arc::new(RouteServer::new(ServerConfig::default(), None));
    let err = LocalTransport(server).route_request(&bytes, 0).unwrap_err();
    assert_eq!(
        err,
        TransportError::Remote {
            code: "ChecksumMismatch".into(),
            message: RouteError::ChecksumMismatch.to_string()
        }
    );
}

fn entry(path: &[&str], cost: f64, rank: usize) -> RouteEntry {
    RouteEntry {
        path: path.iter().map(|s| n(s)).collect(),
        cost,
        reliability: None,
        rank,
    }
}

fn response(pairs: Vec<(&str, &str, Vec<RouteEntry>)>) -> RouteResponse {
    RouteResponse {
        intent_id: "i".into(),
        pairs: pairs
            .into_iter()
            .map(|(s, d, routes)| crate::route::PairResponse {
                src: n(s),
                dst: n(d),
                unreachable: routes.is_empty(),
                routes,
            })
            .collect(),
        warnings: Vec::new(),
        recompute_counter: 0,
        as_of_ms: 0,
    }
}

fn ctrls(ids: &[&str]) -> BTreeSet<String> {
    ids.iter().map(|s| s.to_string()).collect()
}

#[test]
fn single_controller_next_hops_follow_rank() {
    let resp = response(vec![(
        "c1:s",
        "c1:d",
        vec![
            entry(&["c1:s", "c1:a", "c1:d"], 2.0, 1),
            entry(&["c1:s", "c1:b", "c1:d"], 3.0, 2),
            entry(&["c1:s", "c1:a", "c1:b", "c1:d"], 4.0, 3),
        ],
    )]);
    let plan = plan_install(&resp, &ctrls(&["c1"])).unwrap();
    assert_eq!(plan.sections.len(), 1);
    let e = plan.entry(&n("c1:s"), &n("c1:d")).unwrap();
    assert_eq!(
        e.next_hops,
        vec![
            NextHop::Device { node: n("c1:a") },
            NextHop::Device { node: n("c1:b") }
        ]
    );
}

/// Independent segment split: consecutive nodes with one namespace.
fn split(path: &[NodeId]) -> Vec<Vec<NodeId>> {
    let mut out: Vec<Vec<NodeId>> = Vec::new();
    let mut prev: Option<&str> = None;
    for node in path.iter().filter(|x| !x.is_pseudo()) {
        if prev == Some(node.ns()) {
            out.last_mut().unwrap().push(node.clone());
        } else {
            out.push(vec![node.clone()]);
        }
        prev = Some(node.ns());
    }
    out
}

#[test]
fn cross_controller_routes_split_into_segments() {
    let adapter = Arc::new(FakeAdapter::with(&[triangle("c1"), triangle("c2")]));
    let c = client(Arc::clone(&adapter));
    c.submit_intent(intent("i", &["c1", "c2"])).unwrap();
    let out = c.wait("i").unwrap();
    assert_eq!(out.plan.sections.len(), 2);
    let cross = out.response.pair(&n("c1:b"), &n("c2:c")).unwrap();
    assert!(cross.routes[0].path.iter().all(|x| !x.is_pseudo()));
    for p in &out.response.pairs {
        for r in &p.routes {
            let segs = split(&r.path);
            for (seq, seg) in segs.iter().enumerate() {
                let sec = &out.plan.sections[seg[0].ns()];
                assert!(sec.segments.iter().any(|s| s.src == p.src
                    && s.dst == p.dst
                    && s.rank == r.rank
                    && s.seq == seq
                    && &s.path == seg));
            }
        }
    }
    // the c1 designated node leaves through the exterior hop towards c2
    let e = out.plan.entry(&n("c1:a"), &n("c2:c")).unwrap();
    assert_eq!(e.next_hops[0], NextHop::Exterior { via: n("c2:a") });
    // sections only reference their own devices
    for (ctrl, sec) in &out.plan.sections {
        assert!(sec.entries.iter().all(|e| e.device.ns() == ctrl));
    }
    // the union of sections reproduces the response
    let rebuilt = out.plan.routes();
    for p in &out.response.pairs {
        let want: Vec<Vec<NodeId>> = p.routes.iter().map(|r| r.path.clone()).collect();
        assert_eq!(
            rebuilt
                .get(&(p.src.clone(), p.dst.clone()))
                .cloned()
                .unwrap_or_default(),
            want
        );
    }
    let installed: BTreeSet<String> = adapter
        .installs
        .lock()
        .unwrap()
        .iter()
        .map(|(c, _)| c.clone())
        .collect();
    assert_eq!(installed, ctrls(&["c1", "c2"]));
}

#[test]
fn unknown_namespace_in_plan() {
    let resp = response(vec![(
        "c9:s",
        "c9:d",
        vec![entry(&["c9:s", "c9:d"], 1.0, 1)],
    )]);
    assert_eq!(
        plan_install(&resp, &ctrls(&["c1"])).unwrap_err(),
        ClientError::UnknownControllerForNode("c9:s".into())
    );
}

#[test]
fn unreachable_pair_withdraws() {
    let resp = response(vec![("c1:s", "c1:d", vec![])]);
    let plan = plan_install(&resp, &ctrls(&["c1"])).unwrap();
    assert!(plan
        .entry(&n("c1:s"), &n("c1:d"))
        .unwrap()
        .next_hops
        .is_empty());
}

#[test]
fn sync_forwards_link_failure_as_delta() {
    let adapter = Arc::new(FakeAdapter::with(&[triangle("c1")]));
    let c = client(Arc::clone(&adapter));
    c.submit_intent(intent("i", &["c1"])).unwrap();
    let before = c.wait("i").unwrap();
    let mut d = triangle("c1");
    d.links[0].usable = false;
    adapter.set(&d);
    let s = c.sync("i").unwrap();
    assert_eq!(
        s.deltas,
        vec![TopologyDelta::LinkRemoved {
            link: crate::graph::LinkId::new("c1:l1")
        }]
    );
    assert!(!s.rebuilt);
    assert_eq!(
        s.outcome.response.recompute_counter,
        before.response.recompute_counter
    );
    let ab = s.outcome.response.pair(&n("c1:a"), &n("c1:b")).unwrap();
    assert_eq!(ab.routes[0].path, vec![n("c1:a"), n("c1:c"), n("c1:b")]);
    // nothing changed: no deltas
    assert!(c.sync("i").unwrap().deltas.is_empty());
}

#[test]
fn sync_with_new_designated_rebuilds() {
    let adapter = Arc::new(FakeAdapter::with(&[triangle("c1"), triangle("c2")]));
    let c = client(Arc::clone(&adapter));
    c.submit_intent(intent("i", &["c1", "c2"])).unwrap();
    c.wait("i").unwrap();
    let mut d = triangle("c2");
    d.designated = Some("b".into());
    adapter.set(&d);
    let s = c.sync("i").unwrap();
    assert!(s.rebuilt);
    let e = s.outcome.plan.entry(&n("c1:a"), &n("c2:c")).unwrap();
    assert_eq!(e.next_hops[0], NextHop::Exterior { via: n("c2:b") });
}
