//! Graph data model, multi-controller topology fusion and cost normalization.
//!
//! Controller topologies arrive as [`TopologyDocument`]s. Every node and link
//! identifier is qualified by the controller that exported it, so fusing
//! several controllers is a plain union plus one pseudo-node that joins the
//! designated node of each controller.
//!
//! [`normalize_costs`] folds per-node computational cost into the edge set by
//! splitting every costly node `v` into `v#in -> v#out`. The result is a
//! directed graph: an undirected link `(u, v)` becomes the arcs
//! `u#out -> v#in` and `v#out -> u#in` (or the plain vertex when a side is not
//! split). A path entering and leaving `v` crosses the internal arc exactly
//! once, so its cost is the sum of edge costs plus the cost of every transit
//! node. Path endpoints do not pay their own node cost.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved namespace of the fusion pseudo-node.
pub const PSEUDO_NS: &str = "pseudo";
const PSEUDO_LOCAL: &str = "vp";
const SPLIT_IN: &str = "#in";
const SPLIT_OUT: &str = "#out";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("no topologies supplied")]
    EmptyInput,
    #[error("controller {0} supplied more than once")]
    DuplicateController(String),
    #[error("designated node {node} is not part of controller {controller}")]
    InvalidDesignated { controller: String, node: String },
    #[error("pseudo-link cost must be finite and > 0, got {0}")]
    BadPseudoCost(f64),
    #[error("negative or non-finite cost {cost} on {node}")]
    NegativeCost { node: String, cost: f64 },
    #[error("bad identifier {0:?}")]
    BadIdentifier(String),
    #[error("link {link} references unknown node {node}")]
    DanglingLink { link: String, node: String },
    #[error("node {node} does not belong to controller {controller}")]
    ForeignNode { controller: String, node: String },
    #[error("duplicate identifier {0}")]
    Duplicate(String),
    #[error("topology is not a simple graph: {0:?}")]
    NotSimple(Vec<Violation>),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("unknown link {0}")]
    UnknownLink(String),
}

/// Controller-qualified node identifier, rendered `controller_ns:local_id`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeId(String);

impl NodeId {
    /// Panics if `ns` is empty or contains `:`; use [`NodeId::parse`] for untrusted input.
    pub fn new(ns: &str, local: &str) -> Self {
        assert!(
            !ns.is_empty() && !ns.contains(':') && !local.is_empty(),
            "invalid node id {ns}:{local}"
        );
        NodeId(format!("{ns}:{local}"))
    }

    pub fn parse(rendered: &str) -> Result<Self, GraphError> {
        match rendered.split_once(':') {
            Some((ns, local)) if !ns.is_empty() && !local.is_empty() => {
                Ok(NodeId(rendered.to_string()))
            }
            _ => Err(GraphError::BadIdentifier(rendered.to_string())),
        }
    }

    pub fn pseudo() -> Self {
        NodeId::new(PSEUDO_NS, PSEUDO_LOCAL)
    }

    pub fn ns(&self) -> &str {
        self.0.split_once(':').map(|(ns, _)| ns).unwrap_or("")
    }

    pub fn local(&self) -> &str {
        self.0.split_once(':').map(|(_, l)| l).unwrap_or("")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_pseudo(&self) -> bool {
        self.ns() == PSEUDO_NS
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl TryFrom<String> for NodeId {
    type Error = GraphError;
    fn try_from(s: String) -> Result<Self, GraphError> {
        NodeId::parse(&s)
    }
}

impl From<NodeId> for String {
    fn from(n: NodeId) -> String {
        n.0
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub String);

impl LinkId {
    pub fn new(s: impl Into<String>) -> Self {
        LinkId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Undirected link between two distinct nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub a: NodeId,
    pub b: NodeId,
    #[serde(default)]
    pub attrs: BTreeMap<String, f64>,
    #[serde(default = "default_true")]
    pub usable: bool,
}

fn default_true() -> bool {
    true
}

impl Link {
    pub fn new(id: impl Into<String>, a: NodeId, b: NodeId) -> Self {
        Link {
            id: LinkId::new(id),
            a,
            b,
            attrs: BTreeMap::new(),
            usable: true,
        }
    }

    pub fn touches(&self, n: &NodeId) -> bool {
        &self.a == n || &self.b == n
    }

    pub fn other(&self, n: &NodeId) -> Option<&NodeId> {
        if &self.a == n {
            Some(&self.b)
        } else if &self.b == n {
            Some(&self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Violation {
    SelfLoop(NodeId),
    ParallelEdge(NodeId, NodeId),
}

/// Lists self-loops and parallel edges of an undirected edge list. Empty iff simple.
pub fn validate_simple<'a, I>(edges: I) -> Vec<Violation>
where
    I: IntoIterator<Item = (&'a NodeId, &'a NodeId)>,
{
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (a, b) in edges {
        if a == b {
            out.push(Violation::SelfLoop(a.clone()));
            continue;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        if !seen.insert(key) {
            out.push(Violation::ParallelEdge(key.0.clone(), key.1.clone()));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Controller export documents
// ---------------------------------------------------------------------------

/// Topology export document as produced by a controller (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyDocument {
    pub controller_id: String,
    pub nodes: Vec<NodeEntry>,
    pub links: Vec<LinkEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designated: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEntry {
    pub id: String,
    #[serde(default)]
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkEntry {
    pub a: String,
    pub b: String,
    pub link_id: String,
    #[serde(default)]
    pub attrs: BTreeMap<String, f64>,
    #[serde(default = "default_true")]
    pub usable: bool,
}

fn check_local(id: &str) -> Result<(), GraphError> {
    if id.is_empty() || id.contains(':') || id.contains('#') {
        return Err(GraphError::BadIdentifier(id.to_string()));
    }
    Ok(())
}

/// One controller's view: `G_j(V_j, E_j)` plus node costs and the designated node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerTopology {
    pub controller_id: String,
    pub nodes: BTreeSet<NodeId>,
    pub links: Vec<Link>,
    pub node_costs: BTreeMap<NodeId, f64>,
    pub designated: NodeId,
}

impl ControllerTopology {
    /// Parses and namespaces an export document. A missing designated node is
    /// replaced by the highest-degree node (ties: smallest id).
    pub fn from_document(doc: &TopologyDocument) -> Result<Self, GraphError> {
        let ctrl = doc.controller_id.as_str();
        if ctrl.is_empty() || ctrl.contains(':') || ctrl == PSEUDO_NS {
            return Err(GraphError::BadIdentifier(ctrl.to_string()));
        }
        let mut nodes = BTreeSet::new();
        let mut node_costs = BTreeMap::new();
        for n in &doc.nodes {
            check_local(&n.id)?;
            let id = NodeId::new(ctrl, &n.id);
            if !n.cost.is_finite() || n.cost < 0.0 {
                return Err(GraphError::NegativeCost {
                    node: id.to_string(),
                    cost: n.cost,
                });
            }
            if !nodes.insert(id.clone()) {
                return Err(GraphError::Duplicate(id.to_string()));
            }
            node_costs.insert(id, n.cost);
        }
        let mut links = Vec::with_capacity(doc.links.len());
        for l in &doc.links {
            check_local(&l.link_id)?;
            let a = NodeId::new(ctrl, &l.a);
            let b = NodeId::new(ctrl, &l.b);
            let mut link = Link::new(format!("{ctrl}:{}", l.link_id), a, b);
            link.attrs = l.attrs.clone();
            link.usable = l.usable;
            links.push(link);
        }
        let designated = match &doc.designated {
            Some(d) => NodeId::new(ctrl, d),
            None => highest_degree(&nodes, &links).ok_or(GraphError::InvalidDesignated {
                controller: ctrl.to_string(),
                node: "<none>".to_string(),
            })?,
        };
        let topo = ControllerTopology {
            controller_id: ctrl.to_string(),
            nodes,
            links,
            node_costs,
            designated,
        };
        topo.validate()?;
        Ok(topo)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        for n in &self.nodes {
            if n.ns() != self.controller_id {
                return Err(GraphError::ForeignNode {
                    controller: self.controller_id.clone(),
                    node: n.to_string(),
                });
            }
        }
        if !self.nodes.contains(&self.designated) {
            return Err(GraphError::InvalidDesignated {
                controller: self.controller_id.clone(),
                node: self.designated.to_string(),
            });
        }
        let mut ids = BTreeSet::new();
        for l in &self.links {
            if !ids.insert(&l.id) {
                return Err(GraphError::Duplicate(l.id.to_string()));
            }
            for end in [&l.a, &l.b] {
                if !self.nodes.contains(end) {
                    return Err(GraphError::DanglingLink {
                        link: l.id.to_string(),
                        node: end.to_string(),
                    });
                }
            }
        }
        for (n, c) in &self.node_costs {
            if !c.is_finite() || *c < 0.0 {
                return Err(GraphError::NegativeCost {
                    node: n.to_string(),
                    cost: *c,
                });
            }
        }
        let v = validate_simple(self.links.iter().map(|l| (&l.a, &l.b)));
        if !v.is_empty() {
            return Err(GraphError::NotSimple(v));
        }
        Ok(())
    }
}

/// Highest-degree node, ties broken by the smallest id.
pub fn highest_degree(nodes: &BTreeSet<NodeId>, links: &[Link]) -> Option<NodeId> {
    let mut degree: BTreeMap<&NodeId, usize> = nodes.iter().map(|n| (n, 0)).collect();
    for l in links {
        for end in [&l.a, &l.b] {
            if let Some(d) = degree.get_mut(end) {
                *d += 1;
            }
        }
    }
    // BTreeMap iterates ascending, so keeping the first maximum keeps the smallest id.
    let mut best: Option<(&NodeId, usize)> = None;
    for (n, d) in degree {
        if best.is_none_or(|(_, bd)| d > bd) {
            best = Some((n, d));
        }
    }
    best.map(|(n, _)| n.clone())
}

// ---------------------------------------------------------------------------
// Fusion
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLink {
    pub link: Link,
    #[serde(with = "crate::ext")]
    pub cost: f64,
}

/// Aggregated simple graph over all contributing controllers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedGraph {
    pub nodes: BTreeSet<NodeId>,
    pub links: Vec<Link>,
    pub pseudo_node: Option<NodeId>,
    pub pseudo_links: Vec<PseudoLink>,
    pub origin: BTreeMap<NodeId, String>,
    pub designated: BTreeMap<String, NodeId>,
    pub node_costs: BTreeMap<NodeId, f64>,
}

impl FusedGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len() + usize::from(self.pseudo_node.is_some())
    }

    pub fn link_count(&self) -> usize {
        self.links.len() + self.pseudo_links.len()
    }

    pub fn all_nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.iter().chain(self.pseudo_node.iter())
    }

    pub fn all_links(&self) -> impl Iterator<Item = &Link> {
        self.links
            .iter()
            .chain(self.pseudo_links.iter().map(|p| &p.link))
    }

    pub fn violations(&self) -> Vec<Violation> {
        validate_simple(self.all_links().map(|l| (&l.a, &l.b)))
    }
}

/// Unions namespaced controller graphs and, for more than one controller,
/// joins their designated nodes through a single pseudo-node.
pub fn fuse_topologies(
    topologies: &[ControllerTopology],
    pseudo_cost: f64,
) -> Result<FusedGraph, GraphError> {
    if topologies.is_empty() {
        return Err(GraphError::EmptyInput);
    }
    if !(pseudo_cost.is_finite() && pseudo_cost > 0.0) {
        return Err(GraphError::BadPseudoCost(pseudo_cost));
    }
    let mut seen = BTreeSet::new();
    for t in topologies {
        if !seen.insert(t.controller_id.as_str()) {
            return Err(GraphError::DuplicateController(t.controller_id.clone()));
        }
        t.validate()?;
    }

    let mut fused = FusedGraph {
        nodes: BTreeSet::new(),
        links: Vec::new(),
        pseudo_node: None,
        pseudo_links: Vec::new(),
        origin: BTreeMap::new(),
        designated: BTreeMap::new(),
        node_costs: BTreeMap::new(),
    };
    for t in topologies {
        for n in &t.nodes {
            fused.nodes.insert(n.clone());
            fused.origin.insert(n.clone(), t.controller_id.clone());
        }
        fused.links.extend(t.links.iter().cloned());
        fused
            .node_costs
            .extend(t.node_costs.iter().map(|(k, v)| (k.clone(), *v)));
        fused
            .designated
            .insert(t.controller_id.clone(), t.designated.clone());
    }
    fused.links.sort_by(|x, y| x.id.cmp(&y.id));

    if topologies.len() > 1 {
        let vp = NodeId::pseudo();
        for (ctrl, dn) in &fused.designated {
            fused.pseudo_links.push(PseudoLink {
                link: Link::new(format!("{PSEUDO_NS}:{ctrl}"), vp.clone(), dn.clone()),
                cost: pseudo_cost,
            });
        }
        fused.pseudo_node = Some(vp);
    }
    debug_assert!(fused.violations().is_empty());
    Ok(fused)
}

// ---------------------------------------------------------------------------
// Normalized (shortest-path-ready) graph
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Physical,
    Pseudo,
    Split,
}

/// A weighted link of the normalized graph. `a`/`b` are the original (fused)
/// endpoints; for split links they are the `#in`/`#out` halves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedLink {
    pub id: LinkId,
    pub kind: LinkKind,
    pub a: NodeId,
    pub b: NodeId,
    #[serde(with = "crate::ext")]
    pub cost: f64,
    /// False for failed or vanished links; their cost stays at `+inf`.
    pub usable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub link: usize,
}

/// Directed, simple, shortest-path-ready graph. Vertex and link indices are
/// append-only so structures built over one version stay valid after growth.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGraph {
    vertices: Vec<NodeId>,
    /// Original fused node each vertex belongs to.
    owner: Vec<NodeId>,
    vertex_index: BTreeMap<NodeId, usize>,
    links: Vec<WeightedLink>,
    link_index: BTreeMap<LinkId, usize>,
    arcs: Vec<Arc>,
    out_arcs: Vec<Vec<usize>>,
    in_arcs: Vec<Vec<usize>>,
    split_map: BTreeMap<NodeId, (NodeId, NodeId)>,
    originals: BTreeSet<NodeId>,
    pseudo_node: Option<NodeId>,
    origin: BTreeMap<NodeId, String>,
}

/// Splits every node with positive cost and reattaches incident links so a
/// transit path pays the node cost exactly once.
pub fn normalize_costs(
    g: &FusedGraph,
    node_costs: &BTreeMap<NodeId, f64>,
) -> Result<NormalizedGraph, GraphError> {
    for (n, c) in node_costs {
        if !c.is_finite() || *c < 0.0 {
            return Err(GraphError::NegativeCost {
                node: n.to_string(),
                cost: *c,
            });
        }
    }
    let violations = g.violations();
    if !violations.is_empty() {
        return Err(GraphError::NotSimple(violations));
    }
    let mut ng = NormalizedGraph::empty();
    ng.pseudo_node = g.pseudo_node.clone();
    ng.origin = g.origin.clone();
    for n in g.all_nodes() {
        let cost = node_costs.get(n).copied().unwrap_or(0.0);
        ng.insert_node(n.clone(), cost)?;
    }
    for l in &g.links {
        let cost = if l.usable {
            l.attrs.get("cost").copied().unwrap_or(1.0)
        } else {
            f64::INFINITY
        };
        ng.insert_link(l.id.clone(), LinkKind::Physical, &l.a, &l.b, cost)?;
    }
    for p in &g.pseudo_links {
        ng.insert_link(
            p.link.id.clone(),
            LinkKind::Pseudo,
            &p.link.a,
            &p.link.b,
            p.cost,
        )?;
    }
    Ok(ng)
}

/// Serializable description of a [`NormalizedGraph`]: original nodes with
/// their costs and the non-split links. Split pairs are rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDoc {
    pub nodes: Vec<GraphDocNode>,
    pub links: Vec<GraphDocLink>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_node: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocNode {
    pub id: NodeId,
    #[serde(with = "crate::ext")]
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocLink {
    pub id: LinkId,
    pub kind: LinkKind,
    pub a: NodeId,
    pub b: NodeId,
    #[serde(with = "crate::ext")]
    pub cost: f64,
    pub usable: bool,
}

impl NormalizedGraph {
    pub fn to_doc(&self) -> GraphDoc {
        let mut seen = BTreeSet::new();
        let mut nodes = Vec::with_capacity(self.originals.len());
        for owner in &self.owner {
            if seen.insert(owner) {
                nodes.push(GraphDocNode {
                    id: owner.clone(),
                    cost: self.node_cost(owner),
                    controller: self.origin.get(owner).cloned(),
                });
            }
        }
        let links = self
            .links
            .iter()
            .filter(|l| l.kind != LinkKind::Split)
            .map(|l| GraphDocLink {
                id: l.id.clone(),
                kind: l.kind,
                a: l.a.clone(),
                b: l.b.clone(),
                cost: l.cost,
                usable: l.usable,
            })
            .collect();
        GraphDoc {
            nodes,
            links,
            pseudo_node: self.pseudo_node.clone(),
        }
    }

    pub fn from_doc(doc: &GraphDoc) -> Result<Self, GraphError> {
        let violations = validate_simple(doc.links.iter().map(|l| (&l.a, &l.b)));
        if !violations.is_empty() {
            return Err(GraphError::NotSimple(violations));
        }
        let mut g = NormalizedGraph::empty();
        g.pseudo_node = doc.pseudo_node.clone();
        for n in &doc.nodes {
            if n.id.is_pseudo() && doc.pseudo_node.as_ref() != Some(&n.id) {
                return Err(GraphError::BadIdentifier(n.id.to_string()));
            }
            g.insert_node(n.id.clone(), n.cost)?;
            if let Some(c) = &n.controller {
                g.origin.insert(n.id.clone(), c.clone());
            }
        }
        for l in &doc.links {
            if l.kind == LinkKind::Split {
                return Err(GraphError::BadIdentifier(l.id.to_string()));
            }
            g.insert_link(l.id.clone(), l.kind, &l.a, &l.b, l.cost)?;
            let idx = g.link_index[&l.id];
            g.links[idx].usable = l.usable;
        }
        Ok(g)
    }

    /// Computational cost folded into a node (0 when it is not split).
    pub fn node_cost(&self, n: &NodeId) -> f64 {
        self.split_map
            .get(n)
            .and_then(|_| self.link_index.get(&LinkId::new(format!("split:{n}"))))
            .map(|&i| self.links[i].cost)
            .unwrap_or(0.0)
    }

    fn empty() -> Self {
        NormalizedGraph {
            vertices: Vec::new(),
            owner: Vec::new(),
            vertex_index: BTreeMap::new(),
            links: Vec::new(),
            link_index: BTreeMap::new(),
            arcs: Vec::new(),
            out_arcs: Vec::new(),
            in_arcs: Vec::new(),
            split_map: BTreeMap::new(),
            originals: BTreeSet::new(),
            pseudo_node: None,
            origin: BTreeMap::new(),
        }
    }

    fn push_vertex(&mut self, v: NodeId, owner: NodeId) -> usize {
        let idx = self.vertices.len();
        self.vertex_index.insert(v.clone(), idx);
        self.vertices.push(v);
        self.owner.push(owner);
        self.out_arcs.push(Vec::new());
        self.in_arcs.push(Vec::new());
        idx
    }

    fn push_arc(&mut self, from: usize, to: usize, link: usize) {
        let idx = self.arcs.len();
        self.arcs.push(Arc { from, to, link });
        self.out_arcs[from].push(idx);
        self.in_arcs[to].push(idx);
    }

    /// Adds an original node; a positive cost splits it into an in/out pair.
    pub fn insert_node(&mut self, n: NodeId, cost: f64) -> Result<(), GraphError> {
        if !cost.is_finite() || cost < 0.0 {
            return Err(GraphError::NegativeCost {
                node: n.to_string(),
                cost,
            });
        }
        if self.originals.contains(&n) {
            return Err(GraphError::Duplicate(n.to_string()));
        }
        self.originals.insert(n.clone());
        if cost > 0.0 {
            let vin = NodeId(format!("{n}{SPLIT_IN}"));
            let vout = NodeId(format!("{n}{SPLIT_OUT}"));
            let i = self.push_vertex(vin.clone(), n.clone());
            let o = self.push_vertex(vout.clone(), n.clone());
            let lid = LinkId::new(format!("split:{n}"));
            let li = self.links.len();
            self.links.push(WeightedLink {
                id: lid.clone(),
                kind: LinkKind::Split,
                a: vin.clone(),
                b: vout.clone(),
                cost,
                usable: true,
            });
            self.link_index.insert(lid, li);
            self.push_arc(i, o, li);
            self.split_map.insert(n, (vin, vout));
        } else {
            self.push_vertex(n.clone(), n);
        }
        Ok(())
    }

    /// Adds an undirected link between two original nodes.
    pub fn insert_link(
        &mut self,
        id: LinkId,
        kind: LinkKind,
        a: &NodeId,
        b: &NodeId,
        cost: f64,
    ) -> Result<(), GraphError> {
        if self.link_index.contains_key(&id) {
            return Err(GraphError::Duplicate(id.to_string()));
        }
        for end in [a, b] {
            if !self.originals.contains(end) {
                return Err(GraphError::DanglingLink {
                    link: id.to_string(),
                    node: end.to_string(),
                });
            }
        }
        if a == b {
            return Err(GraphError::NotSimple(vec![Violation::SelfLoop(a.clone())]));
        }
        if self.link_between(a, b).is_some() {
            return Err(GraphError::NotSimple(vec![Violation::ParallelEdge(
                a.min(b).clone(),
                a.max(b).clone(),
            )]));
        }
        let li = self.links.len();
        self.links.push(WeightedLink {
            id: id.clone(),
            kind,
            a: a.clone(),
            b: b.clone(),
            cost,
            usable: cost != f64::INFINITY,
        });
        self.link_index.insert(id, li);
        let (a_out, a_in) = (self.src_vertex(a).unwrap(), self.dst_vertex(a).unwrap());
        let (b_out, b_in) = (self.src_vertex(b).unwrap(), self.dst_vertex(b).unwrap());
        self.push_arc(a_out, b_in, li);
        self.push_arc(b_out, a_in, li);
        Ok(())
    }

    /// Non-split link joining two original nodes, if any.
    pub fn link_between(&self, a: &NodeId, b: &NodeId) -> Option<usize> {
        let from = self.src_vertex(a)?;
        let to = self.dst_vertex(b)?;
        self.out_arcs[from]
            .iter()
            .map(|&ai| self.arcs[ai])
            .find(|arc| arc.to == to && self.links[arc.link].kind != LinkKind::Split)
            .map(|arc| arc.link)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertex(&self, idx: usize) -> &NodeId {
        &self.vertices[idx]
    }

    pub fn vertex_id(&self, v: &NodeId) -> Option<usize> {
        self.vertex_index.get(v).copied()
    }

    pub fn vertices(&self) -> &[NodeId] {
        &self.vertices
    }

    /// Original node a vertex stands for (itself unless it is a split half).
    pub fn owner(&self, idx: usize) -> &NodeId {
        &self.owner[idx]
    }

    pub fn originals(&self) -> &BTreeSet<NodeId> {
        &self.originals
    }

    pub fn contains(&self, n: &NodeId) -> bool {
        self.originals.contains(n)
    }

    /// Vertex a path starting at `n` leaves from.
    pub fn src_vertex(&self, n: &NodeId) -> Option<usize> {
        match self.split_map.get(n) {
            Some((_, out)) => self.vertex_id(out),
            None => self.vertex_id(n),
        }
    }

    /// Vertex a path ending at `n` arrives at.
    pub fn dst_vertex(&self, n: &NodeId) -> Option<usize> {
        match self.split_map.get(n) {
            Some((vin, _)) => self.vertex_id(vin),
            None => self.vertex_id(n),
        }
    }

    pub fn split_map(&self) -> &BTreeMap<NodeId, (NodeId, NodeId)> {
        &self.split_map
    }

    pub fn pseudo_node(&self) -> Option<&NodeId> {
        self.pseudo_node.as_ref()
    }

    pub fn origin(&self) -> &BTreeMap<NodeId, String> {
        &self.origin
    }

    pub fn set_origin(&mut self, n: NodeId, controller: String) {
        self.origin.insert(n, controller);
    }

    pub fn links(&self) -> &[WeightedLink] {
        &self.links
    }

    pub fn link(&self, idx: usize) -> &WeightedLink {
        &self.links[idx]
    }

    pub fn link_id(&self, id: &LinkId) -> Option<usize> {
        self.link_index.get(id).copied()
    }

    pub fn link_cost(&self, idx: usize) -> f64 {
        self.links[idx].cost
    }

    pub fn set_link_cost(&mut self, id: &LinkId, cost: f64) -> Result<(), GraphError> {
        let idx = self
            .link_id(id)
            .ok_or_else(|| GraphError::UnknownLink(id.to_string()))?;
        self.links[idx].cost = cost;
        Ok(())
    }

    /// Marks a link usable or not. An unusable link costs `+inf`; making it
    /// usable again restores `cost`.
    pub fn set_link_usable(
        &mut self,
        id: &LinkId,
        usable: bool,
        cost: f64,
    ) -> Result<(), GraphError> {
        let idx = self
            .link_id(id)
            .ok_or_else(|| GraphError::UnknownLink(id.to_string()))?;
        let l = &mut self.links[idx];
        l.usable = usable;
        l.cost = if usable { cost } else { f64::INFINITY };
        Ok(())
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn arc(&self, idx: usize) -> Arc {
        self.arcs[idx]
    }

    pub fn out_arcs(&self, v: usize) -> &[usize] {
        &self.out_arcs[v]
    }

    pub fn in_arcs(&self, v: usize) -> &[usize] {
        &self.in_arcs[v]
    }

    /// Whether traversing this arc counts as a hop of the original graph.
    pub fn is_hop(&self, arc: usize) -> bool {
        self.links[self.arcs[arc].link].kind != LinkKind::Split
    }

    /// Links incident on an original node (split-internal link excluded).
    pub fn incident_links(&self, n: &NodeId) -> Vec<usize> {
        self.links
            .iter()
            .enumerate()
            .filter(|(_, l)| l.kind != LinkKind::Split && (&l.a == n || &l.b == n))
            .map(|(i, _)| i)
            .collect()
    }

    /// Directed self-loops and duplicate arcs. Empty for every graph built
    /// through this module.
    pub fn violations(&self) -> Vec<Violation> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for arc in &self.arcs {
            let (a, b) = (&self.vertices[arc.from], &self.vertices[arc.to]);
            if arc.from == arc.to {
                out.push(Violation::SelfLoop(a.clone()));
            } else if !seen.insert((arc.from, arc.to)) {
                out.push(Violation::ParallelEdge(a.clone(), b.clone()));
            }
        }
        out
    }

    /// Largest hop distance between two original nodes, ignoring costs.
    pub fn hop_diameter(&self) -> usize {
        let mut adj: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
        for l in self.links.iter().filter(|l| l.kind != LinkKind::Split) {
            adj.entry(&l.a).or_default().push(&l.b);
            adj.entry(&l.b).or_default().push(&l.a);
        }
        let mut diameter = 0;
        for start in &self.originals {
            let mut dist: BTreeMap<&NodeId, usize> = BTreeMap::new();
            dist.insert(start, 0);
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                let du = dist[u];
                diameter = diameter.max(du);
                for &v in adj.get(u).map(Vec::as_slice).unwrap_or(&[]) {
                    if !dist.contains_key(v) {
                        dist.insert(v, du + 1);
                        queue.push_back(v);
                    }
                }
            }
        }
        diameter
    }

    /// Original nodes without any non-split link.
    pub fn isolated_nodes(&self) -> Vec<NodeId> {
        let mut touched = BTreeSet::new();
        for l in self.links.iter().filter(|l| l.kind != LinkKind::Split) {
            touched.insert(&l.a);
            touched.insert(&l.b);
        }
        self.originals
            .iter()
            .filter(|n| !touched.contains(n))
            .cloned()
            .collect()
    }

    /// Connected components over original nodes (ascending by smallest member).
    pub fn components(&self) -> Vec<Vec<NodeId>> {
        let mut adj: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
        for l in self.links.iter().filter(|l| l.kind != LinkKind::Split) {
            adj.entry(&l.a).or_default().push(&l.b);
            adj.entry(&l.b).or_default().push(&l.a);
        }
        let mut seen = BTreeSet::new();
        let mut comps = Vec::new();
        for start in &self.originals {
            if seen.contains(start) {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([start]);
            seen.insert(start);
            while let Some(u) = queue.pop_front() {
                comp.push(u.clone());
                for &v in adj.get(u).map(Vec::as_slice).unwrap_or(&[]) {
                    if seen.insert(v) {
                        queue.push_back(v);
                    }
                }
            }
            comp.sort();
            comps.push(comp);
        }
        comps
    }
}
