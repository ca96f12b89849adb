//! The routing server core.
//!
//! Phase 1 enumerates every simple path within a hop bound into a forest of
//! destination-rooted trees ([`SptForest`]). Phase 2 prices the branches with
//! current link costs and ranks them per pair ([`RankedRouteTable`]). Link
//! failures are handled by re-ranking only; topology growth grafts new
//! branches without rebuilding.

mod dual;
mod forest;
mod integrity;
mod rank;
mod server;

pub use dual::{dual_classify, Alternate, DualClassification, Successor};
pub use forest::{apply_topology_delta, build_spt_forest, SptForest, TopologyDelta};
pub use integrity::{check_integrity, CheckedPolicy, PolicyBody, PolicyPackage};
pub use rank::{
    query_routes, rank_routes, switchover_on_failure, CostHistory, PairRoutes, RankedRoute,
    RankedRouteTable,
};
pub use server::{PairResponse, RouteEntry, RouteResponse, RouteServer, ServerConfig};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, LinkId, NodeId, NormalizedGraph, Violation};
use crate::metric::{MetricError, MetricSpec, ValidatedMetric};

/// Upper bound on enumerated paths before phase 1 gives up.
pub const DEFAULT_MAX_PATHS: usize = 1_000_000;
pub const DEFAULT_K: usize = 3;
/// The default cutoff never exceeds this many hops.
pub const MAX_DEFAULT_CUTOFF: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("path enumeration exceeded {limit} paths")]
    GraphTooLarge { limit: usize },
    #[error("forest and graph were built over different node sets")]
    ForestGraphMismatch,
    #[error("unknown link {0}")]
    UnknownLink(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("no route from {src} to {dst}")]
    NoRoute { src: String, dst: String },
    #[error("source and destination are both {0}")]
    SameEndpoints(String),
    #[error("{node} cannot reach {destination}")]
    UnreachableDestination { node: String, destination: String },
    #[error("policy checksum does not match its body")]
    ChecksumMismatch,
    #[error("policy is malformed: {0}")]
    MalformedPolicy(String),
    #[error("graph is not simple: {0:?}")]
    NotSimpleGraph(Vec<Violation>),
    #[error("unknown algorithm {0:?}")]
    UnknownAlgorithm(String),
    #[error("bad cutoff or alternate count: {0}")]
    BadCutoff(String),
    #[error("unknown intent {0}")]
    UnknownIntent(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl RouteError {
    /// Stable name of the variant, used on the wire and in reports.
    pub fn code(&self) -> &'static str {
        match self {
            RouteError::GraphTooLarge { .. } => "GraphTooLarge",
            RouteError::ForestGraphMismatch => "ForestGraphMismatch",
            RouteError::UnknownLink(_) => "UnknownLink",
            RouteError::UnknownNode(_) => "UnknownNode",
            RouteError::NoRoute { .. } => "NoRoute",
            RouteError::SameEndpoints(_) => "SameEndpoints",
            RouteError::UnreachableDestination { .. } => "UnreachableDestination",
            RouteError::ChecksumMismatch => "ChecksumMismatch",
            RouteError::MalformedPolicy(_) => "MalformedPolicy",
            RouteError::NotSimpleGraph(_) => "NotSimpleGraph",
            RouteError::UnknownAlgorithm(_) => "UnknownAlgorithm",
            RouteError::BadCutoff(_) => "BadCutoff",
            RouteError::UnknownIntent(_) => "UnknownIntent",
            RouteError::Metric(MetricError::WeightSumViolation { .. }) => "WeightSumViolation",
            RouteError::Metric(_) => "MetricError",
            RouteError::Graph(_) => "GraphError",
        }
    }
}

/// Non-fatal findings reported alongside routes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// Nodes cut off from the largest component.
    DisconnectedComponent { nodes: Vec<NodeId> },
    /// Telemetered links without a sample; they cost `+inf` unless seeded.
    MissingTelemetry { links: Vec<LinkId> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Cheapest `k` paths per pair.
    Spf,
    /// Paths leaving through the successor or a feasible successor.
    Dual,
    /// Every enumerated path per pair.
    AllPaths,
}

impl Algorithm {
    pub fn parse(id: &str) -> Result<Self, RouteError> {
        match id {
            "spf" => Ok(Algorithm::Spf),
            "dual" => Ok(Algorithm::Dual),
            "all-paths" => Ok(Algorithm::AllPaths),
            other => Err(RouteError::UnknownAlgorithm(other.to_string())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Spf => "spf",
            Algorithm::Dual => "dual",
            Algorithm::AllPaths => "all-paths",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ranking {
    #[default]
    ByCost,
    ByReliability,
}

fn d_k() -> usize {
    DEFAULT_K
}

/// Routing logic as carried in intents and policies: the metric function and
/// the path algorithm with its bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingLogic {
    pub metric: MetricSpec,
    pub algorithm: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff_diameter: Option<usize>,
    #[serde(default = "d_k")]
    pub k_alternates: usize,
    #[serde(
        default,
        with = "crate::ext::map",
        skip_serializing_if = "BTreeMap::is_empty"
    )]
    pub seed_costs: BTreeMap<LinkId, f64>,
    #[serde(default)]
    pub ranking: Ranking,
}

impl RoutingLogic {
    pub fn new(metric: MetricSpec, algorithm: &str) -> Self {
        RoutingLogic {
            metric,
            algorithm: algorithm.to_string(),
            cutoff_diameter: None,
            k_alternates: DEFAULT_K,
            seed_costs: BTreeMap::new(),
            ranking: Ranking::ByCost,
        }
    }

    /// Validates the logic against the graph it will run on and fills in the
    /// default cutoff.
    pub fn resolve(&self, g: &NormalizedGraph) -> Result<RouteLogic, RouteError> {
        let metric = self.metric.clone().validate()?;
        let algorithm = Algorithm::parse(&self.algorithm)?;
        let cutoff = match self.cutoff_diameter {
            Some(0) => {
                return Err(RouteError::BadCutoff(
                    "cutoff_diameter must be at least 1".into(),
                ))
            }
            Some(c) => c,
            None => default_cutoff(g),
        };
        if self.k_alternates == 0 {
            return Err(RouteError::BadCutoff(
                "k_alternates must be at least 1".into(),
            ));
        }
        for (id, c) in &self.seed_costs {
            if g.link_id(id).is_none() {
                return Err(RouteError::UnknownLink(id.to_string()));
            }
            if c.is_nan() || *c < 0.0 {
                return Err(RouteError::BadCutoff(format!("seed cost {c} on {id}")));
            }
        }
        Ok(RouteLogic {
            metric,
            algorithm,
            cutoff,
            k: self.k_alternates,
            seed_costs: self.seed_costs.clone(),
            ranking: self.ranking,
            max_paths: DEFAULT_MAX_PATHS,
        })
    }
}

/// `min(hop diameter + 2, 8)`, never below 1.
pub fn default_cutoff(g: &NormalizedGraph) -> usize {
    (g.hop_diameter() + 2).clamp(1, MAX_DEFAULT_CUTOFF)
}

/// Routing logic after validation, with every default resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteLogic {
    pub metric: ValidatedMetric,
    pub algorithm: Algorithm,
    pub cutoff: usize,
    pub k: usize,
    pub seed_costs: BTreeMap<LinkId, f64>,
    pub ranking: Ranking,
    pub max_paths: usize,
}

impl RouteLogic {
    /// Number of routes a pair keeps in responses.
    pub fn retained(&self) -> usize {
        match self.algorithm {
            Algorithm::AllPaths => usize::MAX,
            _ => self.k,
        }
    }
}

#[cfg(test)]
pub(crate) mod testkit {
    //! Small graphs and brute-force oracles shared by the route tests.

    use std::collections::BTreeMap;

    use crate::graph::{LinkId, LinkKind, NodeId, NormalizedGraph};

    pub fn n(s: &str) -> NodeId {
        NodeId::new("t", s)
    }

    /// Builds a graph from `(a, b, cost)` edges and `(node, cost)` node costs.
    pub fn graph(nodes: &[(&str, f64)], edges: &[(&str, &str, f64)]) -> NormalizedGraph {
        let doc = crate::graph::GraphDoc {
            nodes: nodes
                .iter()
                .map(|(id, c)| crate::graph::GraphDocNode {
                    id: n(id),
                    cost: *c,
                    controller: None,
                })
                .collect(),
            links: edges
                .iter()
                .map(|(a, b, c)| crate::graph::GraphDocLink {
                    id: LinkId::new(format!("t:{a}{b}")),
                    kind: LinkKind::Physical,
                    a: n(a),
                    b: n(b),
                    cost: *c,
                    usable: c.is_finite(),
                })
                .collect(),
            pseudo_node: None,
        };
        NormalizedGraph::from_doc(&doc).unwrap()
    }

    pub fn triangle() -> NormalizedGraph {
        graph(
            &[("A", 0.0), ("B", 0.0), ("C", 0.0)],
            &[("A", "B", 1.0), ("B", "C", 1.0), ("A", "C", 1.0)],
        )
    }

    /// Adjacency over original nodes: neighbour -> (link cost).
    fn adjacency(g: &NormalizedGraph) -> BTreeMap<NodeId, BTreeMap<NodeId, f64>> {
        let mut adj: BTreeMap<NodeId, BTreeMap<NodeId, f64>> = BTreeMap::new();
        for n in g.originals() {
            adj.entry(n.clone()).or_default();
        }
        for l in g.links().iter().filter(|l| l.kind != LinkKind::Split) {
            adj.get_mut(&l.a).unwrap().insert(l.b.clone(), l.cost);
            adj.get_mut(&l.b).unwrap().insert(l.a.clone(), l.cost);
        }
        adj
    }

    /// Every simple path `s -> d` with at most `cutoff` hops, with its cost
    /// summed from the destination end (link costs plus transit node costs).
    pub fn brute_paths(
        g: &NormalizedGraph,
        s: &NodeId,
        d: &NodeId,
        cutoff: usize,
    ) -> Vec<(Vec<NodeId>, f64)> {
        let adj = adjacency(g);
        let mut out = Vec::new();
        let mut path = vec![s.clone()];
        fn walk(
            adj: &BTreeMap<NodeId, BTreeMap<NodeId, f64>>,
            g: &NormalizedGraph,
            d: &NodeId,
            cutoff: usize,
            path: &mut Vec<NodeId>,
            out: &mut Vec<(Vec<NodeId>, f64)>,
        ) {
            let u = path.last().unwrap().clone();
            if &u == d {
                let mut cost = 0.0;
                for i in (0..path.len() - 1).rev() {
                    if i + 1 != path.len() - 1 {
                        cost = g.node_cost(&path[i + 1]) + cost;
                    }
                    cost = adj[&path[i]][&path[i + 1]] + cost;
                }
                out.push((path.clone(), cost));
                return;
            }
            if path.len() > cutoff {
                return;
            }
            for v in adj[&u].keys() {
                if !path.contains(v) {
                    path.push(v.clone());
                    walk(adj, g, d, cutoff, path, out);
                    path.pop();
                }
            }
        }
        walk(&adj, g, d, cutoff, &mut path, &mut out);
        out
    }

    /// Textbook Dijkstra over original nodes towards `d` (relaxing backwards
    /// so costs accumulate from the destination end). Returns the distance
    /// from every node to `d`.
    pub fn dijkstra_to(g: &NormalizedGraph, d: &NodeId) -> BTreeMap<NodeId, f64> {
        let adj = adjacency(g);
        let mut dist: BTreeMap<NodeId, f64> =
            adj.keys().map(|k| (k.clone(), f64::INFINITY)).collect();
        let mut done = std::collections::BTreeSet::new();
        dist.insert(d.clone(), 0.0);
        loop {
            let next = dist
                .iter()
                .filter(|(k, v)| !done.contains(*k) && v.is_finite())
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, v)| (k.clone(), *v));
            let Some((v, dv)) = next else { break };
            done.insert(v.clone());
            // a node reached through v pays v's cost unless v is the target
            let through = if &v == d { dv } else { g.node_cost(&v) + dv };
            for (u, c) in &adj[&v] {
                let cand = c + through;
                if cand < dist[u] {
                    dist.insert(u.clone(), cand);
                }
            }
        }
        dist
    }
}
