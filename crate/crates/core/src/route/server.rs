use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_spt_forest, check_integrity, dual_classify, query_routes, rank_routes, Algorithm,
    CostHistory, RankedRouteTable, RouteError, RouteLogic, SptForest, TopologyDelta, Warning,
};
use crate::graph::{LinkKind, NodeId, NormalizedGraph};
use crate::metric::{weight_graph, WeightMode};
use crate::shellmon::KpiStore;

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    pub weight_mode: WeightMode,
    /// Overrides the enumerated-path guard when set.
    pub max_paths: Option<usize>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            weight_mode: WeightMode::Lenient,
            max_paths: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub path: Vec<NodeId>,
    #[serde(with = "crate::ext")]
    pub cost: f64,
    #[serde(with = "crate::ext::opt")]
    pub reliability: Option<f64>,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResponse {
    pub src: NodeId,
    pub dst: NodeId,
    pub routes: Vec<RouteEntry>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unreachable: bool,
}

/// `route_response` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResponse {
    pub intent_id: String,
    pub pairs: Vec<PairResponse>,
    pub warnings: Vec<Warning>,
    pub recompute_counter: u64,
    pub as_of_ms: u64,
}

impl RouteResponse {
    pub fn pair(&self, src: &NodeId, dst: &NodeId) -> Option<&PairResponse> {
        self.pairs.iter().find(|p| &p.src == src && &p.dst == dst)
    }
}

struct Session {
    logic: RouteLogic,
    /// Topology with seed costs; usable flags track deltas.
    base: NormalizedGraph,
    weighted: NormalizedGraph,
    forest: SptForest,
    table: RankedRouteTable,
    history: CostHistory,
    static_warnings: Vec<Warning>,
    warnings: Vec<Warning>,
    as_of: u64,
}

/// The routing server. Each intent owns a session holding its graph, forest
/// and ranked table; requests for one intent are serialized.
pub struct RouteServer {
    config: ServerConfig,
    store: Option<Arc<KpiStore>>,
    sessions: Mutex<BTreeMap<String, Arc<Mutex<Session>>>>,
}

impl RouteServer {
    /// A server weighting links from `store`; without a store the costs in
    /// the policy (and seed costs) are used as they are.
    pub fn new(config: ServerConfig, store: Option<Arc<KpiStore>>) -> Self {
        RouteServer {
            config,
            store,
            sessions: Mutex::new(BTreeMap::new()),
        }
    }

    fn session(&self, intent_id: &str) -> Result<Arc<Mutex<Session>>, RouteError> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .get(intent_id)
            .cloned()
            .ok_or_else(|| RouteError::UnknownIntent(intent_id.to_string()))
    }

    /// Handles a `route_request`: integrity check, weighting, phase 1 and
    /// phase 2.
    pub fn route_request(&self, wire: &[u8], as_of: u64) -> Result<RouteResponse, RouteError> {
        let checked = check_integrity(wire)?;
        let mut logic = checked.logic;
        if let Some(limit) = self.config.max_paths {
            logic.max_paths = limit;
        }
        let mut base = checked.graph;
        for (id, c) in &logic.seed_costs {
            let usable = base.link(base.link_id(id).expect("validated")).usable;
            if usable {
                base.set_link_cost(id, *c)?;
            }
        }
        let mut history = CostHistory::new(logic.metric.params.window, logic.metric.params.epsilon);
        let (weighted, missing) = self.weigh(&base, &logic, &mut history, as_of)?;
        let forest = build_spt_forest(&weighted, logic.cutoff, logic.max_paths)?;
        let table = rank(&forest, &weighted, &logic, &history)?;
        let mut session = Session {
            logic,
            base,
            weighted,
            forest,
            table,
            history,
            static_warnings: checked.warnings,
            warnings: Vec::new(),
            as_of,
        };
        session.set_warnings(missing);
        let response = session.response(&checked.intent_id);
        self.sessions
            .lock()
            .expect("session map poisoned")
            .insert(checked.intent_id, Arc::new(Mutex::new(session)));
        Ok(response)
    }

    /// Re-weights with the telemetry as of `as_of` and re-ranks. The forest
    /// is reused as is.
    pub fn refresh(&self, intent_id: &str, as_of: u64) -> Result<RouteResponse, RouteError> {
        let session = self.session(intent_id)?;
        let mut s = session.lock().expect("session poisoned");
        let s = &mut *s;
        let (weighted, missing) = self.weigh(&s.base, &s.logic, &mut s.history, as_of)?;
        s.table = rank(&s.forest, &weighted, &s.logic, &s.history)?;
        s.weighted = weighted;
        s.as_of = as_of;
        s.set_warnings(missing);
        Ok(s.response(intent_id))
    }

    /// Applies a topology change. Removals switch over to precomputed
    /// alternates without touching the forest; additions graft new branches
    /// and re-rank.
    pub fn delta(
        &self,
        intent_id: &str,
        delta: &TopologyDelta,
        as_of: u64,
    ) -> Result<RouteResponse, RouteError> {
        let session = self.session(intent_id)?;
        let mut s = session.lock().expect("session poisoned");
        let s = &mut *s;
        match delta {
            TopologyDelta::LinkRemoved { link } => {
                s.forest.apply(&mut s.base, delta)?;
                s.weighted.set_link_usable(link, false, f64::INFINITY)?;
                s.table.fail_link(link)?;
            }
            TopologyDelta::NodeRemoved { node } => {
                let links: Vec<_> = s
                    .base
                    .incident_links(node)
                    .into_iter()
                    .map(|li| s.base.link(li).id.clone())
                    .collect();
                s.forest.apply(&mut s.base, delta)?;
                for link in &links {
                    s.weighted.set_link_usable(link, false, f64::INFINITY)?;
                    s.table.fail_link(link)?;
                }
            }
            TopologyDelta::LinkAdded { .. } | TopologyDelta::NodeAdded { .. } => {
                s.forest.apply(&mut s.base, delta)?;
                let (weighted, missing) = self.weigh(&s.base, &s.logic, &mut s.history, as_of)?;
                s.table = rank(&s.forest, &weighted, &s.logic, &s.history)?;
                s.weighted = weighted;
                s.set_warnings(missing);
            }
        }
        s.as_of = as_of;
        Ok(s.response(intent_id))
    }

    pub fn table(&self, intent_id: &str) -> Result<RankedRouteTable, RouteError> {
        Ok(self
            .session(intent_id)?
            .lock()
            .expect("session poisoned")
            .table
            .clone())
    }

    /// The weighted graph the current table was ranked on.
    pub fn weighted_graph(&self, intent_id: &str) -> Result<NormalizedGraph, RouteError> {
        Ok(self
            .session(intent_id)?
            .lock()
            .expect("session poisoned")
            .weighted
            .clone())
    }

    pub fn forest(&self, intent_id: &str) -> Result<SptForest, RouteError> {
        Ok(self
            .session(intent_id)?
            .lock()
            .expect("session poisoned")
            .forest
            .clone())
    }

    pub fn recompute_counter(&self, intent_id: &str) -> Result<u64, RouteError> {
        Ok(self
            .session(intent_id)?
            .lock()
            .expect("session poisoned")
            .forest
            .recompute_counter())
    }

    pub fn logic(&self, intent_id: &str) -> Result<RouteLogic, RouteError> {
        Ok(self
            .session(intent_id)?
            .lock()
            .expect("session poisoned")
            .logic
            .clone())
    }

    /// Telemetry weighting of `base`. Links without a sample fall back to
    /// their seed cost when one is given, else `+inf`.
    fn weigh(
        &self,
        base: &NormalizedGraph,
        logic: &RouteLogic,
        history: &mut CostHistory,
        as_of: u64,
    ) -> Result<(NormalizedGraph, Vec<crate::graph::LinkId>), RouteError> {
        let Some(store) = &self.store else {
            return Ok((base.clone(), Vec::new()));
        };
        let snapshot = store.snapshot(as_of);
        let (mut weighted, report) =
            weight_graph(base, &logic.metric, &snapshot, self.config.weight_mode)?;
        let mut missing = Vec::new();
        for id in report.missing {
            match logic.seed_costs.get(&id) {
                Some(c) => weighted.set_link_cost(&id, *c)?,
                None => missing.push(id),
            }
        }
        for l in weighted.links() {
            if l.kind != LinkKind::Physical || !l.usable {
                continue;
            }
            if let Some(sample) = snapshot.get(l.id.as_str()) {
                history.record(&l.id, sample.ts_ms, l.cost)?;
            }
        }
        Ok((weighted, missing))
    }
}

fn rank(
    forest: &SptForest,
    g: &NormalizedGraph,
    logic: &RouteLogic,
    history: &CostHistory,
) -> Result<RankedRouteTable, RouteError> {
    let history = (!history.is_empty()).then_some(history);
    let mut table = rank_routes(forest, g, logic.ranking, logic.retained(), history)?;
    if logic.algorithm == Algorithm::Dual {
        let dests: Vec<&NodeId> = forest.destinations().collect();
        let classes = dests
            .par_iter()
            .map(|d| dual_classify(g, d).map(|c| ((*d).clone(), c)))
            .collect::<Result<BTreeMap<_, _>, _>>()?;
        table.retain_first_hops(|s, hop, d| {
            classes
                .get(d)
                .and_then(|c| c.get(s))
                .and_then(|r| r.as_ref().ok())
                .is_some_and(|c| c.admits(hop))
        });
    }
    Ok(table)
}

impl Session {
    fn set_warnings(&mut self, missing: Vec<crate::graph::LinkId>) {
        self.warnings = self.static_warnings.clone();
        if !missing.is_empty() {
            self.warnings
                .push(Warning::MissingTelemetry { links: missing });
        }
    }

    fn response(&self, intent_id: &str) -> RouteResponse {
        let retained = self.logic.retained();
        let pairs = self
            .table
            .pairs()
            .filter(|((s, d), _)| !s.is_pseudo() && !d.is_pseudo())
            .map(|((s, d), _)| {
                let routes: Vec<RouteEntry> = query_routes(&self.table, s, d, retained)
                    .unwrap_or_default()
                    .into_iter()
                    .map(|r| RouteEntry {
                        path: r.path,
                        cost: r.cost,
                        reliability: r.reliability,
                        rank: r.rank,
                    })
                    .collect();
                PairResponse {
                    src: s.clone(),
                    dst: d.clone(),
                    unreachable: routes.is_empty(),
                    routes,
                }
            })
            .collect();
        RouteResponse {
            intent_id: intent_id.to_string(),
            pairs,
            warnings: self.warnings.clone(),
            recompute_counter: self.forest.recompute_counter(),
            as_of_ms: self.as_of,
        }
    }
}
