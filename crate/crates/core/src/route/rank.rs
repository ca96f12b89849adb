use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::forest::SptForest;
use super::{Ranking, RouteError};
use crate::graph::{LinkId, LinkKind, NodeId, NormalizedGraph};
use crate::metric::{sharpe_score, MetricError, RollingWindow};

/// Per-link history of weighted costs, the input to reliability ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct CostHistory {
    capacity: usize,
    epsilon: f64,
    windows: BTreeMap<LinkId, RollingWindow>,
}

impl CostHistory {
    pub fn new(capacity: usize, epsilon: f64) -> Self {
        CostHistory {
            capacity,
            epsilon,
            windows: BTreeMap::new(),
        }
    }

    /// Records a cost observed at `ts`. Non-finite costs are not history;
    /// a repeated timestamp is ignored.
    pub fn record(&mut self, link: &LinkId, ts: u64, cost: f64) -> Result<(), MetricError> {
        if !cost.is_finite() {
            return Ok(());
        }
        let w = self
            .windows
            .entry(link.clone())
            .or_insert_with(|| RollingWindow::new(self.capacity));
        if w.last_timestamp().is_some_and(|last| ts <= last) {
            return Ok(());
        }
        w.push(ts, cost)
    }

    pub fn window(&self, link: &LinkId) -> Option<&RollingWindow> {
        self.windows.get(link)
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Candidate {
    /// Owner indices, split halves collapsed.
    nodes: Vec<u32>,
    /// Non-split link indices, source to destination.
    links: Vec<u32>,
    /// Split link indices (transit node costs).
    splits: Vec<u32>,
    cost: f64,
    hops: u16,
    reliability: Option<f64>,
}

/// Ranked candidates of one ordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRoutes {
    candidates: Vec<Candidate>,
    /// Reliability ranking was requested but some window was too short.
    cost_fallback: bool,
}

impl PairRoutes {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn is_unreachable(&self) -> bool {
        !self.candidates.iter().any(|c| c.cost.is_finite())
    }

    pub fn used_cost_fallback(&self) -> bool {
        self.cost_fallback
    }
}

/// One ranked path of a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedRoute {
    /// Original node sequence, split halves collapsed.
    pub path: Vec<NodeId>,
    pub links: Vec<LinkId>,
    pub cost: f64,
    pub hops: usize,
    pub reliability: Option<f64>,
    /// 1-based; rank 1 is the active route.
    pub rank: usize,
}

/// Phase-2 output: every enumerated path per pair, ordered by the active
/// ranking key. `k` bounds what is reported; the full list stays available
/// so a failure can promote any surviving path.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedRouteTable {
    names: Vec<NodeId>,
    link_names: Vec<LinkId>,
    link_index: BTreeMap<LinkId, u32>,
    pairs: BTreeMap<(NodeId, NodeId), PairRoutes>,
    ranking: Ranking,
    k: usize,
    failed: BTreeSet<LinkId>,
    recompute_counter: u64,
}

fn cmp_paths(names: &[NodeId], a: &[u32], b: &[u32]) -> Ordering {
    a.iter()
        .map(|&i| &names[i as usize])
        .cmp(b.iter().map(|&i| &names[i as usize]))
}

fn cmp_by_cost(names: &[NodeId], a: &Candidate, b: &Candidate) -> Ordering {
    a.cost
        .total_cmp(&b.cost)
        .then(a.hops.cmp(&b.hops))
        .then_with(|| cmp_paths(names, &a.nodes, &b.nodes))
}

fn cmp_by_reliability(names: &[NodeId], a: &Candidate, b: &Candidate) -> Ordering {
    let finite = |c: &Candidate| !c.cost.is_finite();
    // higher score first, unscored after scored
    let score = |c: &Candidate| c.reliability.map(|r| -r).unwrap_or(f64::INFINITY);
    finite(a)
        .cmp(&finite(b))
        .then_with(|| score(a).total_cmp(&score(b)))
        .then_with(|| cmp_by_cost(names, a, b))
}

fn sort_pair(names: &[NodeId], ranking: Ranking, pair: &mut PairRoutes) {
    if ranking == Ranking::ByReliability && !pair.cost_fallback {
        pair.candidates
            .sort_by(|a, b| cmp_by_reliability(names, a, b));
    } else {
        pair.candidates.sort_by(|a, b| cmp_by_cost(names, a, b));
    }
}

/// Cost series of a path at the ticks shared by all its telemetered links.
/// `None` when the path has telemetered links but fewer than two common
/// ticks; a path without telemetered links is a constant series.
fn path_series(c: &Candidate, g: &NormalizedGraph, history: &CostHistory) -> Option<Vec<f64>> {
    let mut fixed = 0.0;
    let mut windows = Vec::new();
    for &li in c.splits.iter().chain(&c.links) {
        let link = g.link(li as usize);
        match history.window(&link.id) {
            Some(w) if link.kind == LinkKind::Physical => windows.push(w),
            _ => fixed += link.cost,
        }
    }
    if windows.is_empty() {
        return Some(vec![fixed; 2]);
    }
    let mut series = Vec::new();
    'ticks: for (ts, first) in windows[0].samples() {
        let mut total = fixed + first;
        for w in &windows[1..] {
            match w.value_at(ts) {
                Some(v) => total += v,
                None => continue 'ticks,
            }
        }
        series.push(total);
    }
    (series.len() >= 2).then_some(series)
}

/// Scores candidates with the Sharpe ratio of their negated cost series,
/// measured against the worst cost the pair has seen. Stable paths below the
/// worst score `+inf`. Returns false when some series was too short.
fn score_candidates(cands: &mut [Candidate], g: &NormalizedGraph, history: &CostHistory) -> bool {
    let series: Vec<Option<Vec<f64>>> = cands
        .iter()
        .map(|c| {
            c.cost
                .is_finite()
                .then(|| path_series(c, g, history))
                .flatten()
        })
        .collect();
    let complete = cands
        .iter()
        .zip(&series)
        .all(|(c, s)| !c.cost.is_finite() || s.is_some());
    let worst = series
        .iter()
        .flatten()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    for (c, s) in cands.iter_mut().zip(series) {
        c.reliability =
            s.and_then(|s| sharpe_score(s.into_iter().map(|v| -v), -worst, history.epsilon));
    }
    complete
}

/// Phase 2: prices every branch with the current link costs and ranks the
/// paths of each pair. The forest is not modified.
pub fn rank_routes(
    forest: &SptForest,
    g: &NormalizedGraph,
    ranking: Ranking,
    k: usize,
    history: Option<&CostHistory>,
) -> Result<RankedRouteTable, RouteError> {
    forest.check_graph(g)?;
    let names = forest.owners.names.clone();
    let removed: BTreeSet<u32> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| forest.removed.contains(*n))
        .map(|(i, _)| i as u32)
        .collect();
    let trees: Vec<(&NodeId, &super::forest::Tree)> = forest
        .trees
        .iter()
        .filter(|(d, _)| !forest.removed.contains(*d))
        .collect();
    let per_dest: Vec<Vec<((NodeId, NodeId), PairRoutes)>> = trees
        .par_iter()
        .map(|(d, tree)| {
            let mut cost = vec![0.0f64; tree.nodes.len()];
            let mut by_src: BTreeMap<u32, Vec<Candidate>> = BTreeMap::new();
            for i in 1..tree.nodes.len() {
                let node = tree.nodes[i];
                let p = node.parent as usize;
                cost[i] = g.link_cost(g.arc(node.arc as usize).link) + cost[p];
                let v = node.vertex as usize;
                let owner = forest.owners.of_vertex[v];
                if !forest.owners.endpoint[v] || removed.contains(&owner) {
                    continue;
                }
                let (vertices, arcs) = forest.branch(tree, i);
                let mut nodes = Vec::with_capacity(node.hops as usize + 1);
                for &v in &vertices {
                    let o = forest.owners.of_vertex[v as usize];
                    if nodes.last() != Some(&o) {
                        nodes.push(o);
                    }
                }
                let (mut links, mut splits) = (Vec::new(), Vec::new());
                for &a in &arcs {
                    let li = g.arc(a as usize).link as u32;
                    if g.link(li as usize).kind == LinkKind::Split {
                        splits.push(li);
                    } else {
                        links.push(li);
                    }
                }
                by_src.entry(owner).or_default().push(Candidate {
                    nodes,
                    links,
                    splits,
                    cost: cost[i],
                    hops: node.hops,
                    reliability: None,
                });
            }
            let mut out = Vec::new();
            for (s, candidates) in by_src {
                let mut pair = PairRoutes {
                    candidates,
                    cost_fallback: false,
                };
                if let Some(h) = history {
                    match ranking {
                        Ranking::ByReliability => {
                            pair.cost_fallback = !score_candidates(&mut pair.candidates, g, h);
                            sort_pair(&names, ranking, &mut pair);
                        }
                        Ranking::ByCost => {
                            sort_pair(&names, ranking, &mut pair);
                            let top = k.min(pair.candidates.len());
                            score_candidates(&mut pair.candidates[..top], g, h);
                        }
                    }
                } else {
                    pair.cost_fallback = ranking == Ranking::ByReliability;
                    sort_pair(&names, ranking, &mut pair);
                }
                out.push(((names[s as usize].clone(), (*d).clone()), pair));
            }
            out
        })
        .collect();
    let mut pairs: BTreeMap<(NodeId, NodeId), PairRoutes> =
        per_dest.into_iter().flatten().collect();
    // pairs without any enumerated path are reported unreachable
    for s in forest.trees.keys().filter(|n| !forest.removed.contains(*n)) {
        for d in forest.trees.keys().filter(|n| !forest.removed.contains(*n)) {
            if s != d {
                pairs
                    .entry((s.clone(), d.clone()))
                    .or_insert_with(|| PairRoutes {
                        candidates: Vec::new(),
                        cost_fallback: false,
                    });
            }
        }
    }
    let link_names: Vec<LinkId> = g.links().iter().map(|l| l.id.clone()).collect();
    let link_index = link_names
        .iter()
        .enumerate()
        .map(|(i, l)| (l.clone(), i as u32))
        .collect();
    Ok(RankedRouteTable {
        names,
        link_names,
        link_index,
        pairs,
        ranking,
        k,
        failed: g
            .links()
            .iter()
            .filter(|l| !l.usable)
            .map(|l| l.id.clone())
            .collect(),
        recompute_counter: forest.recompute_counter(),
    })
}

/// Marks every route over `failed_link` as `+inf` and re-ranks. No path is
/// enumerated; the best surviving precomputed path becomes active.
pub fn switchover_on_failure(
    table: &RankedRouteTable,
    failed_link: &LinkId,
) -> Result<RankedRouteTable, RouteError> {
    let mut t = table.clone();
    t.fail_link(failed_link)?;
    Ok(t)
}

/// Up to `k` usable routes from `s` to `d` in rank order, with the
/// pseudo-node elided from paths.
pub fn query_routes(
    table: &RankedRouteTable,
    s: &NodeId,
    d: &NodeId,
    k: usize,
) -> Result<Vec<RankedRoute>, RouteError> {
    if s == d {
        return Err(RouteError::SameEndpoints(s.to_string()));
    }
    let pair = table.pair(s, d)?;
    if pair.is_unreachable() {
        return Err(RouteError::NoRoute {
            src: s.to_string(),
            dst: d.to_string(),
        });
    }
    Ok(pair
        .candidates
        .iter()
        .filter(|c| c.cost.is_finite())
        .take(k)
        .enumerate()
        .map(|(i, c)| {
            let mut r = table.materialize(c, i + 1);
            r.path.retain(|n| !n.is_pseudo());
            r
        })
        .collect())
}

impl RankedRouteTable {
    pub fn ranking(&self) -> Ranking {
        self.ranking
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Recompute counter of the forest this table was ranked from.
    pub fn recompute_counter(&self) -> u64 {
        self.recompute_counter
    }

    pub fn failed_links(&self) -> &BTreeSet<LinkId> {
        &self.failed
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &PairRoutes)> {
        self.pairs.iter()
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    fn pair(&self, s: &NodeId, d: &NodeId) -> Result<&PairRoutes, RouteError> {
        for n in [s, d] {
            if n.is_pseudo() || !self.names.contains(n) {
                return Err(RouteError::UnknownNode(n.to_string()));
            }
        }
        self.pairs
            .get(&(s.clone(), d.clone()))
            .ok_or_else(|| RouteError::UnknownNode(s.to_string()))
    }

    fn materialize(&self, c: &Candidate, rank: usize) -> RankedRoute {
        RankedRoute {
            path: c
                .nodes
                .iter()
                .map(|&i| self.names[i as usize].clone())
                .collect(),
            links: c
                .links
                .iter()
                .map(|&i| self.link_names[i as usize].clone())
                .collect(),
            cost: c.cost,
            hops: c.hops as usize,
            reliability: c.reliability,
            rank,
        }
    }

    /// Every ranked path of a pair, including unusable ones, pseudo-node kept.
    pub fn all_routes(&self, s: &NodeId, d: &NodeId) -> Vec<RankedRoute> {
        self.pairs
            .get(&(s.clone(), d.clone()))
            .map(|p| {
                p.candidates
                    .iter()
                    .enumerate()
                    .map(|(i, c)| self.materialize(c, i + 1))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// The first `k` ranked paths of a pair.
    pub fn routes(&self, s: &NodeId, d: &NodeId) -> Vec<RankedRoute> {
        let mut all = self.all_routes(s, d);
        all.truncate(self.k);
        all
    }

    /// Rank-1 route of a pair if it is usable.
    pub fn active(&self, s: &NodeId, d: &NodeId) -> Option<RankedRoute> {
        let p = self.pairs.get(&(s.clone(), d.clone()))?;
        p.candidates
            .first()
            .filter(|c| c.cost.is_finite())
            .map(|c| self.materialize(c, 1))
    }

    pub fn is_unreachable(&self, s: &NodeId, d: &NodeId) -> bool {
        self.pairs
            .get(&(s.clone(), d.clone()))
            .is_none_or(PairRoutes::is_unreachable)
    }

    /// Pairs with no usable path.
    pub fn unreachable_pairs(&self) -> Vec<(NodeId, NodeId)> {
        self.pairs
            .iter()
            .filter(|(_, p)| p.is_unreachable())
            .map(|(k, _)| k.clone())
            .collect()
    }

    /// In-place form of [`switchover_on_failure`].
    pub fn fail_link(&mut self, failed_link: &LinkId) -> Result<(), RouteError> {
        let li = *self
            .link_index
            .get(failed_link)
            .ok_or_else(|| RouteError::UnknownLink(failed_link.to_string()))?;
        self.failed.insert(failed_link.clone());
        let (names, ranking) = (&self.names, self.ranking);
        for pair in self.pairs.values_mut() {
            let mut hit = false;
            for c in &mut pair.candidates {
                if c.links.contains(&li) {
                    c.cost = f64::INFINITY;
                    c.reliability = None;
                    hit = true;
                }
            }
            if hit {
                sort_pair(names, ranking, pair);
            }
        }
        Ok(())
    }

    /// Keeps only the paths whose first hop passes `admit(src, next_hop, dst)`.
    pub(crate) fn retain_first_hops(&mut self, admit: impl Fn(&NodeId, &NodeId, &NodeId) -> bool) {
        let names = &self.names;
        for ((s, d), pair) in self.pairs.iter_mut() {
            pair.candidates
                .retain(|c| c.nodes.len() >= 2 && admit(s, &names[c.nodes[1] as usize], d));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::route::build_spt_forest;
    use crate::route::testkit::{brute_paths, dijkstra_to, graph, n, triangle};

    fn table(g: &NormalizedGraph, cutoff: usize, k: usize) -> RankedRouteTable {
        let f = build_spt_forest(g, cutoff, 100_000).unwrap();
        rank_routes(&f, g, Ranking::ByCost, k, None).unwrap()
    }

    #[test]
    fn triangle_by_cost() {
        let g = triangle();
        let t = table(&g, 3, 2);
        let r = t.routes(&n("A"), &n("B"));
        assert_eq!(r.len(), 2);
        assert_eq!(
            (r[0].path.clone(), r[0].cost, r[0].rank),
            (vec![n("A"), n("B")], 1.0, 1)
        );
        assert_eq!(
            (r[1].path.clone(), r[1].cost, r[1].rank),
            (vec![n("A"), n("C"), n("B")], 2.0, 2)
        );
    }

    #[test]
    fn k1_matches_dijkstra_with_node_costs() {
        let g = graph(
            &[("A", 0.0), ("B", 0.7), ("C", 0.1), ("D", 0.0), ("E", 2.0)],
            &[
                ("A", "B", 0.3),
                ("B", "C", 1.1),
                ("C", "D", 0.2),
                ("D", "E", 0.9),
                ("E", "A", 0.4),
                ("A", "C", 1.7),
                ("B", "D", 0.6),
            ],
        );
        let t = table(&g, 4, 1);
        for d in g.originals() {
            let dist = dijkstra_to(&g, d);
            for s in g.originals() {
                if s != d {
                    assert_eq!(t.active(s, d).unwrap().cost, dist[s], "{s} -> {d}");
                }
            }
        }
    }

    #[test]
    fn costs_match_brute_force_and_are_sorted() {
        let g = graph(
            &[("A", 0.0), ("B", 0.5), ("C", 0.0), ("D", 0.25)],
            &[
                ("A", "B", 1.0),
                ("B", "C", 2.0),
                ("C", "D", 0.5),
                ("D", "A", 3.0),
                ("A", "C", 2.5),
            ],
        );
        let t = table(&g, 3, usize::MAX);
        for ((s, d), _) in t.pairs() {
            let all = t.all_routes(s, d);
            let mut want = brute_paths(&g, s, d, 3);
            want.sort_by(|a, b| {
                a.1.total_cmp(&b.1)
                    .then(a.0.len().cmp(&b.0.len()))
                    .then(a.0.cmp(&b.0))
            });
            let got: Vec<_> = all.iter().map(|r| (r.path.clone(), r.cost)).collect();
            assert_eq!(got, want);
            assert!(all.windows(2).all(|w| w[0].cost <= w[1].cost));
        }
    }

    #[test]
    fn ties_prefer_fewer_hops_then_lexicographic() {
        // A-D direct costs 2; A-B-D and A-C-D cost 1+1
        let g = graph(
            &[("A", 0.0), ("B", 0.0), ("C", 0.0), ("D", 0.0)],
            &[
                ("A", "D", 2.0),
                ("A", "B", 1.0),
                ("B", "D", 1.0),
                ("A", "C", 1.0),
                ("C", "D", 1.0),
            ],
        );
        let t = table(&g, 3, 3);
        let r = t.routes(&n("A"), &n("D"));
        assert_eq!(r[0].path, vec![n("A"), n("D")]);
        assert_eq!(r[1].path, vec![n("A"), n("B"), n("D")]);
        assert_eq!(r[2].path, vec![n("A"), n("C"), n("D")]);
    }

    #[test]
    fn switchover_promotes_survivor_without_recompute() {
        let g = triangle();
        let f = build_spt_forest(&g, 3, 100).unwrap();
        let t = rank_routes(&f, &g, Ranking::ByCost, 2, None).unwrap();
        let after = switchover_on_failure(&t, &LinkId::new("t:AB")).unwrap();
        let active = after.active(&n("A"), &n("B")).unwrap();
        assert_eq!(active.path, vec![n("A"), n("C"), n("B")]);
        assert_eq!(active.cost, 2.0);
        assert_eq!(after.recompute_counter(), f.recompute_counter());
        assert_eq!(after.all_routes(&n("A"), &n("B"))[1].cost, f64::INFINITY);
        assert_eq!(
            switchover_on_failure(&t, &LinkId::new("t:none")).unwrap_err(),
            RouteError::UnknownLink("t:none".into())
        );
    }

    #[test]
    fn failing_an_unused_link_keeps_actives() {
        let g = graph(
            &[("A", 0.0), ("B", 0.0), ("C", 0.0)],
            &[("A", "B", 1.0), ("B", "C", 1.0), ("A", "C", 5.0)],
        );
        let t = table(&g, 1, 3);
        let after = switchover_on_failure(&t, &LinkId::new("t:AC")).unwrap();
        for ((s, d), _) in t.pairs() {
            if (s.local(), d.local()) != ("A", "C") && (s.local(), d.local()) != ("C", "A") {
                assert_eq!(t.active(s, d), after.active(s, d));
            }
        }
        // with cutoff 1 the only A-C path is gone
        assert!(after.is_unreachable(&n("A"), &n("C")));
        assert!(matches!(
            query_routes(&after, &n("A"), &n("C"), 1),
            Err(RouteError::NoRoute { .. })
        ));
    }

    #[test]
    fn query_rules() {
        let t = table(&triangle(), 3, 3);
        assert_eq!(
            query_routes(&t, &n("A"), &n("B"), 1).unwrap()[0].path,
            vec![n("A"), n("B")]
        );
        assert_eq!(query_routes(&t, &n("A"), &n("B"), 10).unwrap().len(), 2);
        assert_eq!(
            query_routes(&t, &n("A"), &n("A"), 1).unwrap_err(),
            RouteError::SameEndpoints(n("A").to_string())
        );
        assert!(matches!(
            query_routes(&t, &n("A"), &n("Q"), 1),
            Err(RouteError::UnknownNode(_))
        ));
    }

    #[test]
    fn stable_path_outranks_volatile_one_of_equal_mean() {
        // two disjoint two-hop paths A-B-D and A-C-D
        let g = graph(
            &[("A", 0.0), ("B", 0.0), ("C", 0.0), ("D", 0.0)],
            &[
                ("A", "B", 1.0),
                ("B", "D", 1.0),
                ("A", "C", 1.0),
                ("C", "D", 1.0),
            ],
        );
        let f = build_spt_forest(&g, 2, 100).unwrap();
        let mut h = CostHistory::new(16, 1e-12);
        for ts in 0..10u64 {
            for l in ["t:AB", "t:BD", "t:AC", "t:CD"] {
                h.record(&LinkId::new(l), ts, 1.0).unwrap();
            }
        }
        // the volatile series sits on the lexicographically first path, so
        // only the reliability key can put C ahead
        let mut h2 = CostHistory::new(16, 1e-12);
        for ts in 0..10u64 {
            let wobble = if ts % 2 == 0 { 0.5 } else { -0.5 };
            h2.record(&LinkId::new("t:AB"), ts, 1.0 + wobble).unwrap();
            h2.record(&LinkId::new("t:BD"), ts, 1.0).unwrap();
            h2.record(&LinkId::new("t:AC"), ts, 1.0).unwrap();
            h2.record(&LinkId::new("t:CD"), ts, 1.0).unwrap();
        }
        let by_cost = rank_routes(&f, &g, Ranking::ByCost, 2, Some(&h2)).unwrap();
        assert_eq!(by_cost.active(&n("A"), &n("D")).unwrap().path[1], n("B"));
        let t = rank_routes(&f, &g, Ranking::ByReliability, 2, Some(&h2)).unwrap();
        let r = t.routes(&n("A"), &n("D"));
        assert_eq!(r[0].path[1], n("C"));
        assert_eq!(r[0].reliability, Some(f64::INFINITY));
        assert!(r[1].reliability.unwrap().is_finite());
        // equal constant histories: tie falls through to cost key
        let even = rank_routes(&f, &g, Ranking::ByReliability, 2, Some(&h)).unwrap();
        assert_eq!(even.active(&n("A"), &n("D")).unwrap().path[1], n("B"));
    }

    #[test]
    fn short_windows_fall_back_to_cost() {
        let g = triangle();
        let f = build_spt_forest(&g, 3, 100).unwrap();
        let mut h = CostHistory::new(16, 1e-12);
        h.record(&LinkId::new("t:AB"), 1, 1.0).unwrap();
        let t = rank_routes(&f, &g, Ranking::ByReliability, 2, Some(&h)).unwrap();
        assert!(t.pairs().any(|(_, p)| p.used_cost_fallback()));
        assert_eq!(
            t.active(&n("A"), &n("B")).unwrap().path,
            vec![n("A"), n("B")]
        );
    }
}
