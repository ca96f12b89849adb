use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::RouteError;
use crate::graph::{NodeId, NormalizedGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Successor {
    pub next_hop: NodeId,
    pub path: Vec<NodeId>,
    #[serde(with = "crate::ext")]
    pub distance: f64,
}

/// A neighbour other than the successor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternate {
    pub next_hop: NodeId,
    /// The neighbour's own distance to the destination.
    #[serde(with = "crate::ext")]
    pub reported_distance: f64,
    /// Distance when leaving through this neighbour.
    #[serde(with = "crate::ext")]
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualClassification {
    pub destination: NodeId,
    pub node: NodeId,
    pub successor: Option<Successor>,
    pub feasible_successors: Vec<Alternate>,
    pub non_feasible_alternates: Vec<Alternate>,
    #[serde(with = "crate::ext")]
    pub feasible_distance: f64,
}

impl DualClassification {
    /// Whether leaving through `hop` is loop-free by the feasibility rule.
    pub fn admits(&self, hop: &NodeId) -> bool {
        self.successor.as_ref().is_some_and(|s| &s.next_hop == hop)
            || self.feasible_successors.iter().any(|a| &a.next_hop == hop)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Shortest distance from every vertex to `target`, costs accumulated from
/// the target end, with the arc each vertex leaves through.
fn reverse_dijkstra(g: &NormalizedGraph, target: usize) -> (Vec<f64>, Vec<Option<usize>>) {
    let mut dist = vec![f64::INFINITY; g.vertex_count()];
    let mut next = vec![None; g.vertex_count()];
    let mut heap = BinaryHeap::new();
    dist[target] = 0.0;
    heap.push(Reverse((Dist(0.0), target)));
    while let Some(Reverse((Dist(dv), v))) = heap.pop() {
        if dv > dist[v] {
            continue;
        }
        for &ai in g.in_arcs(v) {
            let arc = g.arc(ai);
            let c = g.link_cost(arc.link);
            if !c.is_finite() {
                continue;
            }
            let cand = c + dv;
            if cand < dist[arc.from] {
                dist[arc.from] = cand;
                next[arc.from] = Some(ai);
                heap.push(Reverse((Dist(cand), arc.from)));
            }
        }
    }
    (dist, next)
}

/// DUAL-style classification of every node's neighbours towards
/// `destination`. Nodes that cannot reach it get `UnreachableDestination`.
pub fn dual_classify(
    g: &NormalizedGraph,
    destination: &NodeId,
) -> Result<BTreeMap<NodeId, Result<DualClassification, RouteError>>, RouteError> {
    let root = g
        .dst_vertex(destination)
        .ok_or_else(|| RouteError::UnknownNode(destination.to_string()))?;
    let (dist, next) = reverse_dijkstra(g, root);
    let reported = |m: &NodeId| {
        if m == destination {
            0.0
        } else {
            dist[g.src_vertex(m).expect("original node")]
        }
    };
    let mut out = BTreeMap::new();
    for n in g.originals() {
        if n == destination {
            out.insert(
                n.clone(),
                Ok(DualClassification {
                    destination: destination.clone(),
                    node: n.clone(),
                    successor: None,
                    feasible_successors: Vec::new(),
                    non_feasible_alternates: Vec::new(),
                    feasible_distance: 0.0,
                }),
            );
            continue;
        }
        let start = g.src_vertex(n).expect("original node");
        let fd = dist[start];
        if !fd.is_finite() {
            out.insert(
                n.clone(),
                Err(RouteError::UnreachableDestination {
                    node: n.to_string(),
                    destination: destination.to_string(),
                }),
            );
            continue;
        }
        let mut neighbours: Vec<Alternate> = g
            .out_arcs(start)
            .iter()
            .filter(|&&ai| g.is_hop(ai))
            .filter_map(|&ai| {
                let arc = g.arc(ai);
                let c = g.link_cost(arc.link);
                let m = g.owner(arc.to).clone();
                let via = c + dist[arc.to];
                via.is_finite().then(|| Alternate {
                    reported_distance: reported(&m),
                    distance: via,
                    next_hop: m,
                })
            })
            .collect();
        neighbours.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then_with(|| a.next_hop.cmp(&b.next_hop))
        });

        // path along the shortest-path pointers
        let mut path = vec![n.clone()];
        let mut v = start;
        while let Some(ai) = next[v] {
            v = g.arc(ai).to;
            if path.last() != Some(g.owner(v)) {
                path.push(g.owner(v).clone());
            }
        }
        let first_hop = path[1].clone();
        let idx = neighbours
            .iter()
            .position(|a| a.next_hop == first_hop)
            .expect("successor is a neighbour");
        let succ = neighbours.remove(idx);
        let (feasible, rest): (Vec<_>, Vec<_>) = neighbours
            .into_iter()
            .partition(|a| a.reported_distance < fd);
        out.insert(
            n.clone(),
            Ok(DualClassification {
                destination: destination.clone(),
                node: n.clone(),
                successor: Some(Successor {
                    next_hop: succ.next_hop,
                    path,
                    distance: succ.distance,
                }),
                feasible_successors: feasible,
                non_feasible_alternates: rest,
                feasible_distance: fd,
            }),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::route::testkit::{dijkstra_to, graph, n};

    fn class(g: &NormalizedGraph, node: &str, d: &str) -> DualClassification {
        dual_classify(g, &n(d)).unwrap()[&n(node)].clone().unwrap()
    }

    #[test]
    fn non_feasible_neighbour_is_listed_as_alternate() {
        // N1 reaches D at 2, N2 at 4
        let g = graph(
            &[("S", 0.0), ("N1", 0.0), ("N2", 0.0), ("D", 0.0)],
            &[
                ("S", "N1", 1.0),
                ("S", "N2", 1.0),
                ("N1", "D", 2.0),
                ("N2", "D", 4.0),
            ],
        );
        let c = class(&g, "S", "D");
        let dist = dijkstra_to(&g, &n("D"));
        assert_eq!(c.feasible_distance, dist[&n("S")]);
        assert_eq!(c.feasible_distance, 3.0);
        assert_eq!(c.successor.as_ref().unwrap().next_hop, n("N1"));
        assert_eq!(
            c.successor.as_ref().unwrap().path,
            vec![n("S"), n("N1"), n("D")]
        );
        assert!(c.feasible_successors.is_empty());
        assert_eq!(c.non_feasible_alternates.len(), 1);
        assert_eq!(c.non_feasible_alternates[0].next_hop, n("N2"));
        assert_eq!(
            c.non_feasible_alternates[0].reported_distance,
            dist[&n("N2")]
        );
    }

    #[test]
    fn equal_cost_second_path_is_feasible() {
        let g = graph(
            &[("S", 0.0), ("N1", 0.0), ("N2", 0.0), ("D", 0.0)],
            &[
                ("S", "N1", 1.0),
                ("S", "N2", 1.0),
                ("N1", "D", 2.0),
                ("N2", "D", 2.0),
            ],
        );
        let c = class(&g, "S", "D");
        assert_eq!(c.successor.unwrap().next_hop, n("N1"));
        assert_eq!(c.feasible_successors.len(), 1);
        assert_eq!(c.feasible_successors[0].next_hop, n("N2"));
        assert!(c.feasible_successors[0].reported_distance < c.feasible_distance);
    }

    #[test]
    fn destination_is_trivial_and_unreachable_is_reported() {
        let g = graph(&[("A", 0.0), ("B", 0.0), ("Z", 0.0)], &[("A", "B", 1.0)]);
        let all = dual_classify(&g, &n("B")).unwrap();
        let own = all[&n("B")].as_ref().unwrap();
        assert_eq!(own.feasible_distance, 0.0);
        assert!(own.successor.is_none() && own.feasible_successors.is_empty());
        assert!(matches!(
            all[&n("Z")],
            Err(RouteError::UnreachableDestination { .. })
        ));
    }

    #[test]
    fn feasible_successor_paths_are_loop_free() {
        let g = graph(
            &[("A", 0.0), ("B", 1.0), ("C", 0.0), ("D", 0.5), ("E", 0.0)],
            &[
                ("A", "B", 1.0),
                ("B", "C", 1.0),
                ("C", "D", 1.0),
                ("D", "E", 1.0),
                ("E", "A", 1.0),
                ("A", "C", 2.0),
                ("B", "E", 1.5),
            ],
        );
        for d in g.originals() {
            let all = dual_classify(&g, d).unwrap();
            for (node, c) in &all {
                let c = c.as_ref().unwrap();
                for fs in &c.feasible_successors {
                    assert!(fs.reported_distance < c.feasible_distance);
                    // the neighbour's own best path must not come back
                    let theirs = all[&fs.next_hop].as_ref().unwrap();
                    let path = theirs
                        .successor
                        .as_ref()
                        .map(|s| s.path.clone())
                        .unwrap_or_else(|| vec![fs.next_hop.clone()]);
                    assert!(!path.contains(node), "{node} via {} loops", fs.next_hop);
                }
            }
        }
    }
}
