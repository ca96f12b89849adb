use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RouteError;
use crate::graph::{GraphError, LinkId, LinkKind, NodeId, NormalizedGraph};

const NO_PARENT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct TreeNode {
    pub vertex: u32,
    pub parent: u32,
    /// Arc leading from this node towards the root.
    pub arc: u32,
    pub hops: u16,
}

/// Paths towards one destination, stored as a parent-pointer trie. Parents
/// always precede their children.
#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct Tree {
    pub nodes: Vec<TreeNode>,
    pub paths: usize,
}

impl Tree {
    fn rooted(vertex: usize) -> Self {
        Tree {
            nodes: vec![TreeNode {
                vertex: vertex as u32,
                parent: NO_PARENT,
                arc: u32::MAX,
                hops: 0,
            }],
            paths: 0,
        }
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        let p = self.nodes[i].parent;
        (p != NO_PARENT).then_some(p as usize)
    }
}

/// Owner bookkeeping derived from a graph: dense indices for original nodes
/// so a path can be checked for repeats with a bitset.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Owners {
    pub names: Vec<NodeId>,
    /// Vertex -> owner index.
    pub of_vertex: Vec<u32>,
    /// Vertex is where a path from its owner starts.
    pub endpoint: Vec<bool>,
}

impl Owners {
    pub fn of(g: &NormalizedGraph) -> Self {
        let mut index: BTreeMap<&NodeId, u32> = BTreeMap::new();
        let mut names = Vec::new();
        let mut of_vertex = Vec::with_capacity(g.vertex_count());
        let mut endpoint = Vec::with_capacity(g.vertex_count());
        for v in 0..g.vertex_count() {
            let owner = g.owner(v);
            let ix = *index.entry(owner).or_insert_with(|| {
                names.push(owner.clone());
                names.len() as u32 - 1
            });
            of_vertex.push(ix);
            endpoint.push(!owner.is_pseudo() && g.src_vertex(owner) == Some(v));
        }
        Owners {
            names,
            of_vertex,
            endpoint,
        }
    }
}

/// All simple paths of at most `cutoff` hops, as one tree per destination.
#[derive(Debug, Clone, PartialEq)]
pub struct SptForest {
    pub(crate) trees: BTreeMap<NodeId, Tree>,
    pub(crate) owners: Owners,
    cutoff: usize,
    max_paths: usize,
    vertex_count: usize,
    arc_count: usize,
    pub(crate) removed: BTreeSet<NodeId>,
    recompute_counter: u64,
}

/// A topology change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyDelta {
    LinkAdded {
        link: LinkId,
        a: NodeId,
        b: NodeId,
        #[serde(with = "crate::ext")]
        cost: f64,
    },
    LinkRemoved {
        link: LinkId,
    },
    NodeAdded {
        node: NodeId,
        #[serde(default)]
        cost: f64,
    },
    NodeRemoved {
        node: NodeId,
    },
}

struct Grower<'a> {
    g: &'a NormalizedGraph,
    owners: &'a Owners,
    cutoff: usize,
    limit: usize,
}

impl Grower<'_> {
    /// Backward depth-first expansion below tree node `t`. `on_path` marks
    /// the owners between `t` and the root.
    fn grow(&self, tree: &mut Tree, t: usize, on_path: &mut [bool]) -> Result<(), RouteError> {
        let TreeNode { vertex, hops, .. } = tree.nodes[t];
        if hops as usize >= self.cutoff {
            return Ok(());
        }
        for &ai in self.g.in_arcs(vertex as usize) {
            let x = self.g.arc(ai).from;
            let ox = self.owners.of_vertex[x] as usize;
            let hop = self.g.is_hop(ai);
            if hop && on_path[ox] {
                continue;
            }
            self.attach(tree, t, ai, hop, on_path)?;
        }
        Ok(())
    }

    fn attach(
        &self,
        tree: &mut Tree,
        t: usize,
        ai: usize,
        hop: bool,
        on_path: &mut [bool],
    ) -> Result<(), RouteError> {
        let x = self.g.arc(ai).from;
        let ox = self.owners.of_vertex[x] as usize;
        let child = tree.nodes.len();
        tree.nodes.push(TreeNode {
            vertex: x as u32,
            parent: t as u32,
            arc: ai as u32,
            hops: tree.nodes[t].hops + u16::from(hop),
        });
        if self.owners.endpoint[x] {
            tree.paths += 1;
            if tree.paths > self.limit {
                return Err(RouteError::GraphTooLarge { limit: self.limit });
            }
        }
        on_path[ox] = true;
        let r = self.grow(tree, child, on_path);
        if hop {
            on_path[ox] = false;
        }
        r
    }

    fn build(&self, d: &NodeId) -> Result<Tree, RouteError> {
        let root = self.g.dst_vertex(d).expect("destination in graph");
        let mut tree = Tree::rooted(root);
        let mut on_path = vec![false; self.owners.names.len()];
        on_path[self.owners.of_vertex[root] as usize] = true;
        self.grow(&mut tree, 0, &mut on_path)?;
        Ok(tree)
    }

    /// Adds the branches that enter the tree through arc `ai`. Returns
    /// whether anything was grafted.
    fn graft(&self, tree: &mut Tree, ai: usize) -> Result<bool, RouteError> {
        let arc = self.g.arc(ai);
        let ox = self.owners.of_vertex[arc.from] as usize;
        let before = tree.nodes.len();
        let mut on_path = vec![false; self.owners.names.len()];
        for t in 0..before {
            if tree.nodes[t].vertex as usize != arc.to || tree.nodes[t].hops as usize >= self.cutoff
            {
                continue;
            }
            let mut cur = Some(t);
            while let Some(c) = cur {
                on_path[self.owners.of_vertex[tree.nodes[c].vertex as usize] as usize] = true;
                cur = tree.parent(c);
            }
            let fits = !on_path[ox];
            if fits {
                self.attach(tree, t, ai, true, &mut on_path)?;
            }
            on_path.iter_mut().for_each(|b| *b = false);
        }
        Ok(tree.nodes.len() > before)
    }
}

/// Phase 1: enumerates, for every destination, all simple paths of at most
/// `cutoff` hops. Trees are built in parallel; the result does not depend on
/// scheduling.
pub fn build_spt_forest(
    g: &NormalizedGraph,
    cutoff: usize,
    max_paths: usize,
) -> Result<SptForest, RouteError> {
    let owners = Owners::of(g);
    let grower = Grower {
        g,
        owners: &owners,
        cutoff,
        limit: max_paths,
    };
    let dests: Vec<&NodeId> = g.originals().iter().filter(|n| !n.is_pseudo()).collect();
    let built: Vec<(NodeId, Tree)> = dests
        .par_iter()
        .map(|d| grower.build(d).map(|t| ((*d).clone(), t)))
        .collect::<Result<_, _>>()?;
    let total: usize = built.iter().map(|(_, t)| t.paths).sum();
    if total > max_paths {
        return Err(RouteError::GraphTooLarge { limit: max_paths });
    }
    log::debug!(
        "forest built: {} trees, {total} paths, cutoff {cutoff}",
        built.len()
    );
    Ok(SptForest {
        recompute_counter: built.len() as u64,
        trees: built.into_iter().collect(),
        owners,
        cutoff,
        max_paths,
        vertex_count: g.vertex_count(),
        arc_count: g.arcs().len(),
        removed: BTreeSet::new(),
    })
}

impl SptForest {
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn recompute_counter(&self) -> u64 {
        self.recompute_counter
    }

    pub fn path_count(&self) -> usize {
        self.trees.values().map(|t| t.paths).sum()
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn destinations(&self) -> impl Iterator<Item = &NodeId> {
        self.trees.keys()
    }

    pub fn removed_nodes(&self) -> &BTreeSet<NodeId> {
        &self.removed
    }

    /// Fails unless `g` is the graph (or a re-weighting of it) this forest
    /// was built over.
    pub fn check_graph(&self, g: &NormalizedGraph) -> Result<(), RouteError> {
        if g.vertex_count() != self.vertex_count || g.arcs().len() != self.arc_count {
            return Err(RouteError::ForestGraphMismatch);
        }
        Ok(())
    }

    /// Vertex sequence and arcs of the branch from tree node `i` to the root.
    pub(crate) fn branch(&self, tree: &Tree, i: usize) -> (Vec<u32>, Vec<u32>) {
        let mut vertices = Vec::with_capacity(tree.nodes[i].hops as usize * 2 + 1);
        let mut arcs = Vec::with_capacity(tree.nodes[i].hops as usize * 2);
        let mut cur = Some(i);
        while let Some(c) = cur {
            vertices.push(tree.nodes[c].vertex);
            if tree.nodes[c].parent != NO_PARENT {
                arcs.push(tree.nodes[c].arc);
            }
            cur = tree.parent(c);
        }
        (vertices, arcs)
    }

    /// Original-node sequences of every enumerated path `s -> d`.
    pub fn paths(&self, s: &NodeId, d: &NodeId) -> Vec<Vec<NodeId>> {
        let Some(tree) = self.trees.get(d) else {
            return Vec::new();
        };
        (1..tree.nodes.len())
            .filter(|&i| {
                let v = tree.nodes[i].vertex as usize;
                self.owners.endpoint[v]
                    && &self.owners.names[self.owners.of_vertex[v] as usize] == s
            })
            .map(|i| self.fuse(&self.branch(tree, i).0))
            .collect()
    }

    pub(crate) fn fuse(&self, vertices: &[u32]) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = Vec::with_capacity(vertices.len());
        let mut last = u32::MAX;
        for &v in vertices {
            let o = self.owners.of_vertex[v as usize];
            if o != last {
                out.push(self.owners.names[o as usize].clone());
                last = o;
            }
        }
        out
    }

    /// Applies one delta in place. Removals only mark links `+inf`;
    /// additions graft the new branches. Returns the number of trees that
    /// received new branches.
    pub fn apply(
        &mut self,
        g: &mut NormalizedGraph,
        delta: &TopologyDelta,
    ) -> Result<usize, RouteError> {
        self.check_graph(g)?;
        let touched = match delta {
            TopologyDelta::LinkRemoved { link } => {
                let idx = g
                    .link_id(link)
                    .ok_or_else(|| RouteError::UnknownLink(link.to_string()))?;
                if g.link(idx).kind == LinkKind::Split {
                    return Err(RouteError::UnknownLink(link.to_string()));
                }
                g.set_link_usable(link, false, f64::INFINITY)?;
                0
            }
            TopologyDelta::NodeRemoved { node } => {
                if !g.contains(node) {
                    return Err(RouteError::UnknownNode(node.to_string()));
                }
                for li in g.incident_links(node) {
                    let id = g.link(li).id.clone();
                    g.set_link_usable(&id, false, f64::INFINITY)?;
                }
                self.removed.insert(node.clone());
                0
            }
            TopologyDelta::NodeAdded { node, cost } => {
                if g.contains(node) {
                    if !self.removed.remove(node) {
                        return Err(GraphError::Duplicate(node.to_string()).into());
                    }
                    0
                } else {
                    g.insert_node(node.clone(), *cost)?;
                    self.owners = Owners::of(g);
                    if node.is_pseudo() {
                        0
                    } else {
                        let root = g.dst_vertex(node).expect("just inserted");
                        self.trees.insert(node.clone(), Tree::rooted(root));
                        1
                    }
                }
            }
            TopologyDelta::LinkAdded { link, a, b, cost } => {
                for end in [a, b] {
                    if !g.contains(end) {
                        return Err(RouteError::UnknownNode(end.to_string()));
                    }
                }
                if let Some(idx) = g.link_id(link) {
                    let l = g.link(idx);
                    let same = (&l.a == a && &l.b == b) || (&l.a == b && &l.b == a);
                    if !same || l.kind == LinkKind::Split {
                        return Err(GraphError::Duplicate(link.to_string()).into());
                    }
                    // resurrection: the branches never went away
                    g.set_link_usable(link, true, *cost)?;
                    0
                } else {
                    let first_arc = g.arcs().len();
                    g.insert_link(link.clone(), LinkKind::Physical, a, b, *cost)?;
                    self.owners = Owners::of(g);
                    self.graft(g, [first_arc, first_arc + 1])?
                }
            }
        };
        self.vertex_count = g.vertex_count();
        self.arc_count = g.arcs().len();
        self.recompute_counter += touched as u64;
        Ok(touched)
    }

    fn graft(&mut self, g: &NormalizedGraph, arcs: [usize; 2]) -> Result<usize, RouteError> {
        let grower = Grower {
            g,
            owners: &self.owners,
            cutoff: self.cutoff,
            limit: self.max_paths,
        };
        let changed: Vec<bool> = self
            .trees
            .par_iter_mut()
            .map(|(_, tree)| {
                let mut any = false;
                for &ai in &arcs {
                    any |= grower.graft(tree, ai)?;
                }
                Ok(any)
            })
            .collect::<Result<_, RouteError>>()?;
        if self.path_count() > self.max_paths {
            return Err(RouteError::GraphTooLarge {
                limit: self.max_paths,
            });
        }
        Ok(changed.into_iter().filter(|&c| c).count())
    }
}

/// Functional form of [`SptForest::apply`]: the inputs are left untouched
/// and the updated versions are returned.
pub fn apply_topology_delta(
    forest: &SptForest,
    g: &NormalizedGraph,
    delta: &TopologyDelta,
) -> Result<(SptForest, NormalizedGraph), RouteError> {
    let mut f = forest.clone();
    let mut g = g.clone();
    f.apply(&mut g, delta)?;
    Ok((f, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::route::testkit::{brute_paths, graph, n, triangle};

    fn sorted(mut v: Vec<Vec<NodeId>>) -> Vec<Vec<NodeId>> {
        v.sort();
        v
    }

    fn assert_matches_brute(g: &NormalizedGraph, f: &SptForest) {
        for s in g.originals() {
            for d in g.originals() {
                if s == d {
                    continue;
                }
                let expected = sorted(
                    brute_paths(g, s, d, f.cutoff())
                        .into_iter()
                        .map(|p| p.0)
                        .collect(),
                );
                assert_eq!(sorted(f.paths(s, d)), expected, "{s} -> {d}");
            }
        }
    }

    #[test]
    fn triangle_cutoffs() {
        let g = triangle();
        let f = build_spt_forest(&g, 3, 1000).unwrap();
        assert_eq!(
            sorted(f.paths(&n("A"), &n("B"))),
            vec![vec![n("A"), n("B")], vec![n("A"), n("C"), n("B")]]
        );
        let f1 = build_spt_forest(&g, 1, 1000).unwrap();
        assert_eq!(f1.paths(&n("A"), &n("B")), vec![vec![n("A"), n("B")]]);
    }

    #[test]
    fn split_nodes_are_fused_and_enumerated_once() {
        let g = graph(
            &[("A", 0.0), ("B", 2.0), ("C", 0.0), ("D", 1.5)],
            &[
                ("A", "B", 1.0),
                ("B", "C", 1.0),
                ("C", "D", 1.0),
                ("D", "A", 1.0),
                ("B", "D", 1.0),
            ],
        );
        for cutoff in 1..=4 {
            let f = build_spt_forest(&g, cutoff, 10_000).unwrap();
            assert_matches_brute(&g, &f);
        }
    }

    #[test]
    fn path_guard_trips() {
        let mut edges = Vec::new();
        let names: Vec<String> = (0..7).map(|i| format!("k{i}")).collect();
        for i in 0..7 {
            for j in i + 1..7 {
                edges.push((names[i].as_str(), names[j].as_str(), 1.0));
            }
        }
        let nodes: Vec<(&str, f64)> = names.iter().map(|s| (s.as_str(), 0.0)).collect();
        let g = graph(&nodes, &edges);
        assert_eq!(
            build_spt_forest(&g, 6, 100).unwrap_err(),
            RouteError::GraphTooLarge { limit: 100 }
        );
        assert!(build_spt_forest(&g, 6, 1_000_000).is_ok());
    }

    #[test]
    fn parallel_build_is_deterministic() {
        let g = graph(
            &[("A", 0.0), ("B", 1.0), ("C", 0.0), ("D", 0.0), ("E", 3.0)],
            &[
                ("A", "B", 1.0),
                ("B", "C", 1.0),
                ("C", "D", 1.0),
                ("D", "E", 1.0),
                ("E", "A", 1.0),
                ("A", "C", 1.0),
            ],
        );
        let a = build_spt_forest(&g, 4, 10_000).unwrap();
        for _ in 0..5 {
            assert_eq!(build_spt_forest(&g, 4, 10_000).unwrap(), a);
        }
    }

    #[test]
    fn chord_on_four_cycle_grafts_new_paths_only() {
        let mut g = graph(
            &[("A", 0.0), ("B", 0.0), ("C", 0.0), ("D", 0.0)],
            &[
                ("A", "B", 1.0),
                ("B", "C", 1.0),
                ("C", "D", 1.0),
                ("D", "A", 1.0),
            ],
        );
        let mut f = build_spt_forest(&g, 3, 10_000).unwrap();
        let before = f.clone();
        let counter = f.recompute_counter();
        let touched = f
            .apply(
                &mut g,
                &TopologyDelta::LinkAdded {
                    link: LinkId::new("t:AC"),
                    a: n("A"),
                    b: n("C"),
                    cost: 1.0,
                },
            )
            .unwrap();
        assert!(touched > 0);
        assert_eq!(f.recompute_counter(), counter + touched as u64);
        // old branches are a bit-identical prefix of every tree
        for (d, tree) in &before.trees {
            assert_eq!(&f.trees[d].nodes[..tree.nodes.len()], &tree.nodes[..]);
        }
        assert_matches_brute(&g, &f);
        assert!(f.paths(&n("A"), &n("C")).contains(&vec![n("A"), n("C")]));
    }

    #[test]
    fn removals_keep_branches() {
        let mut g = triangle();
        let mut f = build_spt_forest(&g, 3, 100).unwrap();
        let c = f.recompute_counter();
        f.apply(
            &mut g,
            &TopologyDelta::LinkRemoved {
                link: LinkId::new("t:AB"),
            },
        )
        .unwrap();
        assert_eq!(f.recompute_counter(), c);
        assert_eq!(f.paths(&n("A"), &n("B")).len(), 2);
        assert_eq!(
            g.link_cost(g.link_id(&LinkId::new("t:AB")).unwrap()),
            f64::INFINITY
        );
        assert_eq!(
            f.apply(
                &mut g,
                &TopologyDelta::LinkRemoved {
                    link: LinkId::new("t:XY")
                }
            ),
            Err(RouteError::UnknownLink("t:XY".into()))
        );
        f.apply(&mut g, &TopologyDelta::NodeRemoved { node: n("C") })
            .unwrap();
        assert_eq!(f.recompute_counter(), c);
        assert!(f.removed_nodes().contains(&n("C")));
        assert_eq!(
            f.apply(&mut g, &TopologyDelta::NodeRemoved { node: n("Z") }),
            Err(RouteError::UnknownNode(n("Z").to_string()))
        );
    }

    #[test]
    fn new_node_then_link_equals_rebuild() {
        let mut g = triangle();
        let mut f = build_spt_forest(&g, 3, 1000).unwrap();
        f.apply(
            &mut g,
            &TopologyDelta::NodeAdded {
                node: n("E"),
                cost: 2.0,
            },
        )
        .unwrap();
        f.apply(
            &mut g,
            &TopologyDelta::LinkAdded {
                link: LinkId::new("t:CE"),
                a: n("C"),
                b: n("E"),
                cost: 1.0,
            },
        )
        .unwrap();
        f.apply(
            &mut g,
            &TopologyDelta::LinkAdded {
                link: LinkId::new("t:AE"),
                a: n("A"),
                b: n("E"),
                cost: 1.0,
            },
        )
        .unwrap();
        assert_matches_brute(&g, &f);
        let rebuilt = build_spt_forest(&g, 3, 1000).unwrap();
        for s in g.originals() {
            for d in g.originals() {
                assert_eq!(sorted(f.paths(s, d)), sorted(rebuilt.paths(s, d)));
            }
        }
    }

    #[test]
    fn mismatched_graph_is_rejected() {
        let f = build_spt_forest(&triangle(), 2, 100).unwrap();
        let other = graph(&[("A", 0.0), ("B", 0.0)], &[("A", "B", 1.0)]);
        assert_eq!(f.check_graph(&other), Err(RouteError::ForestGraphMismatch));
    }

    #[test]
    fn delta_wire_format() {
        let d: TopologyDelta =
            serde_json::from_str(r#"{"kind":"link_removed","link":"c1:l1"}"#).unwrap();
        assert_eq!(
            d,
            TopologyDelta::LinkRemoved {
                link: LinkId::new("c1:l1")
            }
        );
    }
}
