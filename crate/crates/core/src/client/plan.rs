use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ClientError;
use crate::graph::NodeId;
use crate::route::RouteResponse;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NextHop {
    /// Neighbouring device in the same controller.
    Device { node: NodeId },
    /// Leave the controller; the route continues at `via` in another one.
    Exterior { via: NodeId },
}

/// The part of one ranked route that lies in a single controller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteSegment {
    pub src: NodeId,
    pub dst: NodeId,
    pub rank: usize,
    /// Position of the segment along the route.
    pub seq: usize,
    pub path: Vec<NodeId>,
}

/// Forwarding state for one device towards one destination. Next hops are
/// tried in order, like floating static routes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstallEntry {
    pub device: NodeId,
    pub dst: NodeId,
    pub next_hops: Vec<NextHop>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerSection {
    pub entries: Vec<InstallEntry>,
    pub segments: Vec<RouteSegment>,
}

impl ControllerSection {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.segments.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstallPlan {
    pub sections: BTreeMap<String, ControllerSection>,
}

impl InstallPlan {
    /// Reassembles every ranked route from the segments of all sections.
    pub fn routes(&self) -> BTreeMap<(NodeId, NodeId), Vec<Vec<NodeId>>> {
        let mut parts: BTreeMap<(NodeId, NodeId, usize), Vec<(usize, &[NodeId])>> = BTreeMap::new();
        for sec in self.sections.values() {
            for s in &sec.segments {
                parts
                    .entry((s.src.clone(), s.dst.clone(), s.rank))
                    .or_default()
                    .push((s.seq, &s.path));
            }
        }
        let mut out: BTreeMap<(NodeId, NodeId), Vec<Vec<NodeId>>> = BTreeMap::new();
        for ((src, dst, _), mut segs) in parts {
            segs.sort_by_key(|(seq, _)| *seq);
            let path = segs.iter().flat_map(|(_, p)| p.iter().cloned()).collect();
            out.entry((src, dst)).or_default().push(path);
        }
        out
    }

    pub fn entry(&self, device: &NodeId, dst: &NodeId) -> Option<&InstallEntry> {
        self.sections.get(device.ns()).and_then(|s| {
            s.entries
                .iter()
                .find(|e| &e.device == device && &e.dst == dst)
        })
    }
}

/// Splits every route of `resp` at controller boundaries and turns each
/// pair's ranked alternates into ordered next-hop lists.
///
/// A device's own routes come first, in rank order; hops taken by routes of
/// other sources that transit the device follow. Unreachable pairs produce an
/// empty list, withdrawing whatever was installed before.
pub fn plan_install(
    resp: &RouteResponse,
    controllers: &BTreeSet<String>,
) -> Result<InstallPlan, ClientError> {
    let owner = |n: &NodeId| -> Result<String, ClientError> {
        if controllers.contains(n.ns()) {
            Ok(n.ns().to_string())
        } else {
            Err(ClientError::UnknownControllerForNode(n.to_string()))
        }
    };
    type Key = (NodeId, NodeId);
    // (own route first, source, rank) orders the candidates of a device
    let mut hops: BTreeMap<Key, Vec<((bool, NodeId, usize), NextHop)>> = BTreeMap::new();
    let mut plan = InstallPlan::default();

    for pair in &resp.pairs {
        owner(&pair.src)?;
        owner(&pair.dst)?;
        hops.entry((pair.src.clone(), pair.dst.clone()))
            .or_default();
        for route in &pair.routes {
            let mut segments: Vec<Vec<NodeId>> = Vec::new();
            for n in route.path.iter().filter(|n| !n.is_pseudo()) {
                match segments.last_mut() {
                    Some(seg) if seg[0].ns() == n.ns() => seg.push(n.clone()),
                    _ => segments.push(vec![n.clone()]),
                }
            }
            for (seq, seg) in segments.iter().enumerate() {
                let ctrl = owner(&seg[0])?;
                let hop = match (seg.get(1), segments.get(seq + 1)) {
                    (Some(next), _) => Some(NextHop::Device { node: next.clone() }),
                    (None, Some(next_seg)) => Some(NextHop::Exterior {
                        via: next_seg[0].clone(),
                    }),
                    (None, None) => None,
                };
                if let Some(hop) = hop {
                    let own = seg[0] == pair.src;
                    hops.entry((seg[0].clone(), pair.dst.clone()))
                        .or_default()
                        .push(((!own, pair.src.clone(), route.rank), hop));
                }
                plan.sections
                    .entry(ctrl)
                    .or_default()
                    .segments
                    .push(RouteSegment {
                        src: pair.src.clone(),
                        dst: pair.dst.clone(),
                        rank: route.rank,
                        seq,
                        path: seg.clone(),
                    });
            }
        }
    }

    for ((device, dst), mut cands) in hops {
        cands.sort();
        let mut next_hops: Vec<NextHop> = Vec::new();
        for (_, h) in cands {
            if !next_hops.contains(&h) {
                next_hops.push(h);
            }
        }
        plan.sections
            .entry(owner(&device)?)
            .or_default()
            .entries
            .push(InstallEntry {
                device,
                dst,
                next_hops,
            });
    }
    Ok(plan)
}
