use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{RouteError, RouteLogic, RoutingLogic, Warning};
use crate::graph::{GraphDoc, GraphError, NormalizedGraph};

/// Body of a policy package: the normalized graph and the routing logic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBody {
    pub intent_id: String,
    pub graph: GraphDoc,
    pub logic: RoutingLogic,
}

/// A checksummed policy. On the wire it is the lowercase hex SHA-256 of the
/// body, a newline, then the canonical JSON body (sorted keys).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyPackage {
    pub body: PolicyBody,
    pub checksum: String,
}

fn canonical(body: &PolicyBody) -> String {
    // going through Value sorts every object's keys
    let value = serde_json::to_value(body).expect("policy body serializes");
    serde_json::to_string(&value).expect("value serializes")
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl PolicyPackage {
    pub fn seal(intent_id: &str, graph: &NormalizedGraph, logic: RoutingLogic) -> Self {
        let body = PolicyBody {
            intent_id: intent_id.to_string(),
            graph: graph.to_doc(),
            logic,
        };
        let checksum = digest(canonical(&body).as_bytes());
        PolicyPackage { body, checksum }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(self.checksum.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(canonical(&self.body).as_bytes());
        out
    }

    /// Parses wire bytes. Any framing or digest disagreement is reported as
    /// a checksum mismatch.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RouteError> {
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(RouteError::ChecksumMismatch)?;
        let (header, body) = (&bytes[..split], &bytes[split + 1..]);
        if header != digest(body).as_bytes() {
            return Err(RouteError::ChecksumMismatch);
        }
        let body: PolicyBody =
            serde_json::from_slice(body).map_err(|e| RouteError::MalformedPolicy(e.to_string()))?;
        Ok(PolicyPackage {
            checksum: String::from_utf8_lossy(header).into_owned(),
            body,
        })
    }
}

/// A policy that passed [`check_integrity`].
#[derive(Debug, Clone)]
pub struct CheckedPolicy {
    pub intent_id: String,
    pub graph: NormalizedGraph,
    pub logic: RouteLogic,
    pub warnings: Vec<Warning>,
}

/// Server-side validation of a received package: checksum, simple graph,
/// metric, algorithm, bounds. Disconnected parts are reported, not rejected.
pub fn check_integrity(wire: &[u8]) -> Result<CheckedPolicy, RouteError> {
    let pkg = PolicyPackage::from_bytes(wire)?;
    let graph = NormalizedGraph::from_doc(&pkg.body.graph).map_err(|e| match e {
        GraphError::NotSimple(v) => RouteError::NotSimpleGraph(v),
        other => RouteError::Graph(other),
    })?;
    let logic = pkg.body.logic.resolve(&graph)?;
    let mut components = graph.components();
    // the largest component (first on ties) is the network; the rest are warned
    let main = components
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i);
    let warnings = match main {
        Some(i) => {
            components.remove(i);
            components
                .into_iter()
                .map(|nodes| Warning::DisconnectedComponent { nodes })
                .collect()
        }
        None => Vec::new(),
    };
    Ok(CheckedPolicy {
        intent_id: pkg.body.intent_id,
        graph,
        logic,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{MetricError, MetricSpec};
    use crate::route::testkit::{graph, n, triangle};

    fn logic() -> RoutingLogic {
        RoutingLogic::new(MetricSpec::weighted_sum("lat", &[("latency", 1.0)]), "spf")
    }

    #[test]
    fn well_formed_package_passes_clean() {
        let pkg = PolicyPackage::seal("i1", &triangle(), logic());
        let checked = check_integrity(&pkg.to_bytes()).unwrap();
        assert!(checked.warnings.is_empty());
        assert_eq!(checked.graph, triangle());
        assert_eq!(checked.logic.cutoff, 3);
        assert_eq!(PolicyPackage::from_bytes(&pkg.to_bytes()).unwrap(), pkg);
    }

    #[test]
    fn every_single_byte_mutation_is_caught() {
        let bytes = PolicyPackage::seal("i1", &triangle(), logic()).to_bytes();
        for i in (0..bytes.len()).step_by(7) {
            let mut m = bytes.clone();
            m[i] ^= 0x01;
            assert_eq!(
                check_integrity(&m).unwrap_err(),
                RouteError::ChecksumMismatch,
                "byte {i}"
            );
        }
    }

    #[test]
    fn isolated_node_is_a_warning() {
        let g = graph(
            &[("A", 0.0), ("B", 0.0), ("C", 0.0), ("Z", 0.0)],
            &[("A", "B", 1.0), ("B", "C", 1.0)],
        );
        let checked = check_integrity(&PolicyPackage::seal("i", &g, logic()).to_bytes()).unwrap();
        assert_eq!(
            checked.warnings,
            vec![Warning::DisconnectedComponent {
                nodes: vec![n("Z")]
            }]
        );
    }

    #[test]
    fn logic_errors_propagate() {
        let mut bad = logic();
        bad.metric = MetricSpec::weighted_sum("x", &[("latency", 0.5), ("load", 0.4)]);
        assert!(matches!(
            check_integrity(&PolicyPackage::seal("i", &triangle(), bad).to_bytes()),
            Err(RouteError::Metric(MetricError::WeightSumViolation { .. }))
        ));
        let mut algo = logic();
        algo.algorithm = "ospf".into();
        assert_eq!(
            check_integrity(&PolicyPackage::seal("i", &triangle(), algo).to_bytes()).unwrap_err(),
            RouteError::UnknownAlgorithm("ospf".into())
        );
        let mut cut = logic();
        cut.cutoff_diameter = Some(0);
        assert!(matches!(
            check_integrity(&PolicyPackage::seal("i", &triangle(), cut).to_bytes()),
            Err(RouteError::BadCutoff(_))
        ));
    }

    #[test]
    fn parallel_links_in_body_are_rejected() {
        let mut pkg = PolicyPackage::seal("i", &triangle(), logic());
        let mut dup = pkg.body.graph.links[0].clone();
        dup.id = crate::graph::LinkId::new("t:dup");
        pkg.body.graph.links.push(dup);
        pkg.checksum = digest(canonical(&pkg.body).as_bytes());
        assert!(matches!(
            check_integrity(&pkg.to_bytes()),
            Err(RouteError::NotSimpleGraph(_))
        ));
    }
}
