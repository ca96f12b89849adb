use serde::{Deserialize, Serialize};

use super::{evaluate_metric, MetricError, ValidatedMetric};
use crate::graph::{LinkId, LinkKind, NormalizedGraph};
use crate::shellmon::KpiSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Every telemetered link must have a sample.
    Strict,
    /// Links without a sample cost `+inf` and are reported.
    #[default]
    Lenient,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub missing: Vec<LinkId>,
}

/// Sets every usable physical link's cost to `f_metric(sample)`. Pseudo and
/// split links keep their fixed costs; unusable links stay at `+inf`.
pub fn weight_graph(
    g: &NormalizedGraph,
    spec: &ValidatedMetric,
    snapshot: &KpiSnapshot,
    mode: WeightMode,
) -> Result<(NormalizedGraph, WeightReport), MetricError> {
    let mut out = g.clone();
    let mut report = WeightReport::default();
    for link in g.links() {
        if link.kind != LinkKind::Physical {
            continue;
        }
        let cost = if !link.usable {
            f64::INFINITY
        } else {
            match snapshot.get(link.id.as_str()) {
                Some(sample) => evaluate_metric(spec, &sample.values)?,
                None if mode == WeightMode::Strict => {
                    return Err(MetricError::MissingLinkSample(link.id.to_string()))
                }
                None => {
                    report.missing.push(link.id.clone());
                    f64::INFINITY
                }
            }
        };
        out.set_link_cost(&link.id, cost)
            .expect("link taken from the same graph");
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::graph::{fuse_topologies, normalize_costs, ControllerTopology, TopologyDocument};
    use crate::metric::{MetricSpec, LATENCY, LOAD};
    use crate::shellmon::KpiSample;

    fn ring(n: usize) -> NormalizedGraph {
        let nodes: Vec<String> = (0..n).map(|i| format!(r#"{{"id":"n{i}"}}"#)).collect();
        let links: Vec<String> = (0..n)
            .map(|i| format!(r#"{{"a":"n{i}","b":"n{}","link_id":"l{i}"}}"#, (i + 1) % n))
            .collect();
        let doc: TopologyDocument = serde_json::from_str(&format!(
            r#"{{"controller_id":"c","nodes":[{}],"links":[{}]}}"#,
            nodes.join(","),
            links.join(",")
        ))
        .unwrap();
        let t = ControllerTopology::from_document(&doc).unwrap();
        let mut costs = BTreeMap::new();
        costs.insert(t.designated.clone(), 2.0);
        normalize_costs(&fuse_topologies(&[t], 1.0).unwrap(), &costs).unwrap()
    }

    fn snap(entries: &[(&str, f64, f64)]) -> KpiSnapshot {
        let mut s = KpiSnapshot::empty(100);
        for (id, lat, load) in entries {
            s.insert(KpiSample {
                source_id: "src".into(),
                id: id.to_string(),
                ts_ms: 100,
                values: [(LATENCY.to_string(), *lat), (LOAD.to_string(), *load)].into(),
            });
        }
        s
    }

    fn metric() -> ValidatedMetric {
        MetricSpec::weighted_sum("m", &[(LATENCY, 0.6), (LOAD, 0.4)])
            .validate()
            .unwrap()
    }

    #[test]
    fn identical_samples_give_uniform_costs() {
        let g = ring(6);
        let ids: Vec<String> = (0..6).map(|i| format!("c:l{i}")).collect();
        let entries: Vec<(&str, f64, f64)> = ids.iter().map(|i| (i.as_str(), 5.0, 0.5)).collect();
        let (w, report) = weight_graph(&g, &metric(), &snap(&entries), WeightMode::Strict).unwrap();
        assert!(report.missing.is_empty());
        let phys: Vec<f64> = w
            .links()
            .iter()
            .filter(|l| l.kind == LinkKind::Physical)
            .map(|l| l.cost)
            .collect();
        assert_eq!(phys.len(), 6);
        assert!(phys.iter().all(|c| *c == phys[0]));
        // split link keeps its fixed cost
        let split = w
            .links()
            .iter()
            .find(|l| l.kind == LinkKind::Split)
            .unwrap();
        assert_eq!(split.cost, 2.0);
    }

    #[test]
    fn per_link_costs_match_formula() {
        let g = ring(6);
        let ids: Vec<String> = (0..6).map(|i| format!("c:l{i}")).collect();
        let entries: Vec<(&str, f64, f64)> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), 1.0 + i as f64 * 3.0, 0.1 * i as f64))
            .collect();
        let (w, _) = weight_graph(&g, &metric(), &snap(&entries), WeightMode::Strict).unwrap();
        for (id, lat, load) in &entries {
            let idx = w.link_id(&LinkId::new(*id)).unwrap();
            assert_eq!(w.link_cost(idx), 0.6 * lat + 0.4 * load);
        }
    }

    #[test]
    fn missing_sample_strict_vs_lenient() {
        let g = ring(3);
        let s = snap(&[("c:l0", 1.0, 0.0), ("c:l1", 1.0, 0.0)]);
        assert_eq!(
            weight_graph(&g, &metric(), &s, WeightMode::Strict).unwrap_err(),
            MetricError::MissingLinkSample("c:l2".into())
        );
        let (w, report) = weight_graph(&g, &metric(), &s, WeightMode::Lenient).unwrap();
        assert_eq!(report.missing, vec![LinkId::new("c:l2")]);
        let idx = w.link_id(&LinkId::new("c:l2")).unwrap();
        assert_eq!(w.link_cost(idx), f64::INFINITY);
    }
}
