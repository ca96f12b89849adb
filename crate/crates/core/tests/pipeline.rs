use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use iraas_core::netsim::ScenarioSpec;
use iraas_core::pipeline::{
    load_intent_file, run, run_files, PipelineError, RunOptions, EXIT_VALIDATION,
};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn go(
    scenario: &str,
    intent: &str,
    distributed: bool,
) -> Result<iraas_core::pipeline::RunReport, PipelineError> {
    let d = scenarios();
    let opts = RunOptions {
        distributed,
        ..RunOptions::default()
    };
    run_files(&d.join(scenario), &d.join(intent), &opts)
}

#[test]
fn poc_reports_every_switch_pair() {
    let r = go("poc.json", "intent_spf_latency.json", false).unwrap();
    assert_eq!(r.timeline.len(), 1);
    let pairs = r.final_pairs();
    assert_eq!(pairs.len(), 30);
    let distinct: BTreeSet<_> = pairs
        .iter()
        .map(|p| (p.src.clone(), p.dst.clone()))
        .collect();
    assert_eq!(distinct.len(), 30);
    for p in pairs {
        assert!(!p.unreachable);
        assert!(!p.routes.is_empty() && p.routes.len() <= 3);
        let ranks: Vec<usize> = p.routes.iter().map(|e| e.rank).collect();
        assert_eq!(ranks, (1..=p.routes.len()).collect::<Vec<_>>());
        assert!(p.routes.windows(2).all(|w| w[0].cost <= w[1].cost));
    }
    assert!(r.convergence.is_empty());
    assert_eq!(r.policy_checksum.len(), 64);
}

#[test]
fn bad_weights_fail_before_simulation() {
    let err = go("poc.json", "intent_bad_weights.json", false).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_VALIDATION);
    assert_eq!(err.code(), "metric-engine.WeightSumViolation");

    // an invalid scenario would fail once the simulation starts; the intent
    // is rejected first
    let mut spec = ScenarioSpec::poc(1);
    spec.controllers.clear();
    let intent = load_intent_file(&scenarios().join("intent_bad_weights.json")).unwrap();
    let err = run(&spec, &intent, &RunOptions::default()).unwrap_err();
    assert_eq!(err.code(), "metric-engine.WeightSumViolation");
}

#[test]
fn fail_link_is_one_ranking_only_switchover() {
    let r = go("poc_fail_link.json", "intent_spf_latency.json", false).unwrap();
    assert_eq!(r.convergence.len(), 1);
    let ev = &r.convergence[0];
    assert_eq!(ev.at_ms, 1500);
    assert_eq!(ev.recompute_delta, 0);
    assert!(!ev.rebuilt);
    assert_eq!(ev.deltas, 1);
    assert_eq!(ev.switchover_ms, 0);
    assert_eq!(ev.walks_checked, 30);
    assert_eq!(ev.walks_delivered, 30);
    let last = r.timeline.last().unwrap();
    for p in &last.pairs {
        assert!(p.routes[0].cost.is_finite(), "{} -> {}", p.src, p.dst);
    }
}

#[test]
fn unknown_files_are_io_errors() {
    let err = go("nope.json", "intent_spf_latency.json", false).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn reports_are_reproducible_and_transport_independent() {
    for (s, i) in [
        ("poc_fail_link.json", "intent_spf_latency.json"),
        ("two_controllers.json", "intent_two_controllers.json"),
    ] {
        let a = go(s, i, false).unwrap().to_json();
        let b = go(s, i, false).unwrap().to_json();
        let c = go(s, i, true).unwrap().to_json();
        assert_eq!(a, b, "{s}");
        assert_eq!(a, c, "{s} distributed");
    }
}

#[test]
fn seed_override_changes_telemetry() {
    let d = scenarios();
    let run_with = |seed| {
        let opts = RunOptions {
            seed: Some(seed),
            ..RunOptions::default()
        };
        run_files(
            &d.join("poc.json"),
            &d.join("intent_spf_latency.json"),
            &opts,
        )
        .unwrap()
    };
    let a = run_with(1);
    assert_eq!(a.seed, 1);
    assert_ne!(a.telemetry, run_with(2).telemetry);
}

#[test]
fn two_controller_run() {
    let r = go("two_controllers.json", "intent_two_controllers.json", false).unwrap();
    // 4 + 3 switches; the pseudo node is not an endpoint
    assert_eq!(r.final_pairs().len(), 7 * 6);
    assert_eq!(r.convergence.len(), 3);
    assert!(r.convergence.iter().all(|c| c.switchover_ms == 0));
    assert!(r
        .convergence
        .iter()
        .all(|c| c.walks_checked == c.walks_delivered));
    assert_eq!(r.telemetry.duplicates, 0);
}

#[test]
fn telemetry_summary_and_lookups() {
    let d = scenarios();
    let mut spec: ScenarioSpec =
        serde_json::from_str(&std::fs::read_to_string(d.join("poc.json")).unwrap()).unwrap();
    spec.telemetry.down_sources = vec!["c1-s3".into()];
    let intent = load_intent_file(&d.join("intent_spf_latency.json")).unwrap();
    let r = run(&spec, &intent, &RunOptions::default()).unwrap();

    let down = r.source("c1-s3").unwrap();
    assert!(!down.links.is_empty());
    for l in &down.links {
        assert!(l.attributes.values().all(|a| a.count == 0));
        assert_eq!(l.reliability, None);
    }
    let up = r.source("c1-s1").unwrap();
    // samples every 100 ms from 100 to 2000
    let counts: Vec<usize> = up
        .links
        .iter()
        .map(|l| l.attributes["latency"].count)
        .collect();
    assert!(counts.iter().all(|&c| c == 20), "{counts:?}");
    assert!(matches!(
        r.source("c9-s1"),
        Err(PipelineError::UnknownSource(_))
    ));

    let p = r.routes("c1:s1", "c1:s3").unwrap();
    assert!(!p.routes.is_empty());
    assert!(matches!(
        r.routes("c1:s1", "c1:s9"),
        Err(PipelineError::UnknownPair { .. })
    ));
    assert!(matches!(
        r.routes("junk", "c1:s1"),
        Err(PipelineError::UnknownPair { .. })
    ));
}
