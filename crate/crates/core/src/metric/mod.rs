//! Customizable cost function over telemetry attributes.
//!
//! A [`MetricSpec`] names an ordered attribute set, a weight per attribute
//! (on the unit simplex) and a transform per attribute. Two kinds exist:
//!
//! * `weighted_sum`: `sum_i w_i * t_i(a_i)`.
//! * `eigrp_classic`: the EIGRP composite
//!   `(K1*S + K2*S/(256-load) + K3*D) * (K5/(rel+K4))`, where the last factor
//!   is dropped when `K5 == 0`. Scalings are pinned in [`EigrpTerms`].

mod reliability;
mod weighting;

pub use reliability::{
    sharpe_reliability, sharpe_score, smooth_scores, Reliability, ReliabilityPredictor,
    RollingWindow, SmoothedSharpe,
};
pub use weighting::{weight_graph, WeightMode, WeightReport};

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the weight sum.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

pub const THROUGHPUT: &str = "throughput";
pub const LATENCY: &str = "latency";
pub const LOAD: &str = "load";
pub const RELIABILITY: &str = "reliability";
pub const JITTER: &str = "jitter";

/// Attributes a metric may reference. Units: throughput Mbit/s, latency and
/// jitter ms, load and reliability in `[0, 1]`.
pub const KNOWN_ATTRIBUTES: [&str; 5] = [THROUGHPUT, LATENCY, LOAD, RELIABILITY, JITTER];

/// Per-sample attribute values.
pub type AttributeSample = BTreeMap<String, f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("weights sum to {sum}, expected 1 within 1e-6")]
    WeightSumViolation { sum: f64 },
    #[error("metric has no attributes")]
    EmptyAttributeSet,
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("preset mismatch: {0}")]
    PresetMismatch(String),
    #[error("attributes, weights and transforms differ in length ({0}, {1}, {2})")]
    ArityMismatch(usize, usize, usize),
    #[error("weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("sample is missing attribute {0:?}")]
    MissingAttribute(String),
    #[error("non-finite input or result for {0:?}")]
    NonFiniteInput(String),
    #[error("metric evaluated to a negative cost {0}")]
    NegativeResult(f64),
    #[error("window holds {0} samples, at least 2 required")]
    WindowTooShort(usize),
    #[error("timestamp {ts} not after {last}")]
    TimestampRegression { ts: u64, last: u64 },
    #[error("no telemetry sample for link {0}")]
    MissingLinkSample(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    WeightedSum,
    EigrpClassic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Inverse,
    Scale(f64),
}

impl Transform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Inverse => 1.0 / x,
            Transform::Scale(k) => k * x,
        }
    }
}

fn d_one() -> f64 {
    1.0
}
fn d_alpha() -> f64 {
    0.3
}
fn d_window() -> usize {
    16
}
fn d_epsilon() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    #[serde(rename = "K1", default = "d_one")]
    pub k1: f64,
    #[serde(rename = "K2", default)]
    pub k2: f64,
    #[serde(rename = "K3", default = "d_one")]
    pub k3: f64,
    #[serde(rename = "K4", default)]
    pub k4: f64,
    #[serde(rename = "K5", default)]
    pub k5: f64,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_window")]
    pub window: usize,
    #[serde(default)]
    pub risk_free: f64,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            k1: 1.0,
            k2: 0.0,
            k3: 1.0,
            k4: 0.0,
            k5: 0.0,
            alpha: d_alpha(),
            window: d_window(),
            risk_free: 0.0,
            epsilon: d_epsilon(),
        }
    }
}

impl MetricParams {
    pub fn k(&self) -> [f64; 5] {
        [self.k1, self.k2, self.k3, self.k4, self.k5]
    }
}

/// The metric document exchanged in intents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub kind: MetricKind,
    pub attributes: Vec<String>,
    pub weights: Vec<f64>,
    pub transforms: Vec<Transform>,
    #[serde(default)]
    pub params: MetricParams,
}

impl MetricSpec {
    /// Weighted sum with identity transforms.
    pub fn weighted_sum(name: &str, attrs: &[(&str, f64)]) -> Self {
        MetricSpec {
            name: name.to_string(),
            kind: MetricKind::WeightedSum,
            attributes: attrs.iter().map(|(a, _)| a.to_string()).collect(),
            weights: attrs.iter().map(|(_, w)| *w).collect(),
            transforms: vec![Transform::Identity; attrs.len()],
            params: MetricParams::default(),
        }
    }

    /// EIGRP composite with the default K values (K1 = K3 = 1).
    pub fn eigrp_classic(name: &str) -> Self {
        MetricSpec {
            name: name.to_string(),
            kind: MetricKind::EigrpClassic,
            attributes: [THROUGHPUT, LOAD, LATENCY, RELIABILITY]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            weights: vec![0.25; 4],
            transforms: vec![Transform::Identity; 4],
            params: MetricParams::default(),
        }
    }

    pub fn validate(self) -> Result<ValidatedMetric, MetricError> {
        validate_metric_spec(self)
    }
}

/// A [`MetricSpec`] that passed [`validate_metric_spec`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ValidatedMetric(MetricSpec);

impl Deref for ValidatedMetric {
    type Target = MetricSpec;
    fn deref(&self) -> &MetricSpec {
        &self.0
    }
}

impl ValidatedMetric {
    pub fn into_inner(self) -> MetricSpec {
        self.0
    }

    pub fn evaluate(&self, sample: &AttributeSample) -> Result<f64, MetricError> {
        evaluate_metric(self, sample)
    }
}

pub fn validate_metric_spec(spec: MetricSpec) -> Result<ValidatedMetric, MetricError> {
    if spec.attributes.is_empty() {
        return Err(MetricError::EmptyAttributeSet);
    }
    let (na, nw, nt) = (
        spec.attributes.len(),
        spec.weights.len(),
        spec.transforms.len(),
    );
    if na != nw || na != nt {
        return Err(MetricError::ArityMismatch(na, nw, nt));
    }
    for a in &spec.attributes {
        if !KNOWN_ATTRIBUTES.contains(&a.as_str()) {
            return Err(MetricError::UnknownAttribute(a.clone()));
        }
    }
    let distinct: BTreeSet<_> = spec.attributes.iter().collect();
    if distinct.len() != na {
        return Err(MetricError::BadParameter("repeated attribute".into()));
    }
    for &w in &spec.weights {
        if !(0.0..=1.0).contains(&w) {
            return Err(MetricError::WeightOutOfRange(w));
        }
    }
    let sum: f64 = spec.weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(MetricError::WeightSumViolation { sum });
    }
    for t in &spec.transforms {
        if let Transform::Scale(k) = t {
            if !k.is_finite() || *k < 0.0 {
                return Err(MetricError::BadParameter(format!("scale factor {k}")));
            }
        }
    }
    let p = &spec.params;
    if !(p.alpha > 0.0 && p.alpha <= 1.0) {
        return Err(MetricError::BadParameter(format!("alpha {}", p.alpha)));
    }
    if p.window < 2 {
        return Err(MetricError::BadParameter(format!("window {}", p.window)));
    }
    if !(p.epsilon.is_finite() && p.epsilon > 0.0) || !p.risk_free.is_finite() {
        return Err(MetricError::BadParameter("epsilon/risk_free".into()));
    }
    if spec.kind == MetricKind::EigrpClassic {
        let expected: BTreeSet<&str> = [THROUGHPUT, LOAD, LATENCY, RELIABILITY].into();
        let got: BTreeSet<&str> = spec.attributes.iter().map(String::as_str).collect();
        if got != expected {
            return Err(MetricError::PresetMismatch(
                "eigrp_classic requires exactly throughput, load, latency, reliability".into(),
            ));
        }
        if spec.transforms.iter().any(|t| *t != Transform::Identity) {
            return Err(MetricError::PresetMismatch(
                "eigrp_classic takes raw attribute values".into(),
            ));
        }
        if p.k().iter().any(|k| !k.is_finite() || *k < 0.0) {
            return Err(MetricError::PresetMismatch("K values must be >= 0".into()));
        }
    }
    Ok(ValidatedMetric(spec))
}

/// Scaled EIGRP inputs.
///
/// * `S = 256 * 10^7 / bandwidth_kbps` with `bandwidth_kbps = throughput * 1000`, at least 1.
/// * `D = 256 * latency_ms * 100` (delay in tens of microseconds).
/// * `load = clamp(round(load * 255), 1, 255)`.
/// * `rel = clamp(round(reliability * 255), 1, 255)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigrpTerms {
    pub bandwidth: f64,
    pub delay: f64,
    pub load: f64,
    pub reliability: f64,
}

impl EigrpTerms {
    pub fn from_sample(sample: &AttributeSample) -> Result<Self, MetricError> {
        let get = |name: &str| {
            sample
                .get(name)
                .copied()
                .ok_or_else(|| MetricError::MissingAttribute(name.to_string()))
        };
        let throughput = get(THROUGHPUT)?;
        let latency = get(LATENCY)?;
        let load = get(LOAD)?;
        let rel = get(RELIABILITY)?;
        for (n, v) in [
            (THROUGHPUT, throughput),
            (LATENCY, latency),
            (LOAD, load),
            (RELIABILITY, rel),
        ] {
            if !v.is_finite() {
                return Err(MetricError::NonFiniteInput(n.to_string()));
            }
        }
        let kbps = (throughput * 1000.0).max(1.0);
        Ok(EigrpTerms {
            bandwidth: 256.0 * 1e7 / kbps,
            delay: 256.0 * latency.max(0.0) * 100.0,
            load: (load * 255.0).round().clamp(1.0, 255.0),
            reliability: (rel * 255.0).round().clamp(1.0, 255.0),
        })
    }

    pub fn composite(&self, k: [f64; 5]) -> f64 {
        eigrp_composite(self.bandwidth, self.delay, self.load, self.reliability, k)
    }
}

/// `(K1*S + K2*S/(256-load) + K3*D) * (K5/(rel+K4))`, last factor omitted when `K5 == 0`.
pub fn eigrp_composite(s: f64, d: f64, load: f64, rel: f64, k: [f64; 5]) -> f64 {
    let [k1, k2, k3, k4, k5] = k;
    let mut m = k1 * s + k3 * d;
    if k2 != 0.0 {
        m += k2 * s / (256.0 - load);
    }
    if k5 != 0.0 {
        m *= k5 / (rel + k4);
    }
    m
}

pub fn evaluate_metric(
    spec: &ValidatedMetric,
    sample: &AttributeSample,
) -> Result<f64, MetricError> {
    let cost = match spec.kind {
        MetricKind::WeightedSum => {
            let mut acc = 0.0;
            for ((a, w), t) in spec
                .attributes
                .iter()
                .zip(&spec.weights)
                .zip(&spec.transforms)
            {
                let v = *sample
                    .get(a)
                    .ok_or_else(|| MetricError::MissingAttribute(a.clone()))?;
                if !v.is_finite() {
                    return Err(MetricError::NonFiniteInput(a.clone()));
                }
                let tv = t.apply(v);
                if !tv.is_finite() {
                    return Err(MetricError::NonFiniteInput(a.clone()));
                }
                acc += w * tv;
            }
            acc
        }
        MetricKind::EigrpClassic => EigrpTerms::from_sample(sample)?.composite(spec.params.k()),
    };
    if !cost.is_finite() {
        return Err(MetricError::NonFiniteInput(spec.name.clone()));
    }
    if cost < 0.0 {
        return Err(MetricError::NegativeResult(cost));
    }
    Ok(cost)
}
