use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::NetsimError;
use crate::metric::{LOAD, RELIABILITY};

fn d_period() -> u64 {
    1000
}

/// Sinusoid plus Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    pub base: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Period of the sinusoid.
    #[serde(default = "d_period")]
    pub period_ms: u64,
}

impl ProcessParams {
    pub fn new(base: f64, amplitude: f64, noise_sigma: f64, period_ms: u64) -> Self {
        ProcessParams {
            base,
            amplitude,
            noise_sigma,
            period_ms,
        }
    }

    fn check(&self, what: &str) -> Result<(), NetsimError> {
        let ok = self.base.is_finite()
            && self.amplitude.is_finite()
            && self.noise_sigma.is_finite()
            && self.noise_sigma >= 0.0
            && self.period_ms > 0;
        if ok {
            Ok(())
        } else {
            Err(NetsimError::BadSpec(format!(
                "bad KPI process for {what}: {self:?}"
            )))
        }
    }
}

fn d_sample_period() -> u64 {
    100
}

fn d_attributes() -> BTreeMap<String, ProcessParams> {
    [
        ("latency", ProcessParams::new(10.0, 2.0, 0.5, 2000)),
        ("throughput", ProcessParams::new(100.0, 10.0, 2.0, 4000)),
        ("load", ProcessParams::new(0.3, 0.1, 0.02, 3000)),
        ("reliability", ProcessParams::new(0.99, 0.0, 0.002, 1000)),
        ("jitter", ProcessParams::new(1.0, 0.2, 0.1, 1500)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// KPI generators of a scenario: one process per attribute, optionally
/// overridden per link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiProcesses {
    /// Sampling period of every stream.
    #[serde(default = "d_sample_period")]
    pub period_ms: u64,
    #[serde(default = "d_attributes")]
    pub attributes: BTreeMap<String, ProcessParams>,
    /// Per-link overrides, keyed by qualified link id (`c1:l1`).
    #[serde(default)]
    pub links: BTreeMap<String, BTreeMap<String, ProcessParams>>,
}

impl Default for KpiProcesses {
    fn default() -> Self {
        KpiProcesses {
            period_ms: d_sample_period(),
            attributes: d_attributes(),
            links: BTreeMap::new(),
        }
    }
}

impl KpiProcesses {
    pub(crate) fn check(&self) -> Result<(), NetsimError> {
        if self.period_ms == 0 {
            return Err(NetsimError::BadSpec("KPI period must be > 0".into()));
        }
        for (a, p) in &self.attributes {
            p.check(a)?;
        }
        for (l, attrs) in &self.links {
            for (a, p) in attrs {
                p.check(&format!("{l}/{a}"))?;
            }
        }
        Ok(())
    }

    /// Processes driving `link`: the global ones with overrides applied.
    pub fn for_link(&self, link: &str) -> BTreeMap<String, ProcessParams> {
        let mut out = self.attributes.clone();
        if let Some(o) = self.links.get(link) {
            out.extend(o.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        out
    }
}

/// One attribute stream of one link.
#[derive(Debug, Clone)]
pub struct KpiStream {
    attribute: String,
    params: ProcessParams,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
}

impl KpiStream {
    /// The stream's generator is seeded from the scenario seed and the
    /// stream's name only, so streams do not depend on creation order.
    pub fn new(seed: u64, link: &str, attribute: &str, params: ProcessParams) -> Self {
        let digest = Sha256::digest(format!("{seed}|{link}|{attribute}").as_bytes());
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        let noise = (params.noise_sigma > 0.0)
            .then(|| Normal::new(0.0, params.noise_sigma).expect("sigma checked"));
        KpiStream {
            attribute: attribute.to_string(),
            params,
            rng: ChaCha8Rng::from_seed(key),
            noise,
        }
    }

    pub fn attribute(&self) -> &str {
        &self.attribute
    }

    /// Value at logical time `t_ms`.
    pub fn sample(&mut self, t_ms: u64) -> f64 {
        let p = &self.params;
        let phase = 2.0 * PI * (t_ms % p.period_ms) as f64 / p.period_ms as f64;
        let noise = self.noise.map_or(0.0, |n| n.sample(&mut self.rng));
        let v = p.base + p.amplitude * phase.sin() + noise;
        match self.attribute.as_str() {
            LOAD | RELIABILITY => v.clamp(0.0, 1.0),
            _ => v.max(0.0),
        }
    }
}
