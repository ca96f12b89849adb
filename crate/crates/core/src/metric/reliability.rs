//! Rolling windows and Sharpe-ratio reliability.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Bounded FIFO of `(timestamp_ms, value)` with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingWindow {
    capacity: usize,
    samples: VecDeque<(u64, f64)>,
}

impl RollingWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        RollingWindow {
            capacity,
            samples: VecDeque::with_capacity(capacity),
        }
    }

    pub fn from_values(capacity: usize, values: &[f64]) -> Self {
        let mut w = RollingWindow::new(capacity);
        for (i, v) in values.iter().enumerate() {
            w.push(i as u64, *v).expect("indices increase");
        }
        w
    }

    pub fn push(&mut self, ts: u64, value: f64) -> Result<(), MetricError> {
        if let Some(&(last, _)) = self.samples.back() {
            if ts <= last {
                return Err(MetricError::TimestampRegression { ts, last });
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((ts, value));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn samples(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.samples.iter().copied()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|&(_, v)| v)
    }

    pub fn last_timestamp(&self) -> Option<u64> {
        self.samples.back().map(|&(t, _)| t)
    }

    pub fn value_at(&self, ts: u64) -> Option<f64> {
        self.samples
            .binary_search_by_key(&ts, |&(t, _)| t)
            .ok()
            .map(|i| self.samples[i].1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reliability {
    /// Sharpe score; `+inf`/`-inf` for zero-variance windows.
    #[serde(with = "crate::ext")]
    pub score: f64,
    pub window_len: usize,
    pub computed_at: u64,
}

/// Sharpe ratio of a value series: `(mean - risk_free) / sigma` with the
/// population standard deviation. When `sigma < epsilon` the score is `+inf`
/// if the mean beats `risk_free`, `-inf` otherwise.
pub fn sharpe_score(
    values: impl IntoIterator<Item = f64>,
    risk_free: f64,
    epsilon: f64,
) -> Option<f64> {
    // Welford accumulation.
    let mut n = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for x in values {
        n += 1;
        let delta = x - mean;
        mean += delta / n as f64;
        m2 += delta * (x - mean);
    }
    if n < 2 {
        return None;
    }
    let sigma = (m2 / n as f64).max(0.0).sqrt();
    Some(if sigma < epsilon {
        if mean > risk_free {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    } else {
        (mean - risk_free) / sigma
    })
}

pub fn sharpe_reliability(
    w: &RollingWindow,
    risk_free: f64,
    epsilon: f64,
) -> Result<Reliability, MetricError> {
    let score =
        sharpe_score(w.values(), risk_free, epsilon).ok_or(MetricError::WindowTooShort(w.len()))?;
    Ok(Reliability {
        score,
        window_len: w.len(),
        computed_at: w.last_timestamp().unwrap_or(0),
    })
}

/// Exponential smoothing `s_0 = x_0`, `s_i = alpha*x_i + (1-alpha)*s_{i-1}`.
/// An infinite score resets the state to that sentinel, and the first finite
/// score after a sentinel resets it back.
pub fn smooth_scores(scores: &[f64], alpha: f64) -> Option<f64> {
    let mut it = scores.iter().copied();
    let mut s = it.next()?;
    for x in it {
        s = if x.is_infinite() || s.is_infinite() {
            x
        } else {
            alpha * x + (1.0 - alpha) * s
        };
    }
    Some(s)
}

/// Forecasts reliability from a cost history. Implementations must be
/// deterministic for identical inputs and configuration.
pub trait ReliabilityPredictor {
    fn predict(&self, history: &RollingWindow, horizon: u32) -> Result<Reliability, MetricError>;
}

/// Default predictor: exponential smoothing of the per-step Sharpe score,
/// held flat over the horizon. The per-step score at step `i` is the Sharpe
/// ratio of the first `i + 1` samples (`i >= 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedSharpe {
    pub alpha: f64,
    pub risk_free: f64,
    pub epsilon: f64,
}

impl Default for SmoothedSharpe {
    fn default() -> Self {
        SmoothedSharpe {
            alpha: 0.3,
            risk_free: 0.0,
            epsilon: 1e-12,
        }
    }
}

impl SmoothedSharpe {
    pub fn step_scores(&self, history: &RollingWindow) -> Vec<f64> {
        let values: Vec<f64> = history.values().collect();
        (2..=values.len())
            .filter_map(|n| sharpe_score(values[..n].iter().copied(), self.risk_free, self.epsilon))
            .collect()
    }
}

impl ReliabilityPredictor for SmoothedSharpe {
    fn predict(&self, history: &RollingWindow, _horizon: u32) -> Result<Reliability, MetricError> {
        if history.len() < 2 {
            return Err(MetricError::WindowTooShort(history.len()));
        }
        let scores = self.step_scores(history);
        let score = smooth_scores(&scores, self.alpha).expect("at least one step score");
        Ok(Reliability {
            score,
            window_len: history.len(),
            computed_at: history.last_timestamp().unwrap_or(0),
        })
    }
}
