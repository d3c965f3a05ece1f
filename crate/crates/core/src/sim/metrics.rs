use std::collections::BTreeMap;

use super::SimTime;

/// Results accumulated during a run.
///
/// All maps are ordered so that serialising a `Metrics` is deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    /// Latency samples in nanoseconds, keyed by path label.
    pub latencies: BTreeMap<String, Vec<u64>>,
    pub counters: BTreeMap<String, u64>,
    /// `(swept parameter, value)` points, keyed by series label.
    pub series: BTreeMap<String, Vec<(f64, f64)>>,
    /// Busy fraction in `[0, 1]`, keyed by resource (e.g. `cpu/core3`).
    pub utilization: BTreeMap<String, f64>,
}

impl Metrics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_latency(&mut self, label: &str, sample: SimTime) {
        self.latencies
            .entry(label.to_string())
            .or_default()
            .push(sample.as_ns());
    }

    pub fn samples(&self, label: &str) -> &[u64] {
        self.latencies.get(label).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn add(&mut self, counter: &str, n: u64) {
        *self.counters.entry(counter.to_string()).or_default() += n;
    }

    pub fn counter(&self, counter: &str) -> u64 {
        self.counters.get(counter).copied().unwrap_or(0)
    }

    pub fn push_point(&mut self, series: &str, x: f64, y: f64) {
        self.series
            .entry(series.to_string())
            .or_default()
            .push((x, y));
    }

    pub fn points(&self, series: &str) -> &[(f64, f64)] {
        self.series.get(series).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn set_utilization(&mut self, resource: &str, value: f64) {
        debug_assert!((0.0..=1.0 + 1e-12).contains(&value), "{resource} = {value}");
        self.utilization
            .insert(resource.to_string(), value.clamp(0.0, 1.0));
    }

    /// Folds `other` into `self`: samples and points are appended, counters
    /// summed, utilisations overwritten.
    pub fn merge(&mut self, other: Metrics) {
        for (k, mut v) in other.latencies {
            self.latencies.entry(k).or_default().append(&mut v);
        }
        for (k, v) in other.counters {
            *self.counters.entry(k).or_default() += v;
        }
        for (k, mut v) in other.series {
            self.series.entry(k).or_default().append(&mut v);
        }
        self.utilization.extend(other.utilization);
    }
}

/// Summary statistics over a set of latency samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub count: usize,
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub p50: u64,
    pub p95: u64,
    pub p99: u64,
    pub min: u64,
    pub max: u64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[u64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let n = samples.len() as f64;
        let mean = samples.iter().map(|&s| s as f64).sum::<f64>() / n;
        let variance = samples
            .iter()
            .map(|&s| {
                let d = s as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        let mut sorted = samples.to_vec();
        sorted.sort_unstable();
        let rank = |p: f64| crate::report::nearest_rank_sorted(&sorted, p);
        Some(LatencyStats {
            count: samples.len(),
            mean,
            variance,
            p50: rank(50.0),
            p95: rank(95.0),
            p99: rank(99.0),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
        })
    }
}
