//! Collected experiment outputs: counters, rates, and time series.

use serde::Serialize;

use crate::balancer::{BalancerMode, ProbeTally};

/// One (time, value) measurement; time in simulated seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimedSample {
    pub time: f64,
    pub value: f64,
}

/// The controller's mode at one monitoring instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeSample {
    pub time: f64,
    pub mode: BalancerMode,
}

/// Everything one run produced.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub issued: u64,
    pub served: u64,
    pub lost: u64,
    pub in_flight_at_end: u64,
    /// Served requests per simulated second.
    pub throughput: f64,
    /// Lost fraction of issued requests.
    pub loss_rate: f64,
    pub mean_response_time_ms: f64,
    /// Mean of the imbalance series.
    pub mean_imbalance: f64,
    /// Requests admitted per host (admission, not controller assignment).
    pub per_host_requests: Vec<u64>,
    /// One sample per served request: (completion time, response ms).
    pub response_time_series: Vec<TimedSample>,
    /// Load imbalance δ sampled on the observation cadence.
    pub imbalance_series: Vec<TimedSample>,
    /// Controller mode at start and at each monitoring instant.
    pub mode_timeline: Vec<ModeSample>,
    pub probe_totals: ProbeTally,
    pub mode_switches: u64,
}

impl MetricsReport {
    /// issued = served + lost + in-flight must hold for every run.
    pub fn conservation_holds(&self) -> bool {
        self.served + self.lost + self.in_flight_at_end == self.issued
    }

    /// Median response time over samples completing strictly before
    /// `cutoff_secs`; None when no such sample exists.
    pub fn median_response_before(&self, cutoff_secs: f64) -> Option<f64> {
        let mut early: Vec<f64> = self
            .response_time_series
            .iter()
            .filter(|s| s.time < cutoff_secs)
            .map(|s| s.value)
            .collect();
        if early.is_empty() {
            return None;
        }
        early.sort_by(f64::total_cmp);
        Some(early[early.len() / 2])
    }

    /// How many responses exceeded `factor` times the median response
    /// observed before `cutoff_secs`.
    pub fn spike_count(&self, cutoff_secs: f64, factor: f64) -> usize {
        let Some(median) = self.median_response_before(cutoff_secs) else {
            return 0;
        };
        self.response_time_series
            .iter()
            .filter(|s| s.value > factor * median)
            .count()
    }
}
