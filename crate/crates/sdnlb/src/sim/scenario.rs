//! Experiment inputs: every knob a run depends on, explicit and validated.

use serde::{Deserialize, Serialize};

use crate::balancer::Method;

/// Server-side dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerParams {
    /// Seconds one request takes on an otherwise idle host.
    pub base_service_time: f64,
    /// Utilization each in-flight request adds to its host.
    pub load_per_request: f64,
}

/// Closed-loop client population: a fixed number of user threads, each
/// issuing its next request only after the previous one resolves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientParams {
    pub thread_count: usize,
    /// Seconds a thread idles between a response and its next request.
    pub think_time: f64,
    /// Seconds after which an unanswered request counts as lost.
    pub connect_timeout: f64,
}

/// A scheduled liveness flip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostEvent {
    pub time: f64,
    pub host: usize,
}

/// One complete experiment definition. Addressing is synthesized from the
/// cluster size (host i: IP 10.0.1.(i+1), switch port 2+i); everything
/// else is explicit here.
///
/// Scalar fields come first so the struct serializes to valid TOML (tables
/// must follow plain keys).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub cluster_size: usize,
    pub method: Method,
    /// Variance threshold for the hybrid static/dynamic decision.
    pub imbalance_threshold: f64,
    /// Idle-host load samples whose amplitude becomes the change threshold.
    pub change_threshold_samples: Vec<f64>,
    /// Seconds between control-plane load collections.
    pub monitor_interval: f64,
    /// Seconds a packet-in round trip adds to a request.
    pub controller_latency: f64,
    /// Seconds per network hop.
    pub propagation_delay: f64,
    /// Standby hosts per failover group.
    pub standby_count: usize,
    /// Exogenous utilization per host (shorter lists pad with zeros).
    #[serde(default)]
    pub background_load: Vec<f64>,
    /// Simulated seconds.
    pub duration: f64,
    /// Seconds between load-imbalance measurements (observation only,
    /// independent of the control plane's monitor interval).
    pub sample_interval: f64,
    /// Seconds between client retransmissions of an unanswered request.
    pub retry_interval: f64,
    pub seed: u64,
    pub server: ServerParams,
    pub client: ClientParams,
    #[serde(default)]
    pub failures: Vec<HostEvent>,
    #[serde(default)]
    pub recoveries: Vec<HostEvent>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            cluster_size: 8,
            method: Method::Hybrid,
            imbalance_threshold: 0.01,
            change_threshold_samples: vec![0.02, 0.05, 0.03],
            monitor_interval: 10.0,
            controller_latency: 0.05,
            propagation_delay: 0.001,
            standby_count: 2,
            background_load: Vec::new(),
            duration: 60.0,
            sample_interval: 1.0,
            retry_interval: 1.0,
            seed: 42,
            server: ServerParams {
                base_service_time: 0.05,
                load_per_request: 0.05,
            },
            client: ClientParams {
                thread_count: 40,
                think_time: 0.1,
                connect_timeout: 20.0,
            },
            failures: Vec::new(),
            recoveries: Vec::new(),
        }
    }
}

impl Scenario {
    /// The failover experiment: a skewed warm-up keeps the hybrid
    /// controller in dynamic mode, then one busy host dies at 19 s. The
    /// seed is pinned so exactly one request is caught mid-service on the
    /// dying host, making the single retransmission spike visible.
    pub fn failover() -> Self {
        Scenario {
            client: ClientParams {
                thread_count: 8,
                think_time: 0.2,
                connect_timeout: 20.0,
            },
            controller_latency: 0.01,
            background_load: vec![0.35, 0.35, 0.35, 0.35, 0.35],
            failures: vec![HostEvent {
                time: 19.0,
                host: 7,
            }],
            duration: 45.0,
            seed: 8,
            ..Scenario::default()
        }
    }

    /// The comparative experiment: five hosts warmed to a mild skew so the
    /// initial imbalance (0.006) sits between the two hybrid thresholds of
    /// interest (0.005 and 0.01). The client population is large and the
    /// per-request load small so weighted selection has real equalization
    /// capacity while selection noise stays below the background skew.
    pub fn comparative() -> Self {
        Scenario {
            imbalance_threshold: 0.01,
            monitor_interval: 1.0,
            controller_latency: 0.01,
            background_load: vec![0.16, 0.16, 0.16, 0.16, 0.16],
            seed: 43,
            server: ServerParams {
                base_service_time: 0.04,
                load_per_request: 0.005,
            },
            client: ClientParams {
                thread_count: 455,
                think_time: 0.05,
                connect_timeout: 20.0,
            },
            ..Scenario::default()
        }
    }

    /// Field-by-field complaints; empty means the scenario is runnable.
    pub fn validation_issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let mut bad = |msg: String| issues.push(msg);

        if !(1..=200).contains(&self.cluster_size) {
            bad(format!("cluster_size must be in 1..=200, got {}", self.cluster_size));
        }
        if !positive(self.server.base_service_time) {
            bad(format!(
                "server.base_service_time must be positive, got {}",
                self.server.base_service_time
            ));
        }
        if !non_negative(self.server.load_per_request) {
            bad(format!(
                "server.load_per_request must be non-negative, got {}",
                self.server.load_per_request
            ));
        }
        if self.client.thread_count == 0 {
            bad("client.thread_count must be at least 1".into());
        }
        if !non_negative(self.client.think_time) {
            bad(format!("client.think_time must be non-negative, got {}", self.client.think_time));
        }
        if !positive(self.client.connect_timeout) {
            bad(format!(
                "client.connect_timeout must be positive, got {}",
                self.client.connect_timeout
            ));
        }
        if !non_negative(self.imbalance_threshold) {
            bad(format!(
                "imbalance_threshold must be non-negative, got {}",
                self.imbalance_threshold
            ));
        }
        if self.change_threshold_samples.is_empty() {
            bad("change_threshold_samples must not be empty".into());
        }
        if self
            .change_threshold_samples
            .iter()
            .any(|s| !(0.0..=1.0).contains(s))
        {
            bad("change_threshold_samples must all lie in [0, 1]".into());
        }
        for (name, v) in [
            ("monitor_interval", self.monitor_interval),
            ("sample_interval", self.sample_interval),
            ("retry_interval", self.retry_interval),
        ] {
            if !positive(v) {
                bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("controller_latency", self.controller_latency),
            ("propagation_delay", self.propagation_delay),
            ("duration", self.duration),
        ] {
            if !non_negative(v) {
                bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.standby_count >= self.cluster_size.max(1) {
            bad(format!(
                "standby_count {} must be smaller than cluster_size {}",
                self.standby_count, self.cluster_size
            ));
        }
        if self.background_load.len() > self.cluster_size {
            bad(format!(
                "background_load lists {} hosts but the cluster has {}",
                self.background_load.len(),
                self.cluster_size
            ));
        }
        if self.background_load.iter().any(|l| !(0.0..1.0).contains(l)) {
            bad("background_load values must lie in [0, 1)".into());
        }
        for (label, events) in [("failures", &self.failures), ("recoveries", &self.recoveries)] {
            for ev in events.iter() {
                if ev.host >= self.cluster_size {
                    bad(format!("{label}: host {} does not exist", ev.host));
                }
                if !non_negative(ev.time) {
                    bad(format!("{label}: time must be non-negative, got {}", ev.time));
                }
            }
        }
        issues
    }
}

// NaN fails both, which is the point
fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

fn non_negative(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}
