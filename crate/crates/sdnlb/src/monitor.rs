//! Cluster load state: per-host loads and liveness, the serviceability
//! cumulative-sum list, the load-change threshold, and the load-imbalance
//! variance the hybrid switcher keys off.

use std::net::Ipv4Addr;

use thiserror::Error;

use crate::net::MacAddr;
use crate::switch::PortNo;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MonitorError {
    #[error("empty cluster")]
    EmptyCluster,
    #[error("empty sample set")]
    EmptySamples,
    #[error("expected {expected} samples, got {got}")]
    SampleCountMismatch { expected: usize, got: usize },
}

/// One backend server as the control plane sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerHost {
    /// 0-based cluster index.
    pub index: usize,
    pub ip: Ipv4Addr,
    pub mac: MacAddr,
    pub switch_port: PortNo,
    /// Reported load in [0, 1].
    pub load: f64,
    pub live: bool,
}

impl ServerHost {
    /// Host with the deterministic address plan used throughout the crate:
    /// host i sits on switch port 2+i with IP 10.0.1.(i+1).
    pub fn numbered(index: usize) -> Self {
        assert!(index < 250, "cluster index {index} out of address range");
        let octet = (index + 1) as u8;
        ServerHost {
            index,
            ip: Ipv4Addr::new(10, 0, 1, octet),
            mac: MacAddr::new([0x02, 0, 0, 0, 1, octet]),
            switch_port: 2 + index as PortNo,
            load: 0.0,
            live: true,
        }
    }

    pub fn with_load(mut self, load: f64) -> Self {
        self.load = load;
        self
    }

    pub fn dead(mut self) -> Self {
        self.live = false;
        self
    }

    /// Load as the balancer must treat it: a dead host is fully loaded.
    pub fn effective_load(&self) -> f64 {
        if self.live {
            self.load
        } else {
            1.0
        }
    }

    /// Serviceability: remaining capacity, 1 − effective load.
    pub fn serviceability(&self) -> f64 {
        1.0 - self.effective_load()
    }
}

/// Prefix sums of per-host serviceability. Monotone non-decreasing; a dead
/// host contributes a zero-width interval.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeSumList {
    values: Vec<f64>,
}

impl CumulativeSumList {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total live capacity S: the last element.
    pub fn total(&self) -> f64 {
        *self.values.last().expect("list is never empty")
    }
}

/// Build the cumulative-sum list over effective loads.
pub fn build_cumsum(hosts: &[ServerHost]) -> Result<CumulativeSumList, MonitorError> {
    if hosts.is_empty() {
        return Err(MonitorError::EmptyCluster);
    }
    let mut values = Vec::with_capacity(hosts.len());
    let mut acc = 0.0f64;
    for host in hosts {
        acc += host.serviceability();
        values.push(acc);
    }
    Ok(CumulativeSumList { values })
}

/// Load imbalance δ: population variance of effective loads.
pub fn load_imbalance(hosts: &[ServerHost]) -> Result<f64, MonitorError> {
    if hosts.is_empty() {
        return Err(MonitorError::EmptyCluster);
    }
    imbalance_from_samples(
        &hosts.iter().map(ServerHost::effective_load).collect::<Vec<_>>(),
        &hosts.iter().map(|h| h.live).collect::<Vec<_>>(),
    )
}

/// Load imbalance straight from raw samples, for observers that bypass
/// the `ServerHost` view. Dead hosts count as fully loaded.
pub fn imbalance_from_samples(loads: &[f64], liveness: &[bool]) -> Result<f64, MonitorError> {
    if loads.is_empty() {
        return Err(MonitorError::EmptyCluster);
    }
    if loads.len() != liveness.len() {
        return Err(MonitorError::SampleCountMismatch {
            expected: loads.len(),
            got: liveness.len(),
        });
    }
    let effective = |i: usize| if liveness[i] { loads[i] } else { 1.0 };
    let n = loads.len() as f64;
    let mean = (0..loads.len()).map(effective).sum::<f64>() / n;
    let var = (0..loads.len())
        .map(|i| {
            let d = effective(i) - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(var)
}

/// Load-change threshold t: the amplitude (max − min) of load samples
/// collected from an idle host.
pub fn change_threshold(noload_samples: &[f64]) -> Result<f64, MonitorError> {
    if noload_samples.is_empty() {
        return Err(MonitorError::EmptySamples);
    }
    let max = noload_samples.iter().copied().fold(f64::MIN, f64::max);
    let min = noload_samples.iter().copied().fold(f64::MAX, f64::min);
    Ok(max - min)
}

/// What a monitoring pass observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefreshOutcome {
    /// True iff some host moved by more than the change threshold
    /// (a failure flips the effective load to 1.0 and always trips it).
    pub changed: bool,
    /// Fresh load imbalance δ.
    pub imbalance: f64,
}

/// Everything the controller knows about the cluster.
#[derive(Debug, Clone)]
pub struct ClusterState {
    pub hosts: Vec<ServerHost>,
    pub cumsum: CumulativeSumList,
    pub vip: Ipv4Addr,
    pub cluster_mac: MacAddr,
    /// Effective loads at the previous monitoring instant.
    last_loads: Vec<f64>,
    pub change_threshold: f64,
    pub imbalance_threshold: f64,
}

impl ClusterState {
    pub fn new(
        hosts: Vec<ServerHost>,
        vip: Ipv4Addr,
        cluster_mac: MacAddr,
        change_threshold: f64,
        imbalance_threshold: f64,
    ) -> Result<Self, MonitorError> {
        let cumsum = build_cumsum(&hosts)?;
        let last_loads = hosts.iter().map(ServerHost::effective_load).collect();
        Ok(ClusterState {
            hosts,
            cumsum,
            vip,
            cluster_mac,
            last_loads,
            change_threshold,
            imbalance_threshold,
        })
    }

    pub fn live_count(&self) -> usize {
        self.hosts.iter().filter(|h| h.live).count()
    }

    /// Ingest one monitoring sample per host, rebuild the cumulative-sum
    /// list, and report whether anything moved beyond the change threshold.
    pub fn refresh(
        &mut self,
        new_loads: &[f64],
        new_liveness: &[bool],
    ) -> Result<RefreshOutcome, MonitorError> {
        if new_loads.len() != self.hosts.len() {
            return Err(MonitorError::SampleCountMismatch {
                expected: self.hosts.len(),
                got: new_loads.len(),
            });
        }
        if new_liveness.len() != self.hosts.len() {
            return Err(MonitorError::SampleCountMismatch {
                expected: self.hosts.len(),
                got: new_liveness.len(),
            });
        }

        let mut changed = false;
        for (i, host) in self.hosts.iter_mut().enumerate() {
            let mut load = new_loads[i];
            if !(0.0..=1.0).contains(&load) {
                log::warn!("host {i} reported load {load} outside [0,1]; clamping");
                load = load.clamp(0.0, 1.0);
            }
            host.load = load;
            host.live = new_liveness[i];
            let effective = host.effective_load();
            if (effective - self.last_loads[i]).abs() > self.change_threshold {
                changed = true;
            }
            self.last_loads[i] = effective;
        }
        self.cumsum = build_cumsum(&self.hosts)?;
        let imbalance = load_imbalance(&self.hosts)?;
        Ok(RefreshOutcome { changed, imbalance })
    }
}

/// Test fixture shared across the crate: eight hosts with two dead ones
/// contributing zero-width intervals.
#[cfg(test)]
pub(crate) fn eight_host_cluster() -> Vec<ServerHost> {
    vec![
        ServerHost::numbered(0).with_load(0.1),
        ServerHost::numbered(1).with_load(0.4),
        ServerHost::numbered(2).with_load(0.3),
        ServerHost::numbered(3).dead(),
        ServerHost::numbered(4).with_load(0.7),
        ServerHost::numbered(5).with_load(0.2),
        ServerHost::numbered(6).dead(),
        ServerHost::numbered(7).with_load(0.5),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cumsum_for_eight_host_example() {
        let cs = build_cumsum(&eight_host_cluster()).unwrap();
        let expected = [0.9, 1.5, 2.2, 2.2, 2.5, 3.3, 3.3, 3.8];
        assert_eq!(cs.len(), expected.len());
        for (got, want) in cs.values().iter().zip(expected) {
            assert!((got - want).abs() < 1e-9, "got {got}, want {want}");
        }
        assert!((cs.total() - 3.8).abs() < 1e-9);
    }

    #[test]
    fn cumsum_single_idle_host() {
        let cs = build_cumsum(&[ServerHost::numbered(0)]).unwrap();
        assert_eq!(cs.values(), &[1.0]);
    }

    #[test]
    fn cumsum_empty_cluster_errors() {
        assert_eq!(build_cumsum(&[]), Err(MonitorError::EmptyCluster));
    }

    #[test]
    fn cumsum_matches_prefix_sum_oracle() {
        // deterministic pseudo-random loads, no rng dependency needed here
        let hosts: Vec<ServerHost> = (0..100)
            .map(|i| {
                let load = ((i * 37 + 11) % 101) as f64 / 100.0;
                let host = ServerHost::numbered(i).with_load(load);
                if i % 13 == 0 {
                    host.dead()
                } else {
                    host
                }
            })
            .collect();
        let cs = build_cumsum(&hosts).unwrap();
        let mut acc = 0.0;
        for (i, host) in hosts.iter().enumerate() {
            acc += 1.0 - host.effective_load();
            assert!((cs.values()[i] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn imbalance_zero_when_loads_equal() {
        let hosts: Vec<ServerHost> = (0..5).map(|i| ServerHost::numbered(i).with_load(0.3)).collect();
        assert_eq!(load_imbalance(&hosts).unwrap(), 0.0);
    }

    #[test]
    fn imbalance_of_zero_one_pair_is_quarter() {
        let hosts = vec![
            ServerHost::numbered(0).with_load(0.0),
            ServerHost::numbered(1).with_load(1.0),
        ];
        assert!((load_imbalance(&hosts).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn imbalance_counts_dead_hosts_as_full() {
        let hosts = vec![
            ServerHost::numbered(0).with_load(0.0),
            ServerHost::numbered(1).with_load(0.0).dead(),
        ];
        assert!((load_imbalance(&hosts).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn change_threshold_is_amplitude() {
        let t = change_threshold(&[0.02, 0.05, 0.03]).unwrap();
        assert!((t - 0.03).abs() < 1e-12);
        assert_eq!(change_threshold(&[0.04, 0.04]).unwrap(), 0.0);
        assert_eq!(change_threshold(&[]), Err(MonitorError::EmptySamples));
    }

    fn state(hosts: Vec<ServerHost>) -> ClusterState {
        ClusterState::new(
            hosts,
            Ipv4Addr::new(10, 0, 0, 10),
            MacAddr::new([0x02, 0, 0, 0, 0, 0x0a]),
            0.03,
            0.01,
        )
        .unwrap()
    }

    #[test]
    fn refresh_small_drift_is_not_a_change() {
        let mut st = state(vec![ServerHost::numbered(0).with_load(0.10)]);
        let out = st.refresh(&[0.12], &[true]).unwrap();
        assert!(!out.changed);
    }

    #[test]
    fn refresh_failure_always_trips_threshold() {
        let mut st = state(vec![
            ServerHost::numbered(0).with_load(0.10),
            ServerHost::numbered(1).with_load(0.10),
        ]);
        let out = st.refresh(&[0.10, 0.10], &[false, true]).unwrap();
        assert!(out.changed);
        assert_eq!(st.hosts[0].effective_load(), 1.0);
        assert!((st.cumsum.values()[0] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn refresh_identical_loads_is_idempotent() {
        let mut st = state(eight_host_cluster());
        let before = st.cumsum.clone();
        let loads: Vec<f64> = st.hosts.iter().map(|h| h.load).collect();
        let live: Vec<bool> = st.hosts.iter().map(|h| h.live).collect();
        let out = st.refresh(&loads, &live).unwrap();
        assert!(!out.changed);
        assert_eq!(st.cumsum, before);
    }

    #[test]
    fn refresh_rejects_wrong_sample_count() {
        let mut st = state(eight_host_cluster());
        assert_eq!(
            st.refresh(&[0.1], &[true]),
            Err(MonitorError::SampleCountMismatch {
                expected: 8,
                got: 1
            })
        );
    }

    #[test]
    fn refresh_clamps_out_of_range_loads() {
        let mut st = state(vec![ServerHost::numbered(0).with_load(0.5)]);
        st.refresh(&[1.7], &[true]).unwrap();
        assert_eq!(st.hosts[0].load, 1.0);
        st.refresh(&[-0.2], &[true]).unwrap();
        assert_eq!(st.hosts[0].load, 0.0);
    }
}
