//! The controller brain: baseline selection algorithms, weighted random
//! selection over the cumulative-sum list (linear and binary search),
//! standby planning, fast-failover and SELECT group construction, and the
//! variance-triggered static/dynamic mode switcher.

use std::collections::BTreeSet;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::monitor::{
    load_imbalance, CumulativeSumList, ClusterState, MonitorError, RefreshOutcome, ServerHost,
};
use crate::net::MacAddr;
use crate::switch::{
    Action, Bucket, GroupEntry, GroupId, GroupType, Match, Packet, PortNo, SelectMode, Switch,
    SwitchError,
};

/// SELECT group id used by the static method.
pub const SELECT_GROUP_ID: GroupId = 1;
/// Fast-failover group ids are `FF_GROUP_BASE + host index`.
pub const FF_GROUP_BASE: GroupId = 1000;

/// Priority of the static catch-all entry matching the cluster VIP.
pub const STATIC_VIP_PRIORITY: u32 = 10;
/// Priority of response-path entries rewriting the source back to the VIP.
pub const REVERSE_PRIORITY: u32 = 50;
/// Priority of per-flow entries installed on packet-in.
pub const DYNAMIC_FLOW_PRIORITY: u32 = 100;

pub fn ff_group_id(host_index: usize) -> GroupId {
    FF_GROUP_BASE + host_index as GroupId
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BalancerError {
    #[error("no live capacity in the cluster")]
    NoLiveCapacity,
    #[error("random value {r} outside (0, {total}]")]
    RandomOutOfRange { r: f64, total: f64 },
    #[error("no live host available")]
    NoLiveHost,
    #[error("{0} is not a baseline algorithm")]
    NotABaseline(AlgorithmKind),
    #[error("no route for destination {0}")]
    Unroutable(Ipv4Addr),
    #[error(transparent)]
    Switch(#[from] SwitchError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
}

/// Every selection algorithm the controller can run per request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    RoundRobin,
    Random,
    Wrs,
    LeastLoad,
    LeastConnections,
    LeastResponseTime,
    DwrsLinear,
    DwrsBinary,
}

impl AlgorithmKind {
    pub fn is_dwrs(self) -> bool {
        matches!(self, AlgorithmKind::DwrsLinear | AlgorithmKind::DwrsBinary)
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AlgorithmKind::RoundRobin => "round-robin",
            AlgorithmKind::Random => "random",
            AlgorithmKind::Wrs => "wrs",
            AlgorithmKind::LeastLoad => "least-load",
            AlgorithmKind::LeastConnections => "least-connections",
            AlgorithmKind::LeastResponseTime => "least-response-time",
            AlgorithmKind::DwrsLinear => "dwrs-linear",
            AlgorithmKind::DwrsBinary => "dwrs-binary",
        };
        write!(f, "{name}")
    }
}

/// What drives the controller: a single algorithm for every request, or
/// the hybrid scheme that flips between the static SELECT path and
/// dynamic per-flow selection based on load imbalance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Baseline(AlgorithmKind),
    Hybrid,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Baseline(kind) => write!(f, "{kind}"),
            Method::Hybrid => write!(f, "hybrid"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s {
            "hybrid" => return Ok(Method::Hybrid),
            "round-robin" => AlgorithmKind::RoundRobin,
            "random" => AlgorithmKind::Random,
            "wrs" => AlgorithmKind::Wrs,
            "least-load" => AlgorithmKind::LeastLoad,
            "least-connections" => AlgorithmKind::LeastConnections,
            "least-response-time" => AlgorithmKind::LeastResponseTime,
            "dwrs-linear" => AlgorithmKind::DwrsLinear,
            "dwrs-binary" => AlgorithmKind::DwrsBinary,
            other => return Err(format!("unknown balancing method: {other}")),
        };
        Ok(Method::Baseline(kind))
    }
}

impl TryFrom<String> for Method {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// The hybrid controller's operating mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BalancerMode {
    Static,
    Dynamic,
}

impl fmt::Display for BalancerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BalancerMode::Static => write!(f, "static"),
            BalancerMode::Dynamic => write!(f, "dynamic"),
        }
    }
}

/// Static iff the imbalance is strictly below the threshold.
pub fn decide_mode(imbalance: f64, threshold: f64) -> BalancerMode {
    if imbalance < threshold {
        BalancerMode::Static
    } else {
        BalancerMode::Dynamic
    }
}

/// A chosen target plus the number of list probes spent finding it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub index: usize,
    pub probes: u32,
}

/// Running totals of selection work, for comparing search strategies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ProbeTally {
    pub selections: u64,
    pub probes: u64,
}

impl ProbeTally {
    fn record(&mut self, probes: u32) {
        self.selections += 1;
        self.probes += u64::from(probes);
    }
}

fn validate_draw(cumsum: &CumulativeSumList, r: f64) -> Result<(), BalancerError> {
    let total = cumsum.total();
    if total <= 0.0 {
        return Err(BalancerError::NoLiveCapacity);
    }
    if !(r > 0.0 && r <= total) {
        return Err(BalancerError::RandomOutOfRange { r, total });
    }
    Ok(())
}

/// Binary search for the smallest index i with `cumsum[i] >= r`.
///
/// The lower bound starts one slot below the list (a conceptual leading 0)
/// so the first element is reachable and equal runs resolve to their first
/// occurrence; dead hosts sit in zero-width intervals and are never
/// returned because r is strictly positive. Probe count is at most
/// ceil(log2 n) + 1.
pub fn select_target_binary(
    cumsum: &CumulativeSumList,
    r: f64,
) -> Result<Selection, BalancerError> {
    validate_draw(cumsum, r)?;
    let values = cumsum.values();
    let mut lw: i64 = -1;
    let mut up: i64 = values.len() as i64 - 1;
    let mut probes = 0u32;
    while up - lw > 1 {
        let mid = (lw + up) / 2;
        probes += 1;
        if r <= values[mid as usize] {
            up = mid;
        } else {
            lw = mid;
        }
    }
    Ok(Selection {
        index: up as usize,
        probes,
    })
}

/// Linear scan for the smallest index i with `cumsum[i] >= r`: the classic
/// weighted-random-selection search, kept as baseline and oracle. Probe
/// count for a hit at index i is exactly i + 1.
pub fn select_target_linear(
    cumsum: &CumulativeSumList,
    r: f64,
) -> Result<Selection, BalancerError> {
    validate_draw(cumsum, r)?;
    for (i, &v) in cumsum.values().iter().enumerate() {
        if r <= v {
            return Ok(Selection {
                index: i,
                probes: (i + 1) as u32,
            });
        }
    }
    unreachable!("r <= total is validated, so the scan always hits");
}

/// Uniform draw on (0, S]: never exactly 0, so a zero-width leading
/// interval (dead host 0) is never selected.
pub fn draw_random<R: Rng + ?Sized>(total: f64, rng: &mut R) -> Result<f64, BalancerError> {
    if total <= 0.0 {
        return Err(BalancerError::NoLiveCapacity);
    }
    Ok(total * (1.0 - rng.random::<f64>()))
}

/// Per-host runtime statistics consulted by the dynamic baselines.
#[derive(Debug, Clone, Default)]
pub struct RuntimeStats {
    pub active_connections: Vec<u64>,
    /// Seconds; 0.0 until a host has served its first measured response.
    pub last_response_time: Vec<f64>,
    /// Fixed capacity weights used by weighted random selection.
    pub capacity_weights: Vec<f64>,
    rr_cursor: usize,
}

impl RuntimeStats {
    pub fn new(host_count: usize) -> Self {
        RuntimeStats {
            active_connections: vec![0; host_count],
            last_response_time: vec![0.0; host_count],
            capacity_weights: vec![1.0; host_count],
            rr_cursor: 0,
        }
    }

    pub fn connection_opened(&mut self, host: usize) {
        self.active_connections[host] += 1;
    }

    pub fn connection_closed(&mut self, host: usize) {
        self.active_connections[host] = self.active_connections[host].saturating_sub(1);
    }

    pub fn record_response_time(&mut self, host: usize, seconds: f64) {
        self.last_response_time[host] = seconds;
    }
}

fn argmin_live(
    hosts: &[ServerHost],
    key: impl Fn(&ServerHost) -> f64,
) -> Result<usize, BalancerError> {
    let mut best: Option<(usize, f64)> = None;
    for host in hosts.iter().filter(|h| h.live) {
        let k = key(host);
        if best.is_none_or(|(_, cur)| k < cur) {
            best = Some((host.index, k));
        }
    }
    best.map(|(i, _)| i).ok_or(BalancerError::NoLiveHost)
}

/// One selection step for the classic algorithms. Ties break to the lowest
/// index; dead hosts never participate. The weighted-random-selection
/// kinds that need the cumulative-sum list are not baselines and are
/// rejected.
pub fn baseline_select<R: Rng + ?Sized>(
    kind: AlgorithmKind,
    hosts: &[ServerHost],
    stats: &mut RuntimeStats,
    rng: &mut R,
) -> Result<usize, BalancerError> {
    let live: Vec<usize> = hosts.iter().filter(|h| h.live).map(|h| h.index).collect();
    if live.is_empty() {
        return Err(BalancerError::NoLiveHost);
    }
    match kind {
        AlgorithmKind::RoundRobin => {
            let n = hosts.len();
            for k in 0..n {
                let i = (stats.rr_cursor + k) % n;
                if hosts[i].live {
                    stats.rr_cursor = (i + 1) % n;
                    return Ok(i);
                }
            }
            unreachable!("live set checked non-empty above");
        }
        AlgorithmKind::Random => Ok(live[rng.random_range(0..live.len())]),
        AlgorithmKind::Wrs => {
            let total: f64 = live.iter().map(|&i| stats.capacity_weights[i]).sum();
            if total <= 0.0 {
                // all weights zero: fall back to a uniform pick
                return Ok(live[rng.random_range(0..live.len())]);
            }
            let mut r = draw_random(total, rng)?;
            for &i in &live {
                r -= stats.capacity_weights[i];
                if r <= 0.0 {
                    return Ok(i);
                }
            }
            Ok(*live.last().expect("live set is non-empty"))
        }
        AlgorithmKind::LeastLoad => argmin_live(hosts, ServerHost::effective_load),
        AlgorithmKind::LeastConnections => {
            argmin_live(hosts, |h| stats.active_connections[h.index] as f64)
        }
        AlgorithmKind::LeastResponseTime => {
            argmin_live(hosts, |h| stats.last_response_time[h.index])
        }
        AlgorithmKind::DwrsLinear | AlgorithmKind::DwrsBinary => {
            Err(BalancerError::NotABaseline(kind))
        }
    }
}

/// Standby hosts for one target, ordered by load closeness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Standbys {
    pub indices: Vec<usize>,
    /// True when fewer live candidates existed than requested.
    pub degraded: bool,
}

/// The `p` live hosts (excluding the target) whose loads sit closest to
/// the target's, ascending by |load difference|, ties to the lower index.
pub fn select_standbys(hosts: &[ServerHost], target: usize, p: usize) -> Standbys {
    let target_load = hosts[target].effective_load();
    let mut candidates: Vec<(f64, usize)> = hosts
        .iter()
        .filter(|h| h.live && h.index != target)
        .map(|h| ((h.effective_load() - target_load).abs(), h.index))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let degraded = candidates.len() < p;
    Standbys {
        indices: candidates.into_iter().take(p).map(|(_, i)| i).collect(),
        degraded,
    }
}

/// Bucket that rewrites the destination to one host and emits on its port,
/// watching that same port.
fn rewrite_bucket(host: &ServerHost) -> Bucket {
    Bucket::new(
        vec![
            Action::SetDstIp(host.ip),
            Action::SetDstMac(host.mac),
            Action::Output(host.switch_port),
        ],
        Some(host.switch_port),
    )
}

fn ff_buckets(hosts: &[ServerHost], target: usize, p: usize) -> Vec<Bucket> {
    let standbys = select_standbys(hosts, target, p);
    if standbys.degraded {
        log::warn!(
            "host {target}: only {} of {p} standbys available",
            standbys.indices.len()
        );
    }
    let mut buckets = vec![rewrite_bucket(&hosts[target])];
    buckets.extend(standbys.indices.iter().map(|&j| rewrite_bucket(&hosts[j])));
    buckets
}

/// One fast-failover group per host: bucket 0 is the host itself, buckets
/// 1..=p its standbys in closeness order, every bucket watching the port
/// it outputs on.
pub fn build_ff_groups(hosts: &[ServerHost], p: usize) -> Vec<GroupEntry> {
    hosts
        .iter()
        .map(|host| {
            GroupEntry::new(
                ff_group_id(host.index),
                GroupType::FastFailover,
                ff_buckets(hosts, host.index, p),
            )
        })
        .collect()
}

/// A client endpoint as known to the controller, for response-path rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientEndpoint {
    pub ip: Ipv4Addr,
    pub mac: MacAddr,
    pub switch_port: PortNo,
}

/// What a monitoring pass did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorReport {
    pub outcome: RefreshOutcome,
    pub mode: BalancerMode,
    pub groups_rebuilt: bool,
}

/// How the controller resolved a packet-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketInOutcome {
    /// A new flow was assigned to this host; a forward entry is installed.
    Assigned(Selection),
    /// A server response missed its client entry (swept on a mode switch);
    /// the response path has been reinstalled.
    ResponsePathRestored,
}

/// The controller: owns the cluster view, reacts to packet-ins and
/// monitoring samples, and mutates the switch.
#[derive(Debug, Clone)]
pub struct Controller {
    pub state: ClusterState,
    pub method: Method,
    pub mode: BalancerMode,
    pub standby_count: usize,
    pub stats: RuntimeStats,
    pub probes: ProbeTally,
    pub mode_switches: u64,
    clients: Vec<ClientEndpoint>,
    clients_with_reverse: BTreeSet<Ipv4Addr>,
    static_entry_ids: Vec<u64>,
    rng: ChaCha8Rng,
}

impl Controller {
    pub fn new(
        state: ClusterState,
        method: Method,
        standby_count: usize,
        clients: Vec<ClientEndpoint>,
        seed: u64,
    ) -> Self {
        let host_count = state.hosts.len();
        Controller {
            state,
            method,
            mode: BalancerMode::Dynamic,
            standby_count,
            stats: RuntimeStats::new(host_count),
            probes: ProbeTally::default(),
            mode_switches: 0,
            clients,
            clients_with_reverse: BTreeSet::new(),
            static_entry_ids: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// First-time switch programming: the hybrid method installs its
    /// fast-failover groups and picks the starting mode from the initial
    /// imbalance. Baselines start with an empty switch and are driven
    /// entirely by packet-ins.
    pub fn install_initial(&mut self, sw: &mut Switch) -> Result<(), BalancerError> {
        if self.method == Method::Hybrid {
            for group in build_ff_groups(&self.state.hosts, self.standby_count) {
                sw.install_group(group)?;
            }
            let imbalance = load_imbalance(&self.state.hosts)?;
            self.apply_mode(sw, imbalance)?;
        }
        Ok(())
    }

    /// Pick a target for one new flow, drawing on the controller's
    /// serviceability view.
    pub fn pick_target(&mut self) -> Result<Selection, BalancerError> {
        let kind = match self.method {
            Method::Hybrid => AlgorithmKind::DwrsBinary,
            Method::Baseline(kind) => kind,
        };
        match kind {
            AlgorithmKind::DwrsBinary => {
                let r = draw_random(self.state.cumsum.total(), &mut self.rng)?;
                let sel = select_target_binary(&self.state.cumsum, r)?;
                self.probes.record(sel.probes);
                Ok(sel)
            }
            AlgorithmKind::DwrsLinear => {
                let r = draw_random(self.state.cumsum.total(), &mut self.rng)?;
                let sel = select_target_linear(&self.state.cumsum, r)?;
                self.probes.record(sel.probes);
                Ok(sel)
            }
            other => {
                let index =
                    baseline_select(other, &self.state.hosts, &mut self.stats, &mut self.rng)?;
                Ok(Selection { index, probes: 0 })
            }
        }
    }

    /// React to a packet the switch could not match. For a request to the
    /// VIP: choose a target, install the per-flow forward entry (a group
    /// reference under the hybrid method, a direct rewrite for baselines)
    /// plus the client's response entry. For a stray server response whose
    /// client entry was swept: reinstall the response path. Either way the
    /// caller re-drives the packet through the switch.
    pub fn handle_packet_in(
        &mut self,
        sw: &mut Switch,
        pkt: &Packet,
    ) -> Result<PacketInOutcome, BalancerError> {
        if pkt.dst_ip != self.state.vip {
            if self.clients.iter().any(|c| c.ip == pkt.dst_ip) {
                self.ensure_reverse_entry(sw, pkt.dst_ip);
                return Ok(PacketInOutcome::ResponsePathRestored);
            }
            return Err(BalancerError::Unroutable(pkt.dst_ip));
        }
        let selection = self.pick_target()?;
        let target = &self.state.hosts[selection.index];
        let actions = if self.method == Method::Hybrid {
            vec![Action::Group(ff_group_id(selection.index))]
        } else {
            vec![
                Action::SetDstIp(target.ip),
                Action::SetDstMac(target.mac),
                Action::Output(target.switch_port),
            ]
        };
        sw.install_flow(Match::exact(pkt.five_tuple(), DYNAMIC_FLOW_PRIORITY), actions);
        self.ensure_reverse_entry(sw, pkt.src_ip);
        Ok(PacketInOutcome::Assigned(selection))
    }

    fn ensure_reverse_entry(&mut self, sw: &mut Switch, client_ip: Ipv4Addr) {
        if self.clients_with_reverse.contains(&client_ip) {
            return;
        }
        let Some(client) = self.clients.iter().find(|c| c.ip == client_ip) else {
            log::warn!("packet-in from unknown client {client_ip}; no response entry installed");
            return;
        };
        sw.install_flow(
            Match::dst_ip(client.ip, REVERSE_PRIORITY),
            vec![
                Action::SetSrcIp(self.state.vip),
                Action::SetSrcMac(self.state.cluster_mac),
                Action::Output(client.switch_port),
            ],
        );
        self.clients_with_reverse.insert(client_ip);
    }

    /// Install the static path: one hash-based SELECT group spanning every
    /// host (watch ports exclude dead ones at execution time), the VIP
    /// catch-all entry pointing at it, and response entries per client.
    fn install_static(&mut self, sw: &mut Switch) -> Result<(), BalancerError> {
        let buckets: Vec<Bucket> = self.state.hosts.iter().map(rewrite_bucket).collect();
        sw.install_group(
            GroupEntry::new(SELECT_GROUP_ID, GroupType::Select, buckets)
                .with_select_mode(SelectMode::HashBased),
        )?;
        let vip_entry = sw.install_flow(
            Match::dst_ip(self.state.vip, STATIC_VIP_PRIORITY),
            vec![Action::Group(SELECT_GROUP_ID)],
        );
        self.static_entry_ids.push(vip_entry);
        for client in &self.clients {
            let id = sw.install_flow(
                Match::dst_ip(client.ip, REVERSE_PRIORITY),
                vec![
                    Action::SetSrcIp(self.state.vip),
                    Action::SetSrcMac(self.state.cluster_mac),
                    Action::Output(client.switch_port),
                ],
            );
            self.static_entry_ids.push(id);
        }
        Ok(())
    }

    /// Apply the mode decision for a fresh imbalance value, performing
    /// the table surgery on transitions.
    fn apply_mode(&mut self, sw: &mut Switch, imbalance: f64) -> Result<(), BalancerError> {
        let new_mode = decide_mode(imbalance, self.state.imbalance_threshold);
        if new_mode == self.mode {
            return Ok(());
        }
        match new_mode {
            BalancerMode::Static => {
                let vip = self.state.vip;
                let client_ips: BTreeSet<Ipv4Addr> =
                    self.clients.iter().map(|c| c.ip).collect();
                sw.remove_flows_matching(|m| {
                    m.dst_ip
                        .is_some_and(|ip| ip == vip || client_ips.contains(&ip))
                });
                self.clients_with_reverse.clear();
                self.install_static(sw)?;
            }
            BalancerMode::Dynamic => {
                sw.remove_group(SELECT_GROUP_ID);
                for id in std::mem::take(&mut self.static_entry_ids) {
                    sw.remove_flow(id);
                }
                self.clients_with_reverse.clear();
            }
        }
        self.mode = new_mode;
        self.mode_switches += 1;
        Ok(())
    }

    /// One monitoring instant: ingest fresh samples, rebuild failover
    /// plans if anything moved beyond the change threshold, then let the
    /// imbalance decide the mode.
    pub fn on_monitor(
        &mut self,
        sw: &mut Switch,
        loads: &[f64],
        liveness: &[bool],
    ) -> Result<MonitorReport, BalancerError> {
        let outcome = self.state.refresh(loads, liveness)?;
        let mut groups_rebuilt = false;
        if self.method == Method::Hybrid {
            if outcome.changed {
                for i in 0..self.state.hosts.len() {
                    let buckets = ff_buckets(&self.state.hosts, i, self.standby_count);
                    sw.modify_group(ff_group_id(i), buckets)?;
                }
                groups_rebuilt = true;
            }
            self.apply_mode(sw, outcome.imbalance)?;
        }
        Ok(MonitorReport {
            outcome,
            mode: self.mode,
            groups_rebuilt,
        })
    }
}
