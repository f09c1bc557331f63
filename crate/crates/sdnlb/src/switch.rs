//! Software model of an OpenFlow-style switch data plane.
//!
//! A [`Switch`] holds one priority-matched flow table, a set of group
//! entries (ALL, SELECT, INDIRECT, fast-failover), and per-port liveness.
//! Packets are pushed through [`Switch::match_packet`] /
//! [`Switch::apply_actions`] / [`Switch::execute_group`] by the simulation
//! loop; the controller mutates tables through the install/remove calls.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::net::{MacAddr, Protocol};

/// 32-bit group table identifier.
pub type GroupId = u32;
/// Switch port number.
pub type PortNo = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SwitchError {
    #[error("dangling group reference: group {0} is not installed")]
    DanglingGroup(GroupId),
    #[error("duplicate group id {0}")]
    DuplicateGroup(GroupId),
    #[error("unknown group id {0}")]
    UnknownGroup(GroupId),
    #[error("malformed group {id}: {reason}")]
    MalformedGroup { id: GroupId, reason: String },
}

/// The unit flowing through flow and group tables: an L3/L4 five-tuple
/// plus L2 addressing and an opaque flow identifier that stays constant
/// across all packets of one client connection.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Packet {
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: Protocol,
    pub payload_size: u32,
    pub flow_id: u64,
}

impl Packet {
    pub fn five_tuple(&self) -> FiveTuple {
        FiveTuple {
            src_ip: self.src_ip,
            dst_ip: self.dst_ip,
            src_port: self.src_port,
            dst_port: self.dst_port,
            protocol: self.protocol,
        }
    }
}

/// The connection identity used for hash-based bucket selection and
/// exact-match flow entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FiveTuple {
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: Protocol,
}

impl FiveTuple {
    /// Canonical byte encoding hashed for SELECT bucket choice.
    fn canonical_bytes(&self) -> [u8; 13] {
        let mut out = [0u8; 13];
        out[0..4].copy_from_slice(&self.src_ip.octets());
        out[4..8].copy_from_slice(&self.dst_ip.octets());
        out[8..10].copy_from_slice(&self.src_port.to_be_bytes());
        out[10..12].copy_from_slice(&self.dst_port.to_be_bytes());
        out[12] = self.protocol.wire_byte();
        out
    }
}

/// Flow-entry match criteria. Unset fields are wildcards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Match {
    pub src_ip: Option<Ipv4Addr>,
    pub dst_ip: Option<Ipv4Addr>,
    pub src_port: Option<u16>,
    pub dst_port: Option<u16>,
    pub protocol: Option<Protocol>,
    pub priority: u32,
}

impl Match {
    /// Match on destination IP only.
    pub fn dst_ip(ip: Ipv4Addr, priority: u32) -> Self {
        Match {
            dst_ip: Some(ip),
            priority,
            ..Match::default()
        }
    }

    /// Pin the whole five-tuple.
    pub fn exact(tuple: FiveTuple, priority: u32) -> Self {
        Match {
            src_ip: Some(tuple.src_ip),
            dst_ip: Some(tuple.dst_ip),
            src_port: Some(tuple.src_port),
            dst_port: Some(tuple.dst_port),
            protocol: Some(tuple.protocol),
            priority,
        }
    }

    pub fn matches(&self, pkt: &Packet) -> bool {
        self.src_ip.is_none_or(|ip| ip == pkt.src_ip)
            && self.dst_ip.is_none_or(|ip| ip == pkt.dst_ip)
            && self.src_port.is_none_or(|p| p == pkt.src_port)
            && self.dst_port.is_none_or(|p| p == pkt.dst_port)
            && self.protocol.is_none_or(|p| p == pkt.protocol)
    }

    /// The five-tuple this match pins, if it wildcards nothing.
    fn exact_tuple(&self) -> Option<FiveTuple> {
        Some(FiveTuple {
            src_ip: self.src_ip?,
            dst_ip: self.dst_ip?,
            src_port: self.src_port?,
            dst_port: self.dst_port?,
            protocol: self.protocol?,
        })
    }
}

impl fmt::Display for Match {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "prio={}", self.priority)?;
        if let Some(ip) = self.src_ip {
            write!(f, " src_ip={ip}")?;
        }
        if let Some(ip) = self.dst_ip {
            write!(f, " dst_ip={ip}")?;
        }
        if let Some(p) = self.src_port {
            write!(f, " src_port={p}")?;
        }
        if let Some(p) = self.dst_port {
            write!(f, " dst_port={p}")?;
        }
        if let Some(p) = self.protocol {
            write!(f, " proto={p}")?;
        }
        Ok(())
    }
}

/// A single packet-processing action. At most one terminal action
/// (`Output`, `Group`, `Drop`) per list, and it must come last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    SetDstIp(Ipv4Addr),
    SetSrcIp(Ipv4Addr),
    SetDstMac(MacAddr),
    SetSrcMac(MacAddr),
    Output(PortNo),
    Group(GroupId),
    Drop,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::SetDstIp(ip) => write!(f, "set_dst_ip {ip}"),
            Action::SetSrcIp(ip) => write!(f, "set_src_ip {ip}"),
            Action::SetDstMac(mac) => write!(f, "set_dst_mac {mac}"),
            Action::SetSrcMac(mac) => write!(f, "set_src_mac {mac}"),
            Action::Output(port) => write!(f, "output {port}"),
            Action::Group(id) => write!(f, "group {id}"),
            Action::Drop => write!(f, "drop"),
        }
    }
}

/// Where a packet ended up after an action list ran.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Disposition {
    Forwarded { port: PortNo, packet: Packet },
    ToGroup { group: GroupId, packet: Packet },
    Dropped { reason: DropReason },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    /// An explicit `Drop` action, or an action list with no terminal action.
    Action,
    /// A SELECT or fast-failover group had no live bucket left.
    NoLiveBucket,
}

/// One installed flow rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowEntry {
    pub entry_id: u64,
    pub criteria: Match,
    pub actions: Vec<Action>,
}

/// Priority-ordered flow table.
///
/// Entries that pin the whole five-tuple are indexed by tuple so lookup
/// stays flat as the per-flow rule count grows; wildcard entries are
/// scanned. Selection is identical to a brute-force scan: highest
/// priority wins, ties broken by lowest entry id.
#[derive(Debug, Clone, Default)]
pub struct FlowTable {
    entries: BTreeMap<u64, FlowEntry>,
    exact: HashMap<FiveTuple, Vec<u64>>,
    wildcard: Vec<u64>,
    next_id: u64,
}

impl FlowTable {
    pub fn new() -> Self {
        FlowTable::default()
    }

    pub fn install(&mut self, criteria: Match, actions: Vec<Action>) -> u64 {
        let entry_id = self.next_id;
        self.next_id += 1;
        match criteria.exact_tuple() {
            Some(tuple) => self.exact.entry(tuple).or_default().push(entry_id),
            None => self.wildcard.push(entry_id),
        }
        self.entries.insert(
            entry_id,
            FlowEntry {
                entry_id,
                criteria,
                actions,
            },
        );
        entry_id
    }

    pub fn lookup(&self, pkt: &Packet) -> Option<&FlowEntry> {
        let exact_ids = self
            .exact
            .get(&pkt.five_tuple())
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let mut best: Option<&FlowEntry> = None;
        for &id in exact_ids.iter().chain(self.wildcard.iter()) {
            let entry = &self.entries[&id];
            if !entry.criteria.matches(pkt) {
                continue;
            }
            let better = match best {
                None => true,
                Some(cur) => {
                    entry.criteria.priority > cur.criteria.priority
                        || (entry.criteria.priority == cur.criteria.priority
                            && entry.entry_id < cur.entry_id)
                }
            };
            if better {
                best = Some(entry);
            }
        }
        best
    }

    pub fn remove_matching(&mut self, pred: impl Fn(&Match) -> bool) -> usize {
        let doomed: Vec<u64> = self
            .entries
            .values()
            .filter(|e| pred(&e.criteria))
            .map(|e| e.entry_id)
            .collect();
        for &id in &doomed {
            self.remove(id);
        }
        doomed.len()
    }

    pub fn remove(&mut self, entry_id: u64) -> bool {
        let Some(entry) = self.entries.remove(&entry_id) else {
            return false;
        };
        match entry.criteria.exact_tuple() {
            Some(tuple) => {
                if let Some(ids) = self.exact.get_mut(&tuple) {
                    ids.retain(|&id| id != entry_id);
                    if ids.is_empty() {
                        self.exact.remove(&tuple);
                    }
                }
            }
            None => self.wildcard.retain(|&id| id != entry_id),
        }
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in id order.
    pub fn iter(&self) -> impl Iterator<Item = &FlowEntry> {
        self.entries.values()
    }
}

/// The four OpenFlow group types.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupType {
    All,
    Select,
    Indirect,
    FastFailover,
}

impl fmt::Display for GroupType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupType::All => write!(f, "all"),
            GroupType::Select => write!(f, "select"),
            GroupType::Indirect => write!(f, "indirect"),
            GroupType::FastFailover => write!(f, "ff"),
        }
    }
}

/// Bucket choice policy for SELECT groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectMode {
    /// Stable hash of the packet five-tuple over the live buckets.
    #[default]
    HashBased,
    /// Live buckets chosen cyclically via a per-group cursor.
    RoundRobin,
}

/// One forwarding alternative inside a group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bucket {
    pub actions: Vec<Action>,
    pub weight: u32,
    /// Port whose liveness gates this bucket (SELECT and FF groups).
    pub watch_port: Option<PortNo>,
}

impl Bucket {
    pub fn new(actions: Vec<Action>, watch_port: Option<PortNo>) -> Self {
        Bucket {
            actions,
            weight: 1,
            watch_port,
        }
    }
}

/// One group-table entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupEntry {
    pub group_id: GroupId,
    pub group_type: GroupType,
    pub buckets: Vec<Bucket>,
    pub select_mode: SelectMode,
    /// Packets processed; never decreases.
    pub counter: u64,
    rr_cursor: usize,
}

impl GroupEntry {
    pub fn new(group_id: GroupId, group_type: GroupType, buckets: Vec<Bucket>) -> Self {
        GroupEntry {
            group_id,
            group_type,
            buckets,
            select_mode: SelectMode::default(),
            counter: 0,
            rr_cursor: 0,
        }
    }

    pub fn with_select_mode(mut self, mode: SelectMode) -> Self {
        self.select_mode = mode;
        self
    }

    fn validate(&self) -> Result<(), SwitchError> {
        match self.group_type {
            GroupType::Indirect if self.buckets.len() != 1 => Err(SwitchError::MalformedGroup {
                id: self.group_id,
                reason: format!("indirect group must have exactly 1 bucket, has {}", self.buckets.len()),
            }),
            GroupType::FastFailover if self.buckets.iter().any(|b| b.watch_port.is_none()) => {
                Err(SwitchError::MalformedGroup {
                    id: self.group_id,
                    reason: "fast-failover bucket without a watch port".into(),
                })
            }
            _ => Ok(()),
        }
    }
}

/// Seedable FNV-1a over the canonical five-tuple bytes. Fixed here rather
/// than delegated to `std` hashing so bucket choice is stable across
/// platforms and toolchains.
fn five_tuple_hash(seed: u64, tuple: &FiveTuple) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in tuple.canonical_bytes().iter() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// The switch: flow table, group table, and port liveness.
///
/// Single-threaded by design; all mutations happen inside the simulation
/// event loop.
#[derive(Debug, Clone)]
pub struct Switch {
    table: FlowTable,
    groups: BTreeMap<GroupId, GroupEntry>,
    ports: BTreeMap<PortNo, bool>,
    hash_seed: u64,
}

impl Switch {
    pub fn new(hash_seed: u64) -> Self {
        Switch {
            table: FlowTable::new(),
            groups: BTreeMap::new(),
            ports: BTreeMap::new(),
            hash_seed,
        }
    }

    /// Register a port or flip its liveness. Watch ports see the change
    /// immediately.
    pub fn set_port_live(&mut self, port: PortNo, live: bool) {
        self.ports.insert(port, live);
    }

    /// Unregistered ports count as down.
    pub fn port_live(&self, port: PortNo) -> bool {
        self.ports.get(&port).copied().unwrap_or(false)
    }

    /// Highest-priority matching entry; ties broken by lowest entry id.
    pub fn match_packet(&self, pkt: &Packet) -> Option<&FlowEntry> {
        self.table.lookup(pkt)
    }

    /// Run an action list over a packet. Rewrites apply in order; the
    /// terminal action decides the disposition. A list with no terminal
    /// action drops the packet.
    pub fn apply_actions(&self, pkt: &Packet, actions: &[Action]) -> Result<Disposition, SwitchError> {
        let mut pkt = pkt.clone();
        for action in actions {
            match *action {
                Action::SetDstIp(ip) => pkt.dst_ip = ip,
                Action::SetSrcIp(ip) => pkt.src_ip = ip,
                Action::SetDstMac(mac) => pkt.dst_mac = mac,
                Action::SetSrcMac(mac) => pkt.src_mac = mac,
                Action::Output(port) => {
                    return Ok(Disposition::Forwarded { port, packet: pkt });
                }
                Action::Group(id) => {
                    if !self.groups.contains_key(&id) {
                        return Err(SwitchError::DanglingGroup(id));
                    }
                    return Ok(Disposition::ToGroup { group: id, packet: pkt });
                }
                Action::Drop => {
                    return Ok(Disposition::Dropped {
                        reason: DropReason::Action,
                    });
                }
            }
        }
        Ok(Disposition::Dropped {
            reason: DropReason::Action,
        })
    }

    /// Execute a group on a packet.
    ///
    /// ALL clones the packet into every bucket; INDIRECT applies its single
    /// bucket; SELECT picks one live bucket by five-tuple hash or a cyclic
    /// cursor; fast-failover applies the first live bucket. SELECT and FF
    /// with no live bucket yield a single `NoLiveBucket` drop.
    pub fn execute_group(&mut self, group_id: GroupId, pkt: &Packet) -> Result<Vec<Disposition>, SwitchError> {
        let ports = &self.ports;
        let live_of = |bucket: &Bucket| {
            bucket
                .watch_port
                .is_none_or(|p| ports.get(&p).copied().unwrap_or(false))
        };

        let entry = self
            .groups
            .get_mut(&group_id)
            .ok_or(SwitchError::UnknownGroup(group_id))?;
        entry.counter += 1;

        let chosen: Vec<Vec<Action>> = match entry.group_type {
            GroupType::All => entry.buckets.iter().map(|b| b.actions.clone()).collect(),
            GroupType::Indirect => vec![entry.buckets[0].actions.clone()],
            GroupType::Select => {
                let live: Vec<&Bucket> = entry.buckets.iter().filter(|b| live_of(b)).collect();
                if live.is_empty() {
                    return Ok(vec![Disposition::Dropped {
                        reason: DropReason::NoLiveBucket,
                    }]);
                }
                let idx = match entry.select_mode {
                    SelectMode::HashBased => {
                        (five_tuple_hash(self.hash_seed, &pkt.five_tuple()) % live.len() as u64)
                            as usize
                    }
                    SelectMode::RoundRobin => {
                        let idx = entry.rr_cursor % live.len();
                        entry.rr_cursor = entry.rr_cursor.wrapping_add(1);
                        idx
                    }
                };
                vec![live[idx].actions.clone()]
            }
            GroupType::FastFailover => match entry.buckets.iter().find(|b| live_of(b)) {
                Some(bucket) => vec![bucket.actions.clone()],
                None => {
                    return Ok(vec![Disposition::Dropped {
                        reason: DropReason::NoLiveBucket,
                    }]);
                }
            },
        };

        chosen
            .iter()
            .map(|actions| self.apply_actions(pkt, actions))
            .collect()
    }

    /// Install a flow entry, returning its id.
    pub fn install_flow(&mut self, criteria: Match, actions: Vec<Action>) -> u64 {
        self.table.install(criteria, actions)
    }

    /// Remove every entry whose match satisfies the predicate; returns the
    /// count removed.
    pub fn remove_flows_matching(&mut self, pred: impl Fn(&Match) -> bool) -> usize {
        self.table.remove_matching(pred)
    }

    pub fn remove_flow(&mut self, entry_id: u64) -> bool {
        self.table.remove(entry_id)
    }

    pub fn install_group(&mut self, entry: GroupEntry) -> Result<(), SwitchError> {
        entry.validate()?;
        if self.groups.contains_key(&entry.group_id) {
            return Err(SwitchError::DuplicateGroup(entry.group_id));
        }
        self.groups.insert(entry.group_id, entry);
        Ok(())
    }

    /// Replace a group's buckets in place, preserving its id and counter.
    pub fn modify_group(&mut self, group_id: GroupId, buckets: Vec<Bucket>) -> Result<(), SwitchError> {
        let entry = self
            .groups
            .get_mut(&group_id)
            .ok_or(SwitchError::UnknownGroup(group_id))?;
        let candidate = GroupEntry {
            buckets,
            ..entry.clone()
        };
        candidate.validate()?;
        *entry = candidate;
        Ok(())
    }

    /// Removing an absent group is a no-op with count 0.
    pub fn remove_group(&mut self, group_id: GroupId) -> usize {
        usize::from(self.groups.remove(&group_id).is_some())
    }

    pub fn group(&self, group_id: GroupId) -> Option<&GroupEntry> {
        self.groups.get(&group_id)
    }

    pub fn flow_table(&self) -> &FlowTable {
        &self.table
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Structured text dump of tables, groups, and counters for debugging.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "flow table ({} entries):", self.table.len());
        for entry in self.table.iter() {
            let actions: Vec<String> = entry.actions.iter().map(|a| a.to_string()).collect();
            let _ = writeln!(
                out,
                "  [{}] {} -> [{}]",
                entry.entry_id,
                entry.criteria,
                actions.join(", ")
            );
        }
        let _ = writeln!(out, "groups ({}):", self.groups.len());
        for group in self.groups.values() {
            let _ = writeln!(
                out,
                "  [{}] type={} counter={}",
                group.group_id, group.group_type, group.counter
            );
            for (i, bucket) in group.buckets.iter().enumerate() {
                let actions: Vec<String> = bucket.actions.iter().map(|a| a.to_string()).collect();
                let watch = bucket
                    .watch_port
                    .map(|p| p.to_string())
                    .unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    out,
                    "    bucket {i}: weight={} watch={} [{}]",
                    bucket.weight,
                    watch,
                    actions.join(", ")
                );
            }
        }
        let ports: Vec<String> = self
            .ports
            .iter()
            .map(|(p, live)| format!("{p}:{}", if *live { "up" } else { "down" }))
            .collect();
        let _ = writeln!(out, "ports: {}", ports.join(" "));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(src_port: u16) -> Packet {
        Packet {
            src_ip: Ipv4Addr::new(10, 0, 0, 100),
            dst_ip: Ipv4Addr::new(10, 0, 0, 10),
            src_mac: MacAddr::new([2, 0, 0, 0, 0, 100]),
            dst_mac: MacAddr::new([2, 0, 0, 0, 0, 10]),
            src_port,
            dst_port: 80,
            protocol: Protocol::Tcp,
            payload_size: 512,
            flow_id: u64::from(src_port),
        }
    }

    #[test]
    fn match_on_vip() {
        let mut sw = Switch::new(0);
        let vip = Ipv4Addr::new(10, 0, 0, 10);
        let id = sw.install_flow(Match::dst_ip(vip, 10), vec![Action::Drop]);
        let hit = sw.match_packet(&pkt(1000)).expect("should match");
        assert_eq!(hit.entry_id, id);
    }

    #[test]
    fn empty_table_matches_nothing() {
        let sw = Switch::new(0);
        assert!(sw.match_packet(&pkt(1000)).is_none());
    }

    #[test]
    fn higher_priority_wins() {
        let mut sw = Switch::new(0);
        let vip = Ipv4Addr::new(10, 0, 0, 10);
        sw.install_flow(Match::dst_ip(vip, 10), vec![Action::Drop]);
        let high = sw.install_flow(Match::dst_ip(vip, 20), vec![Action::Output(1)]);
        assert_eq!(sw.match_packet(&pkt(1)).unwrap().entry_id, high);
    }

    #[test]
    fn priority_tie_breaks_on_lowest_id() {
        let mut sw = Switch::new(0);
        let vip = Ipv4Addr::new(10, 0, 0, 10);
        let first = sw.install_flow(Match::dst_ip(vip, 10), vec![Action::Drop]);
        sw.install_flow(Match::dst_ip(vip, 10), vec![Action::Output(1)]);
        assert_eq!(sw.match_packet(&pkt(1)).unwrap().entry_id, first);
    }

    #[test]
    fn exact_entry_wins_then_misses_on_other_tuple() {
        let mut sw = Switch::new(0);
        let p = pkt(4242);
        let exact = sw.install_flow(Match::exact(p.five_tuple(), 100), vec![Action::Output(2)]);
        sw.install_flow(Match::dst_ip(p.dst_ip, 10), vec![Action::Drop]);
        assert_eq!(sw.match_packet(&p).unwrap().entry_id, exact);
        // a different source port misses the exact entry and falls back
        assert_eq!(sw.match_packet(&pkt(4243)).unwrap().criteria.priority, 10);
    }

    #[test]
    fn apply_rewrites_then_outputs() {
        let sw = Switch::new(0);
        let ip = Ipv4Addr::new(10, 0, 1, 1);
        let mac = MacAddr::new([2, 0, 0, 0, 1, 1]);
        let d = sw
            .apply_actions(
                &pkt(1),
                &[Action::SetDstIp(ip), Action::SetDstMac(mac), Action::Output(7)],
            )
            .unwrap();
        match d {
            Disposition::Forwarded { port, packet } => {
                assert_eq!(port, 7);
                assert_eq!(packet.dst_ip, ip);
                assert_eq!(packet.dst_mac, mac);
                // untouched fields survive
                assert_eq!(packet.src_ip, pkt(1).src_ip);
            }
            other => panic!("expected Forwarded, got {other:?}"),
        }
    }

    #[test]
    fn drop_action_drops() {
        let sw = Switch::new(0);
        assert_eq!(
            sw.apply_actions(&pkt(1), &[Action::Drop]).unwrap(),
            Disposition::Dropped {
                reason: DropReason::Action
            }
        );
    }

    #[test]
    fn dangling_group_reference_errors() {
        let sw = Switch::new(0);
        assert_eq!(
            sw.apply_actions(&pkt(1), &[Action::Group(99)]),
            Err(SwitchError::DanglingGroup(99))
        );
    }

    fn out_bucket(port: PortNo) -> Bucket {
        Bucket::new(vec![Action::Output(port)], Some(port))
    }

    #[test]
    fn all_group_fans_out_to_every_bucket() {
        let mut sw = Switch::new(0);
        sw.install_group(GroupEntry::new(
            5,
            GroupType::All,
            vec![out_bucket(1), out_bucket(2), out_bucket(3)],
        ))
        .unwrap();
        let ds = sw.execute_group(5, &pkt(1)).unwrap();
        assert_eq!(ds.len(), 3);
    }

    #[test]
    fn indirect_group_requires_one_bucket() {
        let mut sw = Switch::new(0);
        let err = sw
            .install_group(GroupEntry::new(
                5,
                GroupType::Indirect,
                vec![out_bucket(1), out_bucket(2)],
            ))
            .unwrap_err();
        assert!(matches!(err, SwitchError::MalformedGroup { id: 5, .. }));
    }

    #[test]
    fn ff_first_live_bucket_wins() {
        let mut sw = Switch::new(0);
        sw.set_port_live(1, true);
        sw.set_port_live(2, true);
        sw.install_group(GroupEntry::new(
            7,
            GroupType::FastFailover,
            vec![out_bucket(1), out_bucket(2)],
        ))
        .unwrap();
        let ds = sw.execute_group(7, &pkt(1)).unwrap();
        assert_eq!(
            ds,
            vec![Disposition::Forwarded {
                port: 1,
                packet: pkt(1)
            }]
        );

        // first bucket's watch port goes down: second takes over
        sw.set_port_live(1, false);
        let ds = sw.execute_group(7, &pkt(1)).unwrap();
        assert!(matches!(ds[0], Disposition::Forwarded { port: 2, .. }));
    }

    #[test]
    fn ff_without_watch_port_is_rejected() {
        let mut sw = Switch::new(0);
        let err = sw
            .install_group(GroupEntry::new(
                7,
                GroupType::FastFailover,
                vec![Bucket::new(vec![Action::Output(1)], None)],
            ))
            .unwrap_err();
        assert!(matches!(err, SwitchError::MalformedGroup { .. }));
    }

    #[test]
    fn select_hash_is_sticky_per_five_tuple() {
        let mut sw = Switch::new(42);
        for p in 1..=4 {
            sw.set_port_live(p, true);
        }
        sw.install_group(GroupEntry::new(
            1,
            GroupType::Select,
            (1..=4).map(out_bucket).collect(),
        ))
        .unwrap();
        let first = sw.execute_group(1, &pkt(5555)).unwrap();
        let second = sw.execute_group(1, &pkt(5555)).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn select_skips_dead_buckets() {
        let mut sw = Switch::new(42);
        for p in 1..=3 {
            sw.set_port_live(p, true);
        }
        sw.set_port_live(2, false);
        sw.install_group(GroupEntry::new(
            1,
            GroupType::Select,
            (1..=3).map(out_bucket).collect(),
        ))
        .unwrap();
        for sp in 0..200 {
            let ds = sw.execute_group(1, &pkt(sp)).unwrap();
            match &ds[0] {
                Disposition::Forwarded { port, .. } => assert_ne!(*port, 2),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn select_with_no_live_bucket_drops() {
        let mut sw = Switch::new(0);
        sw.install_group(GroupEntry::new(
            1,
            GroupType::Select,
            vec![out_bucket(1), out_bucket(2)],
        ))
        .unwrap();
        // ports never registered, so both buckets are dead
        let ds = sw.execute_group(1, &pkt(1)).unwrap();
        assert_eq!(
            ds,
            vec![Disposition::Dropped {
                reason: DropReason::NoLiveBucket
            }]
        );
    }

    #[test]
    fn select_round_robin_cycles_live_buckets() {
        let mut sw = Switch::new(0);
        for p in 1..=3 {
            sw.set_port_live(p, true);
        }
        sw.install_group(
            GroupEntry::new(1, GroupType::Select, (1..=3).map(out_bucket).collect())
                .with_select_mode(SelectMode::RoundRobin),
        )
        .unwrap();
        let mut ports = Vec::new();
        for _ in 0..6 {
            match &sw.execute_group(1, &pkt(9)).unwrap()[0] {
                Disposition::Forwarded { port, .. } => ports.push(*port),
                other => panic!("unexpected {other:?}"),
            }
        }
        assert_eq!(ports, vec![1, 2, 3, 1, 2, 3]);
    }

    #[test]
    fn duplicate_group_id_rejected() {
        let mut sw = Switch::new(0);
        sw.install_group(GroupEntry::new(1, GroupType::All, vec![out_bucket(1)]))
            .unwrap();
        assert_eq!(
            sw.install_group(GroupEntry::new(1, GroupType::All, vec![out_bucket(2)])),
            Err(SwitchError::DuplicateGroup(1))
        );
    }

    #[test]
    fn remove_group_on_empty_switch_is_noop() {
        let mut sw = Switch::new(0);
        assert_eq!(sw.remove_group(9), 0);
    }

    #[test]
    fn remove_flows_matching_counts() {
        let mut sw = Switch::new(0);
        let vip = Ipv4Addr::new(10, 0, 0, 10);
        let other = Ipv4Addr::new(10, 0, 0, 99);
        for prio in [10, 20, 30] {
            sw.install_flow(Match::dst_ip(vip, prio), vec![Action::Drop]);
        }
        sw.install_flow(Match::dst_ip(other, 10), vec![Action::Drop]);
        let removed = sw.remove_flows_matching(|m| m.dst_ip == Some(vip));
        assert_eq!(removed, 3);
        assert_eq!(sw.flow_table().len(), 1);
    }

    #[test]
    fn counters_bump_once_per_execution() {
        let mut sw = Switch::new(0);
        sw.set_port_live(1, true);
        sw.install_group(GroupEntry::new(3, GroupType::Indirect, vec![out_bucket(1)]))
            .unwrap();
        sw.execute_group(3, &pkt(1)).unwrap();
        sw.execute_group(3, &pkt(2)).unwrap();
        assert_eq!(sw.group(3).unwrap().counter, 2);
    }

    #[test]
    fn modify_group_keeps_counter() {
        let mut sw = Switch::new(0);
        sw.set_port_live(1, true);
        sw.set_port_live(2, true);
        sw.install_group(GroupEntry::new(3, GroupType::Indirect, vec![out_bucket(1)]))
            .unwrap();
        sw.execute_group(3, &pkt(1)).unwrap();
        sw.modify_group(3, vec![out_bucket(2)]).unwrap();
        let g = sw.group(3).unwrap();
        assert_eq!(g.counter, 1);
        assert_eq!(g.buckets[0].watch_port, Some(2));
        assert!(matches!(
            sw.modify_group(99, vec![out_bucket(1)]),
            Err(SwitchError::UnknownGroup(99))
        ));
    }

    #[test]
    fn hash_changes_with_seed() {
        let t = pkt(777).five_tuple();
        assert_ne!(five_tuple_hash(1, &t), five_tuple_hash(2, &t));
    }

    #[test]
    fn snapshot_mentions_entries_and_groups() {
        let mut sw = Switch::new(0);
        sw.set_port_live(4, true);
        sw.install_flow(
            Match::dst_ip(Ipv4Addr::new(10, 0, 0, 10), 10),
            vec![Action::Group(8)],
        );
        sw.install_group(GroupEntry::new(8, GroupType::FastFailover, vec![out_bucket(4)]))
            .unwrap();
        let dump = sw.snapshot();
        assert!(dump.contains("dst_ip=10.0.0.10"));
        assert!(dump.contains("type=ff"));
        assert!(dump.contains("4:up"));
    }
}
