//! Deterministic discrete-event engine tying the pieces together: a
//! closed-loop client population, the switch data plane, the controller,
//! and server hosts with load-dependent service times and failure
//! injection.
//!
//! All randomness lives in the controller's seeded generator and event
//! ordering is total (time, then insertion sequence), so a scenario run
//! twice with the same seed produces identical reports.

pub mod metrics;
pub mod scenario;

pub use metrics::{MetricsReport, ModeSample, TimedSample};
pub use scenario::{ClientParams, HostEvent, Scenario, ServerParams};

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::net::Ipv4Addr;
use std::ops::{Add, Sub};

use thiserror::Error;

use crate::balancer::{BalancerError, ClientEndpoint, Controller, PacketInOutcome};
use crate::monitor::{change_threshold, imbalance_from_samples, ClusterState, ServerHost};
use crate::net::{MacAddr, Protocol};
use crate::switch::{Disposition, Packet, PortNo, Switch};

/// Cluster-facing virtual IP all client requests target.
pub const CLUSTER_VIP: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 10);
pub const CLUSTER_MAC: MacAddr = MacAddr::new([0x02, 0, 0, 0, 0, 0x0a]);
/// The single simulated client endpoint (the load-generator box).
pub const CLIENT_IP: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 100);
pub const CLIENT_MAC: MacAddr = MacAddr::new([0x02, 0, 0, 0, 0, 0x64]);
pub const CLIENT_PORT: PortNo = 1;

/// Service times diverge as load approaches 1; this headroom floor keeps
/// them finite.
const LOAD_HEADROOM_FLOOR: f64 = 0.01;
/// Client threads start staggered by this much to avoid lockstep.
const THREAD_STAGGER_SECS: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),
    #[error(transparent)]
    Balancer(#[from] BalancerError),
}

/// Simulated time as integer microseconds: totally ordered, exact, and
/// immune to float drift in event ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs(seconds: f64) -> Self {
        debug_assert!(seconds >= 0.0 && seconds.is_finite());
        SimTime((seconds * 1e6).round() as u64)
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

#[derive(Debug, Clone)]
enum EventKind {
    RequestArrival { thread: usize },
    PacketDelivery { packet: Packet, hop: Hop },
    ServiceComplete { request: u64, host: usize, token: u64 },
    MonitorTick,
    MetricsSample,
    FailureInjection { host: usize },
    RecoveryInjection { host: usize },
    RetryCheck { request: u64 },
    TimeoutCheck { request: u64 },
    ScenarioEnd,
}

/// Where a traveling packet lands next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Hop {
    Switch,
    Controller,
    Host(usize),
    Client,
}

struct HeapEvent {
    time: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for HeapEvent {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl Eq for HeapEvent {}

impl PartialOrd for HeapEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEvent {
    // reversed so the max-heap pops the earliest (time, seq) first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// One simulated server: utilization is an exogenous background term plus
/// a fixed contribution per in-flight request.
#[derive(Debug, Clone)]
struct ServerModel {
    live: bool,
    background_load: f64,
    concurrency: u32,
    load_per_request: f64,
    base_service_time: f64,
}

impl ServerModel {
    fn reported_load(&self) -> f64 {
        (self.background_load + f64::from(self.concurrency) * self.load_per_request).min(1.0)
    }

    /// Admit one request; its service time reflects the load it found.
    fn admit(&mut self) -> f64 {
        let headroom = (1.0 - self.reported_load()).max(LOAD_HEADROOM_FLOOR);
        self.concurrency += 1;
        self.base_service_time / headroom
    }

    fn release(&mut self) {
        self.concurrency = self.concurrency.saturating_sub(1);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RequestStatus {
    Outstanding,
    ResponseInFlight,
    Served,
    Lost,
}

/// Proof that a specific admission is still current; host failure
/// invalidates tickets so completions from a dead box are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ServiceTicket {
    host: usize,
    token: u64,
}

#[derive(Debug, Clone)]
struct RequestState {
    thread: usize,
    issued_at: SimTime,
    packet: Packet,
    status: RequestStatus,
    service: Option<ServiceTicket>,
    /// Host the controller assigned the flow to (baselines and hybrid
    /// dynamic mode); static-mode flows never meet the controller.
    assigned_host: Option<usize>,
    /// Host that actually completed the request.
    served_host: Option<usize>,
}

struct Engine {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<HeapEvent>,
    sw: Switch,
    ctl: Controller,
    servers: Vec<ServerModel>,
    requests: Vec<RequestState>,
    thread_busy: Vec<bool>,
    next_token: u64,

    thread_count: usize,
    prop: SimTime,
    ctrl_latency: SimTime,
    think: SimTime,
    timeout: SimTime,
    retry: SimTime,
    monitor_every: SimTime,
    sample_every: SimTime,
    end: SimTime,
    failures: Vec<(SimTime, usize)>,
    recoveries: Vec<(SimTime, usize)>,

    issued: u64,
    served: u64,
    lost: u64,
    per_host_requests: Vec<u64>,
    response_series: Vec<TimedSample>,
    imbalance_series: Vec<TimedSample>,
    mode_timeline: Vec<ModeSample>,
}

/// Run one scenario to completion.
pub fn run_scenario(scn: &Scenario) -> Result<MetricsReport, SimError> {
    let issues = scn.validation_issues();
    if !issues.is_empty() {
        return Err(SimError::InvalidScenario(issues));
    }
    Engine::new(scn).run()
}

fn response_packet(request: &Packet, host: &ServerHost) -> Packet {
    Packet {
        src_ip: host.ip,
        dst_ip: request.src_ip,
        src_mac: host.mac,
        dst_mac: request.src_mac,
        src_port: request.dst_port,
        dst_port: request.src_port,
        protocol: request.protocol,
        payload_size: request.payload_size,
        flow_id: request.flow_id,
    }
}

impl Engine {
    fn new(scn: &Scenario) -> Self {
        let n = scn.cluster_size;
        let servers: Vec<ServerModel> = (0..n)
            .map(|i| ServerModel {
                live: true,
                background_load: scn.background_load.get(i).copied().unwrap_or(0.0),
                concurrency: 0,
                load_per_request: scn.server.load_per_request,
                base_service_time: scn.server.base_service_time,
            })
            .collect();
        let hosts: Vec<ServerHost> = (0..n)
            .map(|i| ServerHost::numbered(i).with_load(servers[i].reported_load()))
            .collect();

        let mut sw = Switch::new(scn.seed);
        sw.set_port_live(CLIENT_PORT, true);
        for host in &hosts {
            sw.set_port_live(host.switch_port, true);
        }

        let t = change_threshold(&scn.change_threshold_samples)
            .expect("samples validated non-empty");
        let state = ClusterState::new(hosts, CLUSTER_VIP, CLUSTER_MAC, t, scn.imbalance_threshold)
            .expect("cluster size validated non-zero");
        let client = ClientEndpoint {
            ip: CLIENT_IP,
            mac: CLIENT_MAC,
            switch_port: CLIENT_PORT,
        };
        let ctl = Controller::new(state, scn.method, scn.standby_count, vec![client], scn.seed);

        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            sw,
            ctl,
            servers,
            requests: Vec::new(),
            thread_busy: vec![false; scn.client.thread_count],
            next_token: 0,
            thread_count: scn.client.thread_count,
            prop: SimTime::from_secs(scn.propagation_delay),
            ctrl_latency: SimTime::from_secs(scn.controller_latency),
            think: SimTime::from_secs(scn.client.think_time),
            timeout: SimTime::from_secs(scn.client.connect_timeout),
            retry: SimTime::from_secs(scn.retry_interval),
            monitor_every: SimTime::from_secs(scn.monitor_interval),
            sample_every: SimTime::from_secs(scn.sample_interval),
            end: SimTime::from_secs(scn.duration),
            failures: scn
                .failures
                .iter()
                .map(|f| (SimTime::from_secs(f.time), f.host))
                .collect(),
            recoveries: scn
                .recoveries
                .iter()
                .map(|r| (SimTime::from_secs(r.time), r.host))
                .collect(),
            issued: 0,
            served: 0,
            lost: 0,
            per_host_requests: vec![0; n],
            response_series: Vec::new(),
            imbalance_series: Vec::new(),
            mode_timeline: Vec::new(),
        }
    }

    fn schedule(&mut self, time: SimTime, kind: EventKind) {
        debug_assert!(time >= self.now, "scheduling into the past");
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(HeapEvent { time, seq, kind });
    }

    fn run(mut self) -> Result<MetricsReport, SimError> {
        if self.end == SimTime::ZERO {
            return Ok(self.report());
        }
        self.ctl.install_initial(&mut self.sw)?;
        self.schedule(self.end, EventKind::ScenarioEnd);
        self.schedule(self.monitor_every, EventKind::MonitorTick);
        self.sample_imbalance();
        self.schedule(self.sample_every, EventKind::MetricsSample);
        self.mode_timeline.push(ModeSample {
            time: 0.0,
            mode: self.ctl.mode,
        });
        for (time, host) in self.failures.clone() {
            self.schedule(time, EventKind::FailureInjection { host });
        }
        for (time, host) in self.recoveries.clone() {
            self.schedule(time, EventKind::RecoveryInjection { host });
        }
        for thread in 0..self.thread_count {
            let start = SimTime::from_secs(thread as f64 * THREAD_STAGGER_SECS);
            self.schedule(start, EventKind::RequestArrival { thread });
        }

        while let Some(event) = self.queue.pop() {
            self.now = event.time;
            match event.kind {
                EventKind::ScenarioEnd => break,
                kind => self.dispatch(kind)?,
            }
        }
        Ok(self.report())
    }

    fn dispatch(&mut self, kind: EventKind) -> Result<(), SimError> {
        match kind {
            EventKind::RequestArrival { thread } => self.on_arrival(thread),
            EventKind::PacketDelivery { packet, hop } => self.on_delivery(packet, hop)?,
            EventKind::ServiceComplete {
                request,
                host,
                token,
            } => self.on_service_complete(request, host, token),
            EventKind::MonitorTick => self.on_monitor_tick()?,
            EventKind::MetricsSample => {
                self.sample_imbalance();
                self.schedule(self.now + self.sample_every, EventKind::MetricsSample);
            }
            EventKind::FailureInjection { host } => self.on_failure(host),
            EventKind::RecoveryInjection { host } => self.on_recovery(host),
            EventKind::RetryCheck { request } => self.on_retry_check(request),
            EventKind::TimeoutCheck { request } => self.on_timeout_check(request),
            EventKind::ScenarioEnd => unreachable!("handled by the main loop"),
        }
        Ok(())
    }

    fn request_packet(&self, id: u64) -> Packet {
        Packet {
            src_ip: CLIENT_IP,
            dst_ip: CLUSTER_VIP,
            src_mac: CLIENT_MAC,
            dst_mac: CLUSTER_MAC,
            src_port: 1024 + (id % 60000) as u16,
            dst_port: 80,
            protocol: Protocol::Tcp,
            payload_size: 512,
            flow_id: id,
        }
    }

    fn on_arrival(&mut self, thread: usize) {
        debug_assert!(
            !self.thread_busy[thread],
            "thread {thread} issued a request while one is outstanding"
        );
        self.thread_busy[thread] = true;
        let id = self.requests.len() as u64;
        let packet = self.request_packet(id);
        self.requests.push(RequestState {
            thread,
            issued_at: self.now,
            packet: packet.clone(),
            status: RequestStatus::Outstanding,
            service: None,
            assigned_host: None,
            served_host: None,
        });
        self.issued += 1;
        self.schedule(
            self.now + self.prop,
            EventKind::PacketDelivery {
                packet,
                hop: Hop::Switch,
            },
        );
        self.schedule(self.now + self.timeout, EventKind::TimeoutCheck { request: id });
        self.schedule(self.now + self.retry, EventKind::RetryCheck { request: id });
    }

    fn on_delivery(&mut self, packet: Packet, hop: Hop) -> Result<(), SimError> {
        match hop {
            Hop::Switch => self.drive_packet(packet),
            Hop::Controller => self.on_controller(packet),
            Hop::Host(host) => {
                self.on_host_delivery(packet, host);
                Ok(())
            }
            Hop::Client => {
                self.on_client_delivery(packet);
                Ok(())
            }
        }
    }

    /// Push a packet through the switch pipeline; a table miss defers to
    /// the controller after the packet-in round trip.
    fn drive_packet(&mut self, packet: Packet) -> Result<(), SimError> {
        let Some(entry) = self.sw.match_packet(&packet) else {
            if packet.dst_ip == CLUSTER_VIP || packet.dst_ip == CLIENT_IP {
                self.schedule(
                    self.now + self.ctrl_latency,
                    EventKind::PacketDelivery {
                        packet,
                        hop: Hop::Controller,
                    },
                );
            } else {
                log::debug!("switch dropped unroutable packet to {}", packet.dst_ip);
            }
            return Ok(());
        };
        let actions = entry.actions.clone();
        let disposition = self
            .sw
            .apply_actions(&packet, &actions)
            .map_err(BalancerError::from)?;
        self.route(disposition)
    }

    fn route(&mut self, disposition: Disposition) -> Result<(), SimError> {
        match disposition {
            Disposition::Forwarded { port, packet } => {
                let hop = if port == CLIENT_PORT {
                    Hop::Client
                } else if let Some(host) = self.port_to_host(port) {
                    Hop::Host(host)
                } else {
                    log::debug!("packet left on unknown port {port}");
                    return Ok(());
                };
                self.schedule(self.now + self.prop, EventKind::PacketDelivery { packet, hop });
                Ok(())
            }
            Disposition::ToGroup { group, packet } => {
                let dispositions = self
                    .sw
                    .execute_group(group, &packet)
                    .map_err(BalancerError::from)?;
                for d in dispositions {
                    self.route(d)?;
                }
                Ok(())
            }
            // a dropped request packet is recovered by retransmission or
            // reaped by the connect timeout
            Disposition::Dropped { .. } => Ok(()),
        }
    }

    fn port_to_host(&self, port: PortNo) -> Option<usize> {
        let index = (port as usize).checked_sub(2)?;
        (index < self.servers.len()).then_some(index)
    }

    fn on_controller(&mut self, packet: Packet) -> Result<(), SimError> {
        match self.ctl.handle_packet_in(&mut self.sw, &packet) {
            Ok(PacketInOutcome::Assigned(selection)) => {
                self.ctl.stats.connection_opened(selection.index);
                if let Some(req) = self.requests.get_mut(packet.flow_id as usize) {
                    req.assigned_host = Some(selection.index);
                }
                self.drive_packet(packet)
            }
            Ok(PacketInOutcome::ResponsePathRestored) => self.drive_packet(packet),
            Err(BalancerError::NoLiveCapacity | BalancerError::NoLiveHost) => {
                let req = &mut self.requests[packet.flow_id as usize];
                if req.status == RequestStatus::Outstanding {
                    req.status = RequestStatus::Lost;
                    self.lost += 1;
                }
                Ok(())
            }
            Err(BalancerError::Unroutable(dst)) => {
                log::debug!("controller dropped packet-in for {dst}");
                Ok(())
            }
            Err(e) => Err(e.into()),
        }
    }

    fn on_host_delivery(&mut self, packet: Packet, host: usize) {
        if !self.servers[host].live {
            return; // delivered into a dead box; retries or timeout decide
        }
        let id = packet.flow_id as usize;
        let Some(req) = self.requests.get_mut(id) else {
            return;
        };
        if req.status != RequestStatus::Outstanding || req.service.is_some() {
            return; // duplicate or stale delivery
        }
        let service_secs = self.servers[host].admit();
        let token = self.next_token;
        self.next_token += 1;
        self.requests[id].service = Some(ServiceTicket { host, token });
        self.per_host_requests[host] += 1;
        self.schedule(
            self.now + SimTime::from_secs(service_secs),
            EventKind::ServiceComplete {
                request: id as u64,
                host,
                token,
            },
        );
    }

    fn on_service_complete(&mut self, request: u64, host: usize, token: u64) {
        let id = request as usize;
        if self.requests[id].service != Some(ServiceTicket { host, token }) {
            return; // invalidated by a host failure
        }
        debug_assert!(self.servers[host].live, "a dead host completed a request");
        self.servers[host].release();
        let req = &mut self.requests[id];
        req.service = None;
        if req.status != RequestStatus::Outstanding {
            return; // the client already gave up; the work was wasted
        }
        req.status = RequestStatus::ResponseInFlight;
        req.served_host = Some(host);
        let response = response_packet(&req.packet, &self.ctl.state.hosts[host]);
        self.schedule(
            self.now + self.prop,
            EventKind::PacketDelivery {
                packet: response,
                hop: Hop::Switch,
            },
        );
    }

    fn on_client_delivery(&mut self, packet: Packet) {
        let id = packet.flow_id as usize;
        let (thread, rt_secs, served_host, assigned_host) = {
            let req = &mut self.requests[id];
            if req.status != RequestStatus::ResponseInFlight {
                return;
            }
            req.status = RequestStatus::Served;
            (
                req.thread,
                (self.now - req.issued_at).as_secs(),
                req.served_host,
                req.assigned_host,
            )
        };
        self.served += 1;
        self.response_series.push(TimedSample {
            time: self.now.as_secs(),
            value: rt_secs * 1e3,
        });
        if let Some(host) = served_host {
            self.ctl.stats.record_response_time(host, rt_secs);
        }
        if let Some(host) = assigned_host {
            self.ctl.stats.connection_closed(host);
        }
        self.thread_busy[thread] = false;
        self.schedule(self.now + self.think, EventKind::RequestArrival { thread });
    }

    fn on_retry_check(&mut self, request: u64) {
        let id = request as usize;
        let resend = {
            let req = &self.requests[id];
            if req.status != RequestStatus::Outstanding {
                return; // resolved; the retry timer dies with it
            }
            if req.service.is_none() {
                Some(req.packet.clone())
            } else {
                None // in service; keep the timer alive in case the host dies
            }
        };
        if let Some(packet) = resend {
            self.schedule(
                self.now + self.prop,
                EventKind::PacketDelivery {
                    packet,
                    hop: Hop::Switch,
                },
            );
        }
        self.schedule(self.now + self.retry, EventKind::RetryCheck { request });
    }

    fn on_timeout_check(&mut self, request: u64) {
        let id = request as usize;
        let (release, newly_lost, assigned_host) = {
            let req = &mut self.requests[id];
            match req.status {
                RequestStatus::Served => (false, false, None),
                // refused by the controller earlier; free the thread now
                RequestStatus::Lost => (true, false, None),
                RequestStatus::Outstanding | RequestStatus::ResponseInFlight => {
                    req.status = RequestStatus::Lost;
                    (true, true, req.assigned_host)
                }
            }
        };
        if newly_lost {
            self.lost += 1;
            if let Some(host) = assigned_host {
                self.ctl.stats.connection_closed(host);
            }
        }
        if release {
            let thread = self.requests[id].thread;
            self.thread_busy[thread] = false;
            self.schedule(self.now + self.think, EventKind::RequestArrival { thread });
        }
    }

    fn on_failure(&mut self, host: usize) {
        if !self.servers[host].live {
            return;
        }
        self.servers[host].live = false;
        self.servers[host].concurrency = 0;
        let port = self.ctl.state.hosts[host].switch_port;
        // watch ports see the failure immediately; the controller's view
        // stays stale until the next monitoring instant
        self.sw.set_port_live(port, false);
        for req in &mut self.requests {
            if req.service.is_some_and(|s| s.host == host) {
                req.service = None; // still outstanding; retransmission decides its fate
            }
        }
    }

    fn on_recovery(&mut self, host: usize) {
        if self.servers[host].live {
            return;
        }
        self.servers[host].live = true;
        let port = self.ctl.state.hosts[host].switch_port;
        self.sw.set_port_live(port, true);
    }

    fn on_monitor_tick(&mut self) -> Result<(), SimError> {
        let loads: Vec<f64> = self.servers.iter().map(ServerModel::reported_load).collect();
        let liveness: Vec<bool> = self.servers.iter().map(|s| s.live).collect();
        let report = self.ctl.on_monitor(&mut self.sw, &loads, &liveness)?;
        self.mode_timeline.push(ModeSample {
            time: self.now.as_secs(),
            mode: report.mode,
        });
        self.schedule(self.now + self.monitor_every, EventKind::MonitorTick);
        Ok(())
    }

    fn sample_imbalance(&mut self) {
        let loads: Vec<f64> = self.servers.iter().map(ServerModel::reported_load).collect();
        let liveness: Vec<bool> = self.servers.iter().map(|s| s.live).collect();
        let delta =
            imbalance_from_samples(&loads, &liveness).expect("cluster validated non-empty");
        self.imbalance_series.push(TimedSample {
            time: self.now.as_secs(),
            value: delta,
        });
    }

    fn report(self) -> MetricsReport {
        let duration = self.end.as_secs();
        let mean = |series: &[TimedSample]| {
            if series.is_empty() {
                0.0
            } else {
                series.iter().map(|s| s.value).sum::<f64>() / series.len() as f64
            }
        };
        MetricsReport {
            issued: self.issued,
            served: self.served,
            lost: self.lost,
            in_flight_at_end: self.issued - self.served - self.lost,
            throughput: if duration > 0.0 {
                self.served as f64 / duration
            } else {
                0.0
            },
            loss_rate: if self.issued > 0 {
                self.lost as f64 / self.issued as f64
            } else {
                0.0
            },
            mean_response_time_ms: mean(&self.response_series),
            mean_imbalance: mean(&self.imbalance_series),
            per_host_requests: self.per_host_requests,
            response_time_series: self.response_series,
            imbalance_series: self.imbalance_series,
            mode_timeline: self.mode_timeline,
            probe_totals: self.ctl.probes,
            mode_switches: self.ctl.mode_switches,
        }
    }
}
