//! Deterministic discrete-event simulation of a server cluster balanced by
//! an SDN switch.
//!
//! The crate models three cooperating layers:
//!
//! * [`switch`]: an OpenFlow-style data plane with a priority flow table
//!   and ALL/SELECT/INDIRECT/fast-failover groups, including watch-port
//!   liveness.
//! * [`monitor`] and [`balancer`]: the control plane: periodic load
//!   collection, a cumulative serviceability list searched by binary
//!   search, standby selection, and a hybrid static/dynamic mode switch
//!   driven by load imbalance.
//! * [`sim`]: a single-threaded event loop driving closed-loop clients,
//!   service times, failure injection, and metrics collection. Same seed,
//!   same scenario, same results, byte for byte.
//!
//! The `examples/` directory exercises each capability end to end; the
//! `sdnlb` binary wraps the same entry points behind a small CLI.

pub mod balancer;
pub mod cli;
pub mod monitor;
pub mod net;
pub mod sim;
pub mod switch;
