//! Shows SELECT-group behavior: hash mode keeps a connection on one
//! server, round-robin mode deals packets out cyclically, and both skip
//! dead buckets.

use std::net::Ipv4Addr;

use sdnlb::net::{MacAddr, Protocol};
use sdnlb::switch::{
    Action, Bucket, Disposition, GroupEntry, GroupType, Packet, SelectMode, Switch,
};

fn packet(src_port: u16) -> Packet {
    Packet {
        src_ip: Ipv4Addr::new(10, 0, 0, 100),
        dst_ip: Ipv4Addr::new(10, 0, 0, 10),
        src_mac: MacAddr::new([2, 0, 0, 0, 0, 0x64]),
        dst_mac: MacAddr::new([2, 0, 0, 0, 0, 0x0a]),
        src_port,
        dst_port: 80,
        protocol: Protocol::Tcp,
        payload_size: 512,
        flow_id: u64::from(src_port),
    }
}

fn out_port(dispositions: &[Disposition]) -> u32 {
    match dispositions.first() {
        Some(Disposition::Forwarded { port, .. }) => *port,
        other => panic!("expected a forward, got {other:?}"),
    }
}

fn buckets() -> Vec<Bucket> {
    [2, 3, 4]
        .iter()
        .map(|&p| Bucket::new(vec![Action::Output(p)], Some(p)))
        .collect()
}

fn main() {
    let mut sw = Switch::new(99);
    for port in [2, 3, 4] {
        sw.set_port_live(port, true);
    }
    sw.install_group(GroupEntry::new(1, GroupType::Select, buckets()))
        .expect("well-formed group");
    sw.install_group(
        GroupEntry::new(2, GroupType::Select, buckets())
            .with_select_mode(SelectMode::RoundRobin),
    )
    .expect("well-formed group");

    println!("hash mode: each connection sticks to one port");
    for src_port in [40_000, 40_001, 40_002] {
        let ports: Vec<u32> = (0..4)
            .map(|_| out_port(&sw.execute_group(1, &packet(src_port)).unwrap()))
            .collect();
        assert!(ports.windows(2).all(|w| w[0] == w[1]));
        println!("  connection from port {src_port}: always port {}", ports[0]);
    }

    println!("round-robin mode: packets deal out cyclically");
    let ports: Vec<u32> = (0..6)
        .map(|_| out_port(&sw.execute_group(2, &packet(40_000)).unwrap()))
        .collect();
    println!("  {ports:?}");

    sw.set_port_live(3, false);
    println!("port 3 down: both modes avoid it");
    let hash_port = out_port(&sw.execute_group(1, &packet(41_000)).unwrap());
    let rr_ports: Vec<u32> = (0..4)
        .map(|_| out_port(&sw.execute_group(2, &packet(40_000)).unwrap()))
        .collect();
    assert_ne!(hash_port, 3);
    assert!(rr_ports.iter().all(|&p| p != 3));
    println!("  hash pick: {hash_port}, round-robin: {rr_ports:?}");
}
