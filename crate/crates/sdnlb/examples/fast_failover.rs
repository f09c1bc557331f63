//! Shows a fast-failover group rerouting packets the instant a watch port
//! goes down, with no controller in the loop.

use std::net::Ipv4Addr;

use sdnlb::net::{MacAddr, Protocol};
use sdnlb::switch::{
    Action, Bucket, Disposition, GroupEntry, GroupType, Packet, Switch,
};

fn sample_packet() -> Packet {
    Packet {
        src_ip: Ipv4Addr::new(10, 0, 0, 100),
        dst_ip: Ipv4Addr::new(10, 0, 0, 10),
        src_mac: MacAddr::new([2, 0, 0, 0, 0, 0x64]),
        dst_mac: MacAddr::new([2, 0, 0, 0, 0, 0x0a]),
        src_port: 40_000,
        dst_port: 80,
        protocol: Protocol::Tcp,
        payload_size: 512,
        flow_id: 1,
    }
}

fn first_port(dispositions: &[Disposition]) -> String {
    match dispositions.first() {
        Some(Disposition::Forwarded { port, .. }) => format!("forwarded out port {port}"),
        Some(Disposition::Dropped { reason }) => format!("dropped ({reason:?})"),
        other => format!("{other:?}"),
    }
}

fn main() {
    let mut sw = Switch::new(1);
    for port in [2, 3, 4] {
        sw.set_port_live(port, true);
    }

    // bucket order is the failover order: primary first, then standbys
    let buckets = vec![
        Bucket::new(vec![Action::Output(2)], Some(2)),
        Bucket::new(vec![Action::Output(3)], Some(3)),
        Bucket::new(vec![Action::Output(4)], Some(4)),
    ];
    sw.install_group(GroupEntry::new(1000, GroupType::FastFailover, buckets))
        .expect("well-formed group");

    let pkt = sample_packet();
    let out = sw.execute_group(1000, &pkt).expect("group exists");
    println!("all ports up:     {}", first_port(&out));

    sw.set_port_live(2, false);
    let out = sw.execute_group(1000, &pkt).expect("group exists");
    println!("port 2 down:      {}", first_port(&out));

    sw.set_port_live(3, false);
    let out = sw.execute_group(1000, &pkt).expect("group exists");
    println!("ports 2+3 down:   {}", first_port(&out));

    sw.set_port_live(4, false);
    let out = sw.execute_group(1000, &pkt).expect("group exists");
    println!("all ports down:   {}", first_port(&out));

    sw.set_port_live(2, true);
    let out = sw.execute_group(1000, &pkt).expect("group exists");
    println!("port 2 restored:  {}", first_port(&out));

    let group = sw.group(1000).expect("group exists");
    println!("group counter after 5 executions: {}", group.counter);
}
