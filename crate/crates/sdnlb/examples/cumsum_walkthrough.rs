//! Builds the serviceability cumulative-sum list for a small cluster and
//! walks both selectors over it.

use sdnlb::balancer::{select_target_binary, select_target_linear};
use sdnlb::monitor::{build_cumsum, ServerHost};

fn main() {
    // two dead hosts: they keep their slots but contribute zero width
    let hosts: Vec<ServerHost> = [
        (0.1, true),
        (0.4, true),
        (0.3, true),
        (0.0, false),
        (0.7, true),
        (0.2, true),
        (0.0, false),
        (0.5, true),
    ]
    .iter()
    .enumerate()
    .map(|(i, &(load, live))| {
        let host = ServerHost::numbered(i).with_load(load);
        if live {
            host
        } else {
            host.dead()
        }
    })
    .collect();

    let cumsum = build_cumsum(&hosts).expect("non-empty cluster");

    println!("host  load  live   serviceability  cumulative");
    for (host, value) in hosts.iter().zip(cumsum.values()) {
        println!(
            "{:>4}  {:>4.1}  {:<5}  {:>14.1}  {:>10.1}",
            host.index,
            host.load,
            host.live,
            host.serviceability(),
            value
        );
    }
    println!("total serviceability: {:.1}\n", cumsum.total());

    for r in [0.9, 2.2, 3.3, 3.8] {
        let binary = select_target_binary(&cumsum, r).expect("r in range");
        let linear = select_target_linear(&cumsum, r).expect("r in range");
        assert_eq!(binary.index, linear.index);
        println!(
            "r = {r:>3}: host {} (binary: {} probes, linear: {} probes)",
            binary.index, binary.probes, linear.probes
        );
    }
}
