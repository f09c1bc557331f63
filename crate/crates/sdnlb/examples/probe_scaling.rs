//! Measures how many probes each selector needs as the cluster grows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdnlb::balancer::{draw_random, select_target_binary, select_target_linear};
use sdnlb::monitor::{build_cumsum, ServerHost};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    println!("hosts  draws  max binary  bound  mean binary  mean linear");
    for n in [8, 16, 32, 64, 128, 200] {
        let hosts: Vec<ServerHost> = (0..n)
            .map(|i| ServerHost::numbered(i).with_load(rng.random_range(0.0..0.9)))
            .collect();
        let cumsum = build_cumsum(&hosts).expect("non-empty cluster");

        let draws = 10_000;
        let (mut max_binary, mut sum_binary, mut sum_linear) = (0u32, 0u64, 0u64);
        for _ in 0..draws {
            let r = draw_random(cumsum.total(), &mut rng).expect("live capacity");
            let binary = select_target_binary(&cumsum, r).expect("r in range");
            let linear = select_target_linear(&cumsum, r).expect("r in range");
            assert_eq!(binary.index, linear.index);
            max_binary = max_binary.max(binary.probes);
            sum_binary += u64::from(binary.probes);
            sum_linear += u64::from(linear.probes);
        }
        let bound = (n as f64).log2().ceil() as u32 + 1;
        println!(
            "{n:>5}  {draws:>5}  {max_binary:>10}  {bound:>5}  {:>11.2}  {:>11.2}",
            sum_binary as f64 / draws as f64,
            sum_linear as f64 / draws as f64
        );
    }
}
