//! Runs the five-method comparative suite and prints the result table.

use sdnlb::cli::comparison_variants;
use sdnlb::sim::{run_scenario, Scenario};

fn main() {
    println!("{:<14} {:>14} {:>15} {:>10}", "method", "throughput_rps", "mean_imbalance", "lost");
    for (label, scenario) in comparison_variants(&Scenario::comparative()) {
        let report = run_scenario(&scenario).expect("scenario is valid");
        println!(
            "{label:<14} {:>14.1} {:>15.6} {:>10}",
            report.throughput, report.mean_imbalance, report.lost
        );
    }
}
