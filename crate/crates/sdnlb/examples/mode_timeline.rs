//! Watches the hybrid controller switch modes as the cluster state
//! changes: balanced traffic keeps it static, a host failure skews the
//! imbalance past the threshold, recovery brings it back.

use sdnlb::sim::{run_scenario, ClientParams, HostEvent, Scenario, ServerParams};

fn main() {
    let scenario = Scenario {
        monitor_interval: 2.0,
        duration: 50.0,
        failures: vec![HostEvent {
            time: 15.0,
            host: 3,
        }],
        recoveries: vec![HostEvent {
            time: 32.0,
            host: 3,
        }],
        server: ServerParams {
            base_service_time: 0.05,
            load_per_request: 0.02,
        },
        client: ClientParams {
            thread_count: 40,
            think_time: 0.1,
            connect_timeout: 20.0,
        },
        ..Scenario::default()
    };
    let report = run_scenario(&scenario).expect("scenario is valid");

    println!("mode decisions (imbalance threshold {}):", scenario.imbalance_threshold);
    for window in report.mode_timeline.windows(2) {
        if window[0].mode != window[1].mode {
            println!("  t = {:>5.1} s: {} -> {}", window[1].time, window[0].mode, window[1].mode);
        }
    }
    println!("  mode switches: {}", report.mode_switches);

    println!("\nimbalance every 5 s (failure at 15, recovery at 32):");
    for sample in report.imbalance_series.iter().step_by(5) {
        let bar = "#".repeat((sample.value * 400.0).min(60.0) as usize);
        println!("  t = {:>5.1} s  {:.5}  {bar}", sample.time, sample.value);
    }

    println!(
        "\nserved {} of {} requests ({} lost) across the failure window",
        report.served, report.issued, report.lost
    );
}
