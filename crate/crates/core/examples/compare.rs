//! Analytic capacity against simulation when gaps can be shared by more
//! than one successor, the case where the analysis is only approximate.
//!
//! Run with `cargo run --release --example compare`.

use gap_acceptance::model::ScenarioConfig;
use gap_acceptance::saturation::capacity;
use gap_acceptance::sim::{simulate_capacity, Horizon, SimOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example2.toml");
    let base = ScenarioConfig::from_path(path)?;
    let opts = SimOptions { horizon: Horizon::Departures(300_000), ..SimOptions::default() };
    println!("{:>6} {:>10} {:>18} {:>10}", "q", "analytic", "simulated", "rel.err");
    for q in [250.0, 500.0, 750.0, 1000.0] {
        let config = base.with_major_flow(q)?;
        let a = capacity(&config)?;
        let s = simulate_capacity(&config, &opts)?;
        let rel = (a.capacity - s.capacity.mean) / s.capacity.mean;
        let note = if a.capacity > s.capacity.mean + s.capacity.half_width { "  analytic above CI" } else { "" };
        println!(
            "{q:>6} {:>10.3} {:>10.3} ± {:<5.3} {:>+10.2e}{note}",
            a.capacity, s.capacity.mean, s.capacity.half_width, rel
        );
    }
    Ok(())
}
