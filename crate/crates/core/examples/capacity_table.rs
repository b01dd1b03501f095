//! Minor-road capacity of the Example 2 scenario over the major-road flows
//! 250 to 1000 veh/h, for two impatience rates.
//!
//! Run with `cargo run --release --example capacity_table`.

use std::time::Instant;

use gap_acceptance::model::ScenarioConfig;
use gap_acceptance::saturation::capacity_sweep;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");
    let flows = [250.0, 500.0, 750.0, 1000.0];
    println!("{:>8} {:>10} {:>10} {:>10} {:>10}", "alpha", "q=250", "q=500", "q=750", "q=1000");
    for (alpha, file) in [(1.0, "example2_alpha1.toml"), (0.9, "example2.toml")] {
        let config = ScenarioConfig::from_path(format!("{dir}/{file}"))?;
        let start = Instant::now();
        let rows = capacity_sweep(&config, &flows)?;
        print!("{alpha:>8.1}");
        for r in &rows {
            print!(" {:>10.3}", r.capacity);
        }
        println!("   ({:.1} ms, exact: {})", start.elapsed().as_secs_f64() * 1e3, rows[0].exact);
    }
    Ok(())
}
