//! How capacity responds to merge times and to the impatience rate.
//!
//! Sweeps the Example 1 scenario over major-road flow for the merge-time
//! pairs `(Δ1, Δ2)` and for several impatience rates, and writes one CSV
//! table per sweep to stdout.
//!
//! Run with `cargo run --release --example capacity_sweep`.

use gap_acceptance::model::ScenarioConfig;
use gap_acceptance::saturation::{capacity_sweep, truncation_defect, DEFECT_WARN};

/// Double the number of modelled attempts until the truncation defect at
/// the heaviest major flow is negligible.
fn enough_attempts(config: &ScenarioConfig, q_max: f64) -> Result<ScenarioConfig, Box<dyn std::error::Error>> {
    let mut config = config.clone();
    while truncation_defect(&config.with_major_flow(q_max)?) > DEFECT_WARN {
        config = config.with_attempts(2 * config.attempts())?;
    }
    Ok(config)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");
    let base = ScenarioConfig::from_path(format!("{dir}/example1.toml"))?;
    let flows: Vec<f64> = (0..=30).map(|i| 50.0 * i as f64).collect();

    println!("# merge times, alpha = 0.9");
    println!("delta1,delta2,q_veh_per_hour,capacity_veh_per_hour");
    for d1 in [4.0, 5.0] {
        for d2 in [5.0, 6.0, 7.0] {
            let config = enough_attempts(&base.with_merge_time(0, d1)?.with_merge_time(1, d2)?, 1500.0)?;
            for r in capacity_sweep(&config, &flows)? {
                println!("{d1},{d2},{},{:.6}", r.major_flow_veh_h, r.capacity);
            }
        }
    }

    println!("# impatience rate, merge times (4, 5)");
    println!("alpha,q_veh_per_hour,capacity_veh_per_hour");
    for alpha in [0.6, 0.8, 0.9, 1.0] {
        let config = enough_attempts(&base.with_alpha(alpha)?, 1500.0)?;
        for r in capacity_sweep(&config, &flows)? {
            println!("{alpha},{},{:.6}", r.major_flow_veh_h, r.capacity);
        }
    }
    Ok(())
}
