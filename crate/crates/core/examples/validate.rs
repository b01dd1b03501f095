//! Check whether the analysis is exact for a scenario, and how many
//! attempts must be modelled.
//!
//! Run with `cargo run --release --example validate`.

use gap_acceptance::model::{check_limited_reuse, ScenarioConfig};
use gap_acceptance::saturation::truncation_defect;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");
    for file in ["example1.toml", "example2.toml"] {
        let config = ScenarioConfig::from_path(format!("{dir}/{file}"))?;
        let report = check_limited_reuse(&config);
        println!("{file}: limited gap reuse {}", if report.holds { "holds, analysis exact" } else { "violated" });
        for v in report.violations.iter().take(3) {
            println!(
                "  a {} driver may reuse a gap behind {}: first gap {} s, lag {:.3} s",
                v.successor, v.predecessor, v.successor_gap, v.predecessor_lag
            );
        }
        for n in [10, 20, 40, 60] {
            let c = config.with_attempts(n)?.with_major_flow(1000.0)?;
            println!("  N = {n:>3}: defect at q = 1000 is {:.3e}", truncation_defect(&c));
        }
    }

    // a bad file is rejected with the offending field named
    let text = std::fs::read_to_string(format!("{dir}/example1.toml"))?;
    let bad = text.replace("probability = 0.1", "probability = 0.2");
    if let Err(e) = ScenarioConfig::from_toml_str(&bad) {
        println!("rejected: {e}");
    }
    Ok(())
}
