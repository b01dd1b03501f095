//! Build a scenario in code: explicit per-attempt gap tables, platoons of
//! geometric size, and a round trip through TOML.
//!
//! Run with `cargo run --release --example custom_scenario`.

use gap_acceptance::equilibrium::stability_margin;
use gap_acceptance::model::{BatchSizeLaw, DriverProfile, GapTable, ScenarioConfig};
use gap_acceptance::queuelen::{Epoch, QueueSolution};
use gap_acceptance::saturation::capacity;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let attempts = 30;
    // cars: 4.5 or 5.5 s at first, 4 s from the third attempt on
    let car = GapTable::new(
        (0..attempts).map(|i| if i < 2 { vec![4.5, 5.5] } else { vec![4.0, 4.0] }).collect(),
        vec![vec![0.5, 0.5]; attempts],
    )?;
    // trucks never lower their demand
    let truck = GapTable::new(vec![vec![7.0, 8.0]; attempts], vec![vec![0.7, 0.3]; attempts])?;
    let config = ScenarioConfig::new(
        400.0,
        150.0,
        BatchSizeLaw::Geometric(0.6),
        vec![DriverProfile::new(0.85, 3.5, car), DriverProfile::new(0.15, 4.5, truck)],
    )?;

    let cap = capacity(&config)?;
    println!("capacity {:.4} veh/h (exact: {})", cap.capacity, cap.exact);
    println!("load {:.6} at {:.2} veh/h", stability_margin(&config)?.rho, config.minor_flow_veh_h());

    let sol = QueueSolution::solve(&config)?;
    println!("mean queue after departures {:.6}, time-average {:.6}", sol.mean(Epoch::Departure), sol.mean(Epoch::Arbitrary));

    let text = config.to_toml_string()?;
    let again = ScenarioConfig::from_toml_str(&text)?;
    assert_eq!(capacity(&again)?.capacity, cap.capacity);
    println!("--- TOML ---\n{text}");
    Ok(())
}
