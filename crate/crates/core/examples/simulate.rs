//! Simulation of the stop line, saturated and with Poisson arrivals, with
//! both gap-reuse rules.
//!
//! Run with `cargo run --release --example simulate`.

use gap_acceptance::model::ScenarioConfig;
use gap_acceptance::sim::{simulate_capacity, simulate_queue, Horizon, Reuse, SimMode, SimOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example2.toml");
    let config = ScenarioConfig::from_path(path)?;

    for reuse in [Reuse::Full, Reuse::Limited] {
        let opts = SimOptions { reuse, horizon: Horizon::Departures(200_000), ..SimOptions::default() };
        let est = simulate_capacity(&config, &opts)?;
        println!(
            "{reuse:?} reuse: capacity {:.3} ± {:.3} veh/h over {} departures",
            est.capacity.mean, est.capacity.half_width, est.departures
        );
    }

    let opts = SimOptions {
        mode: SimMode::Open,
        seed: 7,
        horizon: Horizon::Seconds(2.0e6),
        warmup: 1_000,
        ..SimOptions::default()
    };
    let res = simulate_queue(&config, &opts)?;
    println!(
        "open road at {} veh/h: mean queue {:.4} ± {:.4} after departures, {:.4} ± {:.4} time-average",
        config.minor_flow_veh_h(),
        res.mean_queue.mean,
        res.mean_queue.half_width,
        res.mean_queue_arbitrary.mean,
        res.mean_queue_arbitrary.half_width
    );
    for (n, p) in res.departure_pmf.iter().take(6).enumerate() {
        println!("  P(X = {n}) = {:.5} ± {:.5}", p.mean, p.half_width);
    }
    Ok(())
}
