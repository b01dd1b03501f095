//! Queue-length distribution of the minor road at half of its capacity.
//!
//! Prints the departure-epoch and time-average pmf, the mean queue length
//! at both epochs and the probability that a departing driver leaves the
//! road empty.
//!
//! Run with `cargo run --release --example queue_length`.

use gap_acceptance::model::ScenarioConfig;
use gap_acceptance::queuelen::{Epoch, QueueSolution};
use gap_acceptance::saturation::capacity;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example1.toml");
    // fewer attempts keep the root search quick; the defect stays below 1e-6
    let config = ScenarioConfig::from_path(path)?.with_attempts(25)?;
    let cap = capacity(&config)?.capacity;
    let config = config.with_minor_flow(0.5 * cap)?;

    let sol = QueueSolution::solve(&config)?;
    println!("capacity {cap:.4} veh/h, minor flow {:.4} veh/h, load {:.6}", config.minor_flow_veh_h(), sol.load());
    println!("roots in the closed unit disk: {}", sol.roots().total_multiplicity());

    let n_max = sol.adaptive_nmax(1e-8, Epoch::Departure)?;
    let dep = sol.pmf(n_max, Epoch::Departure)?;
    // with single-vehicle arrivals the two epochs coincide
    let arb = sol.pmf(n_max, Epoch::Arbitrary)?;
    println!("{:>4} {:>14} {:>14}", "n", "departure", "arbitrary");
    for n in 0..=n_max.min(15) {
        println!("{n:>4} {:>14.8} {:>14.8}", dep[n], arb[n]);
    }
    println!("mass up to n = {n_max}: {:.12}", dep.iter().sum::<f64>());
    println!("mean queue: departure {:.8}, arbitrary {:.8}", sol.mean(Epoch::Departure), sol.mean(Epoch::Arbitrary));
    println!("P(departing driver leaves the road empty) = {:.8}", sol.empty_probs().iter().sum::<f64>());
    Ok(())
}
