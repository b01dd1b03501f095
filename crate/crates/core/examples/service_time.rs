//! Service-time law of minor-road drivers: mean, transform and the type
//! law of departing drivers, saturated and in equilibrium.
//!
//! Run with `cargo run --release --example service_time`.

use gap_acceptance::equilibrium::{stability_margin, ServiceLaw};
use gap_acceptance::model::ScenarioConfig;
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example1.toml");
    let config = ScenarioConfig::from_path(path)?.with_attempts(25)?;

    let saturated = ServiceLaw::saturated(&config)?;
    println!("saturated queue: E[G] = {:.8} s", saturated.mean());

    let stab = stability_margin(&config)?;
    println!("minor flow {} veh/h: rho = {:.6}", config.minor_flow_veh_h(), stab.rho);
    let law = ServiceLaw::equilibrium(&config)?;
    println!("equilibrium:     E[G] = {:.8} s (drivers reaching an empty road start with a partial lag)", law.mean());

    println!("{:>8} {:>14} {:>14}", "s", "saturated", "equilibrium");
    for s in [0.0, 0.05, 0.1, 0.25, 0.5, 1.0] {
        let z = Complex64::new(s, 0.0);
        println!("{s:>8} {:>14.10} {:>14.10}", saturated.lst(z).value.re, law.lst(z).value.re);
    }

    // first-attempt success per (gap draw, profile)
    let dims = config.dims();
    let probs = law.attempt_probs();
    for r in 1..=dims.profiles {
        for k in 1..=dims.gaps {
            let t = gap_acceptance::model::TypeIndex::new(1, k, r);
            println!("P(first attempt succeeds | gap {}, profile {r}) = {:.6}", config.gap_of(t), probs.success[dims.offset(t)]);
        }
    }
    let mut attempts = vec![0.0; dims.attempts];
    for (o, p) in law.type_probs().iter().enumerate() {
        attempts[dims.from_offset(o).attempt - 1] += p;
    }
    println!("attempts needed: {}", attempts.iter().take(5).enumerate().map(|(i, p)| format!("{}: {p:.4}", i + 1)).collect::<Vec<_>>().join(", "));
    Ok(())
}
