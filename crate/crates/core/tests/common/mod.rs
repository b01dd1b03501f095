#![allow(dead_code)]

use gap_acceptance::model::{BatchSizeLaw, DriverProfile, ImpatienceSpec, ScenarioConfig};

pub fn config_path(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

pub fn load(name: &str) -> ScenarioConfig {
    ScenarioConfig::from_path(config_path(name)).expect("shipped config parses")
}

/// Two-profile scenario with impatience, built in code.
pub fn two_profile(q: f64, batch_rate: f64, alpha: f64, slow_gaps: [f64; 2], attempts: usize) -> ScenarioConfig {
    let mk = |p, d, g: [f64; 2], pr: [f64; 2]| {
        DriverProfile::generated(p, d, ImpatienceSpec { base_gaps_s: g.to_vec(), base_probs: pr.to_vec(), alpha }, attempts)
            .unwrap()
    };
    ScenarioConfig::new(
        q,
        batch_rate,
        BatchSizeLaw::Deterministic(1),
        vec![mk(0.9, 4.0, [5.0, 6.0], [0.4, 0.6]), mk(0.1, 5.0, slow_gaps, [0.5, 0.5])],
    )
    .unwrap()
}

/// Winding number of `f` around the circle `|z| = radius`, from the
/// accumulated change of argument between equally spaced nodes.
pub fn winding<F: Fn(num_complex::Complex64) -> num_complex::Complex64>(f: F, radius: f64, nodes: usize) -> i64 {
    let mut total = 0.0;
    let at = |j: usize| f(num_complex::Complex64::from_polar(radius, std::f64::consts::TAU * j as f64 / nodes as f64));
    let mut prev = at(0);
    for j in 1..=nodes {
        let cur = at(j % nodes);
        total += (cur / prev).arg();
        prev = cur;
    }
    (total / std::f64::consts::TAU).round() as i64
}

/// Composite Gauss-Legendre rule with 10 nodes per panel.
pub fn gauss_legendre(f: &dyn Fn(f64) -> num_complex::Complex64, a: f64, b: f64, panels: usize) -> num_complex::Complex64 {
    const X: [f64; 5] = [0.1488743389816312, 0.4333953941292472, 0.6794095682990244, 0.8650633666889845, 0.9739065285171717];
    const W: [f64; 5] = [0.2955242247147529, 0.2692667193099963, 0.2190863625159820, 0.1494513491505806, 0.0666713443086881];
    let h = (b - a) / panels as f64;
    let mut acc = num_complex::Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (x, w) in X.iter().zip(&W) {
            acc += (f(mid - 0.5 * h * x) + f(mid + 0.5 * h * x)) * (w * 0.5 * h);
        }
    }
    acc
}
