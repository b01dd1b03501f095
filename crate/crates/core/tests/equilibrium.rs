mod common;

use gap_acceptance::equilibrium::{
    attempt_success_probs, mean_service_time, solve_first_attempt_probs, stability_margin, ServiceLaw,
};
use gap_acceptance::model::{ScenarioConfig, TypeIndex};
use gap_acceptance::queuelen::QueueSolution;
use gap_acceptance::saturation::{build_saturated_chain, capacity, truncation_defect};
use proptest::prelude::*;

fn first_gap_success(q: f64, u: f64, lag: f64) -> f64 {
    (-q * (u - lag).max(0.0)).exp()
}

/// `P(1,k,r)` recomputed from a predecessor law: busy predecessors leave
/// their lag, empty ones leave a lag eroded by an `Exp(λ)` idle time.
fn first_attempt_from_predecessors(config: &ScenarioConfig, busy: &[f64], empty: &[f64], k: usize, r: usize) -> f64 {
    let q = config.major_rate();
    let lambda = config.batch_rate();
    let u = config.gap_of(TypeIndex::new(1, k, r));
    let dims = config.dims();
    let mut total = 0.0;
    for t0 in dims.iter() {
        let o = dims.offset(t0);
        let lag = config.lag_of(t0);
        total += busy[o] * first_gap_success(q, u, lag);
        if empty[o] != 0.0 {
            // ∫ λ e^{-λx} b((lag - x)^+) dx by Simpson on [0, lag] plus the tail mass
            let m = 4000;
            let h = lag / m as f64;
            let f = |x: f64| lambda * (-lambda * x).exp() * first_gap_success(q, u, lag - x);
            let mut s = f(0.0) + f(lag);
            for j in 1..m {
                s += f(j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
            }
            let integral = if lag > 0.0 { s * h / 3.0 } else { 0.0 };
            total += empty[o] * (integral + (-lambda * lag).exp() * first_gap_success(q, u, 0.0));
        }
    }
    total
}

#[test]
fn saturated_first_attempt_probs_match_the_chain() {
    let config = common::load("example2.toml").with_major_flow(500.0).unwrap();
    let n = config.dims().count();
    let first = solve_first_attempt_probs(&config, &vec![0.0; n]).unwrap();
    let chain = build_saturated_chain(&config).unwrap();
    for r in 1..=2 {
        for k in 1..=2 {
            let want = first_attempt_from_predecessors(&config, chain.stationary(), &vec![0.0; n], k, r);
            let got = first[(r - 1) * 2 + (k - 1)];
            assert!((got - want).abs() < 1e-12, "({k},{r}): {got} vs {want}");
        }
    }
}

#[test]
fn equilibrium_first_attempt_probs_are_self_consistent() {
    let config = common::load("example1.toml").with_attempts(40).unwrap().with_major_flow(250.0).unwrap();
    let cap = capacity(&config).unwrap().capacity;
    let config = config.with_minor_flow(0.6 * cap).unwrap();
    let sol = QueueSolution::solve(&config).unwrap();
    let f0 = sol.empty_probs().to_vec();
    let law = ServiceLaw::with_empty_probs(&config, f0.clone()).unwrap();
    let pbar = law.type_probs();
    let busy: Vec<f64> = pbar.iter().zip(&f0).map(|(p, f)| p - f).collect();
    let first = solve_first_attempt_probs(&config, &f0).unwrap();
    for r in 1..=2 {
        for k in 1..=2 {
            let want = first_attempt_from_predecessors(&config, &busy, &f0, k, r);
            let got = first[(r - 1) * 2 + (k - 1)];
            assert!((got - want).abs() < 1e-9, "({k},{r}): {got} vs {want}");
        }
    }
    // the queue and the service law agree on the departing type law
    let from_queue = sol.type_distribution();
    let gap: f64 = from_queue.iter().zip(&pbar).map(|(a, b)| (a - b).abs()).sum();
    assert!(gap < 1e-7, "type laws differ by {gap}");
}

proptest! {
    #[test]
    fn served_probabilities_telescope(p in proptest::collection::vec(0.0f64..1.0, 4), q in 0.0f64..1500.0) {
        let config = common::load("example2.toml").with_major_flow(q).unwrap();
        let probs = attempt_success_probs(&config, &p);
        let dims = config.dims();
        for r in 1..=dims.profiles {
            let mut served = 0.0;
            let mut never = 1.0;
            for i in 1..=dims.attempts {
                let mut hit = 0.0;
                for k in 1..=dims.gaps {
                    let t = TypeIndex::new(i, k, r);
                    served += config.prob_of(t) * probs.served[dims.offset(t)];
                    hit += config.prob_of(t) * probs.success[dims.offset(t)];
                }
                never *= 1.0 - hit;
            }
            prop_assert!((served + never - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn saturated_mean_service_equals_capacity_mean() {
    for (file, attempts) in [("example1.toml", 60), ("example2.toml", 60), ("example1_alpha1.toml", 400)] {
        for q in [250.0, 500.0, 750.0, 1000.0] {
            let mut config = common::load(file).with_major_flow(q).unwrap();
            // the comparison needs a negligible truncation defect
            let mut n = attempts;
            while truncation_defect(&config) > 1e-14 {
                n *= 2;
                config = config.with_attempts(n).unwrap();
            }
            let g = capacity(&config).unwrap().g;
            let law = ServiceLaw::saturated(&config).unwrap();
            assert!((law.mean() - g).abs() < 1e-10, "{file} q={q}: {} vs {g}", law.mean());
            assert!(law.defect().abs() < 1e-13);
        }
    }
}

#[test]
fn equilibrium_mean_exceeds_saturated_mean() {
    // drivers reaching an empty road lose part of the lag left behind
    let config = common::load("example1.toml").with_attempts(25).unwrap();
    let sat = ServiceLaw::saturated(&config).unwrap().mean();
    let eq = mean_service_time(&config).unwrap();
    assert!(eq > sat);
    let rho = stability_margin(&config).unwrap().rho;
    assert!((rho - config.batch_rate() * sat).abs() < 1e-6);
}

#[test]
fn inconsistent_empty_probabilities_are_rejected() {
    let config = common::load("example1.toml").with_attempts(25).unwrap();
    let mut f0 = vec![0.0; config.dims().count()];
    f0[0] = 0.95;
    assert!(ServiceLaw::with_empty_probs(&config, f0).is_err());
    assert!(solve_first_attempt_probs(&config, &[0.0; 3]).is_err());
}
