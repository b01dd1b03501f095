mod common;

use gap_acceptance::model::{BatchSizeLaw, ScenarioConfig};
use gap_acceptance::queuelen::{a_matrices, batch_pgf, Epoch, QueueSolution};
use gap_acceptance::saturation::capacity;
use nalgebra::DMatrix;
use num_complex::Complex64 as C;

fn half_load(config: ScenarioConfig) -> ScenarioConfig {
    let cap = capacity(&config).unwrap().capacity;
    config.with_minor_flow(0.5 * cap).unwrap()
}

/// Row-normalized `Ā(z)` and `Ā*(z)`: each row divided by its mass at `z = 1`.
fn normalized(config: &ScenarioConfig, z: C) -> (DMatrix<C>, DMatrix<C>) {
    let (a1, s1) = a_matrices(config, C::new(1.0, 0.0));
    let (mut a, mut s) = a_matrices(config, z);
    for i in 0..a.nrows() {
        let (ma, ms) = (a1.row(i).sum(), s1.row(i).sum());
        a.row_mut(i).unscale_mut(ma.re);
        s.row_mut(i).unscale_mut(ms.re);
    }
    (a, s)
}

#[test]
fn batch_pgf_of_explicit_law() {
    let law = BatchSizeLaw::Explicit(vec![0.5, 0.5]);
    let v = batch_pgf(&law, C::new(0.5, 0.0));
    assert!((v - C::new(0.375, 0.0)).norm() < 1e-15);
}

#[test]
fn full_system_root_count_by_argument_principle() {
    // few types, so the full determinant can be sampled directly
    let config = half_load(common::two_profile(20.0, 0.0, 0.9, [8.0, 9.0], 5).with_batch_rate(1.0).unwrap());
    let n = config.dims().count();
    assert_eq!(n, 20);
    let sol = QueueSolution::solve(&config).unwrap();
    let det = |z: C| {
        let (a, _) = normalized(&config, z);
        (DMatrix::identity(n, n) * z - a.transpose()).determinant()
    };
    let inside = common::winding(det, 1.0 - 1e-8, 1 << 12);
    assert_eq!(inside, n as i64 - 1);
    assert_eq!(sol.roots().contour_count, n - 1);
    assert_eq!(sol.roots().total_multiplicity(), n);
}

#[test]
fn solution_satisfies_the_full_balance_equations() {
    for file in ["example1.toml", "example2.toml"] {
        let config = half_load(common::load(file).with_attempts(15).unwrap().with_major_flow(150.0).unwrap());
        let sol = QueueSolution::solve(&config).unwrap();
        let f0 = nalgebra::RowDVector::from_iterator(
            sol.empty_probs().len(),
            sol.empty_probs().iter().map(|v| C::new(*v, 0.0)),
        );
        for z in [C::new(0.3, 0.0), C::new(-0.5, 0.4), C::new(0.1, -0.85), C::new(0.95, 0.0)] {
            let f = nalgebra::RowDVector::from_vec(sol.type_pgfs(z));
            let (a, a_star) = normalized(&config, z);
            let bz = batch_pgf(config.batch_size(), z);
            // z f(z) = (f(z) - f(0)) Ā(z) + B(z) f(0) Ā*(z)
            let lhs = &f * z;
            let rhs = (&f - &f0) * &a + &f0 * &a_star * bz;
            let res = (lhs - rhs).camax();
            assert!(res < 1e-11, "{file} z={z}: residual {res}");
            assert!((f.sum() - sol.pgf(z)).norm() < 1e-12);
        }
    }
}

#[test]
fn pgf_properties_at_half_load() {
    let config = half_load(common::load("example1.toml").with_attempts(25).unwrap());
    let sol = QueueSolution::solve(&config).unwrap();
    assert!((sol.load() - 0.5).abs() < 1e-12);
    let near_one = sol.pgf(C::new(1.0 - 1e-7, 0.0));
    assert!((near_one.re - 1.0).abs() < 1e-6);
    let x0 = sol.pgf(C::new(0.0, 0.0));
    let f0: f64 = sol.empty_probs().iter().sum();
    assert!((x0.re - f0).abs() < 1e-12);

    let nmax = sol.adaptive_nmax(1e-10, Epoch::Departure).unwrap();
    let pmf = sol.pmf(nmax, Epoch::Departure).unwrap();
    assert!(pmf.iter().all(|p| *p >= -1e-12));
    assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!((pmf[0] - f0).abs() < 1e-9);
    let mean_from_pmf: f64 = pmf.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
    assert!((mean_from_pmf / sol.mean(Epoch::Departure) - 1.0).abs() < 1e-6);
}

#[test]
fn arrivals_per_service_equal_offered_load() {
    let config = half_load(common::load("example2.toml").with_attempts(25).unwrap());
    let sol = QueueSolution::solve(&config).unwrap();
    let law = gap_acceptance::equilibrium::ServiceLaw::with_empty_probs(&config, sol.empty_probs().to_vec()).unwrap();
    let ea = sol.mean_arrivals_per_service(|s| law.lst_at(s));
    let expected = config.batch_rate() * config.batch_size().mean() * law.mean();
    assert!((ea - expected).abs() < 1e-8, "{ea} vs {expected}");
}

#[test]
fn single_arrivals_make_epochs_agree() {
    let config = half_load(common::load("example1.toml").with_attempts(25).unwrap());
    let sol = QueueSolution::solve(&config).unwrap();
    let dep = sol.pmf(30, Epoch::Departure).unwrap();
    let arb = sol.pmf(30, Epoch::Arbitrary).unwrap();
    for (a, b) in dep.iter().zip(&arb) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn batches_separate_the_epochs() {
    let config = common::load("example1.toml").with_attempts(25).unwrap();
    let config = half_load(config.with_batch_size(BatchSizeLaw::Geometric(0.5)).unwrap());
    let sol = QueueSolution::solve(&config).unwrap();
    let dep = sol.mean(Epoch::Departure);
    let arb = sol.mean(Epoch::Arbitrary);
    // geometric(1/2) batches: E[B] = 2, E[B²] = 6
    let (eb, eb2) = (2.0, 6.0);
    assert!((arb - (dep - (eb2 - eb) / (2.0 * eb))).abs() < 1e-6, "{dep} {arb}");
    let p = sol.pmf(60, Epoch::Arbitrary).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
}

#[test]
fn light_traffic_leaves_the_road_empty() {
    let config = common::load("example1.toml").with_attempts(25).unwrap().with_minor_flow(1e-3).unwrap();
    let sol = QueueSolution::solve(&config).unwrap();
    let pmf = sol.pmf(5, Epoch::Departure).unwrap();
    assert!(pmf[0] > 1.0 - 1e-5);
    assert!(sol.mean(Epoch::Arbitrary) < 1e-5);
}

#[test]
fn zero_arrival_rate_and_overload_are_rejected() {
    let base = common::load("example1.toml").with_attempts(25).unwrap();
    assert!(QueueSolution::solve(&base.with_minor_flow(0.0).unwrap()).is_err());
    let heavy = base.with_minor_flow(1.2 * capacity(&base).unwrap().capacity).unwrap();
    assert!(matches!(
        QueueSolution::solve(&heavy),
        Err(gap_acceptance::error::AnalysisError::Unstable { .. })
    ));
}
