mod common;

use gap_acceptance::model::{BatchSizeLaw, DriverProfile, GapTable, ScenarioConfig, TypeIndex};
use gap_acceptance::saturation::capacity;
use gap_acceptance::sim::{
    saturated_trace, simulate_capacity, simulate_queue, Horizon, Reuse, ScriptedMajor, SimMode, SimOptions,
};

fn one_driver_kind() -> ScenarioConfig {
    let gaps = GapTable::new(vec![vec![6.0], vec![5.0], vec![4.0]], vec![vec![1.0]; 3]).unwrap();
    ScenarioConfig::new(500.0, 100.0, BatchSizeLaw::Deterministic(1), vec![DriverProfile::new(1.0, 3.0, gaps)]).unwrap()
}

#[test]
fn scripted_major_road_by_hand() {
    let config = one_driver_kind();
    let major = ScriptedMajor::new(vec![2.0, 5.0, 20.0, 22.0, 30.0]);
    let trace = saturated_trace(&config, major, Reuse::Full, 6, 1);
    // first driver: 2 < 6 and 3 < 5 fail, 15 >= 4 accepted at t = 5
    // then 12, 9 and exactly 6 s remain before the vehicle at 20
    // fifth: 3 < 6 at 17, 2 < 5 at 20, accepts the 8 s gap at 22
    // sixth: lag of 5 s, needs 6, waits for 30 and takes the open road
    let departures: Vec<f64> = trace.iter().map(|d| d.departure).collect();
    assert_eq!(departures, vec![8.0, 11.0, 14.0, 17.0, 25.0, 33.0]);
    let attempts: Vec<usize> = trace.iter().map(|d| d.attempts).collect();
    assert_eq!(attempts, vec![3, 1, 1, 1, 3, 2]);
    assert_eq!(trace[0].kind, TypeIndex::new(3, 1, 1));
    assert_eq!(trace[5].kind, TypeIndex::new(2, 1, 1));
    assert_eq!(trace[4].accept, 22.0);
}

#[test]
fn attempts_beyond_the_table_reuse_the_last_row() {
    let config = one_driver_kind();
    // gaps of 3 s never suffice before the last vehicle
    let times: Vec<f64> = (1..=10).map(|i| 3.0 * i as f64).collect();
    let trace = saturated_trace(&config, ScriptedMajor::new(times), Reuse::Full, 1, 1);
    assert_eq!(trace[0].attempts, 11);
    assert_eq!(trace[0].kind, TypeIndex::new(3, 1, 1));
    assert_eq!(trace[0].accept, 30.0);
}

fn short(seed: u64) -> SimOptions {
    SimOptions { seed, horizon: Horizon::Departures(60_000), warmup: 2_000, replications: 4, ..SimOptions::default() }
}

#[test]
fn same_seed_same_result() {
    let config = common::load("example2.toml");
    let a = simulate_capacity(&config, &short(11)).unwrap();
    let b = simulate_capacity(&config, &short(11)).unwrap();
    let c = simulate_capacity(&config, &short(12)).unwrap();
    assert_eq!(a.per_replication, b.per_replication);
    assert_ne!(a.per_replication, c.per_replication);
    let qa = simulate_queue(&config, &SimOptions { mode: SimMode::Open, ..short(3) }).unwrap();
    let qb = simulate_queue(&config, &SimOptions { mode: SimMode::Open, ..short(3) }).unwrap();
    assert_eq!(qa.mean_queue, qb.mean_queue);
}

#[test]
fn no_major_traffic_serves_at_merge_speed() {
    let config = common::load("example1.toml").with_major_flow(0.0).unwrap();
    let est = simulate_capacity(&config, &short(5)).unwrap();
    assert!(est.capacity.contains(3600.0 / 4.1), "{:?}", est.capacity);
    // every driver accepts at the first attempt
    let total_first: f64 = config
        .dims()
        .iter()
        .filter(|t| t.attempt == 1)
        .map(|t| est.type_freq[config.dims().offset(t)].mean)
        .sum();
    assert_eq!(total_first, 1.0);
}

#[test]
fn exact_case_agrees_with_analysis() {
    let config = common::load("example1.toml").with_major_flow(750.0).unwrap();
    let analytic = capacity(&config).unwrap().capacity;
    let est = simulate_capacity(&config, &SimOptions { horizon: Horizon::Departures(200_000), ..SimOptions::default() })
        .unwrap();
    assert!((est.capacity.mean - analytic).abs() < 4.0 * est.capacity.se, "{analytic} vs {:?}", est.capacity);
}

#[test]
fn limited_reuse_never_helps() {
    let config = common::load("example2.toml").with_major_flow(750.0).unwrap();
    let opts = SimOptions { horizon: Horizon::Departures(200_000), ..SimOptions::default() };
    let full = simulate_capacity(&config, &opts).unwrap();
    let limited = simulate_capacity(&config, &SimOptions { reuse: Reuse::Limited, ..opts }).unwrap();
    assert!(limited.capacity.mean < full.capacity.mean + full.capacity.half_width);
}

#[test]
fn bad_options_are_rejected() {
    let config = common::load("example1.toml");
    assert!(simulate_capacity(&config, &SimOptions { replications: 0, ..SimOptions::default() }).is_err());
    let opts = SimOptions { warmup: 100, horizon: Horizon::Departures(50), ..SimOptions::default() };
    assert!(simulate_capacity(&config, &opts).is_err());
    let idle = config.with_minor_flow(0.0).unwrap();
    assert!(simulate_queue(&idle, &SimOptions { mode: SimMode::Open, ..short(1) }).is_err());
}
