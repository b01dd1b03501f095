//! Discrete-event simulation of the stop line.
//!
//! The head of the minor-road queue starts scanning when the previous
//! driver has merged (or when it arrives, if the queue was empty). Each
//! attempt draws a critical gap from that attempt's law; the driver accepts
//! if the time to the next major-road vehicle is at least the gap and leaves
//! after its merge time, otherwise it tries again when that vehicle passes.
//! Attempts past the last modelled one reuse the last attempt's law.
//!
//! With [`Reuse::Full`] the major-road timeline is kept as is, so several
//! minor-road drivers can share one large gap. [`Reuse::Limited`] forgets
//! the timeline after each acceptance, so the successor only inherits the
//! lag `u - Δ` plus a fresh exponential remainder.

mod major;
mod rng;

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use major::{MajorRoad, PoissonMajor, ScriptedMajor};
pub use rng::{rng_streams, stream, Stream, Streams};

use crate::error::{AnalysisError, Result};
use crate::model::{sample_index, ScenarioConfig, TypeIndex};
use major::exp_draw;

/// Whether the queue is kept permanently full.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    Saturated,
    Open,
}

/// How the remainder of a major-road gap is shared between drivers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reuse {
    Full,
    Limited,
}

impl std::str::FromStr for SimMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "saturated" => Ok(SimMode::Saturated),
            "open" => Ok(SimMode::Open),
            other => Err(format!("unknown mode '{other}' (expected saturated or open)")),
        }
    }
}

impl std::str::FromStr for Reuse {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(Reuse::Full),
            "limited" => Ok(Reuse::Limited),
            other => Err(format!("unknown reuse mode '{other}' (expected full or limited)")),
        }
    }
}

/// Length of the measured part of a replication.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Departures(u64),
    Seconds(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimOptions {
    pub seed: u64,
    pub mode: SimMode,
    pub reuse: Reuse,
    /// Departures discarded before measuring.
    pub warmup: u64,
    pub horizon: Horizon,
    pub replications: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            seed: 1,
            mode: SimMode::Saturated,
            reuse: Reuse::Full,
            warmup: 10_000,
            horizon: Horizon::Departures(1_000_000),
            replications: 10,
        }
    }
}

impl SimOptions {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(AnalysisError::OutOfRange("need at least one replication".into()));
        }
        match self.horizon {
            Horizon::Departures(n) if n <= self.warmup => Err(AnalysisError::OutOfRange(format!(
                "horizon of {n} departures does not exceed the warmup of {}",
                self.warmup
            ))),
            Horizon::Seconds(t) if !(t > 0.0) => {
                Err(AnalysisError::OutOfRange(format!("horizon of {t} s must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Replication mean with its standard error and 95% half-width.
/// With a single replication the error terms are NaN.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub half_width: f64,
}

impl Estimate {
    pub fn from_replications(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            f64::NAN
        };
        Estimate { mean, se, half_width: 1.96 * se }
    }

    /// Pooled frequency `hits / total` with the larger of the replication
    /// and binomial standard errors.
    fn frequency(per_rep: &[f64], hits: u64, total: u64) -> Self {
        let reps = Estimate::from_replications(per_rep);
        let p = hits as f64 / total as f64;
        let binom = (p * (1.0 - p) / total as f64).sqrt();
        let se = if reps.se.is_nan() { binom } else { reps.se.max(binom) };
        Estimate { mean: p, se, half_width: 1.96 * se }
    }

    pub fn contains(&self, x: f64) -> bool {
        (x - self.mean).abs() <= self.half_width
    }
}

/// Saturated-mode result.
#[derive(Clone, Debug, Serialize)]
pub struct SimEstimate {
    /// Capacity in veh/h.
    pub capacity: Estimate,
    pub mean_service: Estimate,
    pub replications: u64,
    /// Per-replication capacities.
    pub per_replication: Vec<f64>,
    /// Departing-type frequencies, flat type order; attempts past the last
    /// modelled one count as the last.
    pub type_freq: Vec<Estimate>,
    /// First-attempt success frequency per `(k, r)`, `k` fastest.
    pub first_attempt_success: Vec<Estimate>,
    pub departures: u64,
}

/// Open-mode result.
#[derive(Clone, Debug, Serialize)]
pub struct QueueSimResult {
    /// `P(X = n)` just after departures.
    pub departure_pmf: Vec<Estimate>,
    /// Time-average `P(X = n)`.
    pub arbitrary_pmf: Vec<Estimate>,
    pub mean_queue: Estimate,
    pub mean_queue_arbitrary: Estimate,
    /// Mean scanning plus merging time in seconds.
    pub mean_service: Estimate,
    pub type_freq: Vec<Estimate>,
    /// `P(X_n = 0, J_n = t)`: the departing driver is of type `t` and
    /// leaves the system empty. Flat type order.
    pub empty_freq: Vec<Estimate>,
    pub first_attempt_success: Vec<Estimate>,
    pub replications: u64,
    pub departures: u64,
}

/// One served driver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Departure {
    pub arrival: f64,
    /// Start of the first attempt.
    pub start: f64,
    /// Start of the successful attempt.
    pub accept: f64,
    /// Merge completion.
    pub departure: f64,
    /// Type with the attempt capped at the model's last attempt.
    pub kind: TypeIndex,
    /// Uncapped number of attempts.
    pub attempts: usize,
    /// Zero-based gap index drawn at the first attempt.
    pub first_gap: usize,
}

/// Serves drivers one after another against a major-road timeline.
pub struct Server<'a, M: MajorRoad> {
    config: &'a ScenarioConfig,
    major: M,
    reuse: Reuse,
    profile_probs: Vec<f64>,
    /// Time the stop line becomes free.
    free_at: f64,
}

impl<'a, M: MajorRoad> Server<'a, M> {
    pub fn new(config: &'a ScenarioConfig, major: M, reuse: Reuse) -> Self {
        let profile_probs = config.profiles().iter().map(|p| p.probability()).collect();
        Server { config, major, reuse, profile_probs, free_at: 0.0 }
    }

    /// Serve a driver that reaches the stop line area at `arrival`. The
    /// driver's profile and gaps are drawn from the two given generators.
    pub fn serve<R: Rng + ?Sized>(&mut self, arrival: f64, profiles: &mut R, gaps: &mut R) -> Departure {
        let r = sample_index(&self.profile_probs, profiles);
        let profile = self.config.profile(r);
        let table = profile.gaps();
        let last = table.attempts() - 1;
        let start = arrival.max(self.free_at);
        let mut a = start;
        let mut attempt = 0;
        let mut first_gap = 0;
        loop {
            let row = attempt.min(last);
            let k = sample_index(table.prob_row(row), gaps);
            if attempt == 0 {
                first_gap = k;
            }
            let u = table.gap(row, k);
            let next = self.major.next_after(a);
            if next - a >= u {
                let departure = a + profile.merge_time();
                if self.reuse == Reuse::Limited {
                    self.major.forget_after(a + u);
                }
                self.free_at = departure;
                return Departure {
                    arrival,
                    start,
                    accept: a,
                    departure,
                    kind: TypeIndex::new(row + 1, k + 1, r + 1),
                    attempts: attempt + 1,
                    first_gap,
                };
            }
            a = next;
            attempt += 1;
        }
    }
}

/// Saturated service of `count` drivers against a given major road, all
/// drivers present from time 0. Meant for traces and hand-checked cases.
pub fn saturated_trace<M: MajorRoad>(
    config: &ScenarioConfig,
    major: M,
    reuse: Reuse,
    count: usize,
    seed: u64,
) -> Vec<Departure> {
    let mut s = rng_streams(seed, 0);
    let mut server = Server::new(config, major, reuse);
    (0..count).map(|_| server.serve(0.0, &mut s.profiles, &mut s.gaps)).collect()
}

#[derive(Default)]
struct Tally {
    types: Vec<u64>,
    empty_after: Vec<u64>,
    first_trials: Vec<u64>,
    first_success: Vec<u64>,
    service_sum: f64,
    departures: u64,
}

impl Tally {
    fn new(n_types: usize, n_first: usize) -> Self {
        Tally {
            types: vec![0; n_types],
            empty_after: vec![0; n_types],
            first_trials: vec![0; n_first],
            first_success: vec![0; n_first],
            ..Default::default()
        }
    }

    fn record(&mut self, config: &ScenarioConfig, d: &Departure, empty: bool) {
        let dims = config.dims();
        let o = dims.offset(d.kind);
        self.types[o] += 1;
        if empty {
            self.empty_after[o] += 1;
        }
        let fi = (d.kind.profile - 1) * dims.gaps + d.first_gap;
        self.first_trials[fi] += 1;
        if d.attempts == 1 {
            self.first_success[fi] += 1;
        }
        self.service_sum += d.departure - d.start;
        self.departures += 1;
    }
}

struct SaturatedRep {
    capacity: f64,
    tally: Tally,
}

fn run_saturated(config: &ScenarioConfig, opts: &SimOptions, rep: u64) -> SaturatedRep {
    let dims = config.dims();
    let s = rng_streams(opts.seed, rep);
    let (mut profiles, mut gaps) = (s.profiles, s.gaps);
    let mut server = Server::new(config, PoissonMajor::new(config.major_rate(), s.major), opts.reuse);
    let mut tally = Tally::new(dims.count(), dims.gaps * dims.profiles);
    let mut t0 = 0.0;
    let mut t_end;
    let mut n = 0u64;
    loop {
        let d = server.serve(server.free_at, &mut profiles, &mut gaps);
        n += 1;
        if n == opts.warmup {
            t0 = d.departure;
        }
        if n <= opts.warmup {
            continue;
        }
        tally.record(config, &d, false);
        t_end = d.departure;
        let done = match opts.horizon {
            Horizon::Departures(h) => n >= h,
            Horizon::Seconds(t) => d.departure - t0 >= t,
        };
        if done {
            break;
        }
    }
    SaturatedRep { capacity: 3600.0 * tally.departures as f64 / (t_end - t0), tally }
}

struct OpenRep {
    departure_hist: Vec<u64>,
    occupancy: Vec<f64>,
    observed_time: f64,
    queue_sum: f64,
    tally: Tally,
}

fn run_open(config: &ScenarioConfig, opts: &SimOptions, rep: u64) -> OpenRep {
    let dims = config.dims();
    let s = rng_streams(opts.seed, rep);
    let (mut profiles, mut gaps, mut arrivals, mut sizes) = (s.profiles, s.gaps, s.batch_arrivals, s.batch_sizes);
    let lambda = config.batch_rate();
    let law = config.batch_size().clone();
    let mut server = Server::new(config, PoissonMajor::new(config.major_rate(), s.major), opts.reuse);
    let mut tally = Tally::new(dims.count(), dims.gaps * dims.profiles);
    let mut queue: VecDeque<f64> = VecDeque::new();
    let mut next_batch = exp_draw(lambda, &mut arrivals);
    let mut hist = Vec::new();
    let mut occupancy: Vec<f64> = Vec::new();
    let mut observing = opts.warmup == 0;
    let mut last = 0.0;
    let mut t0 = 0.0;
    let mut left_behind;
    let mut queue_sum = 0.0;
    let mut n = 0u64;

    let add_time = |occ: &mut Vec<f64>, count: usize, dt: f64| {
        if occ.len() <= count {
            occ.resize(count + 1, 0.0);
        }
        occ[count] += dt;
    };

    loop {
        if queue.is_empty() {
            let t = next_batch;
            if observing {
                add_time(&mut occupancy, 0, t - last);
            }
            last = t;
            for _ in 0..law.sample(&mut sizes) {
                queue.push_back(t);
            }
            next_batch = t + exp_draw(lambda, &mut arrivals);
        }
        let arrival = *queue.front().expect("nonempty");
        let d = server.serve(arrival, &mut profiles, &mut gaps);
        // arrivals during the service, in time order
        while next_batch <= d.departure {
            let t = next_batch;
            if observing {
                add_time(&mut occupancy, queue.len(), t - last);
            }
            last = t;
            for _ in 0..law.sample(&mut sizes) {
                queue.push_back(t);
            }
            next_batch = t + exp_draw(lambda, &mut arrivals);
        }
        if observing {
            add_time(&mut occupancy, queue.len(), d.departure - last);
        }
        last = d.departure;
        queue.pop_front();
        n += 1;
        left_behind = queue.len();
        if n <= opts.warmup {
            if n == opts.warmup {
                observing = true;
                t0 = d.departure;
            }
            continue;
        }
        tally.record(config, &d, left_behind == 0);
        if hist.len() <= left_behind {
            hist.resize(left_behind + 1, 0);
        }
        hist[left_behind] += 1;
        queue_sum += left_behind as f64;
        let done = match opts.horizon {
            Horizon::Departures(h) => n >= h,
            Horizon::Seconds(t) => d.departure - t0 >= t,
        };
        if done {
            break;
        }
    }
    OpenRep { departure_hist: hist, occupancy, observed_time: last - t0, queue_sum, tally }
}

fn per_rep_freq(tallies: &[&Tally], pick: impl Fn(&Tally) -> (&[u64], Option<&[u64]>), i: usize) -> Vec<f64> {
    tallies
        .iter()
        .map(|t| {
            let (hits, denom) = pick(t);
            let d = denom.map(|d| d[i]).unwrap_or(t.departures);
            if d == 0 {
                0.0
            } else {
                hits[i] as f64 / d as f64
            }
        })
        .collect()
}

fn pooled(tallies: &[&Tally], pick: impl Fn(&Tally) -> (&[u64], Option<&[u64]>) + Copy, len: usize) -> Vec<Estimate> {
    (0..len)
        .map(|i| {
            let hits: u64 = tallies.iter().map(|t| pick(t).0[i]).sum();
            let total: u64 = tallies.iter().map(|t| pick(t).1.map(|d| d[i]).unwrap_or(t.departures)).sum();
            if total == 0 {
                return Estimate { mean: f64::NAN, se: f64::NAN, half_width: f64::NAN };
            }
            Estimate::frequency(&per_rep_freq(tallies, pick, i), hits, total)
        })
        .collect()
}

/// Capacity by simulation with the queue kept full.
pub fn simulate_capacity(config: &ScenarioConfig, opts: &SimOptions) -> Result<SimEstimate> {
    opts.validate()?;
    let reps: Vec<SaturatedRep> =
        (0..opts.replications).into_par_iter().map(|r| run_saturated(config, opts, r)).collect();
    let caps: Vec<f64> = reps.iter().map(|r| r.capacity).collect();
    let services: Vec<f64> = reps.iter().map(|r| r.tally.service_sum / r.tally.departures as f64).collect();
    let tallies: Vec<&Tally> = reps.iter().map(|r| &r.tally).collect();
    let dims = config.dims();
    Ok(SimEstimate {
        capacity: Estimate::from_replications(&caps),
        mean_service: Estimate::from_replications(&services),
        replications: opts.replications,
        per_replication: caps,
        type_freq: pooled(&tallies, |t| (&t.types, None), dims.count()),
        first_attempt_success: pooled(
            &tallies,
            |t| (&t.first_success, Some(&t.first_trials)),
            dims.gaps * dims.profiles,
        ),
        departures: tallies.iter().map(|t| t.departures).sum(),
    })
}

/// Queue-length statistics with batch Poisson arrivals.
pub fn simulate_queue(config: &ScenarioConfig, opts: &SimOptions) -> Result<QueueSimResult> {
    opts.validate()?;
    if !(config.batch_rate() > 0.0) {
        return Err(AnalysisError::OutOfRange("open-mode simulation needs a positive batch rate".into()));
    }
    let reps: Vec<OpenRep> = (0..opts.replications).into_par_iter().map(|r| run_open(config, opts, r)).collect();
    let dims = config.dims();
    let tallies: Vec<&Tally> = reps.iter().map(|r| &r.tally).collect();
    let len = reps.iter().map(|r| r.departure_hist.len().max(r.occupancy.len())).max().unwrap_or(0);
    let dep_total: u64 = reps.iter().map(|r| r.tally.departures).sum();
    let departure_pmf = (0..len)
        .map(|n| {
            let per: Vec<f64> = reps
                .iter()
                .map(|r| r.departure_hist.get(n).copied().unwrap_or(0) as f64 / r.tally.departures as f64)
                .collect();
            let hits: u64 = reps.iter().map(|r| r.departure_hist.get(n).copied().unwrap_or(0)).sum();
            Estimate::frequency(&per, hits, dep_total)
        })
        .collect();
    let arbitrary_pmf = (0..len)
        .map(|n| {
            let per: Vec<f64> =
                reps.iter().map(|r| r.occupancy.get(n).copied().unwrap_or(0.0) / r.observed_time).collect();
            Estimate::from_replications(&per)
        })
        .collect();
    let mean_arb: Vec<f64> = reps
        .iter()
        .map(|r| r.occupancy.iter().enumerate().map(|(n, t)| n as f64 * t).sum::<f64>() / r.observed_time)
        .collect();
    Ok(QueueSimResult {
        departure_pmf,
        arbitrary_pmf,
        mean_queue: Estimate::from_replications(
            &reps.iter().map(|r| r.queue_sum / r.tally.departures as f64).collect::<Vec<_>>(),
        ),
        mean_queue_arbitrary: Estimate::from_replications(&mean_arb),
        mean_service: Estimate::from_replications(
            &reps.iter().map(|r| r.tally.service_sum / r.tally.departures as f64).collect::<Vec<_>>(),
        ),
        type_freq: pooled(&tallies, |t| (&t.types, None), dims.count()),
        empty_freq: pooled(&tallies, |t| (&t.empty_after, None), dims.count()),
        first_attempt_success: pooled(
            &tallies,
            |t| (&t.first_success, Some(&t.first_trials)),
            dims.gaps * dims.profiles,
        ),
        replications: opts.replications,
        departures: dep_total,
    })
}
