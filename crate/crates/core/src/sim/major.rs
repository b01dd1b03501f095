//! Major-road traffic as seen from the stop line.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Passage times of major-road vehicles.
pub trait MajorRoad {
    /// First passage strictly after `t`. Calls come with nondecreasing `t`.
    fn next_after(&mut self, t: f64) -> f64;

    /// Forget everything known about passages after `t`, beyond the fact
    /// that none happens before `t`. Used to impose single-driver gap reuse.
    fn forget_after(&mut self, t: f64);
}

/// Poisson traffic. Because interarrival times are memoryless, only the
/// next passage needs to be stored.
#[derive(Clone, Debug)]
pub struct PoissonMajor {
    exp: Option<Exp<f64>>,
    next: f64,
    rng: Xoshiro256PlusPlus,
}

impl PoissonMajor {
    /// `rate` in vehicles per second; zero means no traffic.
    pub fn new(rate: f64, rng: Xoshiro256PlusPlus) -> Self {
        let exp = if rate > 0.0 { Some(Exp::new(rate).expect("positive rate")) } else { None };
        PoissonMajor { exp, next: f64::NEG_INFINITY, rng }
    }

    fn draw(&mut self) -> f64 {
        match &self.exp {
            Some(e) => e.sample(&mut self.rng),
            None => f64::INFINITY,
        }
    }
}

impl MajorRoad for PoissonMajor {
    fn next_after(&mut self, t: f64) -> f64 {
        if self.next <= t {
            self.next = t + self.draw();
        }
        self.next
    }

    fn forget_after(&mut self, t: f64) {
        self.next = t + self.draw();
    }
}

/// A fixed list of passage times; nothing passes after the last one.
#[derive(Clone, Debug)]
pub struct ScriptedMajor {
    times: Vec<f64>,
    pos: usize,
}

impl ScriptedMajor {
    pub fn new(mut times: Vec<f64>) -> Self {
        times.sort_by(f64::total_cmp);
        ScriptedMajor { times, pos: 0 }
    }
}

impl MajorRoad for ScriptedMajor {
    fn next_after(&mut self, t: f64) -> f64 {
        while self.pos < self.times.len() && self.times[self.pos] <= t {
            self.pos += 1;
        }
        self.times.get(self.pos).copied().unwrap_or(f64::INFINITY)
    }

    /// A script cannot be resampled; it always keeps its real timeline.
    fn forget_after(&mut self, _t: f64) {}
}

/// `Exp(rate)` draw, infinite for a zero rate.
pub(crate) fn exp_draw<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    if rate > 0.0 {
        Exp::new(rate).expect("positive rate").sample(rng)
    } else {
        f64::INFINITY
    }
}
