//! Equilibrium service-time law.
//!
//! First-attempt success probabilities solve a small linear system in the
//! `M·R` unknowns `P_{(1,k,r)}`; later attempts succeed with `e^{-q u}`.
//! Together with the empty-queue probabilities `f(0)` they give the type law
//! of departing drivers and the unconditional service-time transform.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{AnalysisError, Result};
use crate::factor::{dot, Structure};
use crate::kernel::TransformValue;
use crate::model::{ScenarioConfig, TypeIndex};
use crate::queuelen::QueueSolution;
use crate::saturation::capacity;
use crate::scalar::{Dual, Scalar};

const RESIDUAL_TOL: f64 = 1e-12;
const PROB_TOL: f64 = 1e-10;
const FBAR_TOL: f64 = 1e-8;

/// Attempt success probabilities, flat type order.
#[derive(Clone, Debug)]
pub struct AttemptProbs {
    /// `P_{(i,k,r)}`: success probability of attempt `i` with gap `u_{(i,k,r)}`.
    pub success: Vec<f64>,
    /// `π_{(i,k,r)}`: probability of being served at attempt `i` with that gap.
    pub served: Vec<f64>,
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// `c_{(k,r0,r)}`: contribution of retry successes of profile `r0`.
fn retry_constant(config: &ScenarioConfig, k: usize, r0: usize, r: usize) -> f64 {
    let q = config.major_rate();
    let dims = config.dims();
    let u1 = config.gap_of(TypeIndex::new(1, k, r));
    let pr0 = config.profile(r0 - 1).probability();
    let mut total = 0.0;
    let mut fail = 1.0;
    for i in 2..=dims.attempts {
        for l in 1..=dims.gaps {
            let t = TypeIndex::new(i, l, r0);
            let v = u1 - config.lag_of(t);
            total += pr0 * config.prob_of(t) * (-q * (config.gap_of(t) + pos(v))).exp() * fail;
        }
        fail *= 1.0 - (1..=dims.gaps)
            .map(|l| {
                let t = TypeIndex::new(i, l, r0);
                config.prob_of(t) * (-q * config.gap_of(t)).exp()
            })
            .sum::<f64>();
    }
    total
}

/// Coefficient of `f_src(0)` in the balance equation of target `(1,k,r)`.
fn empty_coefficient(q: f64, lambda: f64, u1: f64, ubar: f64) -> f64 {
    let v = u1 - ubar;
    let (vh, vc) = (pos(v), pos(-v));
    // when both rates vanish the two exponentials are 1; any split works
    let (wl, wq) = if lambda + q > 0.0 { (lambda / (lambda + q), q / (lambda + q)) } else { (0.5, 0.5) };
    1.0 - (-lambda * vc).exp() - (-q * vh).exp()
        + wl * (-(lambda + q) * vc - q * v).exp()
        + wq * (-lambda * ubar - q * u1).exp()
}

/// Solve for `P_{(1,k,r)}`, returned in `(k, r)` order with `k` fastest.
/// `f0` is in flat type order; all zeros means a permanently saturated queue.
pub fn solve_first_attempt_probs(config: &ScenarioConfig, f0: &[f64]) -> Result<Vec<f64>> {
    let dims = config.dims();
    if f0.len() != dims.count() {
        return Err(AnalysisError::OutOfRange(format!(
            "empty-queue vector has {} entries, expected {}",
            f0.len(),
            dims.count()
        )));
    }
    let q = config.major_rate();
    let lambda = config.batch_rate();
    let (m, rr) = (dims.gaps, dims.profiles);
    let n = m * rr;
    let idx = |k: usize, r: usize| (r - 1) * m + (k - 1);
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for r in 1..=rr {
        for k in 1..=m {
            let row = idx(k, r);
            let u1 = config.gap_of(TypeIndex::new(1, k, r));
            for r0 in 1..=rr {
                let c = retry_constant(config, k, r0, r);
                let pr0 = config.profile(r0 - 1).probability();
                rhs[row] += c;
                for l in 1..=m {
                    let src = TypeIndex::new(1, l, r0);
                    let v = u1 - config.lag_of(src);
                    a[(row, idx(l, r0))] += (-pr0 * (-q * pos(v)).exp() + c) * config.prob_of(src);
                }
            }
            for src in dims.iter() {
                let f = f0[dims.offset(src)];
                if f != 0.0 {
                    rhs[row] += empty_coefficient(q, lambda, u1, config.lag_of(src)) * f;
                }
            }
        }
    }
    let x = a
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| AnalysisError::Singular("first-attempt system is singular".into()))?;
    let residual = (&a * &x - &rhs).amax();
    if residual > RESIDUAL_TOL * rhs.amax().max(1.0) {
        return Err(AnalysisError::Singular(format!("first-attempt system residual {residual:.3e}")));
    }
    let mut out = Vec::with_capacity(n);
    for (j, p) in x.iter().enumerate() {
        if *p < -PROB_TOL || *p > 1.0 + PROB_TOL {
            return Err(AnalysisError::OutOfRange(format!(
                "P(1,{},{}) = {p} lies outside [0,1]; residual {residual:.3e}",
                j % m + 1,
                j / m + 1
            )));
        }
        out.push(p.clamp(0.0, 1.0));
    }
    Ok(out)
}

/// `P` and `π` for every type, given the first-attempt probabilities.
pub fn attempt_success_probs(config: &ScenarioConfig, first: &[f64]) -> AttemptProbs {
    let dims = config.dims();
    let q = config.major_rate();
    let mut success = vec![0.0; dims.count()];
    let mut served = vec![0.0; dims.count()];
    for r in 1..=dims.profiles {
        let mut survive = 1.0;
        for i in 1..=dims.attempts {
            let mut fail_here = 0.0;
            for k in 1..=dims.gaps {
                let t = TypeIndex::new(i, k, r);
                let p = if i == 1 { first[(r - 1) * dims.gaps + (k - 1)] } else { (-q * config.gap_of(t)).exp() };
                let o = dims.offset(t);
                success[o] = p;
                served[o] = p * survive;
                fail_here += config.prob_of(t) * p;
            }
            survive *= 1.0 - fail_here;
        }
    }
    AttemptProbs { success, served }
}

/// Stability of the minor-road queue.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stability {
    /// `ρ = λ E[B] g`.
    pub rho: f64,
    pub stable: bool,
}

pub fn stability_margin(config: &ScenarioConfig) -> Result<Stability> {
    let demand = config.batch_rate() * config.batch_size().mean();
    if demand == 0.0 {
        return Ok(Stability { rho: 0.0, stable: true });
    }
    let rho = demand * capacity(config)?.g;
    Ok(Stability { rho, stable: rho < 1.0 })
}

/// Service-time law of a departing driver, conditioned on the predecessor.
pub struct ServiceLaw<'a> {
    config: &'a ScenarioConfig,
    st: Structure<'a>,
    probs: AttemptProbs,
    f0: Vec<f64>,
    /// Per lag class: `Σ (π̄ - f0)` and `Σ f0` over source types.
    busy_weight: Vec<f64>,
    empty_weight: Vec<f64>,
}

impl<'a> ServiceLaw<'a> {
    /// Saturated mode: the queue never empties, `f(0) = 0`.
    pub fn saturated(config: &'a ScenarioConfig) -> Result<Self> {
        Self::with_empty_probs(config, vec![0.0; config.dims().count()])
    }

    /// Solve the queue first and use its empty-queue probabilities.
    pub fn equilibrium(config: &'a ScenarioConfig) -> Result<Self> {
        let f0 = QueueSolution::solve(config)?.empty_probs().to_vec();
        Self::with_empty_probs(config, f0)
    }

    pub fn with_empty_probs(config: &'a ScenarioConfig, f0: Vec<f64>) -> Result<Self> {
        let first = solve_first_attempt_probs(config, &f0)?;
        let probs = attempt_success_probs(config, &first);
        let st = Structure::new(config);
        let dims = config.dims();
        let mut class_of = vec![None; dims.count()];
        for t in &st.targets {
            class_of[t.offset] = Some(t.class);
        }
        let mut busy_weight = vec![0.0; st.n_classes()];
        let mut empty_weight = vec![0.0; st.n_classes()];
        for t in dims.iter() {
            let o = dims.offset(t);
            let pbar = probs.served[o] * config.prob_of(t) * config.profile(t.profile - 1).probability();
            if pbar <= 0.0 {
                continue;
            }
            let fbar = f0[o] / pbar;
            if !(-FBAR_TOL..=1.0 + FBAR_TOL).contains(&fbar) {
                return Err(AnalysisError::OutOfRange(format!(
                    "empty fraction of type {t} is {fbar}; f0 and the attempt probabilities disagree"
                )));
            }
            let c = class_of[o].expect("reachable types have a class");
            busy_weight[c] += pbar - f0[o];
            empty_weight[c] += f0[o];
        }
        if empty_weight.iter().any(|w| *w > 0.0) && !(config.batch_rate() > 0.0) {
            return Err(AnalysisError::OutOfRange("nonzero f0 needs a positive batch rate".into()));
        }
        Ok(ServiceLaw { config, st, probs, f0, busy_weight, empty_weight })
    }

    pub fn attempt_probs(&self) -> &AttemptProbs {
        &self.probs
    }

    /// `P(J = t) = π_t p_t p_r`, flat order.
    pub fn type_probs(&self) -> Vec<f64> {
        let dims = self.config.dims();
        dims.iter()
            .map(|t| {
                self.probs.served[dims.offset(t)]
                    * self.config.prob_of(t)
                    * self.config.profile(t.profile - 1).probability()
            })
            .collect()
    }

    /// Conditional partial transform of a `target` driver after a `source`
    /// predecessor. Zero when the source cannot occur.
    pub fn given_pred(&self, source: TypeIndex, target: TypeIndex, s: Complex64) -> Result<TransformValue> {
        let dims = self.config.dims();
        let so = dims.flatten(source)? - 1;
        dims.flatten(target)?;
        let pbar = self.type_probs()[so];
        let value = if pbar <= 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            let fbar = self.f0[so] / pbar;
            let y = self.config.lag_of(source);
            let direct = crate::kernel::cond_service_lst_at(self.config, target, s, y);
            let avg = if fbar > 0.0 {
                crate::kernel::lag_averaged_lst_at(self.config, target, s, y, self.config.batch_rate())
            } else {
                Complex64::new(0.0, 0.0)
            };
            direct * (1.0 - fbar) + avg * fbar
        };
        Ok(TransformValue { s, value })
    }

    /// Unconditional `G̃(s) = E[e^{-sG}; served within N attempts]`.
    pub fn lst_at<T: Scalar>(&self, s: T) -> T {
        let sigma = self.st.basis_weights(&self.st.psi_all(s));
        let phi = self.st.phi(s);
        let mut total = T::zero();
        for (c, row) in phi.iter().enumerate() {
            if self.busy_weight[c] != 0.0 {
                total = total + dot(row, &sigma).scale(self.busy_weight[c]);
            }
        }
        if self.empty_weight.iter().any(|w| *w > 0.0) {
            let avg = self.st.phi_avg(s, self.config.batch_rate());
            for (c, row) in avg.iter().enumerate() {
                if self.empty_weight[c] != 0.0 {
                    total = total + dot(row, &sigma).scale(self.empty_weight[c]);
                }
            }
        }
        total
    }

    pub fn lst(&self, s: Complex64) -> TransformValue {
        TransformValue { s, value: self.lst_at(s) }
    }

    /// `E[G] = -G̃'(0)` in seconds.
    pub fn mean(&self) -> f64 {
        -self.lst_at(Dual::variable(0.0)).eps
    }

    /// `1 - G̃(0)`.
    pub fn defect(&self) -> f64 {
        1.0 - self.lst_at(0.0)
    }
}

pub fn service_lst(config: &ScenarioConfig, s: Complex64) -> Result<TransformValue> {
    if s.re < 0.0 {
        return Err(AnalysisError::OutOfRange(format!("transform argument {s} has negative real part")));
    }
    Ok(ServiceLaw::equilibrium(config)?.lst(s))
}

/// Equilibrium mean service time in seconds.
pub fn mean_service_time(config: &ScenarioConfig) -> Result<f64> {
    Ok(ServiceLaw::equilibrium(config)?.mean())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BatchSizeLaw, DriverProfile, GapTable};

    fn single(q: f64, u: Vec<Vec<f64>>, p: Vec<Vec<f64>>) -> ScenarioConfig {
        let prof = DriverProfile::new(1.0, 3.0, GapTable::new(u, p).unwrap());
        ScenarioConfig::new(q, 300.0, BatchSizeLaw::Deterministic(1), vec![prof]).unwrap()
    }

    #[test]
    fn no_major_traffic() {
        let c = single(0.0, vec![vec![4.0], vec![3.5]], vec![vec![1.0], vec![1.0]]);
        let first = solve_first_attempt_probs(&c, &[0.0, 0.0]).unwrap();
        assert_eq!(first, vec![1.0]);
        let pr = attempt_success_probs(&c, &first);
        assert_eq!(pr.served, vec![1.0, 0.0]);
        let law = ServiceLaw::saturated(&c).unwrap();
        assert!((law.mean() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn two_attempt_tree() {
        let q = 0.2;
        let c = single(720.0, vec![vec![4.0], vec![3.5]], vec![vec![1.0], vec![1.0]]);
        let first = solve_first_attempt_probs(&c, &[0.0, 0.0]).unwrap();
        let pr = attempt_success_probs(&c, &first);
        let p1 = first[0];
        assert!((pr.served[1] - (-q * 3.5f64).exp() * (1.0 - p1)).abs() < 1e-15);
        // saturated balance: P1 = π̄1 e^{-q(u1-ū1)^+} + π̄2 e^{-q(u1-ū2)^+}
        let (ub1, ub2) = (1.0, 0.5);
        let rhs = pr.served[0] * (-q * (4.0 - ub1)).exp() + pr.served[1] * (-q * (4.0f64 - ub2)).exp();
        assert!((p1 - rhs).abs() < 1e-14);
    }

    #[test]
    fn empty_coefficient_without_rates() {
        assert_eq!(empty_coefficient(0.0, 0.0, 5.0, 2.0), 0.0);
    }
}
