//! Conditional service-time transforms.
//!
//! `G̃_{(j,l,r)}(s, y)` is the LST of a queuer's service time jointly with
//! the event that the driver is of type `(j,l,r)`, given that a lag `y` of the
//! predecessor's gap is still available when scanning starts. Every
//! expression is generic over [`Scalar`] so that the same code gives
//! complex transform values and exact `s`-derivatives.
//!
//! The transform factors as `ψ_t(s) · basis(s, y)`: the `y`-dependence only
//! enters through the first attempt. For a first-attempt success the basis
//! is `e^{-q (u_{1lr} - y)^+}`, for later successes it is
//! `e^{-sy} (1 - Σ_k p_{1kr} e^{-(s+q)(u_{1kr} - y)^+})`. The factorization is
//! what keeps the matrix computations small (see [`crate::factor`]).

use num_complex::Complex64;

use crate::error::{AnalysisError, Result};
use crate::model::{ScenarioConfig, TypeIndex};
use crate::scalar::{Dual, Scalar};

/// A transform value together with the argument it was evaluated at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformValue {
    pub s: Complex64,
    pub value: Complex64,
}

/// `e^{-q (u - y)^+}`: probability the first attempt with gap `u` succeeds
/// when a lag `y` is available.
pub(crate) fn first_basis(q: f64, u: f64, y: f64) -> f64 {
    (-q * (u - y).max(0.0)).exp()
}

/// `E[e^{-(s+q) (T_1 - y)^+}]` over the first-attempt gap law of profile `r`.
fn first_attempt_mgf<T: Scalar>(config: &ScenarioConfig, r: usize, s: T, y: f64) -> T {
    let gaps = config.profile(r - 1).gaps();
    let sq = s + T::from_real(config.major_rate());
    let mut acc = T::zero();
    for (u, p) in gaps.gap_row(0).iter().zip(gaps.prob_row(0)) {
        acc = acc + (-sq.scale((u - y).max(0.0))).exp().scale(*p);
    }
    acc
}

/// Retry basis `e^{-sy} (1 - E[e^{-(s+q)(T_1 - y)^+}])`.
pub(crate) fn retry_basis<T: Scalar>(config: &ScenarioConfig, r: usize, s: T, y: f64) -> T {
    (-s.scale(y)).exp() * (T::one() - first_attempt_mgf(config, r, s, y))
}

/// `1 - E[e^{-(s+q) T_m}]` for one-based attempt `m`.
pub(crate) fn attempt_fail_factor<T: Scalar>(config: &ScenarioConfig, r: usize, m: usize, s: T) -> T {
    let gaps = config.profile(r - 1).gaps();
    let sq = s + T::from_real(config.major_rate());
    let mut acc = T::one();
    for (u, p) in gaps.gap_row(m - 1).iter().zip(gaps.prob_row(m - 1)) {
        acc = acc - (-sq.scale(*u)).exp().scale(*p);
    }
    acc
}

/// The `y`-independent factor `ψ_t(s)` of `G̃_t(s, y)`.
pub(crate) fn psi<T: Scalar>(config: &ScenarioConfig, t: TypeIndex, s: T) -> T {
    let prof = config.profile(t.profile - 1);
    let weight = prof.probability() * config.prob_of(t);
    let merge = (-s.scale(prof.merge_time())).exp();
    if t.attempt == 1 {
        return merge.scale(weight);
    }
    let q = config.major_rate();
    if q == 0.0 || weight == 0.0 {
        return T::zero();
    }
    let ratio = T::from_real(q) / (s + T::from_real(q));
    let mut acc = merge.scale(weight * (-q * config.gap_of(t)).exp()) * ratio.powi(t.attempt - 1);
    for m in 2..t.attempt {
        acc = acc * attempt_fail_factor(config, t.profile, m, s);
    }
    acc
}

/// `ψ_t(s)` for all attempts of one `(l, r)` column, sharing the running
/// product of failure factors.
pub(crate) fn psi_column<T: Scalar>(config: &ScenarioConfig, l: usize, r: usize, s: T) -> Vec<T> {
    let n = config.attempts();
    let prof = config.profile(r - 1);
    let q = config.major_rate();
    let merge = (-s.scale(prof.merge_time())).exp();
    let mut out = Vec::with_capacity(n);
    out.push(merge.scale(prof.probability() * prof.gaps().prob(0, l - 1)));
    if n == 1 {
        return out;
    }
    if q == 0.0 {
        out.resize(n, T::zero());
        return out;
    }
    let ratio = T::from_real(q) / (s + T::from_real(q));
    // running = ratio^{j-1} Π_{m=2}^{j-1} fail_m
    let mut running = ratio;
    for j in 2..=n {
        if j > 2 {
            running = running * ratio * attempt_fail_factor(config, r, j - 1, s);
        }
        let w = prof.probability() * prof.gaps().prob(j - 1, l - 1);
        let u = prof.gaps().gap(j - 1, l - 1);
        out.push(running * merge.scale(w * (-q * u).exp()));
    }
    out
}

/// `G̃_t(s, y)` in any scalar type; no precondition checks.
pub fn cond_service_lst_at<T: Scalar>(config: &ScenarioConfig, t: TypeIndex, s: T, y: f64) -> T {
    let q = config.major_rate();
    if t.attempt == 1 {
        let u = config.gap_of(t);
        return psi(config, t, s).scale(first_basis(q, u, y));
    }
    if q == 0.0 {
        return T::zero();
    }
    psi(config, t, s) * retry_basis(config, t.profile, s, y)
}

fn check_type(config: &ScenarioConfig, t: TypeIndex) -> Result<()> {
    config.dims().flatten(t).map(|_| ())
}

fn check_args(s: Complex64, y: f64) -> Result<()> {
    if !(s.re >= 0.0) || !s.im.is_finite() {
        return Err(AnalysisError::OutOfRange(format!("transform argument s={s} needs Re(s) >= 0")));
    }
    if !(y >= 0.0) || !y.is_finite() {
        return Err(AnalysisError::OutOfRange(format!("lag y={y} must be finite and nonnegative")));
    }
    Ok(())
}

/// `G̃_{(j,l,r)}(s, y)` with argument checks.
pub fn cond_service_lst(config: &ScenarioConfig, target: TypeIndex, s: Complex64, y: f64) -> Result<TransformValue> {
    check_type(config, target)?;
    check_args(s, y)?;
    Ok(TransformValue { s, value: cond_service_lst_at(config, target, s, y) })
}

/// `∫_a^b λ e^{-λ(ū - y)} e^{β y} dy`, written to stay finite for large λ.
fn weighted_piece<T: Scalar>(lambda: f64, ubar: f64, beta: T, a: f64, b: f64) -> T {
    if b <= a || lambda == 0.0 {
        return T::zero();
    }
    let w = b - a;
    let lead = (beta.scale(b) - T::from_real(lambda * (ubar - b))).exp();
    let rate = beta + T::from_real(lambda);
    lead.scale(lambda * w) * (-rate.scale(w)).exprel()
}

/// Lag average of the first-attempt basis `e^{-q (u - y)^+}`.
pub(crate) fn first_basis_avg<T: Scalar>(q: f64, u: f64, ubar: f64, lambda: f64) -> T {
    let split = u.min(ubar);
    let below = weighted_piece(lambda, ubar, T::from_real(q), 0.0, split).scale((-q * u).exp());
    let above = weighted_piece(lambda, ubar, T::zero(), split, ubar);
    let atom = (-lambda * ubar).exp() * first_basis(q, u, 0.0);
    below + above + T::from_real(atom)
}

/// Lag average of the retry basis of profile `r`.
pub(crate) fn retry_basis_avg<T: Scalar>(config: &ScenarioConfig, r: usize, s: T, ubar: f64, lambda: f64) -> T {
    let q = config.major_rate();
    let gaps = config.profile(r - 1).gaps();
    let atom = (-lambda * ubar).exp();
    let mut acc = weighted_piece(lambda, ubar, -s, 0.0, ubar) + T::from_real(atom);
    let sq = s + T::from_real(q);
    for (u, p) in gaps.gap_row(0).iter().zip(gaps.prob_row(0)) {
        let split = u.min(ubar);
        // y < u: e^{-sy} e^{-(s+q)(u-y)} = e^{-(s+q)u} e^{qy}
        let below = weighted_piece(lambda, ubar, T::from_real(q), 0.0, split) * (-sq.scale(*u)).exp();
        let above = weighted_piece(lambda, ubar, -s, split, ubar);
        let at_zero = (-sq.scale(*u)).exp().scale(atom);
        acc = acc - (below + above + at_zero).scale(*p);
    }
    acc
}

/// `∫_0^ū λ e^{-λx} G̃_t(s, ū - x) dx + G̃_t(s, 0) e^{-λū}` in any scalar type.
pub fn lag_averaged_lst_at<T: Scalar>(config: &ScenarioConfig, t: TypeIndex, s: T, ubar: f64, lambda: f64) -> T {
    let q = config.major_rate();
    if t.attempt == 1 {
        return psi(config, t, s) * first_basis_avg(q, config.gap_of(t), ubar, lambda);
    }
    if q == 0.0 {
        return T::zero();
    }
    psi(config, t, s) * retry_basis_avg(config, t.profile, s, ubar, lambda)
}

/// Exponentially weighted lag average of `G̃_t(s, ·)`: the transform seen by
/// a driver arriving to an empty queue an `Exp(λ)` time after the
/// predecessor left a lag `ū`.
pub fn lag_averaged_lst(
    config: &ScenarioConfig,
    target: TypeIndex,
    s: Complex64,
    ubar: f64,
    lambda: f64,
) -> Result<TransformValue> {
    check_type(config, target)?;
    check_args(s, ubar)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(AnalysisError::OutOfRange(format!("arrival rate {lambda} must be positive")));
    }
    Ok(TransformValue { s, value: lag_averaged_lst_at(config, target, s, ubar, lambda) })
}

/// `-∂G̃_t(s, y)/∂s` at `s = 0`, in seconds times probability.
pub fn cond_service_partial_mean(config: &ScenarioConfig, target: TypeIndex, y: f64) -> Result<f64> {
    check_type(config, target)?;
    check_args(Complex64::new(0.0, 0.0), y)?;
    Ok(-cond_service_lst_at(config, target, Dual::variable(0.0), y).eps)
}

/// Probability that a profile-`r` driver (one-based) facing lag `y` fails
/// all modelled attempts. Computed as a product, so it stays accurate when
/// it is far below machine epsilon.
pub fn mass_defect(config: &ScenarioConfig, r: usize, y: f64) -> Result<f64> {
    if r == 0 || r > config.profiles().len() {
        return Err(AnalysisError::IndexOutOfRange(format!("profile {r}")));
    }
    check_args(Complex64::new(0.0, 0.0), y)?;
    let mut defect = 1.0 - first_attempt_mgf(config, r, 0.0, y);
    for m in 2..=config.attempts() {
        if defect == 0.0 {
            break;
        }
        defect *= attempt_fail_factor(config, r, m, 0.0);
    }
    Ok(defect.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BatchSizeLaw, DriverProfile, ImpatienceSpec};

    fn example1(q: f64, attempts: usize) -> ScenarioConfig {
        let p1 = DriverProfile::generated(
            0.9,
            4.0,
            ImpatienceSpec { base_gaps_s: vec![5.0, 6.0], base_probs: vec![0.4, 0.6], alpha: 0.9 },
            attempts,
        )
        .unwrap();
        let p2 = DriverProfile::generated(
            0.1,
            5.0,
            ImpatienceSpec { base_gaps_s: vec![8.0, 9.0], base_probs: vec![0.5, 0.5], alpha: 0.9 },
            attempts,
        )
        .unwrap();
        ScenarioConfig::new(q, 100.0, BatchSizeLaw::Deterministic(1), vec![p1, p2]).unwrap()
    }

    #[test]
    fn first_attempt_value() {
        let c = example1(500.0, 5);
        let v = cond_service_lst(&c, TypeIndex::new(1, 1, 1), Complex64::new(0.0, 0.0), 0.0).unwrap();
        let q = 500.0 / 3600.0;
        assert!((v.value.re - 0.36 * (-5.0 * q).exp()).abs() < 1e-15);
        assert!((v.value.re - 0.179766).abs() < 1e-6);
    }

    #[test]
    fn psi_column_matches_single_evaluation() {
        let c = example1(750.0, 6);
        let s = Complex64::new(0.3, -0.7);
        for r in 1..=2 {
            for l in 1..=2 {
                let col = psi_column(&c, l, r, s);
                for (j, v) in col.iter().enumerate() {
                    let direct = psi(&c, TypeIndex::new(j + 1, l, r), s);
                    assert!((v - direct).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn defect_is_zero_without_major_traffic() {
        let c = example1(0.0, 4);
        assert_eq!(mass_defect(&c, 1, 0.0).unwrap(), 0.0);
        assert_eq!(mass_defect(&c, 2, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn lag_average_at_zero_lag_is_plain_value() {
        let c = example1(500.0, 4);
        let s = Complex64::new(0.2, 0.1);
        for t in c.dims().iter() {
            let a = lag_averaged_lst_at(&c, t, s, 0.0, 0.05);
            let b = cond_service_lst_at(&c, t, s, 0.0);
            assert!((a - b).norm() < 1e-15);
        }
    }
}
