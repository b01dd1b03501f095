//! Low-rank structure of the type-transition kernels.
//!
//! Row `t0` of `Ā(z)` only depends on the lag `ū_{t0}`, and column `t` only
//! through `ψ_t(s)` and one of a handful of basis functions. Grouping
//! sources into lag classes and targets into bases turns every `N̄ × N̄`
//! problem into one of size `min(#bases, #classes)`.

use std::collections::BTreeMap;

use crate::kernel::{first_basis, first_basis_avg, psi_column, retry_basis, retry_basis_avg};
use crate::model::{ScenarioConfig, TypeIndex};
use crate::scalar::{Dual, Scalar};

/// Truncation defect above which a warning is logged.
pub const DEFECT_WARN: f64 = 1e-8;
/// Truncation defect above which analyses refuse to run.
pub const DEFECT_ERROR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Basis {
    /// `e^{-q (u - y)^+}`
    First { u: f64 },
    /// Retry basis of a representative profile (one-based).
    Retry { profile: usize },
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Target {
    pub index: TypeIndex,
    pub offset: usize,
    pub basis: usize,
    pub class: usize,
}

/// Bases, lag classes and the reachable types of one scenario.
#[derive(Clone, Debug)]
pub(crate) struct Structure<'a> {
    pub config: &'a ScenarioConfig,
    pub q: f64,
    pub bases: Vec<Basis>,
    /// Types with nonzero probability, in flat order.
    pub targets: Vec<Target>,
    /// Lag `ū` of each class.
    pub class_lag: Vec<f64>,
}

fn lag_key(x: f64) -> u64 {
    // +0.0 and -0.0 are the same lag
    (x + 0.0).to_bits()
}

impl<'a> Structure<'a> {
    pub fn new(config: &'a ScenarioConfig) -> Self {
        let q = config.major_rate();
        let dims = config.dims();
        let mut bases = Vec::new();
        let mut first_ids: BTreeMap<u64, usize> = BTreeMap::new();
        let mut retry_ids: BTreeMap<Vec<(u64, u64)>, usize> = BTreeMap::new();
        let mut lags: BTreeMap<u64, f64> = BTreeMap::new();
        let mut pending = Vec::new();

        for t in dims.iter() {
            let prof = config.profile(t.profile - 1);
            let weight = prof.probability() * config.prob_of(t);
            if weight == 0.0 || (t.attempt >= 2 && q == 0.0) {
                continue;
            }
            let basis = if t.attempt == 1 {
                // without major traffic every first-attempt basis is 1
                let key = if q == 0.0 { 0 } else { config.gap_of(t).to_bits() };
                *first_ids.entry(key).or_insert_with(|| {
                    bases.push(Basis::First { u: config.gap_of(t) });
                    bases.len() - 1
                })
            } else {
                let g = prof.gaps();
                let mut key: Vec<(u64, u64)> = g
                    .gap_row(0)
                    .iter()
                    .zip(g.prob_row(0))
                    .map(|(u, p)| (u.to_bits(), p.to_bits()))
                    .collect();
                key.sort_unstable();
                *retry_ids.entry(key).or_insert_with(|| {
                    bases.push(Basis::Retry { profile: t.profile });
                    bases.len() - 1
                })
            };
            let lag = config.lag_of(t);
            lags.insert(lag_key(lag), lag);
            pending.push((t, basis, lag));
        }

        let class_lag: Vec<f64> = lags.values().copied().collect();
        let class_of: BTreeMap<u64, usize> = lags.keys().enumerate().map(|(i, k)| (*k, i)).collect();
        let targets = pending
            .into_iter()
            .map(|(t, basis, lag)| Target {
                index: t,
                offset: dims.offset(t),
                basis,
                class: class_of[&lag_key(lag)],
            })
            .collect();
        Structure { config, q, bases, targets, class_lag }
    }

    pub fn n_bases(&self) -> usize {
        self.bases.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_lag.len()
    }

    pub fn n_types(&self) -> usize {
        self.config.dims().count()
    }

    /// `ψ_t(s)` for every reachable target, aligned with `targets`.
    pub fn psi_all<T: Scalar>(&self, s: T) -> Vec<T> {
        let dims = self.config.dims();
        let mut by_offset = vec![T::zero(); dims.count()];
        for r in 1..=dims.profiles {
            for l in 1..=dims.gaps {
                for (j, v) in psi_column(self.config, l, r, s).into_iter().enumerate() {
                    by_offset[dims.offset(TypeIndex::new(j + 1, l, r))] = v;
                }
            }
        }
        self.targets.iter().map(|t| by_offset[t.offset]).collect()
    }

    pub fn basis_value<T: Scalar>(&self, b: usize, s: T, y: f64) -> T {
        match self.bases[b] {
            Basis::First { u } => T::from_real(first_basis(self.q, u, y)),
            Basis::Retry { profile } => retry_basis(self.config, profile, s, y),
        }
    }

    pub fn basis_avg<T: Scalar>(&self, b: usize, s: T, ubar: f64, lambda: f64) -> T {
        match self.bases[b] {
            Basis::First { u } => first_basis_avg(self.q, u, ubar, lambda),
            Basis::Retry { profile } => retry_basis_avg(self.config, profile, s, ubar, lambda),
        }
    }

    /// `Φ[c][b] = basis_b(s, ū_c)`.
    pub fn phi<T: Scalar>(&self, s: T) -> Vec<Vec<T>> {
        self.class_lag
            .iter()
            .map(|&y| (0..self.n_bases()).map(|b| self.basis_value(b, s, y)).collect())
            .collect()
    }

    /// Lag-averaged `Φ*[c][b]`.
    pub fn phi_avg<T: Scalar>(&self, s: T, lambda: f64) -> Vec<Vec<T>> {
        self.class_lag
            .iter()
            .map(|&y| (0..self.n_bases()).map(|b| self.basis_avg(b, s, y, lambda)).collect())
            .collect()
    }

    /// `G[b][c] = Σ ψ_t` over targets with basis `b` in lag class `c`.
    pub fn grouped_psi<T: Scalar>(&self, psi: &[T]) -> Vec<Vec<T>> {
        let mut g = vec![vec![T::zero(); self.n_classes()]; self.n_bases()];
        for (t, v) in self.targets.iter().zip(psi) {
            g[t.basis][t.class] = g[t.basis][t.class] + *v;
        }
        g
    }

    /// `σ_b = Σ_{t in b} ψ_t`.
    pub fn basis_weights<T: Scalar>(&self, psi: &[T]) -> Vec<T> {
        let mut w = vec![T::zero(); self.n_bases()];
        for (t, v) in self.targets.iter().zip(psi) {
            w[t.basis] = w[t.basis] + *v;
        }
        w
    }

    /// Row masses of `Φ σ` at `s = 0`: the probability that a queuer
    /// behind a class-`c` predecessor succeeds within the modelled attempts.
    pub fn row_masses(&self) -> Vec<f64> {
        let sigma = self.basis_weights(&self.psi_all(0.0));
        self.phi(0.0).iter().map(|row| dot(row, &sigma)).collect()
    }

    /// Same for the lag-averaged rows.
    pub fn row_masses_avg(&self, lambda: f64) -> Vec<f64> {
        let sigma = self.basis_weights(&self.psi_all(0.0));
        self.phi_avg(0.0, lambda).iter().map(|row| dot(row, &sigma)).collect()
    }

    /// `-d/ds Σ_b Φ[c][b](s) σ_b(s)` at `s = 0`, per class.
    pub fn row_partial_means(&self) -> Vec<f64> {
        let s = Dual::variable(0.0);
        let sigma = self.basis_weights(&self.psi_all(s));
        self.phi(s).iter().map(|row| -dot(row, &sigma).eps).collect()
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// Largest `1 - mass` over rows, clamped at zero.
pub(crate) fn max_defect(masses: &[f64]) -> f64 {
    masses.iter().map(|m| (1.0 - m).max(0.0)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::cond_service_lst_at;
    use crate::model::{BatchSizeLaw, DriverProfile, ImpatienceSpec};
    use num_complex::Complex64;

    fn config(alpha: f64, q: f64, n: usize) -> ScenarioConfig {
        let mk = |p, d, g: [f64; 2], pr: [f64; 2]| {
            DriverProfile::generated(
                p,
                d,
                ImpatienceSpec { base_gaps_s: g.to_vec(), base_probs: pr.to_vec(), alpha },
                n,
            )
            .unwrap()
        };
        ScenarioConfig::new(
            q,
            120.0,
            BatchSizeLaw::Deterministic(1),
            vec![mk(0.9, 4.0, [5.0, 6.0], [0.4, 0.6]), mk(0.1, 5.0, [8.0, 9.0], [0.5, 0.5])],
        )
        .unwrap()
    }

    #[test]
    fn factorized_entries_match_kernel() {
        let c = config(0.9, 600.0, 4);
        let st = Structure::new(&c);
        let s = Complex64::new(0.4, 0.3);
        let psi = st.psi_all(s);
        let phi = st.phi(s);
        for src in &st.targets {
            for (dst, p) in st.targets.iter().zip(&psi) {
                let direct = cond_service_lst_at(&c, dst.index, s, c.lag_of(src.index));
                let fact = phi[src.class][dst.basis] * p;
                assert!((direct - fact).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn dimensions() {
        let c = config(0.9, 600.0, 5);
        let st = Structure::new(&c);
        assert_eq!(st.n_bases(), 6);
        assert_eq!(st.n_classes(), 20);
        let c = config(1.0, 600.0, 5);
        assert_eq!(Structure::new(&c).n_classes(), 4);
        let c = config(0.9, 0.0, 5);
        let st = Structure::new(&c);
        assert_eq!(st.n_bases(), 1);
        assert_eq!(st.targets.len(), 4);
    }
}
