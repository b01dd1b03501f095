//! Capacity from the saturated customer-type chain.
//!
//! With the queue never empty, the type of the next departing driver is a
//! Markov chain whose transition matrix is `Ā(1)`. The mean service time
//! `g` under its stationary law gives the capacity `C = 3600 / g` veh/h.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{AnalysisError, Result};
use crate::factor::{max_defect, Structure};
pub use crate::factor::{DEFECT_ERROR, DEFECT_WARN};
use crate::kernel::cond_service_lst_at;
use crate::model::{check_limited_reuse, ScenarioConfig};

/// Stationary solution of the saturated type chain.
#[derive(Clone, Debug)]
pub struct SaturatedChain {
    /// Stationary law `π̂` over all `N̄` types, in flat order.
    stationary: Vec<f64>,
    /// Stationary mass of each distinct predecessor lag.
    class_weights: Vec<f64>,
    class_lags: Vec<f64>,
    /// Row mass before renormalization, per lag class.
    row_masses: Vec<f64>,
    row_partial_means: Vec<f64>,
    defect: f64,
}

impl SaturatedChain {
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Largest row defect before renormalization.
    pub fn defect(&self) -> f64 {
        self.defect
    }

    /// Distinct lags `ū` with their stationary probability.
    pub fn lag_distribution(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.class_lags.iter().copied().zip(self.class_weights.iter().copied())
    }
}

/// Dense `Ā(1)` before renormalization, `entry[t0][t] = G̃_t(0, ū_{t0})`.
/// Quadratic in `N̄`; meant for checks on small instances.
pub fn kernel_matrix(config: &ScenarioConfig) -> DMatrix<f64> {
    let dims = config.dims();
    let n = dims.count();
    let types: Vec<_> = dims.iter().collect();
    DMatrix::from_fn(n, n, |a, b| cond_service_lst_at(config, types[b], 0.0, config.lag_of(types[a])))
}

/// Solve the saturated chain. Rows are renormalized by their success mass;
/// the largest defect is recorded and checked against the thresholds.
pub fn build_saturated_chain(config: &ScenarioConfig) -> Result<SaturatedChain> {
    let st = Structure::new(config);
    let masses = st.row_masses();
    let defect = max_defect(&masses);
    check_defect(defect, config.attempts())?;

    let psi = st.psi_all(0.0);
    let g = st.grouped_psi(&psi);
    let sigma = st.basis_weights(&psi);
    let phi = st.phi(0.0);
    let k = st.n_bases();
    let c = st.n_classes();

    // H[b][b'] = Σ_c Φ̃[c][b] G[b'][c]; the chain satisfies κ = H κ
    let h = DMatrix::from_fn(k, k, |b, bp| (0..c).map(|ci| phi[ci][b] / masses[ci] * g[bp][ci]).sum());
    let kappa = stationary_vector(&h, &sigma)?;

    let stationary_targets: Vec<f64> = st.targets.iter().zip(&psi).map(|(t, p)| p * kappa[t.basis]).collect();
    let mut stationary = vec![0.0; st.n_types()];
    for (t, v) in st.targets.iter().zip(&stationary_targets) {
        stationary[t.offset] = v.max(0.0);
    }
    let class_weights: Vec<f64> = (0..c).map(|ci| (0..k).map(|b| g[b][ci] * kappa[b]).sum()).collect();
    Ok(SaturatedChain {
        stationary,
        class_weights,
        class_lags: st.class_lag.clone(),
        row_masses: masses,
        row_partial_means: st.row_partial_means(),
        defect,
    })
}

/// Largest row defect `1 - Σ_t G̃_t(0, ū)` over predecessor lags. Unlike
/// [`build_saturated_chain`] this never fails.
pub fn truncation_defect(config: &ScenarioConfig) -> f64 {
    max_defect(&Structure::new(config).row_masses())
}

pub(crate) fn check_defect(defect: f64, attempts: usize) -> Result<()> {
    if defect > DEFECT_ERROR {
        return Err(AnalysisError::DefectTooLarge { defect, limit: DEFECT_ERROR, attempts });
    }
    if defect > DEFECT_WARN {
        warn!("truncation defect {defect:.3e} at N={attempts}; rows renormalized");
    }
    Ok(())
}

/// Fixed point of `κ = H κ` normalized by `σᵀ κ = 1`.
fn stationary_vector(h: &DMatrix<f64>, sigma: &[f64]) -> Result<Vec<f64>> {
    let k = h.nrows();
    let mut a = DMatrix::identity(k, k) - h;
    let mut rhs = DVector::zeros(k);
    // replace the last balance equation by the normalization
    for b in 0..k {
        a[(k - 1, b)] = sigma[b];
    }
    rhs[k - 1] = 1.0;
    if let Some(x) = a.clone().lu().solve(&rhs) {
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x.iter().copied().collect());
        }
    }
    // singular after replacement: fall back to the SVD null vector
    let svd = (DMatrix::identity(k, k) - h).svd(true, true);
    let v_t = svd.v_t.ok_or_else(|| AnalysisError::Singular("SVD failed on the saturated chain".into()))?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("nonempty");
    let v: Vec<f64> = v_t.row(imin).iter().copied().collect();
    let z: f64 = v.iter().zip(sigma).map(|(a, b)| a * b).sum();
    if z.abs() < 1e-300 {
        return Err(AnalysisError::Singular("saturated chain has no normalizable fixed point".into()));
    }
    Ok(v.iter().map(|x| x / z).collect())
}

/// Mean queuer service time `g` in seconds: the stationary average of the
/// renormalized conditional mean service time.
pub fn mean_service_saturated(chain: &SaturatedChain) -> f64 {
    chain
        .class_weights
        .iter()
        .zip(&chain.row_partial_means)
        .zip(&chain.row_masses)
        .map(|((w, m), rho)| w * m / rho)
        .sum()
}

/// Capacity of the minor road at one major-road flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapacityResult {
    pub major_flow_veh_h: f64,
    /// Mean queuer service time in seconds.
    pub g: f64,
    /// Capacity in veh/h.
    pub capacity: f64,
    pub defect: f64,
    /// True when the limited gap-reuse condition holds and the value is
    /// exact; otherwise it is a slight underestimate.
    pub exact: bool,
}

pub fn capacity(config: &ScenarioConfig) -> Result<CapacityResult> {
    let chain = build_saturated_chain(config)?;
    let g = mean_service_saturated(&chain);
    if !(g > 0.0) || !g.is_finite() {
        return Err(AnalysisError::Singular(format!("mean service time {g} is not positive")));
    }
    Ok(CapacityResult {
        major_flow_veh_h: config.major_flow_veh_h(),
        g,
        capacity: 3600.0 / g,
        defect: chain.defect,
        exact: check_limited_reuse(config).holds,
    })
}

/// Capacity at each major-road flow (veh/h), evaluated in parallel.
pub fn capacity_sweep(config: &ScenarioConfig, flows_veh_h: &[f64]) -> Result<Vec<CapacityResult>> {
    if let Some(q) = flows_veh_h.iter().find(|q| !(**q >= 0.0)) {
        return Err(AnalysisError::OutOfRange(format!("major flow {q} must be nonnegative")));
    }
    flows_veh_h
        .par_iter()
        .map(|&q| capacity(&config.with_major_flow(q)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BatchSizeLaw, DriverProfile, ImpatienceSpec};

    fn example(alpha: f64, q: f64, gaps2: [f64; 2], n: usize) -> ScenarioConfig {
        let mk = |p, d, g: [f64; 2], pr: [f64; 2]| {
            DriverProfile::generated(p, d, ImpatienceSpec { base_gaps_s: g.to_vec(), base_probs: pr.to_vec(), alpha }, n)
                .unwrap()
        };
        ScenarioConfig::new(
            q,
            100.0,
            BatchSizeLaw::Deterministic(1),
            vec![mk(0.9, 4.0, [5.0, 6.0], [0.4, 0.6]), mk(0.1, 5.0, gaps2, [0.5, 0.5])],
        )
        .unwrap()
    }

    #[test]
    fn no_major_traffic_gives_mean_merge_time() {
        let c = example(0.9, 0.0, [8.0, 9.0], 10);
        let r = capacity(&c).unwrap();
        assert!((r.g - 4.1).abs() < 1e-12);
        assert!((r.capacity - 3600.0 / 4.1).abs() < 1e-9);
    }

    #[test]
    fn stationary_law_sums_to_one() {
        let c = example(0.9, 750.0, [10.0, 12.0], 60);
        let chain = build_saturated_chain(&c).unwrap();
        let total: f64 = chain.stationary().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let w: f64 = chain.lag_distribution().map(|(_, w)| w).sum();
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_defect_is_rejected() {
        let c = example(1.0, 1000.0, [10.0, 12.0], 20);
        assert!(matches!(build_saturated_chain(&c), Err(AnalysisError::DefectTooLarge { .. })));
    }
}
