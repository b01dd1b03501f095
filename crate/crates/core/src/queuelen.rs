//! Stationary queue length of the minor road.
//!
//! The departure-epoch generating functions solve
//! `(zI - Ā(z)ᵀ) f(z) = (B(z) Ā*(z) - Ā(z))ᵀ f(0)` with `s = λ(1 - B(z))`.
//! Because `Ā(z)[t0, t] = Φ̃[c(t0), b(t)](s) ψ_t(s)`, every solution has the
//! form `f_t(z) = ψ_t(s) x_{b(t)}(z)` where `x` solves the small system
//!
//! ```text
//! (zI - H(z)) x(z) = (B(z) H*⁰(z) - H⁰(z)) γ,      x(0) = γ,
//! ```
//!
//! with `H[b,b'] = Σ_c Φ̃[c,b](s) G[b',c](s)` and the superscript `0` meaning
//! that `G` is frozen at `z = 0`. The empty-queue probabilities are
//! `f_t(0) = ψ_t(λ) γ_{b(t)}`. `γ` is fixed by requiring `x` to be analytic
//! at every zero of `det(zI - H(z))` inside the unit disk, plus `X(1) = 1`.
//! The full determinant equals `z^{N̄-K}` times the reduced one, so those
//! `N̄ - K` roots sit at the origin.

use log::debug;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{AnalysisError, Result};
use crate::factor::{max_defect, Structure};
use crate::kernel::{cond_service_lst_at, lag_averaged_lst_at};
use crate::model::{BatchSizeLaw, ScenarioConfig};
use crate::saturation::{capacity, check_defect};

type C64 = Complex64;

const ROOT_MERGE_TOL: f64 = 1e-8;
const CONTOUR_RADIUS: f64 = 1.0 - 1e-8;
const CONTOUR_NODES: usize = 1 << 14;
const NULL_TOL: f64 = 1e-9;
const LOCAL_NODES: usize = 1 << 10;
const TAYLOR_NODES: usize = 64;
const FFT_POINTS: usize = 1 << 14;
const FFT_MAX_POINTS: usize = 1 << 20;
const ALIAS_TARGET: f64 = 1e-11;

/// Observation epoch of the queue length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Epoch {
    /// Just after a departure.
    Departure,
    /// A uniformly random time.
    Arbitrary,
}

impl std::str::FromStr for Epoch {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "departure" => Ok(Epoch::Departure),
            "arbitrary" => Ok(Epoch::Arbitrary),
            other => Err(format!("unknown epoch '{other}' (expected departure or arbitrary)")),
        }
    }
}

impl std::fmt::Display for Epoch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Epoch::Departure => "departure",
            Epoch::Arbitrary => "arbitrary",
        })
    }
}

/// `B(z) = Σ_n P(B = n) z^n`.
pub fn batch_pgf(law: &BatchSizeLaw, z: C64) -> C64 {
    law.pgf(z)
}

/// Dense `Ā(z)` and `Ā*(z)` over all `N̄` types, before renormalization.
/// Rows are predecessor types, columns the next driver's type.
pub fn a_matrices(config: &ScenarioConfig, z: C64) -> (DMatrix<C64>, DMatrix<C64>) {
    let lambda = config.batch_rate();
    let s = (C64::new(1.0, 0.0) - config.batch_size().pgf(z)) * lambda;
    let types: Vec<_> = config.dims().iter().collect();
    let n = types.len();
    let a = DMatrix::from_fn(n, n, |i, j| cond_service_lst_at(config, types[j], s, config.lag_of(types[i])));
    let a_star =
        DMatrix::from_fn(n, n, |i, j| lag_averaged_lst_at(config, types[j], s, config.lag_of(types[i]), lambda));
    (a, a_star)
}

/// Root of the reduced determinant with its multiplicity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Root {
    pub z: C64,
    pub multiplicity: usize,
}

/// Zeros of `det(zI - Ā(z)ᵀ)` in the closed unit disk.
#[derive(Clone, Debug)]
pub struct RootSet {
    /// Distinct roots including `z = 1`; the origin carries the structural
    /// multiplicity `N̄ - K` plus any reduced-system zeros there.
    pub roots: Vec<Root>,
    /// Dimension `K` of the reduced system.
    pub reduced_dim: usize,
    /// Number of types `N̄`.
    pub types: usize,
    /// Zeros inside `|z| = 1 - 1e-8` by the argument principle, full system.
    pub contour_count: usize,
}

impl RootSet {
    pub fn total_multiplicity(&self) -> usize {
        self.roots.iter().map(|r| r.multiplicity).sum()
    }
}

struct ZSystem {
    h: DMatrix<C64>,
    n: DMatrix<C64>,
    sigma: Vec<C64>,
}

/// Solved departure-epoch queue-length model.
pub struct QueueSolution<'a> {
    st: Structure<'a>,
    lambda: f64,
    law: BatchSizeLaw,
    mean_batch: f64,
    row_mass: Vec<f64>,
    row_mass_avg: Vec<f64>,
    /// `G[b][c]` at `z = 0`.
    g0: Vec<Vec<f64>>,
    psi0: Vec<f64>,
    gamma: Vec<f64>,
    empty: Vec<f64>,
    roots: RootSet,
    load: f64,
    defect: f64,
}

impl<'a> QueueSolution<'a> {
    /// Find the roots, solve for the empty-queue probabilities and fix the
    /// normalization. Fails with [`AnalysisError::Unstable`] when `ρ ≥ 1`.
    pub fn solve(config: &'a ScenarioConfig) -> Result<Self> {
        let lambda = config.batch_rate();
        if !(lambda > 0.0) {
            return Err(AnalysisError::OutOfRange("queue analysis needs a positive batch rate".into()));
        }
        let cap = capacity(config)?;
        let load = lambda * config.batch_size().mean() * cap.g;
        if load >= 1.0 {
            return Err(AnalysisError::Unstable { rho: load });
        }
        let st = Structure::new(config);
        let row_mass = st.row_masses();
        let row_mass_avg = st.row_masses_avg(lambda);
        let defect = max_defect(&row_mass).max(max_defect(&row_mass_avg));
        check_defect(defect, config.attempts())?;
        let psi0 = st.psi_all(lambda);
        let g0 = st.grouped_psi(&psi0);
        let k = st.n_bases();
        let mut sol = QueueSolution {
            st,
            lambda,
            law: config.batch_size().clone(),
            mean_batch: config.batch_size().mean(),
            row_mass,
            row_mass_avg,
            g0,
            psi0,
            gamma: vec![0.0; k],
            empty: Vec::new(),
            roots: RootSet { roots: Vec::new(), reduced_dim: k, types: 0, contour_count: 0 },
            load,
            defect,
        };
        sol.roots = sol.find_roots()?;
        let gamma = sol.null_direction()?;
        sol.set_gamma(gamma)?;
        Ok(sol)
    }

    pub fn roots(&self) -> &RootSet {
        &self.roots
    }

    /// `ρ = λ E[B] g`.
    pub fn load(&self) -> f64 {
        self.load
    }

    pub fn defect(&self) -> f64 {
        self.defect
    }

    /// `f_t(0) = P(X = 0, next type = t)` over all `N̄` types, flat order.
    pub fn empty_probs(&self) -> &[f64] {
        &self.empty
    }

    fn s_of(&self, z: C64) -> C64 {
        (C64::new(1.0, 0.0) - self.law.pgf(z)) * self.lambda
    }

    fn scaled_phi(&self, s: C64) -> (Vec<Vec<C64>>, Vec<Vec<C64>>) {
        let mut phi = self.st.phi(s);
        let mut phi_avg = self.st.phi_avg(s, self.lambda);
        for (c, row) in phi.iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v /= self.row_mass[c];
            }
        }
        for (c, row) in phi_avg.iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v /= self.row_mass_avg[c];
            }
        }
        (phi, phi_avg)
    }

    fn h_only(&self, z: C64) -> DMatrix<C64> {
        let s = self.s_of(z);
        let psi = self.st.psi_all(s);
        let g = self.st.grouped_psi(&psi);
        let phi = self.st.phi(s);
        let k = self.st.n_bases();
        let c = self.st.n_classes();
        DMatrix::from_fn(k, k, |b, bp| (0..c).map(|ci| phi[ci][b] / self.row_mass[ci] * g[bp][ci]).sum())
    }

    fn system(&self, z: C64) -> ZSystem {
        let s = self.s_of(z);
        let bz = self.law.pgf(z);
        let psi = self.st.psi_all(s);
        let g = self.st.grouped_psi(&psi);
        let sigma = self.st.basis_weights(&psi);
        let (phi, phi_avg) = self.scaled_phi(s);
        let k = self.st.n_bases();
        let c = self.st.n_classes();
        let h = DMatrix::from_fn(k, k, |b, bp| (0..c).map(|ci| phi[ci][b] * g[bp][ci]).sum());
        let n = DMatrix::from_fn(k, k, |b, bp| {
            (0..c)
                .map(|ci| (phi_avg[ci][b] * bz - phi[ci][b]) * self.g0[bp][ci])
                .sum()
        });
        ZSystem { h, n, sigma }
    }

    fn det(&self, z: C64) -> C64 {
        let k = self.st.n_bases();
        (DMatrix::identity(k, k) * z - self.h_only(z)).determinant()
    }

    /// Reduced state vector `x(z)` for a given `γ`.
    fn x_of(&self, z: C64, gamma: &[f64]) -> Option<(Vec<C64>, Vec<C64>)> {
        let k = self.st.n_bases();
        if z.norm() == 0.0 {
            let sigma = self.st.basis_weights(&self.st.psi_all(C64::new(self.lambda, 0.0)));
            return Some((gamma.iter().map(|g| C64::new(*g, 0.0)).collect(), sigma));
        }
        let sys = self.system(z);
        let gv = DVector::from_iterator(k, gamma.iter().map(|g| C64::new(*g, 0.0)));
        let rhs = &sys.n * gv;
        let a = DMatrix::identity(k, k) * z - sys.h;
        let x = a.lu().solve(&rhs)?;
        Some((x.iter().copied().collect(), sys.sigma))
    }

    fn pgf_raw(&self, z: C64, gamma: &[f64]) -> C64 {
        match self.x_of(z, gamma) {
            Some((x, sigma)) if x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) => {
                x.iter().zip(&sigma).map(|(a, b)| a * b).sum()
            }
            _ => self.circle_average(z, gamma),
        }
    }

    /// Mean-value average over a small circle, for points at (or extremely
    /// close to) a removable singularity.
    fn circle_average(&self, z: C64, gamma: &[f64]) -> C64 {
        let radius = 1e-4;
        let m = 8;
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..m {
            let w = z + C64::from_polar(radius, 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / m as f64);
            if let Some((x, sigma)) = self.x_of(w, gamma) {
                acc += x.iter().zip(&sigma).map(|(a, b)| a * b).sum::<C64>();
            }
        }
        acc / m as f64
    }

    fn near_root(&self, z: C64) -> bool {
        self.roots
            .roots
            .iter()
            .any(|r| r.z.norm() > 0.0 && (r.z - C64::new(1.0, 0.0)).norm() > 1e-12 && (r.z - z).norm() < 1e-6)
    }

    /// Departure-epoch PGF `X(z) = Σ_t f_t(z)` for `|z| ≤ 1`.
    pub fn pgf(&self, z: C64) -> C64 {
        if (z - C64::new(1.0, 0.0)).norm() < 1e-12 {
            return C64::new(1.0, 0.0);
        }
        if self.near_root(z) {
            return self.circle_average(z, &self.gamma);
        }
        self.pgf_raw(z, &self.gamma)
    }

    /// PGF at the chosen epoch. Arbitrary epochs use
    /// `X(z) E[B] (1 - z) / (1 - B(z))`.
    pub fn pgf_at(&self, z: C64, epoch: Epoch) -> C64 {
        let x = self.pgf(z);
        match epoch {
            Epoch::Departure => x,
            Epoch::Arbitrary => {
                let one = C64::new(1.0, 0.0);
                if (z - one).norm() < 1e-12 {
                    return one;
                }
                x * self.mean_batch * (one - z) / (one - self.law.pgf(z))
            }
        }
    }

    /// Per-type generating functions `f_t(z)` in flat order.
    pub fn type_pgfs(&self, z: C64) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.st.n_types()];
        let psi = self.st.psi_all(self.s_of(z));
        if let Some((x, _)) = self.x_of(z, &self.gamma) {
            for (t, p) in self.st.targets.iter().zip(&psi) {
                out[t.offset] = p * x[t.basis];
            }
        }
        out
    }

    /// Stationary type law `P(J = t) = f_t(1)`, as a limit from inside.
    pub fn type_distribution(&self) -> Vec<f64> {
        let n = self.st.n_types();
        let columns: Vec<Vec<f64>> = richardson_points(1e-2, 7)
            .iter()
            .map(|h| self.type_pgfs(C64::new(1.0 - h, 0.0)).iter().map(|v| v.re).collect())
            .collect();
        (0..n)
            .map(|i| {
                let seq: Vec<f64> = columns.iter().map(|c| c[i]).collect();
                richardson(&seq, 1)
            })
            .collect()
    }

    fn find_roots(&self) -> Result<RootSet> {
        let k = self.st.n_bases();
        let n_types = self.st.n_types();
        let reduced_count = winding_number(|z| self.det(z), C64::new(0.0, 0.0), CONTOUR_RADIUS, CONTOUR_NODES)?;
        if reduced_count + 1 != k {
            return Err(AnalysisError::RootCount {
                found: reduced_count,
                expected: k - 1,
                detail: format!("reduced determinant of dimension {k} winds {reduced_count} times"),
            });
        }
        let count = |roots: &[Root], zero: usize| zero + roots.iter().map(|r| r.multiplicity).sum::<usize>();
        let mut roots = self.branch_roots(k);
        self.assign_multiplicities(&mut roots)?;
        let mut zero_mult = self.zero_multiplicity(&roots)?;
        if count(&roots, zero_mult) != reduced_count {
            debug!("branch iteration found {} of {reduced_count} interior roots; grid search", count(&roots, zero_mult));
            self.grid_roots(&mut roots, zero_mult, reduced_count);
            self.assign_multiplicities(&mut roots)?;
            zero_mult = self.zero_multiplicity(&roots)?;
        }
        let found = count(&roots, zero_mult);
        if found != reduced_count {
            return Err(AnalysisError::RootCount {
                found: found + n_types - k,
                expected: reduced_count + n_types - k,
                detail: format!(
                    "{zero_mult} at the origin, nonzero roots {:?}",
                    roots.iter().map(|r| (r.z, r.multiplicity)).collect::<Vec<_>>()
                ),
            });
        }
        let mut all = Vec::with_capacity(roots.len() + 2);
        all.push(Root { z: C64::new(0.0, 0.0), multiplicity: zero_mult + n_types - k });
        all.extend(roots);
        all.push(Root { z: C64::new(1.0, 0.0), multiplicity: 1 });
        all.retain(|r| r.multiplicity > 0);
        Ok(RootSet { roots: all, reduced_dim: k, types: n_types, contour_count: reduced_count + n_types - k })
    }

    /// Zeros of the reduced determinant at the origin, counted on a circle
    /// that excludes every nonzero root.
    fn zero_multiplicity(&self, roots: &[Root]) -> Result<usize> {
        let nearest = roots.iter().map(|r| r.z.norm()).fold(1.0, f64::min);
        let radius = (0.5 * nearest).min(0.1);
        winding_number(|z| self.det(z), C64::new(0.0, 0.0), radius, LOCAL_NODES)
    }

    /// Algebraic multiplicity of each nonzero root from a local winding count.
    fn assign_multiplicities(&self, roots: &mut [Root]) -> Result<()> {
        let zs: Vec<C64> = roots.iter().map(|r| r.z).collect();
        for (i, root) in roots.iter_mut().enumerate() {
            let mut sep = root.z.norm().min((root.z - 1.0).norm()).min(CONTOUR_RADIUS - root.z.norm());
            for (j, z) in zs.iter().enumerate() {
                if j != i {
                    sep = sep.min((root.z - z).norm());
                }
            }
            let radius = (0.4 * sep).min(1e-3);
            root.multiplicity = winding_number(|z| self.det(z), root.z, radius, LOCAL_NODES)?;
        }
        Ok(())
    }

    /// Fixed-point iteration `z ← μ_j(H(z))` along each eigenvalue branch.
    fn branch_roots(&self, k: usize) -> Vec<Root> {
        let start = match eigenvalues(&self.h_only(C64::new(0.0, 0.0))) {
            Some(e) => e,
            None => return Vec::new(),
        };
        let mut out: Vec<Root> = Vec::new();
        for mu0 in start.into_iter().take(k) {
            let mut mu = mu0;
            let mut z = C64::new(0.0, 0.0);
            let mut converged = false;
            for _ in 0..5000 {
                let z_next = mu;
                if z_next.norm() > 1.0 + 1e-6 {
                    break;
                }
                let eig = match eigenvalues(&self.h_only(z_next)) {
                    Some(e) => e,
                    None => break,
                };
                let next_mu = *eig
                    .iter()
                    .min_by(|a, b| (*a - mu).norm().total_cmp(&(*b - mu).norm()))
                    .expect("nonempty");
                z = z_next;
                mu = next_mu;
                if (mu - z).norm() < 1e-13 {
                    converged = true;
                    break;
                }
            }
            if !converged && (mu - z).norm() > 1e-6 {
                continue;
            }
            let z = self.polish(mu);
            self.push_root(&mut out, z);
        }
        out
    }

    fn polish(&self, mut z: C64) -> C64 {
        for _ in 0..50 {
            let h = 1e-7 * z.norm().max(1e-2);
            let f = self.det(z);
            let df = (self.det(z + h) - self.det(z - h)) / (2.0 * h);
            if df.norm() == 0.0 || !df.re.is_finite() {
                break;
            }
            let step = f / df;
            z -= step;
            if step.norm() < 1e-15 {
                break;
            }
        }
        z
    }

    /// Record an interior nonzero root unless it duplicates one already found.
    fn push_root(&self, out: &mut Vec<Root>, z: C64) -> bool {
        if z.norm() < 1e-9 || (z - C64::new(1.0, 0.0)).norm() < 1e-7 || z.norm() >= CONTOUR_RADIUS {
            return false;
        }
        if out.iter().any(|r| (r.z - z).norm() < ROOT_MERGE_TOL) {
            return false;
        }
        out.push(Root { z, multiplicity: 1 });
        true
    }

    /// Newton's method on the deflated determinant from a polar grid.
    fn grid_roots(&self, roots: &mut Vec<Root>, zero_mult: usize, target: usize) {
        for radius in [0.05, 0.2, 0.4, 0.6, 0.8, 0.9, 0.97, 0.995] {
            for a in 0..24 {
                let found = zero_mult + roots.iter().map(|r| r.multiplicity).sum::<usize>();
                if found >= target {
                    return;
                }
                let mut z = C64::from_polar(radius, 2.0 * std::f64::consts::PI * (a as f64 + 0.25) / 24.0);
                let deflated = |w: C64, roots: &[Root]| {
                    let mut f = self.det(w) / (w - 1.0);
                    for _ in 0..zero_mult {
                        f /= w;
                    }
                    for r in roots {
                        for _ in 0..r.multiplicity {
                            f /= w - r.z;
                        }
                    }
                    f
                };
                for _ in 0..100 {
                    let h = 1e-7;
                    let f = deflated(z, roots);
                    let df = (deflated(z + h, roots) - deflated(z - h, roots)) / (2.0 * h);
                    if df.norm() == 0.0 || !f.re.is_finite() {
                        break;
                    }
                    let step = f / df;
                    z -= step;
                    if step.norm() < 1e-14 || z.norm() > 1.5 {
                        break;
                    }
                }
                if self.det(z).norm() < 1e-10 {
                    let z = self.polish(z);
                    self.push_root(roots, z);
                }
            }
        }
    }

    /// `γ` up to scale from the analyticity conditions at every interior root.
    fn null_direction(&self) -> Result<Vec<f64>> {
        let k = self.st.n_bases();
        if k == 1 {
            return Ok(vec![1.0]);
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for root in &self.roots.roots {
            if (root.z - C64::new(1.0, 0.0)).norm() < 1e-12 {
                continue;
            }
            // the origin also carries the structural zeros of the full system
            let mult = if root.z.norm() == 0.0 { root.multiplicity + k - self.roots.types } else { root.multiplicity };
            if mult == 0 {
                continue;
            }
            for row in self.root_conditions(root.z, mult)? {
                let norm = row.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                if norm == 0.0 {
                    continue;
                }
                rows.push(row.iter().map(|v| v.re / norm).collect());
                if row.iter().any(|v| v.im.abs() > 1e-14 * norm) {
                    rows.push(row.iter().map(|v| v.im / norm).collect());
                }
            }
        }
        if rows.is_empty() {
            return Err(AnalysisError::RankDeficient { deficiency: k - 1, detail: "no root conditions".into() });
        }
        let m = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
        // pad to at least k rows so the SVD exposes all right singular vectors
        let m = if m.nrows() < k { m.resize_vertically(k, 0.0) } else { m };
        let svd = m.svd(false, true);
        let v_t = svd.v_t.ok_or_else(|| AnalysisError::Singular("SVD of root conditions failed".into()))?;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|a, b| svd.singular_values[*a].total_cmp(&svd.singular_values[*b]));
        let smax = svd.singular_values[order[k - 1]];
        let deficient = order.iter().filter(|i| svd.singular_values[**i] <= 1e-9 * smax).count();
        if deficient != 1 {
            return Err(AnalysisError::RankDeficient {
                deficiency: deficient.saturating_sub(1),
                detail: format!(
                    "root conditions have {} near-zero singular values out of {k}; roots {:?}",
                    deficient,
                    self.roots.roots.iter().map(|r| (r.z, r.multiplicity)).collect::<Vec<_>>()
                ),
            });
        }
        Ok(v_t.row(order[0]).iter().copied().collect())
    }

    /// Linear conditions on `γ` making `x(z)` analytic at a root `z0` of
    /// algebraic multiplicity `mult`.
    ///
    /// With Taylor expansions `M(z) = Σ M_j (z-z0)^j` of `zI - H(z)` and
    /// `R(z) = Σ R_j (z-z0)^j` of the right-hand side matrix, `x` is analytic
    /// iff the block-Toeplitz system `Σ_{i≤j} M_i x_{j-i} = R_j γ` is
    /// solvable. At the origin `x_0 = γ` is known and moves to the right.
    fn root_conditions(&self, z0: C64, mult: usize) -> Result<Vec<Vec<C64>>> {
        let k = self.st.n_bases();
        let at_origin = z0.norm() == 0.0;
        let m0 = DMatrix::identity(k, k) * z0 - self.h_only(z0);
        let geometric = null_dim(&m0);
        if geometric == 0 || geometric > mult {
            return Err(AnalysisError::RootCount {
                found: geometric,
                expected: mult,
                detail: format!("root {z0} of multiplicity {mult} has a {geometric}-dimensional null space"),
            });
        }
        // the pole order of the inverse is at most the longest Jordan chain
        let len = mult + 1 - geometric;
        let first = usize::from(at_origin);
        let (m_coef, r_coef) = self.taylor(z0, len + first);
        let t = DMatrix::from_fn(len * k, len * k, |row, col| {
            let (jr, jc) = (row / k, col / k);
            if jc > jr {
                C64::new(0.0, 0.0)
            } else {
                m_coef[jr - jc][(row % k, col % k)]
            }
        });
        let rhs = DMatrix::from_fn(len * k, k, |row, col| {
            let j = row / k + first;
            let mut v = r_coef[j][(row % k, col)];
            if at_origin {
                v -= m_coef[j][(row % k, col)];
            }
            v
        });
        let conds = left_null_vectors(&t);
        Ok(conds
            .iter()
            .map(|w| (0..k).map(|c| (0..len * k).map(|r| w[r] * rhs[(r, c)]).sum()).collect())
            .collect())
    }

    /// Taylor coefficients of `zI - H(z)` and of the right-hand side matrix
    /// about `z0`, orders `0..count`, by the trapezoidal Cauchy integral.
    fn taylor(&self, z0: C64, count: usize) -> (Vec<DMatrix<C64>>, Vec<DMatrix<C64>>) {
        let k = self.st.n_bases();
        let exact = self.system(z0);
        let mut m_coef = vec![DMatrix::identity(k, k) * z0 - exact.h];
        let mut r_coef = vec![exact.n];
        if count <= 1 {
            return (m_coef, r_coef);
        }
        let radius = match self.law {
            BatchSizeLaw::Geometric(p) if p < 1.0 => (0.5 * (1.0 / (1.0 - p) - z0.norm())).min(0.5),
            _ => 0.5,
        };
        let two_pi = 2.0 * std::f64::consts::PI;
        let samples: Vec<(DMatrix<C64>, DMatrix<C64>)> = (0..TAYLOR_NODES)
            .map(|n| {
                let z = z0 + C64::from_polar(radius, two_pi * n as f64 / TAYLOR_NODES as f64);
                let sys = self.system(z);
                (DMatrix::identity(k, k) * z - sys.h, sys.n)
            })
            .collect();
        for j in 1..count {
            let scale = 1.0 / (TAYLOR_NODES as f64 * radius.powi(j as i32));
            let mut m = DMatrix::zeros(k, k);
            let mut r = DMatrix::zeros(k, k);
            for (n, (ms, rs)) in samples.iter().enumerate() {
                let phase = C64::from_polar(scale, -two_pi * ((j * n) % TAYLOR_NODES) as f64 / TAYLOR_NODES as f64);
                m += ms * phase;
                r += rs * phase;
            }
            m_coef.push(m);
            r_coef.push(r);
        }
        (m_coef, r_coef)
    }

    fn set_gamma(&mut self, gamma: Vec<f64>) -> Result<()> {
        let total = richardson(
            &richardson_points(1e-2, 7)
                .iter()
                .map(|h| self.pgf_raw(C64::new(1.0 - h, 0.0), &gamma).re)
                .collect::<Vec<_>>(),
            1,
        );
        if !total.is_finite() || total.abs() < 1e-300 {
            return Err(AnalysisError::Singular(format!("cannot normalize: X(1) limit is {total}")));
        }
        let gamma: Vec<f64> = gamma.iter().map(|g| g / total).collect();
        let mut empty = vec![0.0; self.st.n_types()];
        for (t, p) in self.st.targets.iter().zip(&self.psi0) {
            let v = p * gamma[t.basis];
            if v < -1e-12 {
                return Err(AnalysisError::OutOfRange(format!(
                    "empty-queue probability of type {} is {v:.3e} < 0",
                    t.index
                )));
            }
            empty[t.offset] = v.max(0.0);
        }
        self.gamma = gamma;
        self.empty = empty;
        Ok(())
    }

    /// `P(X = n)` for `n = 0..=n_max` by FFT inversion on a circle of radius
    /// `r < 1`; aliasing error is at most `r^K`.
    pub fn pmf(&self, n_max: usize, epoch: Epoch) -> Result<Vec<f64>> {
        let mut points = FFT_POINTS;
        while points <= n_max {
            points *= 2;
        }
        loop {
            let coeffs = self.invert(points, epoch);
            // roundoff grows like r^{-n}, so only the lower half is trusted
            let head: f64 = coeffs.iter().take(points / 2).sum();
            if (1.0 - head).abs() < 1e-8 {
                return finish_pmf(coeffs, n_max);
            }
            if points >= FFT_MAX_POINTS {
                return Err(AnalysisError::Inversion(format!(
                    "probability mass up to n={} is {head} with {points} points",
                    points / 2
                )));
            }
            points *= 2;
        }
    }

    fn invert(&self, points: usize, epoch: Epoch) -> Vec<f64> {
        let radius = ALIAS_TARGET.powf(1.0 / points as f64);
        let half = points / 2;
        let mut buf = vec![C64::new(0.0, 0.0); points];
        let values: Vec<C64> = (0..=half)
            .map(|k| {
                let z = C64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / points as f64);
                self.pgf_at(z, epoch)
            })
            .collect();
        for (k, v) in values.iter().enumerate() {
            buf[k] = *v;
            if k > 0 && k < half {
                buf[points - k] = v.conj();
            }
        }
        FftPlanner::new().plan_fft_forward(points).process(&mut buf);
        let mut scale = 1.0 / points as f64;
        let inv_r = 1.0 / radius;
        buf.iter()
            .map(|v| {
                let p = v.re * scale;
                scale *= inv_r;
                p
            })
            .collect()
    }

    /// Smallest `n` such that `P(X ≤ n) ≥ 1 - tail`.
    pub fn adaptive_nmax(&self, tail: f64, epoch: Epoch) -> Result<usize> {
        let mut points = FFT_POINTS;
        loop {
            let coeffs = self.invert(points, epoch);
            let mut acc = 0.0;
            for (n, p) in coeffs.iter().take(points / 2).enumerate() {
                acc += p;
                if acc >= 1.0 - tail {
                    return Ok(n);
                }
            }
            if points >= FFT_MAX_POINTS {
                return Err(AnalysisError::Inversion(format!("mass {acc} below 1 - {tail} after n={}", points / 2)));
            }
            points *= 2;
        }
    }

    /// Mean queue length `X'(1)` by Richardson-extrapolated central
    /// differences on the real axis.
    pub fn mean(&self, epoch: Epoch) -> f64 {
        // keep the stencil well inside the analyticity radius beyond 1
        let h0 = 1e-3 * (10.0 * (1.0 - self.load)).min(1.0);
        let seq: Vec<f64> = richardson_points(h0, 5)
            .iter()
            .map(|h| {
                let up = self.pgf_at(C64::new(1.0 + h, 0.0), epoch).re;
                let down = self.pgf_at(C64::new(1.0 - h, 0.0), epoch).re;
                (up - down) / (2.0 * h)
            })
            .collect();
        richardson(&seq, 2)
    }

    /// Mean number of arrivals during one service, `E[A] = A'(1)` where
    /// `A(z) = G̃(λ(1 - B(z)))` is evaluated through `service`.
    pub fn mean_arrivals_per_service(&self, service: impl Fn(C64) -> C64) -> f64 {
        let seq: Vec<f64> = richardson_points(1e-3, 5)
            .iter()
            .map(|h| {
                let up = service(self.s_of(C64::new(1.0 + h, 0.0))).re;
                let down = service(self.s_of(C64::new(1.0 - h, 0.0))).re;
                (up - down) / (2.0 * h)
            })
            .collect();
        richardson(&seq, 2)
    }
}

fn finish_pmf(coeffs: Vec<f64>, n_max: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n_max + 1);
    for (n, p) in coeffs.into_iter().take(n_max + 1).enumerate() {
        if p < -1e-10 {
            return Err(AnalysisError::Inversion(format!("P(X={n}) = {p:.3e} is negative")));
        }
        out.push(p.max(0.0));
    }
    out.resize(n_max + 1, 0.0);
    let total: f64 = out.iter().sum();
    if total > 1.0 + 1e-8 {
        return Err(AnalysisError::Inversion(format!("probabilities sum to {total}")));
    }
    Ok(out)
}

fn richardson_points(h0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|m| h0 / f64::powi(2.0, m as i32)).collect()
}

/// Richardson extrapolation of a sequence computed at `h0 2^{-m}` whose
/// error expands in powers of `h^order`.
fn richardson(seq: &[f64], order: i32) -> f64 {
    let mut table = seq.to_vec();
    let base = f64::powi(2.0, order);
    let mut factor = base;
    for level in 1..seq.len() {
        for m in (level..seq.len()).rev() {
            table[m] = table[m] + (table[m] - table[m - 1]) / (factor - 1.0);
        }
        factor *= base;
    }
    table[seq.len() - 1]
}

/// Eigenvalues ordered by decreasing modulus.
fn eigenvalues(m: &DMatrix<C64>) -> Option<Vec<C64>> {
    let k = m.nrows();
    let mut e: Vec<C64> = if k == 1 {
        vec![m[(0, 0)]]
    } else {
        m.clone().try_schur(1e-15, 10_000)?.eigenvalues()?.iter().copied().collect()
    };
    e.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    Some(e)
}

fn null_dim<T: nalgebra::ComplexField<RealField = f64>>(m: &DMatrix<T>) -> usize {
    let sv = m.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return m.nrows();
    }
    sv.iter().filter(|s| **s <= NULL_TOL * smax).count()
}

/// Vectors `w` with `wᵀ m = 0` (transpose, not conjugate transpose).
fn left_null_vectors<T: nalgebra::ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    let svd = m.clone().svd(true, false);
    let u = match svd.u {
        Some(u) => u,
        None => return Vec::new(),
    };
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    (0..svd.singular_values.len())
        .filter(|i| svd.singular_values[*i] <= NULL_TOL * smax.max(1e-300))
        .map(|i| u.column(i).iter().map(|v| v.clone().conjugate()).collect())
        .collect()
}

/// Winding number of `f` around the origin along `|z| = radius`, with
/// adaptive refinement wherever the phase jumps by more than `π/4`.
pub(crate) fn winding_number(f: impl Fn(C64) -> C64, center: C64, radius: f64, nodes: usize) -> Result<usize> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let at = |theta: f64| f(center + C64::from_polar(radius, theta));
    let mut total = 0.0;
    let mut prev_theta = 0.0;
    let mut prev = at(0.0);
    for k in 1..=nodes {
        let theta = two_pi * k as f64 / nodes as f64;
        let cur = at(theta);
        total += refine_arg(&at, prev_theta, prev, theta, cur, 0)?;
        prev_theta = theta;
        prev = cur;
    }
    let turns = total / two_pi;
    let rounded = turns.round();
    if (turns - rounded).abs() > 1e-3 || rounded < 0.0 {
        return Err(AnalysisError::RootCount {
            found: 0,
            expected: 0,
            detail: format!("argument principle gave non-integer winding {turns}"),
        });
    }
    Ok(rounded as usize)
}

fn refine_arg(at: &impl Fn(f64) -> C64, t0: f64, f0: C64, t1: f64, f1: C64, depth: usize) -> Result<f64> {
    if f0.norm() == 0.0 || f1.norm() == 0.0 || !f0.re.is_finite() || !f1.re.is_finite() {
        return Err(AnalysisError::RootCount {
            found: 0,
            expected: 0,
            detail: format!("determinant vanishes or is not finite on the contour near angle {t0}"),
        });
    }
    let d = (f1 / f0).arg();
    if d.abs() <= std::f64::consts::FRAC_PI_4 || depth >= 60 {
        return Ok(d);
    }
    let tm = 0.5 * (t0 + t1);
    let fm = at(tm);
    Ok(refine_arg(at, t0, f0, tm, fm, depth + 1)? + refine_arg(at, tm, fm, t1, f1, depth + 1)?)
}

/// Roots of the full determinant in the closed unit disk.
pub fn find_unit_disk_roots(config: &ScenarioConfig) -> Result<RootSet> {
    Ok(QueueSolution::solve(config)?.roots.clone())
}

/// Empty-queue probabilities `f_t(0)` over all types, flat order.
pub fn solve_empty_probs(config: &ScenarioConfig) -> Result<Vec<f64>> {
    Ok(QueueSolution::solve(config)?.empty)
}

pub fn queue_pgf(config: &ScenarioConfig, z: C64) -> Result<C64> {
    Ok(QueueSolution::solve(config)?.pgf(z))
}

pub fn arbitrary_epoch_pgf(config: &ScenarioConfig, z: C64) -> Result<C64> {
    Ok(QueueSolution::solve(config)?.pgf_at(z, Epoch::Arbitrary))
}

pub fn queue_pmf(config: &ScenarioConfig, n_max: usize, epoch: Epoch) -> Result<Vec<f64>> {
    QueueSolution::solve(config)?.pmf(n_max, epoch)
}

pub fn mean_queue_length(config: &ScenarioConfig, epoch: Epoch) -> Result<f64> {
    Ok(QueueSolution::solve(config)?.mean(epoch))
}
