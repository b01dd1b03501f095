//! Scenario definition: major/minor road rates, batch sizes, driver profiles
//! and their per-attempt critical-gap tables.
//!
//! Rates are given in vehicles (or batches) per hour at the document level
//! and exposed per second through accessors; gaps and merge times are in
//! seconds throughout.

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, ConfigError};
use crate::scalar::Scalar;

/// Absolute tolerance on every probability-sum invariant.
pub const PROB_SUM_TOL: f64 = 1e-12;

const SECONDS_PER_HOUR: f64 = 3600.0;

/// Law of the platoon size `B` on the minor road. Support starts at 1.
#[derive(Clone, Debug, PartialEq)]
pub enum BatchSizeLaw {
    Deterministic(u32),
    /// `P(B = n) = p (1 - p)^(n - 1)` for `n >= 1`.
    Geometric(f64),
    /// `pmf[n - 1] = P(B = n)`.
    Explicit(Vec<f64>),
}

impl BatchSizeLaw {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            BatchSizeLaw::Deterministic(n) if *n == 0 => {
                Err("deterministic batch size must be at least 1".into())
            }
            BatchSizeLaw::Deterministic(_) => Ok(()),
            BatchSizeLaw::Geometric(p) if !(*p > 0.0 && *p <= 1.0) => {
                Err(format!("geometric success probability {p} outside (0, 1]"))
            }
            BatchSizeLaw::Geometric(_) => Ok(()),
            BatchSizeLaw::Explicit(pmf) => {
                if pmf.is_empty() {
                    return Err("batch size pmf is empty".into());
                }
                if let Some(x) = pmf.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
                    return Err(format!("batch size pmf has invalid entry {x}"));
                }
                let total: f64 = pmf.iter().sum();
                if (total - 1.0).abs() > PROB_SUM_TOL {
                    return Err(format!("batch size pmf sums to {total}"));
                }
                Ok(())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            BatchSizeLaw::Deterministic(n) => *n as f64,
            BatchSizeLaw::Geometric(p) => 1.0 / p,
            BatchSizeLaw::Explicit(pmf) => {
                pmf.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
            }
        }
    }

    /// `P(B = n)`.
    pub fn pmf(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        match self {
            BatchSizeLaw::Deterministic(m) => f64::from(u8::from(n == *m as usize)),
            BatchSizeLaw::Geometric(p) => p * (1.0 - p).powi(n as i32 - 1),
            BatchSizeLaw::Explicit(pmf) => pmf.get(n - 1).copied().unwrap_or(0.0),
        }
    }

    /// Probability generating function `B(z) = E[z^B]`.
    pub fn pgf<T: Scalar>(&self, z: T) -> T {
        match self {
            BatchSizeLaw::Deterministic(n) => z.powi(*n as usize),
            BatchSizeLaw::Geometric(p) => {
                z.scale(*p) / (T::one() - z.scale(1.0 - p))
            }
            BatchSizeLaw::Explicit(pmf) => {
                // Horner on z * (pmf[0] + pmf[1] z + ...)
                let mut acc = T::zero();
                for &c in pmf.iter().rev() {
                    acc = acc * z + T::from_real(c);
                }
                acc * z
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self {
            BatchSizeLaw::Deterministic(n) => *n,
            BatchSizeLaw::Geometric(p) => {
                if *p >= 1.0 {
                    return 1;
                }
                // inversion: smallest n with 1 - (1-p)^n >= U
                let u: f64 = rng.gen();
                let n = ((1.0 - u).ln() / (1.0 - p).ln()).ceil();
                n.max(1.0) as u32
            }
            BatchSizeLaw::Explicit(pmf) => sample_index(pmf, rng) as u32 + 1,
        }
    }
}

/// Draw an index from a discrete distribution by inversion.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative sum; take the last positive entry
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Critical gaps `u[i][k]` and their probabilities `p[i][k]` for one profile,
/// indexed by attempt (rows) and gap value (columns), both zero-based.
#[derive(Clone, Debug, PartialEq)]
pub struct GapTable {
    u: Vec<Vec<f64>>,
    p: Vec<Vec<f64>>,
}

impl GapTable {
    pub fn new(u: Vec<Vec<f64>>, p: Vec<Vec<f64>>) -> Result<Self, ConfigError> {
        let table = GapTable { u, p };
        table.check_shape("")?;
        Ok(table)
    }

    fn check_shape(&self, path: &str) -> Result<(), ConfigError> {
        if self.u.is_empty() {
            return Err(ConfigError::invalid(format!("{path}u"), "gap table has no rows"));
        }
        if self.u.len() != self.p.len() {
            return Err(ConfigError::invalid(
                format!("{path}p"),
                format!("{} probability rows for {} gap rows", self.p.len(), self.u.len()),
            ));
        }
        let m = self.u[0].len();
        for (i, (ur, pr)) in self.u.iter().zip(&self.p).enumerate() {
            if ur.len() != m || pr.len() != m {
                return Err(ConfigError::invalid(
                    format!("{path}u[{i}]"),
                    format!("row has {} gaps and {} probabilities, expected {m}", ur.len(), pr.len()),
                ));
            }
        }
        Ok(())
    }

    pub fn attempts(&self) -> usize {
        self.u.len()
    }

    pub fn gaps_per_attempt(&self) -> usize {
        self.u[0].len()
    }

    /// Critical gap for zero-based attempt `i` and gap index `k`.
    pub fn gap(&self, i: usize, k: usize) -> f64 {
        self.u[i][k]
    }

    pub fn prob(&self, i: usize, k: usize) -> f64 {
        self.p[i][k]
    }

    pub fn gap_row(&self, i: usize) -> &[f64] {
        &self.u[i]
    }

    pub fn prob_row(&self, i: usize) -> &[f64] {
        &self.p[i]
    }

    pub fn gaps(&self) -> &[Vec<f64>] {
        &self.u
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.p
    }
}

/// Parameters of the geometric impatience recursion
/// `u[i+1][k] = alpha (u[i][k] - merge) + merge`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpatienceSpec {
    pub base_gaps_s: Vec<f64>,
    pub base_probs: Vec<f64>,
    pub alpha: f64,
}

/// Expand a first-attempt gap law into an `attempts × M` table under the
/// impatience recursion. Probabilities are attempt-independent.
pub fn generate_impatience_table(
    base_gaps: &[f64],
    base_probs: &[f64],
    alpha: f64,
    merge_time: f64,
    attempts: usize,
) -> Result<GapTable, ConfigError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(ConfigError::invalid("alpha", format!("impatience rate {alpha} outside (0, 1]")));
    }
    if attempts == 0 {
        return Err(ConfigError::invalid("attempts", "need at least one attempt"));
    }
    if base_gaps.len() != base_probs.len() || base_gaps.is_empty() {
        return Err(ConfigError::invalid(
            "base_probs",
            format!("{} gaps but {} probabilities", base_gaps.len(), base_probs.len()),
        ));
    }
    if let Some(&g) = base_gaps.iter().find(|&&g| g < merge_time) {
        return Err(ConfigError::invalid(
            "base_gaps_s",
            format!("critical gap {g} is below merge time {merge_time}"),
        ));
    }
    let mut u = Vec::with_capacity(attempts);
    u.push(base_gaps.to_vec());
    for i in 1..attempts {
        let next = if alpha == 1.0 {
            u[i - 1].clone()
        } else {
            u[i - 1].iter().map(|g| alpha * (g - merge_time) + merge_time).collect()
        };
        u.push(next);
    }
    let p = vec![base_probs.to_vec(); attempts];
    GapTable::new(u, p)
}

/// Consistent part of driver behaviour: share of traffic, merge time and the
/// gap table used at every attempt.
#[derive(Clone, Debug, PartialEq)]
pub struct DriverProfile {
    probability: f64,
    merge_time: f64,
    gaps: GapTable,
    generator: Option<ImpatienceSpec>,
}

impl DriverProfile {
    pub fn new(probability: f64, merge_time: f64, gaps: GapTable) -> Self {
        DriverProfile { probability, merge_time, gaps, generator: None }
    }

    pub fn generated(
        probability: f64,
        merge_time: f64,
        spec: ImpatienceSpec,
        attempts: usize,
    ) -> Result<Self, ConfigError> {
        let gaps = generate_impatience_table(
            &spec.base_gaps_s,
            &spec.base_probs,
            spec.alpha,
            merge_time,
            attempts,
        )?;
        Ok(DriverProfile { probability, merge_time, gaps, generator: Some(spec) })
    }

    pub fn probability(&self) -> f64 {
        self.probability
    }

    /// Merging time in seconds.
    pub fn merge_time(&self) -> f64 {
        self.merge_time
    }

    pub fn gaps(&self) -> &GapTable {
        &self.gaps
    }

    pub fn generator(&self) -> Option<&ImpatienceSpec> {
        self.generator.as_ref()
    }

    /// Lag `u[i][k] - merge_time` left to a queued successor.
    pub fn lag(&self, i: usize, k: usize) -> f64 {
        self.gaps.gap(i, k) - self.merge_time
    }
}

/// Customer type `(attempt, gap, profile)`, all one-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeIndex {
    pub attempt: usize,
    pub gap: usize,
    pub profile: usize,
}

impl TypeIndex {
    pub const fn new(attempt: usize, gap: usize, profile: usize) -> Self {
        TypeIndex { attempt, gap, profile }
    }
}

impl fmt::Display for TypeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.attempt, self.gap, self.profile)
    }
}

/// Dimensions `N × M × R` of the type space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TypeDims {
    pub attempts: usize,
    pub gaps: usize,
    pub profiles: usize,
}

impl TypeDims {
    pub fn count(&self) -> usize {
        self.attempts * self.gaps * self.profiles
    }

    /// One-based flat index `(i-1)MR + (k-1)R + r`.
    pub fn flatten(&self, t: TypeIndex) -> Result<usize, AnalysisError> {
        if t.attempt == 0
            || t.attempt > self.attempts
            || t.gap == 0
            || t.gap > self.gaps
            || t.profile == 0
            || t.profile > self.profiles
        {
            return Err(AnalysisError::IndexOutOfRange(format!(
                "type {t} outside {}x{}x{}",
                self.attempts, self.gaps, self.profiles
            )));
        }
        Ok(self.offset(t) + 1)
    }

    pub fn unflatten(&self, j: usize) -> Result<TypeIndex, AnalysisError> {
        if j == 0 || j > self.count() {
            return Err(AnalysisError::IndexOutOfRange(format!(
                "flat index {j} outside 1..={}",
                self.count()
            )));
        }
        Ok(self.from_offset(j - 1))
    }

    /// Zero-based array position; caller guarantees `t` is in range.
    pub fn offset(&self, t: TypeIndex) -> usize {
        (t.attempt - 1) * self.gaps * self.profiles + (t.gap - 1) * self.profiles + (t.profile - 1)
    }

    pub fn from_offset(&self, o: usize) -> TypeIndex {
        let mr = self.gaps * self.profiles;
        TypeIndex {
            attempt: o / mr + 1,
            gap: (o % mr) / self.profiles + 1,
            profile: o % self.profiles + 1,
        }
    }

    /// All types in flat order.
    pub fn iter(&self) -> impl Iterator<Item = TypeIndex> + '_ {
        (0..self.count()).map(move |o| self.from_offset(o))
    }
}

/// A fully validated model instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    major_flow_veh_h: f64,
    batch_rate_per_h: f64,
    batch_size: BatchSizeLaw,
    attempts: usize,
    gaps_per_attempt: usize,
    profiles: Vec<DriverProfile>,
}

impl ScenarioConfig {
    pub fn new(
        major_flow_veh_h: f64,
        batch_rate_per_h: f64,
        batch_size: BatchSizeLaw,
        profiles: Vec<DriverProfile>,
    ) -> Result<Self, ConfigError> {
        let attempts = profiles.first().map(|p| p.gaps.attempts()).unwrap_or(0);
        let gaps_per_attempt = profiles.first().map(|p| p.gaps.gaps_per_attempt()).unwrap_or(0);
        let config = ScenarioConfig {
            major_flow_veh_h,
            batch_rate_per_h,
            batch_size,
            attempts,
            gaps_per_attempt,
            profiles,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let doc: ConfigDoc = toml::from_str(text)?;
        doc.into_config()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigError::invalid(path.display().to_string(), format!("cannot read file: {e}"))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(&ConfigDoc::from_config(self))?)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.major_flow_veh_h >= 0.0) || !self.major_flow_veh_h.is_finite() {
            return Err(ConfigError::invalid(
                "major.flow_veh_per_hour",
                format!("flow {} must be finite and nonnegative", self.major_flow_veh_h),
            ));
        }
        if !(self.batch_rate_per_h >= 0.0) || !self.batch_rate_per_h.is_finite() {
            return Err(ConfigError::invalid(
                "minor.batch_rate_per_hour",
                format!("rate {} must be finite and nonnegative", self.batch_rate_per_h),
            ));
        }
        self.batch_size
            .validate()
            .map_err(|m| ConfigError::invalid("minor.batch_size", m))?;
        if self.profiles.is_empty() {
            return Err(ConfigError::invalid("profiles", "at least one driver profile is required"));
        }
        if self.attempts == 0 {
            return Err(ConfigError::invalid("attempts", "need at least one attempt"));
        }
        if self.gaps_per_attempt == 0 {
            return Err(ConfigError::invalid("gaps_per_attempt", "need at least one gap value"));
        }
        let total: f64 = self.profiles.iter().map(|p| p.probability).sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(ConfigError::invalid(
                "profiles",
                format!("profile probabilities sum to {}", round_for_display(total)),
            ));
        }
        for (r, prof) in self.profiles.iter().enumerate() {
            let path = format!("profiles[{r}]");
            if !(prof.probability > 0.0 && prof.probability <= 1.0) {
                return Err(ConfigError::invalid(
                    format!("{path}.probability"),
                    format!("probability {} outside (0, 1]", prof.probability),
                ));
            }
            if !(prof.merge_time > 0.0) || !prof.merge_time.is_finite() {
                return Err(ConfigError::invalid(
                    format!("{path}.merge_time_s"),
                    format!("merge time {} must be positive", prof.merge_time),
                ));
            }
            let gpath = format!("{path}.gaps.");
            prof.gaps.check_shape(&gpath)?;
            if prof.gaps.attempts() != self.attempts {
                return Err(ConfigError::invalid(
                    format!("{gpath}u"),
                    format!("{} attempt rows, expected {}", prof.gaps.attempts(), self.attempts),
                ));
            }
            if prof.gaps.gaps_per_attempt() != self.gaps_per_attempt {
                return Err(ConfigError::invalid(
                    format!("{gpath}u"),
                    format!(
                        "{} gaps per attempt, expected {}",
                        prof.gaps.gaps_per_attempt(),
                        self.gaps_per_attempt
                    ),
                ));
            }
            for i in 0..self.attempts {
                let row_sum: f64 = prof.gaps.prob_row(i).iter().sum();
                if (row_sum - 1.0).abs() > PROB_SUM_TOL {
                    return Err(ConfigError::invalid(
                        format!("{gpath}p[{i}]"),
                        format!("gap probabilities sum to {}", round_for_display(row_sum)),
                    ));
                }
                for k in 0..self.gaps_per_attempt {
                    let u = prof.gaps.gap(i, k);
                    let p = prof.gaps.prob(i, k);
                    if !(p >= 0.0) {
                        return Err(ConfigError::invalid(
                            format!("{gpath}p[{i}][{k}]"),
                            format!("negative probability {p}"),
                        ));
                    }
                    if !(u > 0.0) || !u.is_finite() {
                        return Err(ConfigError::invalid(
                            format!("{gpath}u[{i}][{k}]"),
                            format!("critical gap {u} must be positive"),
                        ));
                    }
                    if u < prof.merge_time {
                        return Err(ConfigError::invalid(
                            format!("{gpath}u[{i}][{k}]"),
                            format!("critical gap {u} is below merge time {}", prof.merge_time),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Major-road flow in vehicles per hour.
    pub fn major_flow_veh_h(&self) -> f64 {
        self.major_flow_veh_h
    }

    /// Major-road rate `q` per second.
    pub fn major_rate(&self) -> f64 {
        self.major_flow_veh_h / SECONDS_PER_HOUR
    }

    pub fn batch_rate_per_h(&self) -> f64 {
        self.batch_rate_per_h
    }

    /// Batch arrival rate `λ` per second.
    pub fn batch_rate(&self) -> f64 {
        self.batch_rate_per_h / SECONDS_PER_HOUR
    }

    pub fn batch_size(&self) -> &BatchSizeLaw {
        &self.batch_size
    }

    /// Minor-road vehicle flow `λ E[B]` in vehicles per hour.
    pub fn minor_flow_veh_h(&self) -> f64 {
        self.batch_rate_per_h * self.batch_size.mean()
    }

    pub fn attempts(&self) -> usize {
        self.attempts
    }

    pub fn gaps_per_attempt(&self) -> usize {
        self.gaps_per_attempt
    }

    pub fn profiles(&self) -> &[DriverProfile] {
        &self.profiles
    }

    pub fn profile(&self, r: usize) -> &DriverProfile {
        &self.profiles[r]
    }

    pub fn dims(&self) -> TypeDims {
        TypeDims {
            attempts: self.attempts,
            gaps: self.gaps_per_attempt,
            profiles: self.profiles.len(),
        }
    }

    /// Critical gap of a (one-based) type.
    pub fn gap_of(&self, t: TypeIndex) -> f64 {
        self.profiles[t.profile - 1].gaps.gap(t.attempt - 1, t.gap - 1)
    }

    pub fn prob_of(&self, t: TypeIndex) -> f64 {
        self.profiles[t.profile - 1].gaps.prob(t.attempt - 1, t.gap - 1)
    }

    /// Lag `ū = u - Δ` of a (one-based) type.
    pub fn lag_of(&self, t: TypeIndex) -> f64 {
        self.profiles[t.profile - 1].lag(t.attempt - 1, t.gap - 1)
    }

    pub fn with_major_flow(&self, veh_h: f64) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        c.major_flow_veh_h = veh_h;
        c.validate()?;
        Ok(c)
    }

    pub fn with_batch_rate(&self, per_h: f64) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        c.batch_rate_per_h = per_h;
        c.validate()?;
        Ok(c)
    }

    /// Set the batch rate so that the minor-road vehicle flow is `veh_h`.
    pub fn with_minor_flow(&self, veh_h: f64) -> Result<Self, ConfigError> {
        self.with_batch_rate(veh_h / self.batch_size.mean())
    }

    pub fn with_batch_size(&self, law: BatchSizeLaw) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        c.batch_size = law;
        c.validate()?;
        Ok(c)
    }

    /// Change the number of modelled attempts. Generated tables are
    /// regenerated; explicit tables can only be truncated.
    pub fn with_attempts(&self, attempts: usize) -> Result<Self, ConfigError> {
        let mut profiles = Vec::with_capacity(self.profiles.len());
        for (r, p) in self.profiles.iter().enumerate() {
            let prof = match &p.generator {
                Some(spec) => DriverProfile::generated(p.probability, p.merge_time, spec.clone(), attempts)?,
                None if attempts <= p.gaps.attempts() => DriverProfile::new(
                    p.probability,
                    p.merge_time,
                    GapTable::new(p.gaps.u[..attempts].to_vec(), p.gaps.p[..attempts].to_vec())?,
                ),
                None => {
                    return Err(ConfigError::invalid(
                        format!("profiles[{r}].gaps.explicit"),
                        format!(
                            "explicit table has {} attempts; cannot extend to {attempts}",
                            p.gaps.attempts()
                        ),
                    ))
                }
            };
            profiles.push(prof);
        }
        ScenarioConfig::new(self.major_flow_veh_h, self.batch_rate_per_h, self.batch_size.clone(), profiles)
    }

    /// Replace the merge time of profile `r` (zero-based), regenerating its
    /// table if it came from the impatience generator.
    pub fn with_merge_time(&self, r: usize, merge_time: f64) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        let p = &self.profiles[r];
        c.profiles[r] = match &p.generator {
            Some(spec) => DriverProfile::generated(p.probability, merge_time, spec.clone(), self.attempts)?,
            None => DriverProfile::new(p.probability, merge_time, p.gaps.clone()),
        };
        c.validate()?;
        Ok(c)
    }

    /// Replace the impatience rate of every generated profile.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        for (r, p) in self.profiles.iter().enumerate() {
            if let Some(spec) = &p.generator {
                let spec = ImpatienceSpec { alpha, ..spec.clone() };
                c.profiles[r] = DriverProfile::generated(p.probability, p.merge_time, spec, self.attempts)?;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

fn round_for_display(x: f64) -> f64 {
    (x * 1e10).round() / 1e10
}

/// One violation of the limited gap-reuse condition: the first-attempt gap
/// of `successor` is shorter than the lag left by `predecessor`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReuseViolation {
    pub successor: TypeIndex,
    pub predecessor: TypeIndex,
    pub successor_gap: f64,
    pub predecessor_lag: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LimitedReuseReport {
    pub holds: bool,
    pub violations: Vec<ReuseViolation>,
}

/// Check `u(1,l,r1) >= u(i,k,r0) - Δ(r0)` over all index combinations.
/// When it holds, at most one queued successor can use a lag and the
/// analysis is exact.
pub fn check_limited_reuse(config: &ScenarioConfig) -> LimitedReuseReport {
    let dims = config.dims();
    let mut violations = Vec::new();
    for succ_r in 1..=dims.profiles {
        for l in 1..=dims.gaps {
            let successor = TypeIndex::new(1, l, succ_r);
            let succ_gap = config.gap_of(successor);
            for predecessor in dims.iter() {
                let lag = config.lag_of(predecessor);
                if succ_gap < lag {
                    violations.push(ReuseViolation {
                        successor,
                        predecessor,
                        successor_gap: succ_gap,
                        predecessor_lag: lag,
                    });
                }
            }
        }
    }
    LimitedReuseReport { holds: violations.is_empty(), violations }
}

// ---- document schema ----

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    attempts: usize,
    gaps_per_attempt: usize,
    major: MajorDoc,
    minor: MinorDoc,
    profiles: Vec<ProfileDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MajorDoc {
    flow_veh_per_hour: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MinorDoc {
    batch_rate_per_hour: f64,
    batch_size: BatchSizeDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
enum BatchSizeDoc {
    Deterministic { size: u32 },
    Geometric { success_prob: f64 },
    Explicit { pmf: Vec<f64> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileDoc {
    probability: f64,
    merge_time_s: f64,
    gaps: GapsDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum GapsDoc {
    Explicit(ExplicitGapsDoc),
    Generator(ImpatienceSpec),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplicitGapsDoc {
    u: Vec<Vec<f64>>,
    p: Vec<Vec<f64>>,
}

impl ConfigDoc {
    fn into_config(self) -> Result<ScenarioConfig, ConfigError> {
        let batch_size = match self.minor.batch_size {
            BatchSizeDoc::Deterministic { size } => BatchSizeLaw::Deterministic(size),
            BatchSizeDoc::Geometric { success_prob } => BatchSizeLaw::Geometric(success_prob),
            BatchSizeDoc::Explicit { pmf } => BatchSizeLaw::Explicit(pmf),
        };
        if self.attempts == 0 {
            return Err(ConfigError::invalid("attempts", "need at least one attempt"));
        }
        let mut profiles = Vec::with_capacity(self.profiles.len());
        for (r, p) in self.profiles.into_iter().enumerate() {
            let path = format!("profiles[{r}].gaps");
            let prof = match p.gaps {
                GapsDoc::Explicit(ExplicitGapsDoc { u, p: probs }) => {
                    let table = GapTable { u, p: probs };
                    table.check_shape(&format!("{path}.explicit."))?;
                    DriverProfile::new(p.probability, p.merge_time_s, table)
                }
                GapsDoc::Generator(spec) => {
                    if spec.base_gaps_s.len() != self.gaps_per_attempt {
                        return Err(ConfigError::invalid(
                            format!("{path}.generator.base_gaps_s"),
                            format!(
                                "{} gaps given, gaps_per_attempt is {}",
                                spec.base_gaps_s.len(),
                                self.gaps_per_attempt
                            ),
                        ));
                    }
                    DriverProfile::generated(p.probability, p.merge_time_s, spec, self.attempts)
                        .map_err(|e| match e {
                            ConfigError::Invalid { path: sub, message } => ConfigError::Invalid {
                                path: format!("{path}.generator.{sub}"),
                                message,
                            },
                            other => other,
                        })?
                }
            };
            profiles.push(prof);
        }
        let config = ScenarioConfig {
            major_flow_veh_h: self.major.flow_veh_per_hour,
            batch_rate_per_h: self.minor.batch_rate_per_hour,
            batch_size,
            attempts: self.attempts,
            gaps_per_attempt: self.gaps_per_attempt,
            profiles,
        };
        config.validate()?;
        Ok(config)
    }

    fn from_config(c: &ScenarioConfig) -> Self {
        let batch_size = match &c.batch_size {
            BatchSizeLaw::Deterministic(n) => BatchSizeDoc::Deterministic { size: *n },
            BatchSizeLaw::Geometric(p) => BatchSizeDoc::Geometric { success_prob: *p },
            BatchSizeLaw::Explicit(pmf) => BatchSizeDoc::Explicit { pmf: pmf.clone() },
        };
        ConfigDoc {
            attempts: c.attempts,
            gaps_per_attempt: c.gaps_per_attempt,
            major: MajorDoc { flow_veh_per_hour: c.major_flow_veh_h },
            minor: MinorDoc { batch_rate_per_hour: c.batch_rate_per_h, batch_size },
            profiles: c
                .profiles
                .iter()
                .map(|p| ProfileDoc {
                    probability: p.probability,
                    merge_time_s: p.merge_time,
                    gaps: match &p.generator {
                        Some(spec) => GapsDoc::Generator(spec.clone()),
                        None => GapsDoc::Explicit(ExplicitGapsDoc {
                            u: p.gaps.u.clone(),
                            p: p.gaps.p.clone(),
                        }),
                    },
                })
                .collect(),
        }
    }
}
