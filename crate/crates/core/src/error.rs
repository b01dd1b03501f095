use thiserror::Error;

/// Errors raised while reading or validating a scenario.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("could not parse configuration: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("could not serialize configuration: {0}")]
    Serialize(#[from] toml::ser::Error),

    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ConfigError {
    pub(crate) fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Errors raised by the analytic pipeline.
#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error(
        "truncation defect {defect:.3e} exceeds {limit:.1e}; increase the number of attempts (currently {attempts})"
    )]
    DefectTooLarge {
        defect: f64,
        limit: f64,
        attempts: usize,
    },

    #[error("unstable: rho={rho:.6} >= 1")]
    Unstable { rho: f64 },

    #[error("root search failed: found {found} interior roots, contour count {expected}; {detail}")]
    RootCount {
        found: usize,
        expected: usize,
        detail: String,
    },

    #[error("empty-queue system has rank deficiency {deficiency}; {detail}")]
    RankDeficient { deficiency: usize, detail: String },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("numerical inversion did not converge: {0}")]
    Inversion(String),
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;
