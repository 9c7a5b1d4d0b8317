use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("pulse truncated: support [{lo}, {hi}] exceeds grid extent [{grid_lo}, {grid_hi}]")]
    PulseTruncated {
        lo: f64,
        hi: f64,
        grid_lo: f64,
        grid_hi: f64,
    },

    #[error("no peak: envelope is identically zero")]
    NoPeak,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("solver tolerance exceeded: relative norm defect {defect:.3e}; use a finer grid")]
    SolverTolerance { defect: f64 },

    #[error("zero input envelope")]
    ZeroInput,

    #[error("not Hermitian: max |A - A†| = {deviation:.3e}")]
    NotHermitian { deviation: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("increase n_max: {0}")]
    Truncation(String),

    #[error("no crossing; fidelity is 1 for all n")]
    NoCrossing,

    #[error("efficiency below 50% at zero delay")]
    EfficiencyBelowHalf,

    #[error("empty quadrature record")]
    EmptyRecord,

    #[error("insufficient phase coverage: largest phase gap {gap:.3} rad exceeds {limit:.3} rad")]
    InsufficientPhaseCoverage { gap: f64, limit: f64 },

    #[error("mode not normalized: ‖mode‖² = {norm_sqr:.6}")]
    ModeNotNormalized { norm_sqr: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SolverTolerance { .. } | Error::Truncation(_) | Error::NotHermitian { .. }
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }

    /// True for rejected inputs: parameters, grids, pulse specs, parse errors.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid(_)
                | Error::InvalidParameter { .. }
                | Error::PulseTruncated { .. }
                | Error::GridMismatch(_)
                | Error::Parse(_)
                | Error::Json(_)
        )
    }

    /// Prefix a parameter name with the config section it belongs to.
    pub fn in_section(self, section: &str) -> Self {
        match self {
            Error::InvalidParameter { name, reason } => Error::InvalidParameter {
                name: format!("{section}.{name}"),
                reason,
            },
            other => other,
        }
    }
}
