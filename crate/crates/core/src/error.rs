use thiserror::Error;

/// Errors raised anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite entry in operator at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("truncation leakage: top Fock population {population:.3e} exceeds {limit:.1e} (N_c = {cutoff})")]
    Leakage {
        population: f64,
        limit: f64,
        cutoff: usize,
    },

    #[error("invalid density matrix: {}", .0.join("; "))]
    InvalidDensity(Vec<String>),

    #[error(
        "quadrature did not converge at t = {t}: change {change:.3e} after {intervals} intervals"
    )]
    QuadratureNonConvergence {
        t: f64,
        change: f64,
        intervals: usize,
    },

    #[error("time {t} outside schedule range [0, {t_end}]")]
    ScheduleOutOfRange { t: f64, t_end: f64 },

    #[error("state drift at t = {t}: trace deviation {trace_dev:.3e}, hermiticity deviation {herm_dev:.3e}")]
    Drift {
        t: f64,
        trace_dev: f64,
        herm_dev: f64,
    },

    #[error("kernel cache needs {required} bytes, budget is {budget}")]
    MemoryBudget { required: usize, budget: usize },

    #[error("Wigner field has imaginary residue {residue:.3e}")]
    ImaginaryResidue { residue: f64 },

    #[error("Wigner field is not normalized: integral = {integral}")]
    NotNormalized { integral: f64 },

    #[error("grid does not match state space: {0}")]
    ShapeMismatch(String),

    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),

    #[error("config: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
