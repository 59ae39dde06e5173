use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric (max |m_ij - m_ji| = {max_dev:e}, tol {tol:e})")]
    Asymmetric { max_dev: f64, tol: f64 },
    #[error("eigenvalue iteration did not converge within {cap} sweeps (norm {norm:e})")]
    NoConvergence { cap: usize, norm: f64 },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("invalid interval: {0}")]
    Interval(String),
    #[error("delta {value} at slot {slot} outside [-1, 1]")]
    DeltaRange { slot: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid variable declaration: {0}")]
    VarDecl(String),
    #[error("malformed problem: {0}")]
    Problem(String),
    #[error("missing assignment for variable `{0}`")]
    MissingValue(String),
    #[error("certificate: {0}")]
    Certificate(String),
    #[error("simulation step {step} failed: {reason}")]
    Step { step: usize, reason: String },
    #[error("{kind}: {detail}")]
    Synthesis { kind: SynthesisFailure, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthesisFailure {
    NoFeasibleIterate,
    RecoveryFailure,
    PostValidationFailure,
}

impl std::fmt::Display for SynthesisFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SynthesisFailure::NoFeasibleIterate => "no feasible iterate",
            SynthesisFailure::RecoveryFailure => "recovery failure",
            SynthesisFailure::PostValidationFailure => "post-validation failure",
        })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
