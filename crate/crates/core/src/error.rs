use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures raised by the simulation modules.
///
/// Every variant maps to a stable tag (see [`Error::tag`]) that front ends
/// print as the first token of a diagnostic line.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (defect {defect:.3e})")]
    NonHermitianInput { defect: f64 },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("eigenvalue {min:.3e} below the positivity tolerance")]
    NegativeEigenvalue { min: f64 },

    #[error("not a density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("eigensolver did not converge")]
    EigenSolverFailure,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("family evaluation failed at s = {s}: {reason}")]
    EvaluationFailure { s: f64, reason: String },

    #[error("gap {gap:.3e} between levels {level} and {} at s = {s} is below threshold {threshold:.3e}", level + 1)]
    DegenerateGap {
        s: f64,
        level: usize,
        gap: f64,
        threshold: f64,
    },

    #[error("eigenvector continuity lost at s = {s} (best overlap {overlap:.3})")]
    ContinuityLoss { s: f64, overlap: f64 },

    #[error("finite-difference Hermiticity defect {defect:.3e} at s = {s}")]
    GridTooCoarse { s: f64, defect: f64 },

    #[error("energies are not strictly increasing")]
    UnorderedSpectrum,

    #[error("inverse temperature {0} must be finite and non-negative")]
    NonFiniteBeta(f64),

    #[error("inverse temperature {0} must be positive")]
    NonPositiveBeta(f64),

    #[error("step {step}: |H|*dt = {norm_dt:.4} exceeds 1")]
    StepTooLarge { step: usize, norm_dt: f64 },

    #[error("bound violated at s = {s}: lhs {lhs:.6e} > rhs {rhs:.6e}")]
    BoundViolation { s: f64, lhs: f64, rhs: f64 },

    #[error("fidelity undefined for omega = gamma = 0")]
    UndefinedLimit,

    #[error("epsilon {0} outside (0, 1)")]
    EpsilonOutOfRange(f64),

    #[error("N list spans {decades:.2} decades, need at least 2")]
    InsufficientSpan { decades: f64 },

    #[error("grid index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("grids differ: {0}")]
    GridMismatch(String),
}

impl Error {
    pub fn tag(&self) -> &'static str {
        match self {
            Error::NonHermitianInput { .. } => "NonHermitianInput",
            Error::NotSquare { .. } => "NotSquare",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NegativeEigenvalue { .. } => "NegativeEigenvalue",
            Error::InvalidDensityMatrix(_) => "InvalidDensityMatrix",
            Error::EigenSolverFailure => "EigenSolverFailure",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::InvalidSchedule(_) => "InvalidSchedule",
            Error::EvaluationFailure { .. } => "EvaluationFailure",
            Error::DegenerateGap { .. } => "DegenerateGap",
            Error::ContinuityLoss { .. } => "ContinuityLoss",
            Error::GridTooCoarse { .. } => "GridTooCoarse",
            Error::UnorderedSpectrum => "UnorderedSpectrum",
            Error::NonFiniteBeta(_) => "NonFiniteBeta",
            Error::NonPositiveBeta(_) => "NonPositiveBeta",
            Error::StepTooLarge { .. } => "StepTooLarge",
            Error::BoundViolation { .. } => "BoundViolation",
            Error::UndefinedLimit => "UndefinedLimit",
            Error::EpsilonOutOfRange(_) => "EpsilonOutOfRange",
            Error::InsufficientSpan { .. } => "InsufficientSpan",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::GridMismatch(_) => "GridMismatch",
        }
    }
}
