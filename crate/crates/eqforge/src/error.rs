//! Error taxonomy shared by all modules.
//!
//! Errors fall into two families: configuration errors (bad input files,
//! out-of-range parameters) and numeric errors (integrator blow-up,
//! degenerate cocycles, refinement explosions). The CLI maps the first
//! family to exit code 2 and the second to exit code 3.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EqError {
    /// The ODE integrator produced a non-finite or wildly out-of-range state.
    #[error("IntegratorDivergence: {0}")]
    IntegratorDivergence(String),

    /// A direction cocycle collapsed (vector norm underflowed).
    #[error("DegenerateCocycle: cocycle norm underflowed after {steps} steps")]
    DegenerateCocycle { steps: usize },

    /// A leaf germ could not be grown into a leaf of the requested radius.
    #[error("SeedFailure: {0}")]
    SeedFailure(String),

    /// Curve refinement exceeded the sample cap.
    #[error("RefinementBlowup: refinement needs more than {cap} samples")]
    RefinementBlowup { cap: usize },

    /// A measure weight came out non-finite.
    #[error("NonFiniteWeight: {0}")]
    NonFiniteWeight(String),

    /// Power iteration failed to reach the requested residual.
    #[error("NoConvergence: residual {residual:e} after {iters} iterations")]
    NoConvergence { residual: f64, iters: usize },

    /// A parameter is outside its documented range.
    #[error("RangeError: {0}")]
    RangeError(String),

    /// A config line could not be parsed.
    #[error("ParseError: line {line}: {msg}")]
    ParseError { line: usize, msg: String },

    /// A config key is not recognized.
    #[error("UnknownKey: line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    /// File I/O failure while reading configs or writing reports.
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
}

impl EqError {
    /// Short machine-readable error name, printed on stderr by the CLI.
    pub fn name(&self) -> &'static str {
        match self {
            EqError::IntegratorDivergence(_) => "IntegratorDivergence",
            EqError::DegenerateCocycle { .. } => "DegenerateCocycle",
            EqError::SeedFailure(_) => "SeedFailure",
            EqError::RefinementBlowup { .. } => "RefinementBlowup",
            EqError::NonFiniteWeight(_) => "NonFiniteWeight",
            EqError::NoConvergence { .. } => "NoConvergence",
            EqError::RangeError(_) => "RangeError",
            EqError::ParseError { .. } => "ParseError",
            EqError::UnknownKey { .. } => "UnknownKey",
            EqError::Io(_) => "IoError",
        }
    }

    /// True for errors caused by bad configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            EqError::RangeError(_) | EqError::ParseError { .. } | EqError::UnknownKey { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, EqError>;
