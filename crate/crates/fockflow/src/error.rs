use thiserror::Error;

/// Every fallible operation in the crate reports one of these.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("unknown species `{species}` at byte {position}")]
    UnknownSpecies { position: usize, species: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unsupported system order: {0}")]
    Order(String),

    #[error("basis size {size} exceeds the limit {limit}")]
    SizeLimit { size: u128, limit: usize },

    #[error("slot mismatch: {0}")]
    Slot(String),

    #[error("rule `{rule}` has no substitution for species `{species}`")]
    UnmatchedSpecies { rule: String, species: String },

    #[error("integration became unstable at step {step} (max |coefficient| {magnitude:e})")]
    Unstable { step: usize, magnitude: f64 },

    #[error("sample {sample} escaped at step {step}")]
    Escape { sample: usize, step: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("series did not converge: {0}")]
    Divergence(String),

    #[error("force field has no potential: {0}")]
    NonGradient(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

impl Error {
    /// True for errors caused by resource limits rather than bad input.
    pub fn is_resource(&self) -> bool {
        matches!(self, Error::SizeLimit { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
