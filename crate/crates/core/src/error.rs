use thiserror::Error;

/// Errors raised anywhere in the shielding pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the grid box in dimension {dim}")]
    PointOutOfDomain { point: Vec<f64>, dim: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("universe mismatch: expected {expected} states/inputs, found {found}")]
    UniverseMismatch { expected: usize, found: usize },

    #[error("cannot compose a shield from an empty set of atomic specifications")]
    EmptyActiveSet,

    #[error("unknown atomic specification id {0}")]
    UnknownAtomic(usize),

    /// The queried cell is outside the shield's domain: the safety guarantee
    /// is lost from here on and the caller must pick a failsafe.
    #[error("cell {cell} is outside the shield domain")]
    DomainViolation { cell: u32 },

    #[error("world generation failed after {attempts} attempts")]
    GenerationFailed { attempts: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed input at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed binary file: {0}")]
    Format(String),

    #[error("file was written for abstraction {found}, expected {expected}")]
    HashMismatch { expected: String, found: String },

    #[error("dynamic and pure-online shields disagree on instance {instance} at step {step}")]
    DecisionMismatch { instance: usize, step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
