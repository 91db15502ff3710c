use thiserror::Error;

/// Errors raised by the simulation and learning stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {index} out of range for {n_qubits}-qubit register")]
    QubitOutOfRange { index: usize, n_qubits: usize },
    #[error("CNOT control and target must differ (both {0})")]
    SameControlTarget(usize),
    #[error("rotation gate requires an angle")]
    MissingAngle,
    #[error("CNOT does not take an angle")]
    UnexpectedAngle,
    #[error("{what}: expected length {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("probability distribution does not sum to 1 (sum = {0})")]
    InvalidDistribution(f64),
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("shot count must be at least 1")]
    ZeroShots,
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("circuit needs {needed} qubits but machine {machine} has {available}")]
    CircuitTooWide {
        machine: String,
        needed: usize,
        available: usize,
    },
    #[error("invalid ansatz: {0}")]
    InvalidAnsatz(String),
    #[error("requested {requested} variants but only {available} distinct layouts exist")]
    TooManyVariants { requested: usize, available: usize },
    #[error("feature value {0} is outside [0, 1]")]
    FeatureOutOfRange(f64),
    #[error("unknown label {0}")]
    UnknownLabel(u8),
    #[error("label sets do not match")]
    LabelMismatch,
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown machine profile {0:?}")]
    UnknownProfile(String),
    #[error("bad IDX magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated IDX file: {0}")]
    Truncated(String),
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("only {available} images of digit {digit}, need {needed}")]
    InsufficientImages {
        digit: u8,
        available: usize,
        needed: usize,
    },
    #[error("unsupported feature count {0}")]
    UnsupportedFeatureCount(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
