use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown gene field `{0}`")]
    UnknownGeneField(String),
    #[error("choice list `{0}` is empty")]
    EmptyChoices(&'static str),
    #[error("choice list `{field}` repeats {value}")]
    DuplicateChoice { field: &'static str, value: String },
    #[error("invalid value {value} in `{field}`")]
    InvalidChoice { field: &'static str, value: String },
    #[error("invalid setting `{field}`: {reason}")]
    InvalidSetting { field: &'static str, reason: String },
    #[error("failed to parse configuration: {0}")]
    Parse(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChromosomeError {
    #[error("crossover parents differ in phase ({left} vs {right})")]
    PhaseMismatch { left: usize, right: usize },
    #[error("gene index {index} out of range for {len} fields")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("gene {index} expects a {expected} value")]
    WrongValueKind { index: usize, expected: &'static str },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("transfer map mismatch: {0}")]
    TransferMismatch(String),
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("worker io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unexpected message: expected {expected}, got {got}")]
    Unexpected { expected: &'static str, got: String },
    #[error("protocol version mismatch: client {client}, worker {worker}")]
    VersionMismatch { client: u32, worker: u32 },
    #[error("worker did not answer within {0:?}")]
    Timeout(std::time::Duration),
    #[error("worker closed its output stream")]
    Closed,
}

/// The evaluator as a whole cannot serve requests (as opposed to a single
/// evaluation failing, which is reported inside the result).
#[derive(Debug, Error)]
#[error("evaluator unavailable: {0}")]
pub struct EvaluatorUnavailable(pub String);

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Chromosome(#[from] ChromosomeError),
    #[error(transparent)]
    Evaluator(#[from] EvaluatorUnavailable),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
