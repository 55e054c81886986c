use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("network size {0} is not a power of two >= 4")]
    NotPowerOfTwo(usize),
    #[error("unknown topology `{0}` (expected omega or baseline)")]
    UnknownTopology(String),
    #[error("{what} {value} out of range [{lo}, {hi})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        lo: usize,
        hi: usize,
    },
    #[error("operation requires the omega topology, got {0}")]
    UnsupportedTopology(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate source {source_line} (line {line})")]
    DuplicateSource { source_line: usize, line: usize },
    #[error("duplicate destination {destination} (line {line})")]
    DuplicateDestination { destination: usize, line: usize },
    #[error("messages share source {0}")]
    SameSource(usize),
    #[error("exact solver limited to {cap} messages, got {count}")]
    TooLarge { count: usize, cap: usize },
    #[error("message index {index} out of range for {count} messages")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("schedule coverage: {0}")]
    Coverage(String),
    #[error("trial count must be at least 1")]
    ZeroTrials,
    #[error("load {0} outside [0, 1]")]
    LoadOutOfRange(f64),
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
}
