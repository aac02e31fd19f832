use thiserror::Error;

use crate::coherence::LineAddr;

/// Every failure the simulator can surface.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("cannot schedule events after the run was finalized")]
    Finalized,
    #[error("event ceiling of {0} events exceeded")]
    EventCeiling(u64),
    #[error("percentile query on empty series `{0}`")]
    EmptySeries(String),
    #[error("percentile fraction {0} outside [0, 1]")]
    BadFraction(f64),
    #[error("address {0:#x} is outside every configured memory range")]
    AddressFault(u64),
    #[error("protocol violation on line {line}: {what}")]
    Protocol { line: LineAddr, what: String },
    #[error("access at {0:#x} is misaligned or crosses a line")]
    Misaligned(u64),
    #[error("unknown NUMA node {0}")]
    UnknownNode(u8),
    #[error("unknown profile `{0}`")]
    UnknownProfile(String),
    #[error("decode error at byte {offset}: {what}")]
    Decode { offset: usize, what: String },
    #[error("encode error: {0}")]
    Encode(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {what}")]
    Io { path: String, what: String },
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<SimError>,
    },
}

impl SimError {
    pub(crate) fn protocol(line: LineAddr, what: impl Into<String>) -> Self {
        SimError::Protocol { line, what: what.into() }
    }

    pub(crate) fn decode(offset: usize, what: impl Into<String>) -> Self {
        SimError::Decode { offset, what: what.into() }
    }

    /// Wraps the error with the name of the experiment or stage that raised it.
    pub fn context(self, context: impl Into<String>) -> Self {
        SimError::Context { context: context.into(), source: Box::new(self) }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
