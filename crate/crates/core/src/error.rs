use alloc::boxed::Box;
use alloc::string::String;

/// Errors produced by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in layer {layer}: {context}")]
    NonFinite { layer: usize, context: String },

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("invalid track: {0}")]
    InvalidTrack(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("aggregation error: model from agent {agent} does not conform: {reason}")]
    Aggregation { agent: u32, reason: String },

    #[error("protocol error at byte {offset}: {reason}")]
    Protocol { offset: usize, reason: String },

    #[error("degenerate run: r_max equals r_min ({0})")]
    DegenerateRun(f64),

    #[error("insufficient data: need {needed} steps, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("federation link unavailable: {0}")]
    LinkUnavailable(String),

    #[error("agent {agent} failed at step {step}: {source}")]
    AgentFailed {
        agent: u32,
        step: u64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
