use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("scenario generation failed: {0}")]
    Generation(String),
    #[error("event log corruption at seq {seq}: {reason}")]
    Corruption { seq: u64, reason: String },
    #[error("determinism violation: first divergent seq {seq}")]
    Determinism { seq: u64 },
    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("decode error at byte offset {offset}: {reason}")]
    Decode { offset: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
