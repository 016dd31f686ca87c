use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unknown opcode {0}")]
    UnknownOpcode(String),
    #[error("stack underflow at pc {pc}")]
    StackUnderflow { pc: usize },
    #[error("stack overflow at pc {pc}")]
    StackOverflow { pc: usize },
    #[error("invalid jump target {target} at pc {pc}")]
    InvalidJumpTarget { pc: usize, target: String },
    #[error("step limit {0} exceeded")]
    StepLimitExceeded(usize),
    #[error("{op} expects {expected} operands, got {got}")]
    ArityMismatch { op: String, expected: usize, got: usize },
    #[error("jump to a symbolic target at pc {pc}")]
    SymbolicJumpTarget { pc: usize },
    #[error("timeout after {0} ms")]
    Timeout(u64),
    #[error("empty trace set")]
    EmptyTraceSet,
    #[error("oracle budget exceeded")]
    OracleBudgetExceeded,
    #[error("conflicting edits at {0}..{1} and {2}..{3}")]
    SpanConflict(usize, usize, usize, usize),
    #[error("no source mapping for pc {0}")]
    UnmappedReport(usize),
    #[error("span {start}+{length} outside source of length {source_len}")]
    SpanOutOfBounds {
        start: usize,
        length: usize,
        source_len: usize,
    },
    #[error("patched source failed sanity check: {0}")]
    SanityCheckFailed(String),
    #[error("transaction {0} diverged between original and fixed runs")]
    DivergentRun(usize),
    #[error("invalid bundle: {0}")]
    Bundle(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Bundle(e.to_string())
    }
}
