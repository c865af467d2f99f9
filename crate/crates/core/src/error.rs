use thiserror::Error;

use crate::lang::Diagnostic;

/// Faults of the program being simulated.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("division by zero in {0}")]
    DivisionByZero(String),
    #[error("index {index} out of bounds for `{name}` of length {len} in {body}")]
    IndexOutOfBounds {
        body: String,
        name: String,
        index: i64,
        len: usize,
    },
    #[error("loop bound {bound} exceeded in {body}")]
    LoopBound { body: String, bound: u32 },
    #[error("input channel `{0}` is exhausted")]
    InputExhausted(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] Diagnostic),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("{0}")]
    Config(String),
    #[error("program error: {0}")]
    Program(#[from] ProgramError),
    /// The simulator's own invariants were violated (for example a commit list sized too small).
    #[error("simulator fault: {0}")]
    Fault(String),
}
