//! Error types.
//!
//! Hard faults are simulator bugs and abort the run. Algorithm-level
//! misbehaviour is never an error: it is reported as a violation in the trace.

use thiserror::Error;

use crate::value::{CellId, Pid};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("access to unallocated cell {0}")]
    UnallocatedCell(CellId),
    #[error("{pid} read a malformed value from {cell}: expected {expected}")]
    Malformed {
        pid: Pid,
        cell: CellId,
        expected: &'static str,
    },
    #[error("{0} stepped with no armed method")]
    NotArmed(Pid),
    #[error("unknown process {0}")]
    UnknownPid(Pid),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed value literal `{0}`")]
    Value(String),
    #[error("unknown program counter label `{0}`")]
    Pc(String),
    #[error("trace line {line}: {msg}")]
    Trace { line: usize, msg: String },
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HistoryError {
    #[error("history has {0} operations, above the checker limit of {1}")]
    TooLarge(usize, usize),
    #[error("response without a pending invocation for {0}")]
    Unmatched(Pid),
}
