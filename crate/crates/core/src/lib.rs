//! Deterministic simulator and bounded model checker for two recoverable
//! queue locks under system-wide crashes.
//!
//! Every algorithm line is a step of an explicit state machine that performs
//! at most one access to simulated shared memory. Memory charges each access
//! under both the cache-coherent and the distributed-shared-memory RMR
//! models, so one run yields both costs.

pub mod checkers;
pub mod error;
pub mod harness;
pub mod locks;
pub mod memory;
pub mod objects;
pub mod rme;
pub mod step;
pub mod trace;
pub mod value;

pub use error::{HistoryError, ParseError, SimError, TraceIoError};
pub use harness::{explore, run, ExploreConfig, ExploreReport, RunConfig, RunReport};
pub use rme::{Algorithm, Mutant};
pub use trace::{TraceEvent, ViolationCode};
pub use value::{CellId, Pid, Value};
