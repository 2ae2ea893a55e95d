//! Drives processes through the client protocol under a scheduler, injects
//! crashes, and explores small configurations exhaustively.

pub mod batch;
pub mod client;
pub mod config;
pub mod engine;
pub mod explore;

pub use batch::{run_batch, run_batch_sequential, seed_sweep};
pub use config::{Bounds, CrashSpec, ExploreConfig, RunConfig, SchedulerSpec, ScriptStep};
pub use engine::{run, Engine, RunReport};
pub use explore::{explore, replay, ExploreReport, ExploreViolation, Move};
