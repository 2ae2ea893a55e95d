//! Property checkers: the inductive invariant over configurations, trace
//! properties over runs, and strict linearizability over object histories.

pub mod invariant;
pub mod linearizability;
pub mod run;

pub use invariant::{eval_invariant, Condition, InvariantFailure, InvariantView};
pub use run::{all_pass, check_run, CheckContext, PropertyVerdict, RunStats, TraceChecker};
