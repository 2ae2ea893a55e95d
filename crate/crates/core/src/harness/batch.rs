//! Many independent runs. With the `parallel` feature the runs are spread
//! over a rayon pool; results come back in input order either way.

use crate::error::SimError;

use super::config::RunConfig;
use super::engine::{run, RunReport};

pub fn run_batch_sequential(cfgs: &[RunConfig]) -> Vec<Result<RunReport, SimError>> {
    cfgs.iter().map(run).collect()
}

#[cfg(feature = "parallel")]
pub fn run_batch(cfgs: &[RunConfig]) -> Vec<Result<RunReport, SimError>> {
    use rayon::prelude::*;
    cfgs.par_iter().map(run).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_batch(cfgs: &[RunConfig]) -> Vec<Result<RunReport, SimError>> {
    run_batch_sequential(cfgs)
}

/// `base` repeated over seeds `first..first + count`.
pub fn seed_sweep(base: &RunConfig, first: u64, count: u64) -> Vec<RunConfig> {
    (first..first + count)
        .map(|seed| RunConfig {
            seed,
            ..base.clone()
        })
        .collect()
}
