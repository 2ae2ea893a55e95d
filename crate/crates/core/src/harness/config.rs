//! Run and exploration configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::rme::{Algorithm, Mutant};
use crate::value::Pid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScriptStep {
    Step(Pid),
    Crash,
}

impl fmt::Display for ScriptStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptStep::Step(p) => write!(f, "p{}", p.0),
            ScriptStep::Crash => f.write_str("crash"),
        }
    }
}

impl FromStr for ScriptStep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "crash" {
            return Ok(ScriptStep::Crash);
        }
        s.strip_prefix('p')
            .and_then(|n| n.parse().ok())
            .map(|n| ScriptStep::Step(Pid(n)))
            .ok_or_else(|| format!("bad script step `{s}`, expected `p<N>` or `crash`"))
    }
}

impl Serialize for ScriptStep {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ScriptStep {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Expands `[(pid, k), ...]` into `k` steps of each pid in order.
pub fn script(parts: &[(u32, usize)]) -> Vec<ScriptStep> {
    parts
        .iter()
        .flat_map(|&(p, k)| std::iter::repeat_n(ScriptStep::Step(Pid(p)), k))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SchedulerSpec {
    /// Uniform choice, except that any process outside the good remainder
    /// is forced once it has waited `bound - n` steps.
    RandomFair {
        bound: u64,
    },
    RoundRobin,
    Scripted {
        script: Vec<ScriptStep>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CrashSpec {
    None,
    At { steps: Vec<u64> },
    Probability { p: f64 },
    Every { period: u64 },
}

/// Pass/fail thresholds applied by the trace checker.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub exit: u64,
    pub recover: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmr_cc: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmr_dsm: Option<u64>,
    /// Defaults to `64 * n * bound` for fair runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starvation_limit: Option<u64>,
}

/// Longest crash-free Exit and Recover spans, in own steps, found by
/// enumerating every path through the step machines.
pub const CC_EXIT_STEPS: u64 = 4;
pub const CC_RECOVER_STEPS: u64 = 8;
pub const DSM_EXIT_STEPS: u64 = 17;
pub const DSM_RECOVER_STEPS: u64 = 13;

/// Largest passage RMR counts observed across a 128-seed sweep at
/// n = 4, 16, 64 (10^5 steps, a crash every 5000). The CC lock is only
/// constant under the CC model, so it has no DSM bound.
pub const CC_PASSAGE_RMR_CC: u64 = 15;
pub const DSM_PASSAGE_RMR_CC: u64 = 32;
pub const DSM_PASSAGE_RMR_DSM: u64 = 26;

impl Bounds {
    pub fn regression(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::Cc => Bounds {
                exit: CC_EXIT_STEPS,
                recover: CC_RECOVER_STEPS,
                rmr_cc: Some(CC_PASSAGE_RMR_CC),
                rmr_dsm: None,
                starvation_limit: None,
            },
            Algorithm::Dsm => Bounds {
                exit: DSM_EXIT_STEPS,
                recover: DSM_RECOVER_STEPS,
                rmr_cc: Some(DSM_PASSAGE_RMR_CC),
                rmr_dsm: Some(DSM_PASSAGE_RMR_DSM),
                starvation_limit: None,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub n: usize,
    pub seed: u64,
    pub scheduler: SchedulerSpec,
    pub max_steps: u64,
    pub crashes: CrashSpec,
    /// Local steps spent inside the CS before calling Exit.
    pub cs_dwell: u32,
    /// Completed Exits per process before it stays in the remainder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_passages: Option<u32>,
    /// Chance that an idle process calls Recover instead of Try.
    pub spurious_recover: f64,
    pub mutant: Mutant,
    pub check_invariant: bool,
    pub record_trace: bool,
    pub bounds: Bounds,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, n: usize, seed: u64) -> Self {
        Self {
            algorithm,
            n,
            seed,
            scheduler: SchedulerSpec::RandomFair {
                bound: 4 * n as u64,
            },
            max_steps: 10_000,
            crashes: CrashSpec::None,
            cs_dwell: 2,
            max_passages: None,
            spurious_recover: 0.0,
            mutant: Mutant::None,
            check_invariant: true,
            record_trace: false,
            bounds: Bounds::regression(algorithm),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if let SchedulerSpec::RandomFair { bound } = self.scheduler {
            if bound < self.n as u64 {
                return bad(format!("fairness bound {bound} is below n = {}", self.n));
            }
        }
        if let SchedulerSpec::Scripted { script } = &self.scheduler {
            if let Some(ScriptStep::Step(p)) = script
                .iter()
                .find(|s| matches!(s, ScriptStep::Step(p) if p.index() >= self.n))
            {
                return bad(format!("script names {p} but n = {}", self.n));
            }
        }
        match &self.crashes {
            CrashSpec::Probability { p } if !(0.0..=1.0).contains(p) => {
                return bad(format!("crash probability {p} outside [0, 1]"))
            }
            CrashSpec::Every { period: 0 } => return bad("crash period must be positive".into()),
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.spurious_recover) {
            return bad("spurious_recover outside [0, 1]".into());
        }
        Ok(())
    }

    pub fn fairness_bound(&self) -> Option<u64> {
        match self.scheduler {
            SchedulerSpec::RandomFair { bound } => Some(bound),
            _ => None,
        }
    }
}

/// Budgets for exhaustive exploration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub algorithm: Algorithm,
    pub n: usize,
    /// Crash budget.
    pub crashes: u32,
    /// Completed Exits per process.
    pub passages: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<u32>,
    pub max_states: usize,
    pub cs_dwell: u32,
    pub mutant: Mutant,
    /// Also branch on idle processes calling Recover instead of Try.
    pub spurious_recover: bool,
    /// Look for reachable states from which some process can never finish.
    pub liveness: bool,
    pub stop_on_violation: bool,
}

impl ExploreConfig {
    pub fn new(algorithm: Algorithm, n: usize, crashes: u32) -> Self {
        Self {
            algorithm,
            n,
            crashes,
            passages: 2,
            max_depth: None,
            max_states: 20_000_000,
            cs_dwell: 0,
            mutant: Mutant::None,
            spurious_recover: false,
            liveness: true,
            stop_on_violation: false,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n == 0 || self.n > 4 {
            return Err(SimError::Config(format!(
                "exhaustive exploration supports 1..=4 processes, got {}",
                self.n
            )));
        }
        if self.passages == 0 {
            return Err(SimError::Config("passage budget must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_steps_parse() {
        assert_eq!(
            "p12".parse::<ScriptStep>().unwrap(),
            ScriptStep::Step(Pid(12))
        );
        assert_eq!("crash".parse::<ScriptStep>().unwrap(), ScriptStep::Crash);
        assert!("q1".parse::<ScriptStep>().is_err());
    }

    #[test]
    fn fairness_bound_below_n_rejected() {
        let mut c = RunConfig::new(Algorithm::Cc, 8, 1);
        c.scheduler = SchedulerSpec::RandomFair { bound: 4 };
        assert!(c.validate().is_err());
    }

    #[test]
    fn script_with_unknown_pid_rejected() {
        let mut c = RunConfig::new(Algorithm::Cc, 2, 1);
        c.scheduler = SchedulerSpec::Scripted {
            script: script(&[(0, 3), (2, 1)]),
        };
        assert!(c.validate().is_err());
    }
}
