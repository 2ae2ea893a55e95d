//! TOML scenario files.
//!
//! Every field but `algorithm` and `n` is optional and falls back to the
//! `RunConfig::new` default. Named schedules live in a `[schedules]` table;
//! `schedule = "<name>"` selects one as a scripted scheduler.

use std::collections::BTreeMap;
use std::path::Path;

use rme_core::harness::{Bounds, CrashSpec, RunConfig, SchedulerSpec, ScriptStep};
use rme_core::{Algorithm, Mutant};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub algorithm: Option<Algorithm>,
    pub n: Option<usize>,
    #[serde(default, with = "wide_seed", skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cs_dwell: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_passages: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spurious_recover: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mutant: Option<Mutant>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check_invariant: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_trace: Option<bool>,
    /// Name of an entry in `schedules` to run as a scripted scheduler.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheduler: Option<SchedulerSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crashes: Option<CrashSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub schedules: BTreeMap<String, Vec<ScriptStep>>,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Scenario(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Scenario(e.to_string()))
    }

    /// Every field filled in from `cfg`.
    pub fn from_run_config(cfg: &RunConfig) -> Self {
        Self {
            algorithm: Some(cfg.algorithm),
            n: Some(cfg.n),
            seed: Some(cfg.seed),
            max_steps: Some(cfg.max_steps),
            cs_dwell: Some(cfg.cs_dwell),
            max_passages: cfg.max_passages,
            spurious_recover: Some(cfg.spurious_recover),
            mutant: Some(cfg.mutant),
            check_invariant: Some(cfg.check_invariant),
            record_trace: Some(cfg.record_trace),
            schedule: None,
            scheduler: Some(cfg.scheduler.clone()),
            crashes: Some(cfg.crashes.clone()),
            bounds: Some(cfg.bounds.clone()),
            schedules: BTreeMap::new(),
        }
    }

    /// Resolves defaults. `seed` is used when the file has none.
    pub fn to_run_config(&self, seed: u64) -> Result<RunConfig, CliError> {
        let algorithm = self
            .algorithm
            .ok_or_else(|| CliError::Scenario("missing `algorithm`".into()))?;
        let n = self
            .n
            .ok_or_else(|| CliError::Scenario("missing `n`".into()))?;
        let mut cfg = RunConfig::new(algorithm, n, self.seed.unwrap_or(seed));
        if let Some(v) = self.max_steps {
            cfg.max_steps = v;
        }
        if let Some(v) = self.cs_dwell {
            cfg.cs_dwell = v;
        }
        cfg.max_passages = self.max_passages.or(cfg.max_passages);
        if let Some(v) = self.spurious_recover {
            cfg.spurious_recover = v;
        }
        if let Some(v) = self.mutant {
            cfg.mutant = v;
        }
        if let Some(v) = self.check_invariant {
            cfg.check_invariant = v;
        }
        if let Some(v) = self.record_trace {
            cfg.record_trace = v;
        }
        if let Some(v) = &self.crashes {
            cfg.crashes = v.clone();
        }
        if let Some(v) = &self.bounds {
            cfg.bounds = v.clone();
        }
        match (&self.schedule, &self.scheduler) {
            (Some(_), Some(_)) => {
                return Err(CliError::Scenario(
                    "set either `schedule` or `scheduler`, not both".into(),
                ))
            }
            (Some(name), None) => {
                let script = self
                    .schedules
                    .get(name)
                    .ok_or_else(|| CliError::Scenario(format!("no schedule named `{name}`")))?;
                cfg.scheduler = SchedulerSpec::Scripted {
                    script: script.clone(),
                };
            }
            (None, Some(s)) => cfg.scheduler = s.clone(),
            (None, None) => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// TOML integers are signed, so seeds above `i64::MAX` travel as strings.
mod wide_seed {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            Some(x) if x <= i64::MAX as u64 => s.serialize_i64(x as i64),
            Some(x) => s.collect_str(&x),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
        use serde::de::Error;
        match Option::<Raw>::deserialize(d)? {
            None => Ok(None),
            Some(Raw::Int(i)) => u64::try_from(i).map(Some).map_err(D::Error::custom),
            Some(Raw::Text(t)) => t.parse().map(Some).map_err(D::Error::custom),
        }
    }
}
