//! Single-run engine: scheduler, crash injection, per-step checks.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkers::invariant::{eval_invariant, Condition};
use crate::checkers::run::{CheckContext, PropertyVerdict, RunStats, TraceChecker};
use crate::error::SimError;
use crate::memory::Memory;
use crate::rme::{Algorithm, Rme};
use crate::trace::{EventKind, TraceEvent, ViolationCode};
use crate::value::Pid;

use super::client::{
    can_step, client_step, crash_clients, is_obligated, passages_cut, Client, Start,
};
use super::config::{CrashSpec, RunConfig, SchedulerSpec, ScriptStep};

/// Violation events kept in a report; the verdicts still see every one.
const MAX_REPORTED_VIOLATIONS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub n: usize,
    pub seed: u64,
    pub verdicts: Vec<PropertyVerdict>,
    pub stats: RunStats,
    #[serde(skip)]
    pub violations: Vec<TraceEvent>,
    #[serde(skip)]
    pub trace: Option<Vec<TraceEvent>>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass) && self.violations.is_empty()
    }

    pub fn verdict(&self, code: ViolationCode) -> &PropertyVerdict {
        self.verdicts
            .iter()
            .find(|v| v.property == code)
            .expect("every property has a verdict")
    }
}

pub fn check_context(cfg: &RunConfig, rme: &Rme) -> CheckContext {
    let b = cfg.fairness_bound();
    CheckContext {
        n: cfg.n,
        seq_cell: rme.seq_cell(),
        exit_bound: cfg.bounds.exit,
        recover_bound: cfg.bounds.recover,
        rmr_cc_bound: cfg.bounds.rmr_cc,
        rmr_dsm_bound: cfg.bounds.rmr_dsm,
        fairness_bound: b,
        starvation_limit: cfg
            .bounds
            .starvation_limit
            .unwrap_or(64 * cfg.n as u64 * b.unwrap_or(1)),
    }
}

pub struct Engine {
    cfg: RunConfig,
    mem: Memory,
    rme: Rme,
    clients: Vec<Client>,
    step: u64,
    rng: ChaCha8Rng,
    crash_rng: ChaCha8Rng,
    last_sched: Vec<u64>,
    rr_next: usize,
    script_pos: usize,
    checker: TraceChecker,
    trace: Option<Vec<TraceEvent>>,
    violations: Vec<TraceEvent>,
    reported: BTreeSet<(Condition, Pid)>,
    base_reported: BTreeSet<usize>,
    crash_steps: BTreeSet<u64>,
}

impl Engine {
    pub fn new(cfg: RunConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut mem = Memory::new();
        let rme = Rme::new(cfg.algorithm, &mut mem, cfg.n, cfg.mutant);
        let checker = TraceChecker::new(check_context(&cfg, &rme));
        let crash_steps = match &cfg.crashes {
            CrashSpec::At { steps } => steps.iter().copied().collect(),
            _ => BTreeSet::new(),
        };
        Ok(Self {
            mem,
            rme,
            clients: vec![Client::default(); cfg.n],
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            crash_rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15),
            last_sched: vec![0; cfg.n],
            rr_next: 0,
            script_pos: 0,
            checker,
            trace: cfg.record_trace.then(Vec::new),
            violations: Vec::new(),
            reported: BTreeSet::new(),
            base_reported: BTreeSet::new(),
            crash_steps,
            cfg,
        })
    }

    pub fn memory(&self) -> &Memory {
        &self.mem
    }

    pub fn rme(&self) -> &Rme {
        &self.rme
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    fn emit(&mut self, e: TraceEvent) {
        self.checker.observe(&e);
        if matches!(e.kind, EventKind::Violation { .. })
            && self.violations.len() < MAX_REPORTED_VIOLATIONS
        {
            self.violations.push(e.clone());
        }
        if let Some(t) = &mut self.trace {
            t.push(e);
        }
    }

    fn pids(&self) -> impl Iterator<Item = Pid> {
        (0..self.cfg.n as u32).map(Pid)
    }

    fn can_step(&self, pid: Pid) -> bool {
        can_step(
            &self.rme,
            &self.clients[pid.index()],
            pid,
            self.cfg.max_passages,
        )
    }

    /// System-wide crash.
    pub fn inject_crash(&mut self) {
        let t = self.step;
        let cut = passages_cut(&self.mem, &self.rme);
        self.mem.system_crash(&mut self.crash_rng);
        self.rme.on_crash();
        self.rme.scramble_volatile(&mut self.crash_rng);
        crash_clients(&mut self.clients);
        self.emit(TraceEvent {
            step: t,
            kind: EventKind::Crash,
        });
        for (pid, cc, dsm) in cut {
            self.emit(TraceEvent {
                step: t,
                kind: EventKind::PassageClose { pid, cc, dsm },
            });
        }
        for s in &mut self.last_sched {
            *s = t;
        }
        self.check_config();
        self.step += 1;
    }

    /// Steps `pid` once. Returns false if it had nothing to do.
    pub fn step_process(&mut self, pid: Pid) -> Result<bool, SimError> {
        if pid.index() >= self.cfg.n {
            return Err(SimError::UnknownPid(pid));
        }
        if !self.can_step(pid) {
            return Ok(false);
        }
        let start =
            if self.cfg.spurious_recover > 0.0 && self.rng.gen_bool(self.cfg.spurious_recover) {
                Start::Recover
            } else {
                Start::Try
            };
        let t = self.step;
        let rec = client_step(
            &mut self.mem,
            &mut self.rme,
            &mut self.clients[pid.index()],
            pid,
            start,
            self.cfg.cs_dwell,
        )?;
        for e in rec.events(t) {
            self.emit(e);
        }
        self.last_sched[pid.index()] = t;
        self.check_config();
        self.step += 1;
        Ok(true)
    }

    fn check_config(&mut self) {
        let t = self.step;
        for i in self.rme.base_mutex_failures() {
            if self.base_reported.insert(i) {
                self.emit(TraceEvent {
                    step: t,
                    kind: EventKind::Violation {
                        code: ViolationCode::BaseMutex,
                        pid: None,
                        detail: format!("two holders in clean base lock {i}"),
                    },
                });
            }
        }
        if !self.cfg.check_invariant {
            return;
        }
        let view = self.rme.view(&self.mem);
        for f in eval_invariant(&view) {
            if self.reported.insert((f.condition, f.pid)) {
                self.emit(TraceEvent {
                    step: t,
                    kind: EventKind::Violation {
                        code: ViolationCode::Invariant,
                        pid: Some(f.pid),
                        detail: format!("{}: {}", f.condition, f.detail),
                    },
                });
            }
        }
    }

    fn crash_due(&mut self) -> bool {
        let t = self.step;
        match &self.cfg.crashes {
            CrashSpec::None => false,
            CrashSpec::At { .. } => self.crash_steps.contains(&t),
            CrashSpec::Probability { p } => {
                let p = *p;
                self.rng.gen_bool(p)
            }
            CrashSpec::Every { period } => t > 0 && t.is_multiple_of(*period),
        }
    }

    fn pick_random_fair(&mut self, bound: u64) -> Option<Pid> {
        let t = self.step;
        let n = self.cfg.n as u64;
        let candidates: Vec<Pid> = self.pids().filter(|&p| self.can_step(p)).collect();
        if candidates.is_empty() {
            return None;
        }
        let oldest = candidates
            .iter()
            .copied()
            .filter(|&p| is_obligated(&self.rme, p))
            .max_by_key(|p| (t - self.last_sched[p.index()], std::cmp::Reverse(p.0)));
        if let Some(p) = oldest {
            if t - self.last_sched[p.index()] >= bound.saturating_sub(n) {
                return Some(p);
            }
        }
        Some(candidates[self.rng.gen_range(0..candidates.len())])
    }

    fn pick_round_robin(&mut self) -> Option<Pid> {
        let n = self.cfg.n;
        for k in 0..n {
            let p = Pid(((self.rr_next + k) % n) as u32);
            if self.can_step(p) {
                self.rr_next = (p.index() + 1) % n;
                return Some(p);
            }
        }
        None
    }

    /// Takes one scheduler step. Returns false when the run cannot continue.
    pub fn tick(&mut self) -> Result<bool, SimError> {
        if self.crash_due() {
            self.inject_crash();
            return Ok(true);
        }
        match self.cfg.scheduler.clone() {
            SchedulerSpec::RandomFair { bound } => match self.pick_random_fair(bound) {
                Some(p) => self.step_process(p),
                None => Ok(false),
            },
            SchedulerSpec::RoundRobin => match self.pick_round_robin() {
                Some(p) => self.step_process(p),
                None => Ok(false),
            },
            SchedulerSpec::Scripted { script } => loop {
                let Some(&s) = script.get(self.script_pos) else {
                    return Ok(false);
                };
                self.script_pos += 1;
                match s {
                    ScriptStep::Crash => {
                        self.inject_crash();
                        return Ok(true);
                    }
                    ScriptStep::Step(p) => {
                        if self.step_process(p)? {
                            return Ok(true);
                        }
                    }
                }
            },
        }
    }

    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        while self.step < self.cfg.max_steps && self.tick()? {}
        Ok(())
    }

    pub fn finish(self) -> RunReport {
        let (verdicts, stats) = self.checker.finish();
        RunReport {
            algorithm: self.cfg.algorithm,
            n: self.cfg.n,
            seed: self.cfg.seed,
            verdicts,
            stats,
            violations: self.violations,
            trace: self.trace,
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<RunReport, SimError> {
    let mut e = Engine::new(cfg.clone())?;
    e.run_to_end()?;
    Ok(e.finish())
}
