//! Trace-level property checking.
//!
//! The checker consumes events one at a time, so the engine can check a run
//! as it goes without storing the trace, and an exported trace re-checked
//! offline gives the same verdicts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::memory::MemOp;
use crate::rme::Section;
use crate::trace::{EventKind, Outcome, TraceEvent, ViolationCode};
use crate::value::{CellId, Pid, Value};

/// Bounds and facts about the run that the trace alone does not carry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckContext {
    pub n: usize,
    pub seq_cell: CellId,
    pub exit_bound: u64,
    pub recover_bound: u64,
    pub rmr_cc_bound: Option<u64>,
    pub rmr_dsm_bound: Option<u64>,
    /// Scheduler fairness bound. STARVATION and FAIRNESS are only judged
    /// when this is set.
    pub fairness_bound: Option<u64>,
    /// A Try that started after the last crash and is still waiting after
    /// this many global steps fails STARVATION.
    pub starvation_limit: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub pid: Option<Pid>,
    pub from_step: u64,
    pub to_step: u64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyVerdict {
    pub property: ViolationCode,
    pub pass: bool,
    /// False when the property was not judged (e.g. no fairness contract).
    pub applicable: bool,
    pub witness: Option<Witness>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: u64,
    pub crashes: u64,
    pub passages: u64,
    pub cs_entries: u64,
    pub max_exit_steps: u64,
    pub max_recover_steps: u64,
    pub max_passage_cc: u64,
    pub max_passage_dsm: u64,
    /// Longest Try wait, in global steps, among Trys begun after the last crash.
    pub max_wait_steps: u64,
    /// Most CS entries by others during one such wait.
    pub max_overtakes: u64,
    pub pending_tries: u64,
}

#[derive(Clone, Debug, Default)]
struct PidState {
    section: Option<(Section, u64, u64)>,
    cs_since: Option<u64>,
    needs_recover: bool,
    last_scheduled: u64,
    waiting: Option<(u64, u64)>,
}

#[derive(Clone, Debug)]
pub struct TraceChecker {
    ctx: CheckContext,
    pids: BTreeMap<Pid, PidState>,
    crashed_in_cs: BTreeSet<Pid>,
    seq: u64,
    seq_at_crash: u64,
    failures: BTreeMap<ViolationCode, Witness>,
    stats: RunStats,
    last_step: u64,
    wait_since_crash: (u64, u64),
}

impl TraceChecker {
    pub fn new(ctx: CheckContext) -> Self {
        Self {
            ctx,
            pids: BTreeMap::new(),
            crashed_in_cs: BTreeSet::new(),
            seq: 1,
            seq_at_crash: 1,
            failures: BTreeMap::new(),
            stats: RunStats::default(),
            last_step: 0,
            wait_since_crash: (0, 0),
        }
    }

    fn fail(
        &mut self,
        code: ViolationCode,
        pid: Option<Pid>,
        from_step: u64,
        to_step: u64,
        detail: String,
    ) {
        self.failures.entry(code).or_insert(Witness {
            pid,
            from_step,
            to_step,
            detail,
        });
    }

    fn pid(&mut self, p: Pid) -> &mut PidState {
        self.pids.entry(p).or_default()
    }

    fn obligated(s: &PidState) -> bool {
        s.section.is_some() || s.cs_since.is_some() || s.needs_recover
    }

    fn advance_to(&mut self, step: u64) {
        if step <= self.last_step && self.stats.steps > 0 {
            return;
        }
        if let Some(b) = self.ctx.fairness_bound {
            let late: Vec<(Pid, u64)> = self
                .pids
                .iter()
                .filter(|(_, s)| Self::obligated(s) && step > s.last_scheduled + b)
                .map(|(p, s)| (*p, s.last_scheduled))
                .collect();
            for (p, since) in late {
                self.fail(
                    ViolationCode::Fairness,
                    Some(p),
                    since,
                    step,
                    format!("{p} unscheduled for more than {b} steps"),
                );
            }
        }
        self.last_step = step;
        self.stats.steps = step + 1;
    }

    pub fn observe(&mut self, e: &TraceEvent) {
        self.advance_to(e.step);
        let t = e.step;
        match &e.kind {
            EventKind::Access { pid, .. } | EventKind::Local { pid, .. } => {
                let pid = *pid;
                let st = self.pid(pid);
                st.last_scheduled = t;
                if let Some((_, _, n)) = &mut st.section {
                    *n += 1;
                }
                if let EventKind::Access { cell, op, .. } = &e.kind {
                    self.seq_write(pid, t, *cell, *op);
                }
            }
            EventKind::Crash => {
                self.stats.crashes += 1;
                for (p, st) in self.pids.iter_mut() {
                    if st.cs_since.take().is_some() {
                        self.crashed_in_cs.insert(*p);
                    }
                    if st.section.take().is_some() {
                        st.needs_recover = true;
                    }
                    st.waiting = None;
                    st.last_scheduled = t;
                }
                self.seq_at_crash = self.seq;
                self.wait_since_crash = (0, 0);
            }
            EventKind::Enter { pid, section } => {
                let pid = *pid;
                let st = self.pid(pid);
                st.section = Some((*section, t, 0));
                st.last_scheduled = t;
                match section {
                    Section::Try => st.waiting = Some((t, 0)),
                    Section::Exit => st.cs_since = None,
                    Section::Recover => {}
                }
            }
            EventKind::Return {
                pid,
                section,
                outcome,
            } => self.on_return(*pid, *section, *outcome, t),
            EventKind::PassageClose { pid, cc, dsm } => {
                self.stats.passages += 1;
                self.stats.max_passage_cc = self.stats.max_passage_cc.max(*cc);
                self.stats.max_passage_dsm = self.stats.max_passage_dsm.max(*dsm);
                if let Some(b) = self.ctx.rmr_cc_bound.filter(|b| cc > b) {
                    self.fail(
                        ViolationCode::RmrBound,
                        Some(*pid),
                        t,
                        t,
                        format!("{pid} passage took {cc} CC RMRs, bound {b}"),
                    );
                }
                if let Some(b) = self.ctx.rmr_dsm_bound.filter(|b| dsm > b) {
                    self.fail(
                        ViolationCode::RmrBound,
                        Some(*pid),
                        t,
                        t,
                        format!("{pid} passage took {dsm} DSM RMRs, bound {b}"),
                    );
                }
            }
            EventKind::Violation { code, pid, detail } => {
                self.fail(*code, *pid, t, t, detail.clone());
            }
        }
    }

    fn seq_write(&mut self, pid: Pid, t: u64, cell: CellId, op: MemOp) {
        if cell != self.ctx.seq_cell {
            return;
        }
        let v = match op {
            MemOp::Write(Value::Nat(v)) | MemOp::Fas(Value::Nat(v)) => v,
            MemOp::Cas {
                new: Value::Nat(v), ..
            } => v,
            MemOp::Read => return,
            _ => {
                self.fail(
                    ViolationCode::SeqMonotone,
                    Some(pid),
                    t,
                    t,
                    format!("{pid} stored a non-number into Seq"),
                );
                return;
            }
        };
        if v < self.seq {
            self.fail(
                ViolationCode::SeqMonotone,
                Some(pid),
                t,
                t,
                format!("Seq went back from {} to {v}", self.seq),
            );
        }
        if v > self.seq_at_crash + 1 {
            self.fail(
                ViolationCode::SeqMonotone,
                Some(pid),
                t,
                t,
                format!(
                    "Seq reached {v}, more than one above {} since the last crash",
                    self.seq_at_crash
                ),
            );
        }
        self.seq = self.seq.max(v);
    }

    fn on_return(&mut self, pid: Pid, section: Section, outcome: Outcome, t: u64) {
        let entered = self.pid(pid).section.take();
        let (start, steps) = match entered {
            Some((s, start, n)) if s == section => (start, n),
            _ => (t, 0),
        };
        match section {
            Section::Exit => {
                self.stats.max_exit_steps = self.stats.max_exit_steps.max(steps);
                if steps > self.ctx.exit_bound {
                    self.fail(
                        ViolationCode::BoundedExit,
                        Some(pid),
                        start,
                        t,
                        format!(
                            "{pid} took {steps} steps in Exit, bound {}",
                            self.ctx.exit_bound
                        ),
                    );
                }
            }
            Section::Recover => {
                self.stats.max_recover_steps = self.stats.max_recover_steps.max(steps);
                self.pid(pid).needs_recover = false;
                if steps > self.ctx.recover_bound {
                    self.fail(
                        ViolationCode::BoundedRecovery,
                        Some(pid),
                        start,
                        t,
                        format!(
                            "{pid} took {steps} steps in Recover, bound {}",
                            self.ctx.recover_bound
                        ),
                    );
                }
            }
            Section::Try => {}
        }
        if outcome == Outcome::InCs {
            self.stats.cs_entries += 1;
            if let Some((&q, since)) = self
                .pids
                .iter()
                .find(|(q, s)| **q != pid && s.cs_since.is_some())
                .map(|(q, s)| (q, s.cs_since.unwrap()))
            {
                self.fail(
                    ViolationCode::Mutex,
                    Some(pid),
                    since,
                    t,
                    format!("{pid} entered the CS while {q} was in it"),
                );
            }
            if let Some(&q) = self.crashed_in_cs.iter().find(|&&q| q != pid) {
                self.fail(
                    ViolationCode::Csr,
                    Some(pid),
                    t,
                    t,
                    format!("{pid} entered the CS before {q}, which crashed inside it"),
                );
            }
            self.crashed_in_cs.remove(&pid);
            let st = self.pid(pid);
            st.cs_since = Some(t);
            if section == Section::Try {
                if let Some((since, overtakes)) = st.waiting.take() {
                    let w = (t - since, overtakes);
                    self.wait_since_crash.0 = self.wait_since_crash.0.max(w.0);
                    self.wait_since_crash.1 = self.wait_since_crash.1.max(w.1);
                }
            }
            for (q, s) in self.pids.iter_mut() {
                if *q != pid {
                    if let Some((_, o)) = &mut s.waiting {
                        *o += 1;
                    }
                }
            }
        } else {
            self.pid(pid).waiting = None;
        }
    }

    /// Closes the run and returns one verdict per property.
    pub fn finish(mut self) -> (Vec<PropertyVerdict>, RunStats) {
        let end = self.last_step;
        let mut pending = 0;
        let mut wait = self.wait_since_crash;
        let mut starving = None;
        for (p, s) in &self.pids {
            if let Some((since, overtakes)) = s.waiting {
                pending += 1;
                let len = end - since;
                wait.0 = wait.0.max(len);
                wait.1 = wait.1.max(overtakes);
                if len > self.ctx.starvation_limit && starving.is_none() {
                    starving = Some((*p, since));
                }
            }
        }
        if self.ctx.fairness_bound.is_some() {
            if let Some((p, since)) = starving {
                let limit = self.ctx.starvation_limit;
                self.fail(
                    ViolationCode::Starvation,
                    Some(p),
                    since,
                    end,
                    format!("{p} waited in Try for more than {limit} steps"),
                );
            }
        }
        self.stats.max_wait_steps = wait.0;
        self.stats.max_overtakes = wait.1;
        self.stats.pending_tries = pending;
        let fair = self.ctx.fairness_bound.is_some();
        let verdicts = ViolationCode::ALL
            .into_iter()
            .map(|code| {
                let applicable =
                    fair || !matches!(code, ViolationCode::Starvation | ViolationCode::Fairness);
                let witness = self.failures.get(&code).cloned();
                PropertyVerdict {
                    property: code,
                    pass: witness.is_none(),
                    applicable,
                    witness,
                }
            })
            .collect();
        (verdicts, self.stats)
    }
}

/// Checks a complete trace.
pub fn check_run(trace: &[TraceEvent], ctx: &CheckContext) -> (Vec<PropertyVerdict>, RunStats) {
    let mut c = TraceChecker::new(ctx.clone());
    for e in trace {
        c.observe(e);
    }
    c.finish()
}

pub fn all_pass(verdicts: &[PropertyVerdict]) -> bool {
    verdicts.iter().all(|v| v.pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> CheckContext {
        CheckContext {
            n: 2,
            seq_cell: CellId(0),
            exit_bound: 5,
            recover_bound: 8,
            rmr_cc_bound: None,
            rmr_dsm_bound: None,
            fairness_bound: None,
            starvation_limit: 1000,
        }
    }

    fn ev(step: u64, kind: EventKind) -> TraceEvent {
        TraceEvent { step, kind }
    }

    fn ret(pid: u32, section: Section, outcome: Outcome) -> EventKind {
        EventKind::Return {
            pid: Pid(pid),
            section,
            outcome,
        }
    }

    fn verdict(v: &[PropertyVerdict], code: ViolationCode) -> bool {
        v.iter().find(|x| x.property == code).unwrap().pass
    }

    #[test]
    fn two_in_cs_is_mutex_failure() {
        let t = vec![
            ev(0, ret(0, Section::Try, Outcome::InCs)),
            ev(1, ret(1, Section::Try, Outcome::InCs)),
        ];
        let (v, _) = check_run(&t, &ctx());
        assert!(!verdict(&v, ViolationCode::Mutex));
        let w = v
            .iter()
            .find(|x| x.property == ViolationCode::Mutex)
            .unwrap();
        assert_eq!(w.witness.as_ref().unwrap().from_step, 0);
    }

    #[test]
    fn overtaking_a_crashed_holder_is_csr_failure() {
        let t = vec![
            ev(0, ret(0, Section::Try, Outcome::InCs)),
            ev(1, EventKind::Crash),
            ev(2, ret(1, Section::Try, Outcome::InCs)),
        ];
        let (v, _) = check_run(&t, &ctx());
        assert!(verdict(&v, ViolationCode::Mutex));
        assert!(!verdict(&v, ViolationCode::Csr));
    }

    #[test]
    fn seq_double_bump_without_crash() {
        let w = |step, v| {
            ev(
                step,
                EventKind::Access {
                    pid: Pid(0),
                    cell: CellId(0),
                    op: MemOp::Write(Value::Nat(v)),
                    result: Value::Bot,
                    rmr_cc: true,
                    rmr_dsm: true,
                    pc_from: crate::rme::Pc::R4,
                    pc_to: crate::rme::Pc::R5,
                },
            )
        };
        let (v, _) = check_run(&[ev(0, EventKind::Crash), w(1, 2)], &ctx());
        assert!(verdict(&v, ViolationCode::SeqMonotone));
        let (v, _) = check_run(&[ev(0, EventKind::Crash), w(1, 2), w(2, 3)], &ctx());
        assert!(!verdict(&v, ViolationCode::SeqMonotone));
    }

    #[test]
    fn exit_span_counts_own_steps() {
        let mut t = vec![ev(
            0,
            EventKind::Enter {
                pid: Pid(0),
                section: Section::Exit,
            },
        )];
        for i in 0..6 {
            t.push(ev(
                i,
                EventKind::Local {
                    pid: Pid(0),
                    pc_from: crate::rme::Pc::E1,
                    pc_to: crate::rme::Pc::E1,
                },
            ));
        }
        t.push(ev(5, ret(0, Section::Exit, Outcome::InRem)));
        let (v, s) = check_run(&t, &ctx());
        assert_eq!(s.max_exit_steps, 6);
        assert!(!verdict(&v, ViolationCode::BoundedExit));
    }
}
