//! The client protocol each process follows, shared by the run and explore
//! engines: remainder, Try, CS for a few steps, Exit, and Recover after a
//! crash.

use crate::error::SimError;
use crate::memory::{Access, Memory};
use crate::rme::{Pc, Rme, Section, SectionOutcome, Status};
use crate::step::Ctx;
use crate::trace::{EventKind, Outcome, TraceEvent, ViolationCode};
use crate::value::Pid;

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Client {
    /// Completed Exits.
    pub done: u32,
    /// CS steps still to spend before calling Exit.
    pub dwell: u32,
    pub section: Option<Section>,
}

impl Client {
    pub fn idle(&self, budget: Option<u32>) -> bool {
        budget.is_some_and(|b| self.done >= b)
    }
}

/// What happened in one process step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub pid: Pid,
    pub enter: Option<Section>,
    pub access: Option<Access>,
    pub pc_from: Pc,
    pub pc_to: Pc,
    /// Section that returned in this step, with its outcome.
    pub returned: Option<(Section, Outcome)>,
    /// Passage RMR counters if the passage closed in this step.
    pub passage: Option<(u64, u64)>,
    pub violations: Vec<(ViolationCode, Option<Pid>, String)>,
}

impl StepRecord {
    pub fn events(&self, step: u64) -> Vec<TraceEvent> {
        let pid = self.pid;
        let mut out = Vec::with_capacity(3);
        let mut push = |kind| out.push(TraceEvent { step, kind });
        if let Some(section) = self.enter {
            push(EventKind::Enter { pid, section });
        }
        push(match self.access {
            Some(a) => EventKind::Access {
                pid,
                cell: a.cell,
                op: a.op,
                result: a.result,
                rmr_cc: a.rmr_cc,
                rmr_dsm: a.rmr_dsm,
                pc_from: self.pc_from,
                pc_to: self.pc_to,
            },
            None => EventKind::Local {
                pid,
                pc_from: self.pc_from,
                pc_to: self.pc_to,
            },
        });
        if let Some((section, outcome)) = self.returned {
            push(EventKind::Return {
                pid,
                section,
                outcome,
            });
        }
        if let Some((cc, dsm)) = self.passage {
            push(EventKind::PassageClose { pid, cc, dsm });
        }
        for (code, vp, detail) in &self.violations {
            push(EventKind::Violation {
                code: *code,
                pid: *vp,
                detail: detail.clone(),
            });
        }
        out
    }
}

/// What an idle-in-remainder process will do when scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Start {
    Try,
    Recover,
}

/// Whether `pid` can take a step at all.
pub fn can_step(rme: &Rme, client: &Client, pid: Pid, budget: Option<u32>) -> bool {
    let p = rme.proc(pid);
    !(p.pc == Pc::Rem && p.status == Status::Good && client.idle(budget))
}

/// True if the process is outside the good remainder and so owed a step.
pub fn is_obligated(rme: &Rme, pid: Pid) -> bool {
    let p = rme.proc(pid);
    p.pc != Pc::Rem || p.status != Status::Good
}

/// Advances `pid` by one step of the client protocol. `start` picks between
/// Try and a spurious Recover for a process in the good remainder.
pub fn client_step(
    mem: &mut Memory,
    rme: &mut Rme,
    client: &mut Client,
    pid: Pid,
    start: Start,
    cs_dwell: u32,
) -> Result<StepRecord, SimError> {
    let p = rme.proc(pid).clone();
    let mut enter = None;
    match p.pc {
        Pc::Rem => {
            enter = Some(if p.status != Status::Good || start == Start::Recover {
                Section::Recover
            } else {
                Section::Try
            });
            mem.begin_passage(pid);
        }
        Pc::Cs if client.dwell > 0 => {
            client.dwell -= 1;
            return Ok(StepRecord {
                pid,
                enter: None,
                access: None,
                pc_from: Pc::Cs,
                pc_to: Pc::Cs,
                returned: None,
                passage: None,
                violations: Vec::new(),
            });
        }
        Pc::Cs => enter = Some(Section::Exit),
        _ => {}
    }
    let mut ctx = Ctx::new(mem);
    if let Some(section) = enter {
        rme.invoke(&mut ctx, pid, section)?;
        client.section = Some(section);
    }
    let pc_from = rme.proc(pid).pc;
    let out = rme.step(&mut ctx, pid)?;
    let access = ctx.access;
    let violations = std::mem::take(&mut ctx.violations);
    let pc_to = rme.proc(pid).pc;
    let mut returned = None;
    let mut passage = None;
    if out != SectionOutcome::Pending {
        let section = client.section.take().unwrap_or(Section::Try);
        match out {
            SectionOutcome::InCs => {
                returned = Some((section, Outcome::InCs));
                client.dwell = cs_dwell;
            }
            SectionOutcome::InRem => {
                returned = Some((section, Outcome::InRem));
                if section == Section::Exit {
                    client.done += 1;
                }
                let k = mem.rmr_stats(pid);
                passage = Some((k.passage_cc, k.passage_dsm));
            }
            SectionOutcome::Pending => unreachable!(),
        }
    }
    Ok(StepRecord {
        pid,
        enter,
        access,
        pc_from,
        pc_to,
        returned,
        passage,
        violations,
    })
}

/// Which processes were mid-passage just before a crash, with their
/// passage RMR counters.
pub fn passages_cut(mem: &Memory, rme: &Rme) -> Vec<(Pid, u64, u64)> {
    rme.procs()
        .iter()
        .filter(|p| p.pc != Pc::Rem)
        .map(|p| {
            let k = mem.rmr_stats(p.pid);
            (p.pid, k.passage_cc, k.passage_dsm)
        })
        .collect()
}

/// Crash transition on the client side.
pub fn crash_clients(clients: &mut [Client]) {
    for c in clients {
        c.section = None;
        c.dwell = 0;
    }
}
