//! The fourteen-condition inductive invariant, evaluated per configuration.
//!
//! Conditions are numbered C1..C14 in listing order. Program-counter ranges
//! such as `T3-T7` are inclusive and follow listing order, so DSM-only labels
//! (T8.1, E2.1, R5.1) fall inside a range exactly when they sit between its
//! endpoints.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::locks::GhostSets;
use crate::rme::{Pc, Proc, Status};
use crate::value::{Pid, Value};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LockView {
    pub try_set: BTreeSet<Pid>,
    pub cs_set: BTreeSet<Pid>,
    pub exit_set: BTreeSet<Pid>,
}

impl LockView {
    pub fn is_empty(&self) -> bool {
        self.try_set.is_empty() && self.cs_set.is_empty() && self.exit_set.is_empty()
    }

    pub fn contains(&self, p: Pid) -> bool {
        self.try_set.contains(&p) || self.cs_set.contains(&p) || self.exit_set.contains(&p)
    }
}

impl From<&GhostSets> for LockView {
    /// A process that abandoned the lock while holding it is shown in the CS
    /// set, which is where it would have stayed had it not abandoned.
    fn from(g: &GhostSets) -> Self {
        Self {
            try_set: g.try_set.clone(),
            cs_set: g.cs_set.union(&g.retained).copied().collect(),
            exit_set: g.exit_set.difference(&g.retained).copied().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProcView {
    pub pid: Pid,
    pub pc: Pc,
    pub status: Status,
    pub active: bool,
    pub s: u64,
}

impl From<&Proc> for ProcView {
    fn from(p: &Proc) -> Self {
        Self {
            pid: p.pid,
            pc: p.pc,
            status: p.status,
            active: p.active,
            s: p.s,
        }
    }
}

/// What the invariant reads from a configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvariantView {
    pub seq: u64,
    pub stop: [bool; 3],
    pub barrier: Value,
    pub locks: [LockView; 3],
    pub procs: Vec<ProcView>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
    C9,
    C10,
    C11,
    C12,
    C13,
    C14,
}

impl Condition {
    pub const ALL: [Condition; 14] = [
        Condition::C1,
        Condition::C2,
        Condition::C3,
        Condition::C4,
        Condition::C5,
        Condition::C6,
        Condition::C7,
        Condition::C8,
        Condition::C9,
        Condition::C10,
        Condition::C11,
        Condition::C12,
        Condition::C13,
        Condition::C14,
    ];

    /// The condition as evaluated, in a compact ASCII notation.
    pub fn transcription(self) -> &'static str {
        match self {
            Condition::C1 => "1 <= S_p <= Seq",
            Condition::C2 => {
                "Lock[(Seq+1)%3] empty && (pc_p in {R3,R4} => Lock[(S_p-1)%3] empty)"
            }
            Condition::C3 => {
                "!Stop[Seq%3] && !Stop[(Seq+1)%3] && (pc_p = R4 => !Stop[(S_p-1)%3])"
            }
            Condition::C4 => {
                "((!Active_p || S_p < Seq || pc_p in {T2,E3,E4,R6,R7}) => p !in Lock[Seq%3].Set) \
                 && (S_p < Seq-1 => p !in Lock[S_p%3].Set)"
            }
            Condition::C5 => "forall i: p in at most one of Lock[i].{Try,CS,Exit}Set",
            Condition::C6 => "pc_p in {T3,T9} => p in Lock[S_p%3].TrySet",
            Condition::C7 => {
                "((pc_p = T4 && !Stop[S_p%3]) || pc_p in {T5-T7,T10-T14} \
                 || (pc_p in {cs,E1} && S_p = Seq)) => p in Lock[S_p%3].CSSet"
            }
            Condition::C8 => "pc_p = E2 => p in Lock[S_p%3].ExitSet",
            Condition::C9 => {
                "((!Active_p || pc_p in {T1-T12,E4,R7}) => Barrier != p) \
                 && (pc_p = T13 => Barrier = bot) \
                 && ((pc_p in {T14-E3} || status_p = recover-from-cs) => Barrier = p)"
            }
            Condition::C10 => {
                "(pc_p in {T2-E4,R2-R5} => Active_p) \
                 && (((pc_p in {rem,R1-R7} && status_p in {good,recover-from-rem}) \
                 || pc_p in {T1,R8}) => !Active_p)"
            }
            Condition::C11 => {
                "(pc_p in {T3-T7,E2,R2-R4} => S_p in {Seq-1,Seq}) \
                 && (pc_p in {T8,R5} => S_p = Seq-1) && (pc_p in [T9,T14] => S_p = Seq) \
                 && ((pc_p = R6 && Barrier = p) => S_p < Seq)"
            }
            Condition::C12 => {
                "(pc_p in {T3-T5} && S_p = Seq-1) => (Stop[S_p%3] || exists q: pc_q = R5 && S_q = S_p)"
            }
            Condition::C13 => {
                "((pc_p in {T3-T6,E2,R2-R5} && S_p = Seq-1) || (pc_p = T6 && Barrier != bot) \
                 || pc_p in {T7-T14}) => forall q: !(pc_q in {rem,R1} && Active_q && S_q = Seq) \
                 && (pc_q in {R2-R5} => S_q = Seq-1)"
            }
            Condition::C14 => {
                "(forall q: (pc_p in {T6,T7,T12} && S_p = Seq && Barrier = q) => (S_q = Seq-1 \
                 && q in Lock[S_q%3].CSSet && forall r: (q != r && S_r = S_q) => \
                 (pc_r in {rem-T3,T8,E4,R1-R8} || (pc_r = T4 => Stop[S_r%3])))) \
                 && (((pc_p in {T7,T12} && S_p = Seq && Barrier = bot) || pc_p in {T13,T14}) => \
                 (forall r: (S_r != Seq-1 || pc_r in {rem-T3,T8,E4,R1-R8} || (pc_r = T4 => Stop[S_r%3])) \
                 && exists q: q in Lock[(Seq-1)%3].CSSet)) \
                 [the inner `(pc_r = T4 => Stop)` is a disjunct as bracketed, so the r-clauses \
                 only constrain processes at T4]"
            }
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvariantFailure {
    pub condition: Condition,
    pub pid: Pid,
    pub detail: String,
}

fn any(pc: Pc, set: &[Pc]) -> bool {
    set.contains(&pc)
}

fn m3(x: u64) -> usize {
    (x % 3) as usize
}

fn pm3(x: u64) -> usize {
    ((x + 2) % 3) as usize
}

impl InvariantView {
    fn proc_of(&self, pid: Pid) -> Option<&ProcView> {
        self.procs.iter().find(|p| p.pid == pid)
    }

    fn barrier_is(&self, pid: Pid) -> bool {
        self.barrier == Value::Pid(pid)
    }

    /// Shared by both clauses of C14: the old-queue process `r` is in a state
    /// that cannot reach the critical section without going through the Barrier.
    fn r_clause(&self, r: &ProcView) -> bool {
        r.pc.within(Pc::Rem, Pc::T3)
            || any(r.pc, &[Pc::T8, Pc::E4])
            || r.pc.within(Pc::R1, Pc::R8)
            || r.pc != Pc::T4
            || self.stop[m3(r.s)]
    }

    /// Checks one condition for process `p`. Returns a description of the
    /// failing clause, if any.
    pub fn check(&self, cond: Condition, p: &ProcView) -> Option<String> {
        let seq = self.seq;
        let s = p.s;
        let pc = p.pc;
        let pid = p.pid;
        let fail = |msg: &str| Some(format!("{pid} at {pc}: {msg}"));
        match cond {
            Condition::C1 => {
                if !(1 <= s && s <= seq) {
                    return fail(&format!("S_p = {s} outside [1, {seq}]"));
                }
            }
            Condition::C2 => {
                if !self.locks[m3(seq + 1)].is_empty() {
                    return fail("Lock[(Seq+1)%3] is in use");
                }
                if any(pc, &[Pc::R3, Pc::R4]) && !self.locks[pm3(s)].is_empty() {
                    return fail("Lock[(S_p-1)%3] in use after reset");
                }
            }
            Condition::C3 => {
                if self.stop[m3(seq)] || self.stop[m3(seq + 1)] {
                    return fail("current or next Stop flag is raised");
                }
                if pc == Pc::R4 && self.stop[pm3(s)] {
                    return fail("Stop[(S_p-1)%3] still raised at R4");
                }
            }
            Condition::C4 => {
                let gone =
                    !p.active || s < seq || any(pc, &[Pc::T2, Pc::E3, Pc::E4, Pc::R6, Pc::R7]);
                if gone && self.locks[m3(seq)].contains(pid) {
                    return fail("still in Lock[Seq%3]");
                }
                if s + 1 < seq && self.locks[m3(s)].contains(pid) {
                    return fail("still in a lock two epochs old");
                }
            }
            Condition::C5 => {
                for (i, l) in self.locks.iter().enumerate() {
                    let n = l.try_set.contains(&pid) as u8
                        + l.cs_set.contains(&pid) as u8
                        + l.exit_set.contains(&pid) as u8;
                    if n > 1 {
                        return fail(&format!("in {n} sets of Lock[{i}]"));
                    }
                }
            }
            Condition::C6 => {
                if any(pc, &[Pc::T3, Pc::T9]) && !self.locks[m3(s)].try_set.contains(&pid) {
                    return fail("not in Lock[S_p%3].TrySet");
                }
            }
            Condition::C7 => {
                let pre = (pc == Pc::T4 && !self.stop[m3(s)])
                    || pc.within(Pc::T5, Pc::T7)
                    || pc.within(Pc::T10, Pc::T14)
                    || (any(pc, &[Pc::Cs, Pc::E1]) && s == seq);
                if pre && !self.locks[m3(s)].cs_set.contains(&pid) {
                    return fail("not in Lock[S_p%3].CSSet");
                }
            }
            Condition::C8 => {
                if pc == Pc::E2 && !self.locks[m3(s)].exit_set.contains(&pid) {
                    return fail("not in Lock[S_p%3].ExitSet");
                }
            }
            Condition::C9 => {
                let owns = self.barrier_is(pid);
                if (!p.active || pc.within(Pc::T1, Pc::T12) || any(pc, &[Pc::E4, Pc::R7])) && owns {
                    return fail("owns the Barrier");
                }
                if pc == Pc::T13 && !self.barrier.is_bot() {
                    return fail("Barrier not free at T13");
                }
                if (pc.within(Pc::T14, Pc::E3) || p.status == Status::RecoverFromCs) && !owns {
                    return fail("does not own the Barrier");
                }
            }
            Condition::C10 => {
                if (pc.within(Pc::T2, Pc::E4) || pc.within(Pc::R2, Pc::R5)) && !p.active {
                    return fail("inactive inside a passage");
                }
                let idle = (pc == Pc::Rem || pc.within(Pc::R1, Pc::R7))
                    && matches!(p.status, Status::Good | Status::RecoverFromRem);
                if (idle || any(pc, &[Pc::T1, Pc::R8])) && p.active {
                    return fail("active outside a passage");
                }
            }
            Condition::C11 => {
                let in_window = s + 1 == seq || s == seq;
                if (pc.within(Pc::T3, Pc::T7) || pc == Pc::E2 || pc.within(Pc::R2, Pc::R4))
                    && !in_window
                {
                    return fail(&format!("S_p = {s} not in {{Seq-1, Seq}} with Seq = {seq}"));
                }
                if any(pc, &[Pc::T8, Pc::R5]) && s + 1 != seq {
                    return fail("S_p != Seq-1");
                }
                if pc.within(Pc::T9, Pc::T14) && s != seq {
                    return fail("S_p != Seq");
                }
                if pc == Pc::R6 && self.barrier_is(pid) && s >= seq {
                    return fail("owns Barrier at R6 without a stale epoch");
                }
            }
            Condition::C12 => {
                if pc.within(Pc::T3, Pc::T5)
                    && s + 1 == seq
                    && !self.stop[m3(s)]
                    && !self.procs.iter().any(|q| q.pc == Pc::R5 && q.s == s)
                {
                    return fail("stale epoch with no Stop raised or pending");
                }
            }
            Condition::C13 => {
                let pre =
                    ((pc.within(Pc::T3, Pc::T6) || pc == Pc::E2 || pc.within(Pc::R2, Pc::R5))
                        && s + 1 == seq)
                        || (pc == Pc::T6 && !self.barrier.is_bot())
                        || pc.within(Pc::T7, Pc::T14);
                if pre {
                    for q in &self.procs {
                        if any(q.pc, &[Pc::Rem, Pc::R1]) && q.active && q.s == seq {
                            return fail(&format!("{} could bump Seq again", q.pid));
                        }
                        if q.pc.within(Pc::R2, Pc::R5) && q.s + 1 != seq {
                            return fail(&format!("{} is resetting with S_q != Seq-1", q.pid));
                        }
                    }
                }
            }
            Condition::C14 => {
                if any(pc, &[Pc::T6, Pc::T7, Pc::T12]) && s == seq {
                    if let Value::Pid(qid) = self.barrier {
                        let Some(q) = self.proc_of(qid) else {
                            return fail("Barrier names an unknown process");
                        };
                        if q.s + 1 != seq {
                            return fail(&format!("Barrier owner {qid} is not from the old epoch"));
                        }
                        if !self.locks[m3(q.s)].cs_set.contains(&qid) {
                            return fail(&format!("Barrier owner {qid} not in its lock's CSSet"));
                        }
                        for r in &self.procs {
                            if r.pid != qid && r.s == q.s && !self.r_clause(r) {
                                return fail(&format!(
                                    "{} can still advance in the old queue",
                                    r.pid
                                ));
                            }
                        }
                    }
                }
                let pre = (any(pc, &[Pc::T7, Pc::T12]) && s == seq && self.barrier.is_bot())
                    || any(pc, &[Pc::T13, Pc::T14]);
                if pre {
                    for r in &self.procs {
                        if r.s + 1 == seq && !self.r_clause(r) {
                            return fail(&format!("{} can still advance in the old queue", r.pid));
                        }
                    }
                    if self.locks[pm3(seq)].cs_set.is_empty() {
                        return fail("old lock has no CS holder");
                    }
                }
            }
        }
        None
    }
}

/// Evaluates every condition for every process.
pub fn eval_invariant(view: &InvariantView) -> Vec<InvariantFailure> {
    let mut out = Vec::new();
    for p in &view.procs {
        for cond in Condition::ALL {
            if let Some(detail) = view.check(cond, p) {
                out.push(InvariantFailure {
                    condition: cond,
                    pid: p.pid,
                    detail,
                });
            }
        }
    }
    out
}
