//! Recoverable mutex for the DSM model.
//!
//! Same control flow as the CC lock, but every wait goes through a wait object
//! so that spinning stays in the waiter's own partition, and processes that
//! leave a lock early abandon it instead of leaving the queue frozen.

use crate::checkers::invariant::{InvariantView, LockView, ProcView};
use crate::error::SimError;
use crate::locks::{BaseLock, Flavor, LockMethod};
use crate::memory::Memory;
use crate::objects::{BoolSignal, CapOp, Capturable, SigOp};
use crate::step::{Ctx, Progress};
use crate::value::{CellId, Pid, Value};

use super::{epoch, prev_epoch, Mutant, Pc, Proc, SectionOutcome, Status};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RmeDsm {
    mutant: Mutant,
    seq: CellId,
    stop: [BoolSignal; 3],
    barrier: Capturable,
    locks: [BaseLock; 3],
    procs: Vec<Proc>,
}

impl RmeDsm {
    pub fn new(mem: &mut Memory, n: usize, mutant: Mutant) -> Self {
        let seq = mem.alloc_cell(true, None, Value::Nat(1));
        let mut stop: [BoolSignal; 3] = std::array::from_fn(|_| BoolSignal::new(mem));
        let mut barrier = Capturable::new(mem);
        let mut locks: [BaseLock; 3] = std::array::from_fn(|_| BaseLock::new(mem, Flavor::Dsm));
        let procs: Vec<Proc> = (0..n as u32).map(|i| Proc::new(Pid(i))).collect();
        for p in &procs {
            mem.ensure_pid(p.pid);
            for l in &mut locks {
                l.register(mem, p.pid);
            }
            for st in &mut stop {
                st.register(mem, p.pid);
            }
            barrier.register(mem, p.pid);
        }
        Self {
            mutant,
            seq,
            stop,
            barrier,
            locks,
            procs,
        }
    }

    pub fn seq_cell(&self) -> CellId {
        self.seq
    }

    pub fn locks(&self) -> &[BaseLock; 3] {
        &self.locks
    }

    pub fn barrier(&self) -> &Capturable {
        &self.barrier
    }

    pub fn stop(&self) -> &[BoolSignal; 3] {
        &self.stop
    }

    pub fn procs(&self) -> &[Proc] {
        &self.procs
    }

    pub(crate) fn procs_mut(&mut self) -> &mut [Proc] {
        &mut self.procs
    }

    fn read_nat(&self, ctx: &mut Ctx<'_>, pid: Pid, cell: CellId) -> Result<u64, SimError> {
        ctx.read(pid, cell)?.as_nat().ok_or(SimError::Malformed {
            pid,
            cell,
            expected: "natural",
        })
    }

    fn barrier_once(&mut self, ctx: &mut Ctx<'_>, pid: Pid, op: CapOp) -> Result<Value, SimError> {
        self.barrier.invoke(ctx, pid, op);
        match self.barrier.step(ctx, pid)? {
            Progress::Done(v) => Ok(v),
            Progress::Pending => unreachable!("single-access method"),
        }
    }

    fn arm_release_or_skip(&mut self, ctx: &mut Ctx<'_>, pid: Pid) -> Pc {
        if self.mutant == Mutant::DropE3 {
            Pc::E4
        } else {
            self.barrier.invoke(ctx, pid, CapOp::Release);
            Pc::E3
        }
    }

    pub fn step(&mut self, ctx: &mut Ctx<'_>, pid: Pid) -> Result<SectionOutcome, SimError> {
        let i = pid.index();
        let p = self.procs.get(i).ok_or(SimError::UnknownPid(pid))?.clone();
        let s = p.s;
        let me = Value::Pid(pid);
        let mut out = SectionOutcome::Pending;
        let next = match p.pc {
            Pc::Rem | Pc::Cs => return Err(SimError::NotArmed(pid)),
            Pc::T1 => {
                self.procs[i].active = true;
                Pc::T2
            }
            Pc::T2 => {
                let v = self.read_nat(ctx, pid, self.seq)?;
                self.procs[i].s = v;
                self.locks[epoch(v)].invoke(ctx, pid, LockMethod::Try);
                Pc::T3
            }
            Pc::T3 => {
                if self.locks[epoch(s)].step(ctx, pid)?.is_done() {
                    Pc::T4
                } else {
                    return Ok(out);
                }
            }
            Pc::T4 => {
                if self.read_nat(ctx, pid, self.seq)? != s {
                    Pc::T8
                } else {
                    self.stop[epoch(s)].invoke(ctx, pid, SigOp::Wait);
                    self.barrier.invoke(ctx, pid, CapOp::Wait(epoch(s)));
                    Pc::T5
                }
            }
            Pc::T5 => {
                if !p.phase {
                    if self.stop[epoch(s)].step(ctx, pid)?.is_done() {
                        self.barrier.cancel(pid);
                        Pc::T8
                    } else {
                        self.procs[i].phase = true;
                        return Ok(out);
                    }
                } else if self.barrier.step(ctx, pid)?.is_done() {
                    self.stop[epoch(s)].cancel(pid);
                    Pc::T6
                } else {
                    self.procs[i].phase = false;
                    return Ok(out);
                }
            }
            Pc::T6 | Pc::T11 => {
                if self.barrier_once(ctx, pid, CapOp::Capture)? == Value::Bool(true) {
                    out = SectionOutcome::InCs;
                    Pc::Cs
                } else if p.pc == Pc::T6 {
                    Pc::T7
                } else {
                    self.barrier.invoke(ctx, pid, CapOp::Wait(epoch(s)));
                    Pc::T12
                }
            }
            Pc::T7 => {
                if self.read_nat(ctx, pid, self.seq)? != s {
                    Pc::T8
                } else {
                    self.barrier.invoke(ctx, pid, CapOp::Wait(epoch(s)));
                    Pc::T12
                }
            }
            Pc::T8 => {
                self.procs[i].s = s + 1;
                if self.mutant == Mutant::SkipAbandon {
                    self.locks[epoch(s + 1)].invoke(ctx, pid, LockMethod::Try);
                    Pc::T9
                } else {
                    self.locks[epoch(s)].invoke(ctx, pid, LockMethod::Abandon);
                    Pc::T8a
                }
            }
            Pc::T8a => {
                if self.locks[prev_epoch(s)].step(ctx, pid)?.is_done() {
                    self.locks[epoch(s)].invoke(ctx, pid, LockMethod::Try);
                    Pc::T9
                } else {
                    return Ok(out);
                }
            }
            Pc::T9 => {
                if self.locks[epoch(s)].step(ctx, pid)?.is_done() {
                    self.barrier.invoke(ctx, pid, CapOp::Wait(epoch(s)));
                    Pc::T10
                } else {
                    return Ok(out);
                }
            }
            Pc::T10 | Pc::T12 => {
                if self.barrier.step(ctx, pid)?.is_done() {
                    if p.pc == Pc::T10 {
                        Pc::T11
                    } else {
                        Pc::T13
                    }
                } else {
                    return Ok(out);
                }
            }
            Pc::T13 => {
                self.barrier_once(ctx, pid, CapOp::Write)?;
                Pc::T14
            }
            Pc::T14 => {
                out = SectionOutcome::InCs;
                Pc::Cs
            }
            Pc::E1 => {
                let x = self.read_nat(ctx, pid, self.seq)?;
                self.procs[i].x = x;
                if s == x {
                    self.locks[epoch(s)].invoke(ctx, pid, LockMethod::Exit);
                    Pc::E2
                } else if s + 1 == x {
                    self.locks[epoch(s)].invoke(ctx, pid, LockMethod::Abandon);
                    Pc::E2a
                } else {
                    self.arm_release_or_skip(ctx, pid)
                }
            }
            Pc::E2 | Pc::E2a => {
                if self.locks[epoch(s)].step(ctx, pid)?.is_done() {
                    self.arm_release_or_skip(ctx, pid)
                } else {
                    return Ok(out);
                }
            }
            Pc::E3 => {
                if self.barrier.step(ctx, pid)?.is_done() {
                    Pc::E4
                } else {
                    self.procs[i].started = true;
                    return Ok(out);
                }
            }
            Pc::E4 => {
                self.procs[i].active = false;
                out = SectionOutcome::InRem;
                Pc::Rem
            }
            Pc::R1 => {
                if p.active && self.read_nat(ctx, pid, self.seq)? == s {
                    Pc::R2
                } else {
                    Pc::R6
                }
            }
            Pc::R2 => {
                let l = &mut self.locks[prev_epoch(s)];
                l.invoke(ctx, pid, LockMethod::Reset);
                l.step(ctx, pid)?;
                Pc::R3
            }
            Pc::R3 | Pc::R4 => {
                let clear_stop = (p.pc == Pc::R3) != (self.mutant == Mutant::SwapR3R4);
                if clear_stop {
                    let st = &mut self.stop[prev_epoch(s)];
                    st.invoke(ctx, pid, SigOp::Reset);
                    st.step(ctx, pid)?;
                } else {
                    ctx.write(pid, self.seq, Value::Nat(s + 1))?;
                }
                match (p.pc, self.mutant) {
                    (Pc::R3, _) => Pc::R4,
                    (_, Mutant::DropR5) => Pc::R5a,
                    _ => {
                        self.stop[epoch(s)].invoke(ctx, pid, SigOp::Set);
                        Pc::R5
                    }
                }
            }
            Pc::R5 => {
                if self.stop[epoch(s)].step(ctx, pid)?.is_done() {
                    Pc::R5a
                } else {
                    self.procs[i].started = true;
                    return Ok(out);
                }
            }
            Pc::R5a => {
                if !p.started {
                    if self.read_nat(ctx, pid, self.seq)? == s + 1 {
                        self.locks[epoch(s)].invoke(ctx, pid, LockMethod::Abandon);
                        self.procs[i].started = true;
                        return Ok(out);
                    }
                    Pc::R6
                } else if self.locks[epoch(s)].step(ctx, pid)?.is_done() {
                    Pc::R6
                } else {
                    return Ok(out);
                }
            }
            Pc::R6 => {
                if self.barrier_once(ctx, pid, CapOp::Read)? == me {
                    self.procs[i].status = Status::Good;
                    out = SectionOutcome::InCs;
                    Pc::Cs
                } else {
                    Pc::R7
                }
            }
            Pc::R7 => {
                self.procs[i].active = false;
                Pc::R8
            }
            Pc::R8 => {
                self.procs[i].status = Status::Good;
                out = SectionOutcome::InRem;
                Pc::Rem
            }
        };
        self.procs[i].goto(next);
        Ok(out)
    }

    pub fn on_crash(&mut self) {
        for p in &mut self.procs {
            p.crash();
        }
        for l in &mut self.locks {
            l.on_crash();
        }
        for st in &mut self.stop {
            st.on_crash();
        }
        self.barrier.on_crash();
    }

    pub fn view(&self, mem: &Memory) -> InvariantView {
        InvariantView {
            seq: mem.peek(self.seq).as_nat().unwrap_or(0),
            stop: std::array::from_fn(|k| mem.peek(self.stop[k].state_cell()) == Value::Bool(true)),
            barrier: mem.peek(self.barrier.state_cell()),
            locks: std::array::from_fn(|k| LockView::from(self.locks[k].ghost())),
            procs: self
                .procs
                .iter()
                .map(|p| {
                    let mut v = ProcView::from(p);
                    v.pc = match p.pc {
                        Pc::E3 if p.started => Pc::E4,
                        Pc::R5 if p.started => Pc::R5a,
                        pc => pc,
                    };
                    v
                })
                .collect(),
        }
    }
}
