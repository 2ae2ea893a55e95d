//! Recoverable mutex for the cache-coherent model.
//!
//! `Stop` and `Barrier` are plain shared cells; waiting means spinning on a
//! cached copy. Each labelled line is one step.

use crate::checkers::invariant::{InvariantView, LockView, ProcView};
use crate::error::SimError;
use crate::locks::{BaseLock, Flavor, LockMethod};
use crate::memory::Memory;
use crate::step::Ctx;
use crate::value::{CellId, Pid, Value};

use super::{epoch, prev_epoch, Mutant, Pc, Proc, SectionOutcome, Status};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RmeCc {
    mutant: Mutant,
    seq: CellId,
    stop: [CellId; 3],
    barrier: CellId,
    locks: [BaseLock; 3],
    procs: Vec<Proc>,
}

impl RmeCc {
    pub fn new(mem: &mut Memory, n: usize, mutant: Mutant) -> Self {
        let seq = mem.alloc_cell(true, None, Value::Nat(1));
        let stop = std::array::from_fn(|_| mem.alloc_cell(true, None, Value::Bool(false)));
        let barrier = mem.alloc_cell(true, None, Value::Bot);
        let mut locks: [BaseLock; 3] = std::array::from_fn(|_| BaseLock::new(mem, Flavor::Cc));
        let procs: Vec<Proc> = (0..n as u32).map(|i| Proc::new(Pid(i))).collect();
        for p in &procs {
            mem.ensure_pid(p.pid);
            for l in &mut locks {
                l.register(mem, p.pid);
            }
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

    pub fn stop_cells(&self) -> [CellId; 3] {
        self.stop
    }

    pub fn barrier_cell(&self) -> CellId {
        self.barrier
    }

    pub fn locks(&self) -> &[BaseLock; 3] {
        &self.locks
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

    pub fn step(&mut self, ctx: &mut Ctx<'_>, pid: Pid) -> Result<SectionOutcome, SimError> {
        let i = pid.index();
        let p = self.procs.get(i).ok_or(SimError::UnknownPid(pid))?.clone();
        let s = p.s;
        let me = Value::Pid(pid);
        let after_exit_lock = if self.mutant == Mutant::DropE3 {
            Pc::E4
        } else {
            Pc::E3
        };
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
                if !p.phase {
                    if ctx.read(pid, self.stop[epoch(s)])? == Value::Bool(true) {
                        self.locks[epoch(s)].disarm(pid);
                        Pc::T4
                    } else {
                        self.procs[i].phase = true;
                        return Ok(out);
                    }
                } else if self.locks[epoch(s)].step(ctx, pid)?.is_done() {
                    Pc::T4
                } else {
                    self.procs[i].phase = false;
                    return Ok(out);
                }
            }
            Pc::T4 => {
                if self.read_nat(ctx, pid, self.seq)? != s {
                    Pc::T8
                } else {
                    Pc::T5
                }
            }
            Pc::T5 => {
                if !p.phase {
                    if ctx.read(pid, self.stop[epoch(s)])? == Value::Bool(true) {
                        Pc::T8
                    } else {
                        self.procs[i].phase = true;
                        return Ok(out);
                    }
                } else if ctx.read(pid, self.barrier)?.is_bot() {
                    Pc::T6
                } else {
                    self.procs[i].phase = false;
                    return Ok(out);
                }
            }
            Pc::T6 | Pc::T11 => {
                if ctx.cas(pid, self.barrier, Value::Bot, me)? {
                    out = SectionOutcome::InCs;
                    Pc::Cs
                } else if p.pc == Pc::T6 {
                    Pc::T7
                } else {
                    Pc::T12
                }
            }
            Pc::T7 => {
                if self.read_nat(ctx, pid, self.seq)? != s {
                    Pc::T8
                } else {
                    Pc::T12
                }
            }
            Pc::T8 => {
                self.procs[i].s = s + 1;
                self.locks[epoch(s + 1)].invoke(ctx, pid, LockMethod::Try);
                Pc::T9
            }
            Pc::T9 => {
                if self.locks[epoch(s)].step(ctx, pid)?.is_done() {
                    Pc::T10
                } else {
                    return Ok(out);
                }
            }
            Pc::T10 | Pc::T12 => {
                if ctx.read(pid, self.barrier)?.is_bot() {
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
                ctx.write(pid, self.barrier, me)?;
                Pc::T14
            }
            Pc::T14 => {
                out = SectionOutcome::InCs;
                Pc::Cs
            }
            Pc::E1 => {
                if self.read_nat(ctx, pid, self.seq)? == s {
                    self.locks[epoch(s)].invoke(ctx, pid, LockMethod::Exit);
                    Pc::E2
                } else {
                    after_exit_lock
                }
            }
            Pc::E2 => {
                if self.locks[epoch(s)].step(ctx, pid)?.is_done() {
                    after_exit_lock
                } else {
                    return Ok(out);
                }
            }
            Pc::E3 => {
                ctx.write(pid, self.barrier, Value::Bot)?;
                Pc::E4
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
                    ctx.write(pid, self.stop[prev_epoch(s)], Value::Bool(false))?;
                } else {
                    ctx.write(pid, self.seq, Value::Nat(s + 1))?;
                }
                match (p.pc, self.mutant) {
                    (Pc::R3, _) => Pc::R4,
                    (_, Mutant::DropR5) => Pc::R6,
                    _ => Pc::R5,
                }
            }
            Pc::R5 => {
                ctx.write(pid, self.stop[epoch(s)], Value::Bool(true))?;
                Pc::R6
            }
            Pc::R6 => {
                if ctx.read(pid, self.barrier)? == me {
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
            Pc::T8a | Pc::E2a | Pc::R5a => unreachable!("DSM-only label"),
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
    }

    pub fn view(&self, mem: &Memory) -> InvariantView {
        InvariantView {
            seq: mem.peek(self.seq).as_nat().unwrap_or(0),
            stop: self.stop.map(|c| mem.peek(c) == Value::Bool(true)),
            barrier: mem.peek(self.barrier),
            locks: std::array::from_fn(|k| LockView::from(self.locks[k].ghost())),
            procs: self.procs.iter().map(ProcView::from).collect(),
        }
    }
}
