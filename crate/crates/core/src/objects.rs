//! Wait objects used by the DSM lock: a capturable owner slot and a boolean
//! signal. Both let a waiter spin on a flag in its own memory partition.

use std::collections::BTreeMap;

use crate::error::SimError;
use crate::memory::Memory;
use crate::step::{Ctx, Progress};
use crate::trace::ViolationCode;
use crate::value::{CellId, Pid, Value};

pub const WAIT_SLOTS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CapOp {
    Read,
    Write,
    Capture,
    Wait(usize),
    Release,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum WaitPc {
    ReadGo,
    WriteGo(u64),
    Publish,
    CheckX,
    Spin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum RelPc {
    Clear,
    LoadW(usize),
    LoadGo(usize, CellId),
    CheckX(usize, CellId, u64),
    Cas(usize, CellId, u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum CapMachine {
    Single(CapOp),
    Wait(usize, WaitPc),
    Release(RelPc),
}

/// Holds a pid or `Bot`. Waiters block until it becomes `Bot`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Capturable {
    x: CellId,
    w: [CellId; WAIT_SLOTS],
    go: BTreeMap<Pid, CellId>,
    armed: BTreeMap<Pid, CapMachine>,
    waiting: [Option<Pid>; WAIT_SLOTS],
}

impl Capturable {
    pub fn new(mem: &mut Memory) -> Self {
        let x = mem.alloc_cell(true, None, Value::Bot);
        let w = std::array::from_fn(|_| mem.alloc_cell(true, None, Value::Bot));
        Self {
            x,
            w,
            go: BTreeMap::new(),
            armed: BTreeMap::new(),
            waiting: [None; WAIT_SLOTS],
        }
    }

    pub fn state_cell(&self) -> CellId {
        self.x
    }

    pub fn register(&mut self, mem: &mut Memory, pid: Pid) {
        self.go
            .entry(pid)
            .or_insert_with(|| mem.alloc_cell(true, Some(pid), Value::Pair(0, false)));
    }

    pub fn is_armed(&self, pid: Pid) -> bool {
        self.armed.contains_key(&pid)
    }

    pub fn invoke(&mut self, ctx: &mut Ctx<'_>, pid: Pid, op: CapOp) {
        self.register(ctx.mem, pid);
        let m = match op {
            CapOp::Wait(i) => {
                assert!(i < WAIT_SLOTS, "wait slot out of range");
                if let Some(q) = self.waiting[i].filter(|&q| q != pid) {
                    ctx.violation(
                        ViolationCode::WaitSingle,
                        Some(pid),
                        format!("{pid} waits on slot {i} while {q} is waiting there"),
                    );
                }
                self.waiting[i] = Some(pid);
                CapMachine::Wait(i, WaitPc::ReadGo)
            }
            CapOp::Release => CapMachine::Release(RelPc::Clear),
            other => CapMachine::Single(other),
        };
        self.armed.insert(pid, m);
    }

    /// Drops `pid`'s pending Wait without any shared access.
    pub fn cancel(&mut self, pid: Pid) {
        if let Some(CapMachine::Wait(i, _)) = self.armed.remove(&pid) {
            if self.waiting[i] == Some(pid) {
                self.waiting[i] = None;
            }
        }
    }

    pub fn step(&mut self, ctx: &mut Ctx<'_>, pid: Pid) -> Result<Progress, SimError> {
        let m = *self.armed.get(&pid).ok_or(SimError::NotArmed(pid))?;
        let go = self.go[&pid];
        let next = match m {
            CapMachine::Single(op) => {
                let out = match op {
                    CapOp::Read => ctx.read(pid, self.x)?,
                    CapOp::Write => {
                        ctx.write(pid, self.x, Value::Pid(pid))?;
                        Value::Bot
                    }
                    CapOp::Capture => {
                        Value::Bool(ctx.cas(pid, self.x, Value::Bot, Value::Pid(pid))?)
                    }
                    _ => unreachable!(),
                };
                return Ok(self.finish(pid, out));
            }
            CapMachine::Wait(i, pc) => match pc {
                WaitPc::ReadGo => {
                    let seq = match ctx.read(pid, go)? {
                        Value::Pair(s, _) => s,
                        _ => 0,
                    };
                    Some(CapMachine::Wait(i, WaitPc::WriteGo(seq)))
                }
                WaitPc::WriteGo(seq) => {
                    ctx.write(pid, go, Value::Pair(seq + 1, false))?;
                    Some(CapMachine::Wait(i, WaitPc::Publish))
                }
                WaitPc::Publish => {
                    ctx.write(pid, self.w[i], Value::Ref(go))?;
                    Some(CapMachine::Wait(i, WaitPc::CheckX))
                }
                WaitPc::CheckX => {
                    if ctx.read(pid, self.x)?.is_bot() {
                        None
                    } else {
                        Some(CapMachine::Wait(i, WaitPc::Spin))
                    }
                }
                WaitPc::Spin => match ctx.read(pid, go)? {
                    Value::Pair(_, true) => None,
                    _ => Some(CapMachine::Wait(i, WaitPc::Spin)),
                },
            },
            CapMachine::Release(pc) => {
                let after = |i: usize| {
                    if i + 1 < WAIT_SLOTS {
                        Some(CapMachine::Release(RelPc::LoadW(i + 1)))
                    } else {
                        None
                    }
                };
                match pc {
                    RelPc::Clear => {
                        ctx.write(pid, self.x, Value::Bot)?;
                        Some(CapMachine::Release(RelPc::LoadW(0)))
                    }
                    RelPc::LoadW(i) => match ctx.read(pid, self.w[i])? {
                        Value::Ref(g) => Some(CapMachine::Release(RelPc::LoadGo(i, g))),
                        _ => after(i),
                    },
                    RelPc::LoadGo(i, g) => match ctx.read(pid, g)? {
                        Value::Pair(seq, false) => {
                            Some(CapMachine::Release(RelPc::CheckX(i, g, seq)))
                        }
                        _ => after(i),
                    },
                    RelPc::CheckX(i, g, seq) => {
                        if ctx.read(pid, self.x)?.is_bot() {
                            Some(CapMachine::Release(RelPc::Cas(i, g, seq)))
                        } else {
                            after(i)
                        }
                    }
                    RelPc::Cas(i, g, seq) => {
                        ctx.cas(pid, g, Value::Pair(seq, false), Value::Pair(seq, true))?;
                        after(i)
                    }
                }
            }
        };
        match next {
            Some(m) => {
                self.armed.insert(pid, m);
                Ok(Progress::Pending)
            }
            None => Ok(self.finish(pid, Value::Bot)),
        }
    }

    fn finish(&mut self, pid: Pid, out: Value) -> Progress {
        self.cancel(pid);
        self.armed.remove(&pid);
        Progress::Done(out)
    }

    pub fn on_crash(&mut self) {
        self.armed.clear();
        self.waiting = [None; WAIT_SLOTS];
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SigOp {
    Read,
    Wait,
    Set,
    Reset,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum SigMachine {
    Read,
    Reset,
    WaitWriteGo,
    WaitPublish,
    WaitCheckX,
    WaitSpin,
    SetX,
    SetLoadW,
    SetWake(CellId),
}

/// A boolean flag that one waiter at a time can block on until it is set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BoolSignal {
    x: CellId,
    w: CellId,
    go: BTreeMap<Pid, CellId>,
    armed: BTreeMap<Pid, SigMachine>,
    waiter: Option<Pid>,
}

impl BoolSignal {
    pub fn new(mem: &mut Memory) -> Self {
        Self {
            x: mem.alloc_cell(true, None, Value::Bool(false)),
            w: mem.alloc_cell(true, None, Value::Bot),
            go: BTreeMap::new(),
            armed: BTreeMap::new(),
            waiter: None,
        }
    }

    pub fn state_cell(&self) -> CellId {
        self.x
    }

    pub fn register(&mut self, mem: &mut Memory, pid: Pid) {
        self.go
            .entry(pid)
            .or_insert_with(|| mem.alloc_cell(true, Some(pid), Value::Bool(false)));
    }

    pub fn is_armed(&self, pid: Pid) -> bool {
        self.armed.contains_key(&pid)
    }

    pub fn invoke(&mut self, ctx: &mut Ctx<'_>, pid: Pid, op: SigOp) {
        self.register(ctx.mem, pid);
        let m = match op {
            SigOp::Read => SigMachine::Read,
            SigOp::Reset => SigMachine::Reset,
            SigOp::Set => SigMachine::SetX,
            SigOp::Wait => {
                if let Some(q) = self.waiter.filter(|&q| q != pid) {
                    ctx.violation(
                        ViolationCode::WaitSingle,
                        Some(pid),
                        format!("{pid} waits on a signal while {q} is waiting"),
                    );
                }
                self.waiter = Some(pid);
                SigMachine::WaitWriteGo
            }
        };
        self.armed.insert(pid, m);
    }

    pub fn cancel(&mut self, pid: Pid) {
        self.armed.remove(&pid);
        if self.waiter == Some(pid) {
            self.waiter = None;
        }
    }

    pub fn step(&mut self, ctx: &mut Ctx<'_>, pid: Pid) -> Result<Progress, SimError> {
        let m = *self.armed.get(&pid).ok_or(SimError::NotArmed(pid))?;
        let go = self.go[&pid];
        let (next, out) = match m {
            SigMachine::Read => (None, ctx.read(pid, self.x)?),
            SigMachine::Reset => {
                ctx.write(pid, self.x, Value::Bool(false))?;
                (None, Value::Bot)
            }
            SigMachine::WaitWriteGo => {
                ctx.write(pid, go, Value::Bool(false))?;
                (Some(SigMachine::WaitPublish), Value::Bot)
            }
            SigMachine::WaitPublish => {
                ctx.write(pid, self.w, Value::Ref(go))?;
                (Some(SigMachine::WaitCheckX), Value::Bot)
            }
            SigMachine::WaitCheckX => match ctx.read(pid, self.x)? {
                Value::Bool(true) => (None, Value::Bot),
                _ => (Some(SigMachine::WaitSpin), Value::Bot),
            },
            SigMachine::WaitSpin => match ctx.read(pid, go)? {
                Value::Bool(true) => (None, Value::Bot),
                _ => (Some(SigMachine::WaitSpin), Value::Bot),
            },
            SigMachine::SetX => {
                ctx.write(pid, self.x, Value::Bool(true))?;
                (Some(SigMachine::SetLoadW), Value::Bot)
            }
            SigMachine::SetLoadW => match ctx.read(pid, self.w)? {
                Value::Ref(g) => (Some(SigMachine::SetWake(g)), Value::Bot),
                _ => (None, Value::Bot),
            },
            SigMachine::SetWake(g) => {
                ctx.write(pid, g, Value::Bool(true))?;
                (None, Value::Bot)
            }
        };
        match next {
            Some(m) => {
                self.armed.insert(pid, m);
                Ok(Progress::Pending)
            }
            None => {
                self.cancel(pid);
                Ok(Progress::Done(out))
            }
        }
    }

    pub fn on_crash(&mut self) {
        self.armed.clear();
        self.waiter = None;
    }
}
