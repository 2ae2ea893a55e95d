//! Base queue locks (CC and DSM flavors) with ghost bookkeeping.
//!
//! Both flavors are FAS-based MCS-style queues whose tail lives in NVM. They
//! tolerate crashes only in the weak sense that `Reset` restores a usable lock
//! once nobody is using it. The ghost sets track which processes are in which
//! phase of the lock; they are updated here and nowhere else.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::memory::Memory;
use crate::step::{Ctx, Progress};
use crate::trace::ViolationCode;
use crate::value::{CellId, Pid, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flavor {
    Cc,
    Dsm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LockMethod {
    Try,
    Exit,
    Reset,
    /// Exit executed by a process that may never have acquired the lock.
    Abandon,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct GhostSets {
    pub try_set: BTreeSet<Pid>,
    pub cs_set: BTreeSet<Pid>,
    pub exit_set: BTreeSet<Pid>,
    pub crash_set: BTreeSet<Pid>,
    /// Processes that left through `Abandon` while holding the lock. A process
    /// that migrates or exits through a stale lock in the CC algorithm simply
    /// stays in `cs_set`; the DSM algorithm abandons instead, and this set lets
    /// the invariant see both the same way.
    pub retained: BTreeSet<Pid>,
}

impl GhostSets {
    pub fn live_empty(&self) -> bool {
        self.try_set.is_empty() && self.cs_set.is_empty() && self.exit_set.is_empty()
    }

    /// Membership in `Try ∪ CS ∪ Exit`.
    pub fn in_live(&self, p: Pid) -> bool {
        self.try_set.contains(&p) || self.cs_set.contains(&p) || self.exit_set.contains(&p)
    }

    /// How many of the live sets contain `p`.
    pub fn live_count(&self, p: Pid) -> usize {
        self.try_set.contains(&p) as usize
            + self.cs_set.contains(&p) as usize
            + self.exit_set.contains(&p) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Slot {
    node: [CellId; 2],
    go: Option<CellId>,
    face: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum TryPc {
    Flip,
    Init,
    Enqueue,
    Spin(CellId),
    GoInit(CellId),
    Link(CellId),
    SpinGo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum ExitPc {
    Release,
    Wake(CellId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Armed {
    Try(TryPc),
    Exit { pc: ExitPc, abandon: bool },
    Reset,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaseLock {
    flavor: Flavor,
    tail: CellId,
    slots: BTreeMap<Pid, Slot>,
    armed: BTreeMap<Pid, Armed>,
    ghost: GhostSets,
    tainted: bool,
}

impl Hash for BaseLock {
    fn hash<H: Hasher>(&self, h: &mut H) {
        for (p, s) in &self.slots {
            p.hash(h);
            s.face.hash(h);
        }
        self.armed.hash(h);
        self.ghost.hash(h);
        self.tainted.hash(h);
    }
}

impl BaseLock {
    pub fn new(mem: &mut Memory, flavor: Flavor) -> Self {
        let tail = mem.alloc_cell(true, None, Value::Bot);
        Self {
            flavor,
            tail,
            slots: BTreeMap::new(),
            armed: BTreeMap::new(),
            ghost: GhostSets::default(),
            tainted: false,
        }
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn tail(&self) -> CellId {
        self.tail
    }

    pub fn ghost(&self) -> &GhostSets {
        &self.ghost
    }

    /// False once a crash or an abandon has broken the use pattern since the
    /// last reset. Mutual exclusion is only promised while this is clean.
    pub fn is_clean(&self) -> bool {
        !self.tainted
    }

    pub fn is_armed(&self, pid: Pid) -> bool {
        self.armed.contains_key(&pid)
    }

    /// Allocates per-process nodes. Idempotent.
    pub fn register(&mut self, mem: &mut Memory, pid: Pid) {
        if self.slots.contains_key(&pid) {
            return;
        }
        let (init, owner) = match self.flavor {
            Flavor::Cc => (Value::Bool(true), Some(pid)),
            Flavor::Dsm => (Value::Bot, None),
        };
        let node = [
            mem.alloc_cell(true, owner, init),
            mem.alloc_cell(true, owner, init),
        ];
        let go = match self.flavor {
            Flavor::Cc => None,
            Flavor::Dsm => Some(mem.alloc_cell(true, Some(pid), Value::Bool(false))),
        };
        self.slots.insert(pid, Slot { node, go, face: 0 });
    }

    /// Arms `method` for `pid` and applies the invocation-time ghost update.
    pub fn invoke(&mut self, ctx: &mut Ctx<'_>, pid: Pid, method: LockMethod) {
        self.register(ctx.mem, pid);
        let g = &mut self.ghost;
        match method {
            LockMethod::Try => {
                if g.in_live(pid) || g.crash_set.contains(&pid) {
                    ctx.violation(
                        ViolationCode::UsePattern,
                        Some(pid),
                        format!("{pid} called Try while already using the lock"),
                    );
                }
                g.retained.remove(&pid);
                g.try_set.insert(pid);
                self.armed.insert(pid, Armed::Try(TryPc::Flip));
            }
            LockMethod::Exit => {
                if !g.cs_set.remove(&pid) {
                    ctx.violation(
                        ViolationCode::UsePattern,
                        Some(pid),
                        format!("{pid} called Exit without holding the lock"),
                    );
                }
                g.exit_set.insert(pid);
                self.armed.insert(
                    pid,
                    Armed::Exit {
                        pc: ExitPc::Release,
                        abandon: false,
                    },
                );
            }
            LockMethod::Abandon => {
                if g.try_set.contains(&pid) || g.exit_set.contains(&pid) {
                    ctx.violation(
                        ViolationCode::UsePattern,
                        Some(pid),
                        format!("{pid} abandoned the lock from inside Try or Exit"),
                    );
                }
                if g.cs_set.remove(&pid) {
                    g.exit_set.insert(pid);
                    g.retained.insert(pid);
                } else {
                    self.tainted = true;
                }
                self.armed.insert(
                    pid,
                    Armed::Exit {
                        pc: ExitPc::Release,
                        abandon: true,
                    },
                );
            }
            LockMethod::Reset => {
                if !g.live_empty() {
                    ctx.violation(
                        ViolationCode::UsePattern,
                        Some(pid),
                        format!("{pid} reset a lock that is in use"),
                    );
                }
                self.armed.insert(pid, Armed::Reset);
            }
        }
    }

    /// Advances the method armed for `pid` by one step.
    pub fn step(&mut self, ctx: &mut Ctx<'_>, pid: Pid) -> Result<Progress, SimError> {
        let armed = *self.armed.get(&pid).ok_or(SimError::NotArmed(pid))?;
        let next = match armed {
            Armed::Try(pc) => self.step_try(ctx, pid, pc)?.map(Armed::Try),
            Armed::Exit { pc, abandon } => self
                .step_exit(ctx, pid, pc)?
                .map(|pc| Armed::Exit { pc, abandon }),
            Armed::Reset => {
                ctx.write(pid, self.tail, Value::Bot)?;
                self.ghost = GhostSets::default();
                self.tainted = false;
                // Methods other processes have in flight keep running on the
                // reset cells.
                self.armed.remove(&pid);
                return Ok(Progress::Done(Value::Bot));
            }
        };
        match next {
            Some(a) => {
                self.armed.insert(pid, a);
                Ok(Progress::Pending)
            }
            None => {
                self.armed.remove(&pid);
                let g = &mut self.ghost;
                match armed {
                    Armed::Try(_) => {
                        g.try_set.remove(&pid);
                        g.cs_set.insert(pid);
                    }
                    Armed::Exit { abandon, .. } => {
                        g.exit_set.remove(&pid);
                        if abandon {
                            g.crash_set.remove(&pid);
                        }
                    }
                    Armed::Reset => unreachable!(),
                }
                Ok(Progress::Done(Value::Bot))
            }
        }
    }

    /// Drops `pid`'s armed method without touching the ghost sets. Used when
    /// a caller stops waiting on Try part way through.
    pub fn disarm(&mut self, pid: Pid) {
        self.armed.remove(&pid);
    }

    fn slot(&self, pid: Pid) -> &Slot {
        &self.slots[&pid]
    }

    fn node(&self, pid: Pid) -> CellId {
        let s = self.slot(pid);
        s.node[s.face]
    }

    fn step_try(
        &mut self,
        ctx: &mut Ctx<'_>,
        pid: Pid,
        pc: TryPc,
    ) -> Result<Option<TryPc>, SimError> {
        let next = match pc {
            TryPc::Flip => {
                let s = self.slots.get_mut(&pid).expect("registered");
                s.face = 1 - s.face;
                Some(TryPc::Init)
            }
            TryPc::Init => {
                let init = match self.flavor {
                    Flavor::Cc => Value::Bool(false),
                    Flavor::Dsm => Value::Bot,
                };
                ctx.write(pid, self.node(pid), init)?;
                Some(TryPc::Enqueue)
            }
            TryPc::Enqueue => {
                let prev = ctx.fas(pid, self.tail, Value::Ref(self.node(pid)))?;
                match (prev, self.flavor) {
                    (Value::Bot, _) => None,
                    (Value::Ref(c), Flavor::Cc) => Some(TryPc::Spin(c)),
                    (Value::Ref(c), Flavor::Dsm) => Some(TryPc::GoInit(c)),
                    _ => return Err(malformed(pid, self.tail, "node reference")),
                }
            }
            TryPc::Spin(c) => match ctx.read(pid, c)? {
                Value::Bool(true) => None,
                _ => Some(TryPc::Spin(c)),
            },
            TryPc::GoInit(c) => {
                let go = self.slot(pid).go.expect("dsm go");
                ctx.write(pid, go, Value::Bool(false))?;
                Some(TryPc::Link(c))
            }
            TryPc::Link(c) => {
                let go = self.slot(pid).go.expect("dsm go");
                match ctx.fas(pid, c, Value::Ref(go))? {
                    Value::Token => None,
                    _ => Some(TryPc::SpinGo),
                }
            }
            TryPc::SpinGo => {
                let go = self.slot(pid).go.expect("dsm go");
                match ctx.read(pid, go)? {
                    Value::Bool(true) => None,
                    _ => Some(TryPc::SpinGo),
                }
            }
        };
        Ok(next)
    }

    fn step_exit(
        &mut self,
        ctx: &mut Ctx<'_>,
        pid: Pid,
        pc: ExitPc,
    ) -> Result<Option<ExitPc>, SimError> {
        let node = self.node(pid);
        let next = match (pc, self.flavor) {
            (ExitPc::Release, Flavor::Cc) => {
                ctx.write(pid, node, Value::Bool(true))?;
                None
            }
            (ExitPc::Release, Flavor::Dsm) => match ctx.fas(pid, node, Value::Token)? {
                Value::Ref(g) => Some(ExitPc::Wake(g)),
                _ => None,
            },
            (ExitPc::Wake(g), _) => {
                ctx.write(pid, g, Value::Bool(true))?;
                None
            }
        };
        Ok(next)
    }

    /// Crash transition: everyone in a live set moves to `crash_set` and all
    /// in-flight methods are lost.
    pub fn on_crash(&mut self) {
        let g = &mut self.ghost;
        let moved: Vec<Pid> = g
            .try_set
            .iter()
            .chain(&g.cs_set)
            .chain(&g.exit_set)
            .copied()
            .collect();
        if !moved.is_empty() {
            self.tainted = true;
        }
        g.crash_set.extend(moved);
        g.try_set.clear();
        g.cs_set.clear();
        g.exit_set.clear();
        g.retained.clear();
        self.armed.clear();
    }
}

fn malformed(pid: Pid, cell: CellId, expected: &'static str) -> SimError {
    SimError::Malformed {
        pid,
        cell,
        expected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_to_done(lock: &mut BaseLock, mem: &mut Memory, pid: Pid) -> usize {
        let mut n = 0;
        loop {
            let mut ctx = Ctx::new(mem);
            n += 1;
            if lock.step(&mut ctx, pid).unwrap().is_done() {
                return n;
            }
            assert!(n < 100, "did not finish");
        }
    }

    fn invoke(
        lock: &mut BaseLock,
        mem: &mut Memory,
        pid: Pid,
        m: LockMethod,
    ) -> Vec<ViolationCode> {
        let mut ctx = Ctx::new(mem);
        lock.invoke(&mut ctx, pid, m);
        ctx.violations.into_iter().map(|v| v.0).collect()
    }

    #[test]
    fn uncontended_try_exit_both_flavors() {
        for flavor in [Flavor::Cc, Flavor::Dsm] {
            let mut mem = Memory::new();
            let mut lock = BaseLock::new(&mut mem, flavor);
            let p = Pid(0);
            assert!(invoke(&mut lock, &mut mem, p, LockMethod::Try).is_empty());
            assert_eq!(run_to_done(&mut lock, &mut mem, p), 3);
            assert!(lock.ghost().cs_set.contains(&p));
            invoke(&mut lock, &mut mem, p, LockMethod::Exit);
            let exit_steps = run_to_done(&mut lock, &mut mem, p);
            assert!(exit_steps <= 2);
            assert!(lock.ghost().live_empty());
        }
    }

    #[test]
    fn second_process_waits_then_acquires() {
        for flavor in [Flavor::Cc, Flavor::Dsm] {
            let mut mem = Memory::new();
            let mut lock = BaseLock::new(&mut mem, flavor);
            let (p, q) = (Pid(0), Pid(1));
            invoke(&mut lock, &mut mem, p, LockMethod::Try);
            run_to_done(&mut lock, &mut mem, p);
            invoke(&mut lock, &mut mem, q, LockMethod::Try);
            for _ in 0..10 {
                let mut ctx = Ctx::new(&mut mem);
                assert!(!lock.step(&mut ctx, q).unwrap().is_done());
            }
            invoke(&mut lock, &mut mem, p, LockMethod::Exit);
            run_to_done(&mut lock, &mut mem, p);
            run_to_done(&mut lock, &mut mem, q);
            assert_eq!(
                lock.ghost().cs_set.iter().copied().collect::<Vec<_>>(),
                vec![q]
            );
        }
    }

    #[test]
    fn crash_moves_live_members_and_reset_clears() {
        let mut mem = Memory::new();
        let mut lock = BaseLock::new(&mut mem, Flavor::Cc);
        let p = Pid(0);
        invoke(&mut lock, &mut mem, p, LockMethod::Try);
        lock.on_crash();
        assert!(lock.ghost().crash_set.contains(&p));
        assert!(!lock.is_clean());
        assert_eq!(
            invoke(&mut lock, &mut mem, p, LockMethod::Try),
            vec![ViolationCode::UsePattern]
        );
        lock.on_crash();
        assert!(invoke(&mut lock, &mut mem, p, LockMethod::Reset).is_empty());
        run_to_done(&mut lock, &mut mem, p);
        assert_eq!(lock.ghost(), &GhostSets::default());
        assert!(lock.is_clean());
        assert_eq!(mem.peek(lock.tail()), Value::Bot);
    }

    #[test]
    fn exit_without_cs_is_use_pattern_violation() {
        let mut mem = Memory::new();
        let mut lock = BaseLock::new(&mut mem, Flavor::Dsm);
        assert_eq!(
            invoke(&mut lock, &mut mem, Pid(2), LockMethod::Exit),
            vec![ViolationCode::UsePattern]
        );
    }

    #[test]
    fn abandon_by_crashed_waiter_hands_over() {
        let mut mem = Memory::new();
        let mut lock = BaseLock::new(&mut mem, Flavor::Dsm);
        let (p, q) = (Pid(0), Pid(1));
        invoke(&mut lock, &mut mem, p, LockMethod::Try);
        run_to_done(&mut lock, &mut mem, p);
        lock.on_crash();
        invoke(&mut lock, &mut mem, q, LockMethod::Try);
        for _ in 0..6 {
            let mut ctx = Ctx::new(&mut mem);
            lock.step(&mut ctx, q).unwrap();
        }
        assert!(lock.ghost().try_set.contains(&q));
        assert!(invoke(&mut lock, &mut mem, p, LockMethod::Abandon).is_empty());
        run_to_done(&mut lock, &mut mem, p);
        assert!(!lock.ghost().crash_set.contains(&p));
        run_to_done(&mut lock, &mut mem, q);
        assert!(lock.ghost().cs_set.contains(&q));
    }

    #[test]
    fn abandon_from_cs_is_retained() {
        let mut mem = Memory::new();
        let mut lock = BaseLock::new(&mut mem, Flavor::Dsm);
        let p = Pid(0);
        invoke(&mut lock, &mut mem, p, LockMethod::Try);
        run_to_done(&mut lock, &mut mem, p);
        invoke(&mut lock, &mut mem, p, LockMethod::Abandon);
        run_to_done(&mut lock, &mut mem, p);
        assert!(lock.ghost().live_empty());
        assert!(lock.ghost().retained.contains(&p));
        assert!(lock.is_clean());
    }
}
