//! Helpers shared by the integration tests and the acceptance target.

#![allow(dead_code)]

use std::collections::HashSet;

use rme_core::harness::explore::World;
use rme_core::harness::{ExploreConfig, Move};
use rme_core::locks::{BaseLock, Flavor, LockMethod};
use rme_core::memory::Memory;
use rme_core::rme::Pc;
use rme_core::step::{Ctx, Progress};
use rme_core::{Algorithm, Mutant, Pid};

/// Steps a lone passage (Try then Exit) may take before a crash.
const PRE_CRASH_STEPS: usize = 8;
/// Steps a fresh waiter takes before the crashed processes abandon.
const HEAD_START: usize = 4;
/// Own steps each fresh waiter gets to finish Try and Exit after the last
/// abandon, under round robin.
pub const RELEASE_BOUND: usize = 64;

#[derive(Clone, Debug)]
pub struct ReleaseScenario {
    /// Steps each crashed process took before the crash, in order of pid.
    pub crashed: Vec<usize>,
    /// Interleave the crashed processes one step at a time instead of
    /// running them back to back.
    pub interleave: bool,
    /// Steps each fresh waiter takes before the abandons.
    pub waiters: Vec<usize>,
    /// Give the waiters one round between consecutive abandons.
    pub waiters_between: bool,
    /// Skip the abandons entirely; used as a negative control.
    pub abandon: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReleaseOutcome {
    /// Waiters that entered and left the CS after the abandons.
    pub completed: usize,
    pub waiters: usize,
    /// Largest own-step count a waiter needed after the last abandon.
    pub max_steps: usize,
}

impl ReleaseOutcome {
    pub fn all_done(&self) -> bool {
        self.completed == self.waiters
    }
}

/// Every scenario with one or two crashed processes stopped at each point of
/// their passage and one or two fresh waiters at each head start.
pub fn release_scenarios() -> Vec<ReleaseScenario> {
    let mut out = Vec::new();
    let mut crash_points: Vec<Vec<usize>> = (1..=PRE_CRASH_STEPS).map(|k| vec![k]).collect();
    for a in 1..=PRE_CRASH_STEPS {
        for b in 1..=PRE_CRASH_STEPS {
            crash_points.push(vec![a, b]);
        }
    }
    let mut waiter_sets: Vec<Vec<usize>> = (0..=HEAD_START).map(|j| vec![j]).collect();
    for a in 0..=HEAD_START {
        for b in 0..=HEAD_START {
            waiter_sets.push(vec![a, b]);
        }
    }
    for crashed in &crash_points {
        for interleave in [false, true] {
            if interleave && crashed.len() == 1 {
                continue;
            }
            for waiters in &waiter_sets {
                for waiters_between in [false, true] {
                    out.push(ReleaseScenario {
                        crashed: crashed.clone(),
                        interleave,
                        waiters: waiters.clone(),
                        waiters_between,
                        abandon: true,
                    });
                }
            }
        }
    }
    out
}

/// One process's passage: Try to completion, then Exit to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Idle,
    Try,
    Exit,
    Done,
}

struct Actor {
    pid: Pid,
    phase: Phase,
    steps: usize,
}

impl Actor {
    fn new(pid: u32) -> Self {
        Self {
            pid: Pid(pid),
            phase: Phase::Idle,
            steps: 0,
        }
    }

    fn step(&mut self, lock: &mut BaseLock, mem: &mut Memory) {
        let mut ctx = Ctx::new(mem);
        match self.phase {
            Phase::Idle => {
                lock.invoke(&mut ctx, self.pid, LockMethod::Try);
                self.phase = Phase::Try;
            }
            Phase::Done => return,
            _ => {}
        }
        self.steps += 1;
        let out = lock.step(&mut ctx, self.pid).expect("armed");
        assert!(ctx.violations.is_empty(), "{:?}", ctx.violations);
        if out == Progress::Pending {
            return;
        }
        if self.phase == Phase::Try {
            lock.invoke(&mut ctx, self.pid, LockMethod::Exit);
            self.phase = Phase::Exit;
        } else {
            self.phase = Phase::Done;
        }
    }
}

fn run_to_done(lock: &mut BaseLock, mem: &mut Memory, pid: Pid, method: LockMethod) {
    let mut ctx = Ctx::new(mem);
    lock.invoke(&mut ctx, pid, method);
    for _ in 0..RELEASE_BOUND {
        let mut ctx = Ctx::new(mem);
        if lock.step(&mut ctx, pid).expect("armed").is_done() {
            return;
        }
    }
    panic!("{pid} did not finish {method:?}");
}

/// Plays `s` on a fresh DSM base lock.
pub fn run_release(s: &ReleaseScenario) -> ReleaseOutcome {
    let mut mem = Memory::new();
    let mut lock = BaseLock::new(&mut mem, Flavor::Dsm);
    let c = s.crashed.len() as u32;
    let mut crashed: Vec<Actor> = (0..c).map(Actor::new).collect();
    if s.interleave {
        let mut left = s.crashed.clone();
        while left.iter().any(|&k| k > 0) {
            for (a, k) in crashed.iter_mut().zip(&mut left) {
                if *k > 0 {
                    a.step(&mut lock, &mut mem);
                    *k -= 1;
                }
            }
        }
    } else {
        for (a, &k) in crashed.iter_mut().zip(&s.crashed) {
            (0..k).for_each(|_| a.step(&mut lock, &mut mem));
        }
    }
    mem.system_crash_canonical();
    lock.on_crash();

    let mut waiters: Vec<Actor> = (0..s.waiters.len() as u32)
        .map(|i| Actor::new(c + i))
        .collect();
    for (w, &j) in waiters.iter_mut().zip(&s.waiters) {
        (0..j).for_each(|_| w.step(&mut lock, &mut mem));
    }
    // Only processes that were using the lock at the crash abandon it.
    let members: Vec<Pid> = lock.ghost().crash_set.iter().copied().collect();
    if s.abandon {
        for (i, &p) in members.iter().enumerate() {
            if i > 0 && s.waiters_between {
                waiters.iter_mut().for_each(|w| w.step(&mut lock, &mut mem));
            }
            run_to_done(&mut lock, &mut mem, p, LockMethod::Abandon);
        }
    }
    let base: Vec<usize> = waiters.iter().map(|w| w.steps).collect();
    for _ in 0..RELEASE_BOUND {
        waiters.iter_mut().for_each(|w| w.step(&mut lock, &mut mem));
    }
    ReleaseOutcome {
        completed: waiters.iter().filter(|w| w.phase == Phase::Done).count(),
        waiters: waiters.len(),
        max_steps: waiters
            .iter()
            .zip(base)
            .map(|(w, b)| w.steps - b)
            .max()
            .unwrap_or(0),
    }
}

fn drive(
    w: &mut World,
    cfg: &ExploreConfig,
    pid: Pid,
    steps: usize,
    until: impl Fn(&World) -> bool,
) {
    for t in 0..steps {
        if until(w) {
            return;
        }
        w.apply(cfg, Move::Step(pid), t as u64).unwrap();
    }
    assert!(until(w), "{pid} stuck at {:?}", w.rme.proc(pid).pc);
}

/// Plays the three-process schedule in which a migrating process must
/// abandon the old lock on behalf of the process queued behind it. Returns
/// whether that last process ever finishes; when it cannot, its solo run
/// revisits a configuration.
pub fn third_waiter_finishes(mutant: Mutant) -> bool {
    let mut cfg = ExploreConfig::new(Algorithm::Dsm, 3, 1);
    cfg.passages = 1;
    cfg.mutant = mutant;
    let mut w = World::initial(&cfg);
    let done = |p: u32| move |w: &World| w.clients[p as usize].done >= 1;
    // p1 takes the lock and crashes holding it.
    drive(&mut w, &cfg, Pid(1), 50, |w| {
        w.rme.proc(Pid(1)).pc == Pc::Cs
    });
    w.apply(&cfg, Move::Crash, 0).unwrap();
    // p0 and p2 queue behind p1's node in the current base lock.
    for p in [0, 2] {
        drive(&mut w, &cfg, Pid(p), 50, |w| {
            w.rme.proc(Pid(p)).pc == Pc::T3
        });
        for _ in 0..5 {
            w.apply(&cfg, Move::Step(Pid(p)), 0).unwrap();
        }
        assert_eq!(w.rme.proc(Pid(p)).pc, Pc::T3);
    }
    // p1 recovers, bumps Seq, abandons the old lock and finishes.
    drive(&mut w, &cfg, Pid(1), 200, done(1));
    // p0 is handed the old lock, sees the new epoch and migrates.
    drive(&mut w, &cfg, Pid(0), 200, done(0));
    let mut seen = HashSet::new();
    while seen.insert(w.fingerprint()) {
        if done(2)(&w) {
            return true;
        }
        w.apply(&cfg, Move::Step(Pid(2)), 0).unwrap();
    }
    false
}

/// Longest path through an acyclic section graph. `nodes[i]` is
/// `(cost, successors)`; node 0 is the entry and a node with no successors
/// returns.
pub fn longest_path(nodes: &[(u64, &[usize])]) -> u64 {
    fn go(i: usize, nodes: &[(u64, &[usize])], memo: &mut Vec<Option<u64>>) -> u64 {
        if let Some(v) = memo[i] {
            return v;
        }
        let (cost, succ) = nodes[i];
        let v = cost + succ.iter().map(|&j| go(j, nodes, memo)).max().unwrap_or(0);
        memo[i] = Some(v);
        v
    }
    go(0, nodes, &mut vec![None; nodes.len()])
}

/// Section graphs written from the algorithm listings. Each line costs one
/// own step; a line that only tests local variables is folded into the line
/// it guards; a nested method costs its own longest path.
pub mod sections {
    use super::longest_path;

    /// DSM base lock Exit: FAS the node, then write through the returned
    /// reference if there was one.
    pub fn dsm_base_exit() -> u64 {
        longest_path(&[(1, &[1]), (1, &[])])
    }

    /// Capturable Release: clear x, then per slot read the registration,
    /// read through it, re-read x and CAS the flag.
    pub fn capturable_release() -> u64 {
        let slot = longest_path(&[(1, &[1]), (1, &[2]), (1, &[3]), (1, &[])]);
        1 + 3 * slot
    }

    /// Signal Set: write x, read the registration, write through it.
    pub fn signal_set() -> u64 {
        longest_path(&[(1, &[1]), (1, &[2]), (1, &[])])
    }

    pub fn cc_exit() -> u64 {
        // E1 read Seq; E2 base Exit (one write) when the epoch matches; E3
        // Barrier write; E4 return.
        longest_path(&[(1, &[1, 2]), (1, &[2]), (1, &[3]), (1, &[])])
    }

    pub fn cc_recover() -> u64 {
        // R1 read Seq; R2-R5 reset and bump; R6 read Barrier, which either
        // returns IN_CS or falls to R7 and R8.
        longest_path(&[
            (1, &[1, 5]),
            (1, &[2]),
            (1, &[3]),
            (1, &[4]),
            (1, &[5]),
            (1, &[6]),
            (1, &[7]),
            (1, &[]),
        ])
    }

    pub fn dsm_exit() -> u64 {
        let base = dsm_base_exit();
        let abandon = dsm_base_exit();
        // E1 read Seq; E2 base Exit or E2.1 Abandon or neither; E3 Release;
        // E4 return.
        longest_path(&[
            (1, &[1, 2, 3]),
            (base, &[3]),
            (abandon, &[3]),
            (capturable_release(), &[4]),
            (1, &[]),
        ])
    }

    pub fn dsm_recover() -> u64 {
        // R1 read Seq; R2 base Reset; R3 Stop Reset; R4 bump Seq; R5 Stop
        // Set; R5.1 read Seq and maybe Abandon; R6 Barrier Read; R7; R8.
        longest_path(&[
            (1, &[1, 7]),
            (1, &[2]),
            (1, &[3]),
            (1, &[4]),
            (signal_set(), &[5]),
            (1, &[6, 7]),
            (dsm_base_exit(), &[7]),
            (1, &[8, 9]),
            (1, &[9]),
            (1, &[]),
        ])
    }
}
