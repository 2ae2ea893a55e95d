//! The two recoverable mutex algorithms and the types they share.
//!
//! Both algorithms run three base locks in rotation, indexed by a persistent
//! epoch counter `Seq`. A recovering process that finds the epoch stale bumps
//! it, which moves new arrivals to a fresh lock. A `Barrier` owner slot keeps
//! processes from the old and new locks out of the critical section together.

pub mod cc;
pub mod dsm;

use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::checkers::invariant::InvariantView;
use crate::error::{ParseError, SimError};
use crate::memory::Memory;
use crate::step::Ctx;
use crate::trace::ViolationCode;
use crate::value::{CellId, Pid};

pub use cc::RmeCc;
pub use dsm::RmeDsm;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Cc,
    Dsm,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Cc => "cc",
            Algorithm::Dsm => "dsm",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Try,
    Exit,
    Recover,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Good,
    RecoverFromTry,
    RecoverFromCs,
    RecoverFromExit,
    RecoverFromRem,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SectionOutcome {
    Pending,
    InCs,
    InRem,
}

/// Single-line mutations used to check that the checkers have teeth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutant {
    #[default]
    None,
    /// Recovery never raises the Stop flag of the old epoch.
    DropR5,
    /// Exit never clears the Barrier.
    DropE3,
    /// Recovery bumps Seq before clearing the recycled Stop flag.
    SwapR3R4,
    /// Migration skips abandoning the old lock (DSM only).
    SkipAbandon,
}

impl Mutant {
    pub const ALL: [Mutant; 4] = [
        Mutant::DropR5,
        Mutant::DropE3,
        Mutant::SwapR3R4,
        Mutant::SkipAbandon,
    ];
}

macro_rules! pcs {
    ($($v:ident => $s:literal),* $(,)?) => {
        /// Program counter labels, declared in listing order so that ranges
        /// such as `T3..=T7` can be tested with `PartialOrd`.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Pc { $($v),* }

        impl Pc {
            pub fn label(self) -> &'static str {
                match self { $(Pc::$v => $s),* }
            }
        }

        impl FromStr for Pc {
            type Err = ParseError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($s => Ok(Pc::$v),)*
                    _ => Err(ParseError::Pc(s.to_string())),
                }
            }
        }
    };
}

pcs! {
    Rem => "rem",
    T1 => "T1", T2 => "T2", T3 => "T3", T4 => "T4", T5 => "T5", T6 => "T6", T7 => "T7",
    T8 => "T8", T8a => "T8.1", T9 => "T9", T10 => "T10", T11 => "T11", T12 => "T12",
    T13 => "T13", T14 => "T14",
    Cs => "cs",
    E1 => "E1", E2 => "E2", E2a => "E2.1", E3 => "E3", E4 => "E4",
    R1 => "R1", R2 => "R2", R3 => "R3", R4 => "R4", R5 => "R5", R5a => "R5.1",
    R6 => "R6", R7 => "R7", R8 => "R8",
}

impl Pc {
    pub fn within(self, lo: Pc, hi: Pc) -> bool {
        lo <= self && self <= hi
    }

    pub fn is_try(self) -> bool {
        self.within(Pc::T1, Pc::T14)
    }

    pub fn is_exit(self) -> bool {
        self.within(Pc::E1, Pc::E4)
    }

    pub fn is_recover(self) -> bool {
        self.within(Pc::R1, Pc::R8)
    }
}

impl fmt::Display for Pc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for Pc {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Pc {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-process state of the lock. `active`, `s` and `status` survive crashes;
/// the rest is volatile.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Proc {
    pub pid: Pid,
    pub pc: Pc,
    pub status: Status,
    pub active: bool,
    pub s: u64,
    /// Which arm of a parallel wait moves next (`false` = the Stop arm).
    pub phase: bool,
    /// Set once a multi-step line has taken its first step.
    pub started: bool,
    /// Snapshot of `Seq` taken at the start of Exit (DSM).
    pub x: u64,
}

impl Proc {
    pub fn new(pid: Pid) -> Self {
        Self {
            pid,
            pc: Pc::Rem,
            status: Status::Good,
            active: false,
            s: 1,
            phase: false,
            started: false,
            x: 0,
        }
    }

    pub(crate) fn goto(&mut self, pc: Pc) {
        self.pc = pc;
        self.phase = false;
        self.started = false;
    }

    /// Section invocation. Returns false if the call breaks the client protocol.
    pub(crate) fn invoke(&mut self, section: Section) -> bool {
        let ok = match section {
            Section::Try => self.pc == Pc::Rem && self.status == Status::Good,
            Section::Exit => self.pc == Pc::Cs,
            Section::Recover => self.pc == Pc::Rem,
        };
        match section {
            Section::Try => self.goto(Pc::T1),
            Section::Exit => self.goto(Pc::E1),
            Section::Recover => {
                if self.status == Status::Good {
                    self.status = Status::RecoverFromRem;
                }
                self.goto(Pc::R1)
            }
        }
        ok
    }

    pub(crate) fn crash(&mut self) {
        if self.status == Status::Good && self.pc != Pc::Rem {
            self.status = if self.pc.is_try() {
                Status::RecoverFromTry
            } else if self.pc == Pc::Cs {
                Status::RecoverFromCs
            } else {
                Status::RecoverFromExit
            };
        }
        self.goto(Pc::Rem);
        self.x = 0;
    }
}

pub(crate) fn prev_epoch(s: u64) -> usize {
    ((s + 2) % 3) as usize
}

pub(crate) fn epoch(s: u64) -> usize {
    (s % 3) as usize
}

/// Either lock, behind one interface for the harness.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
#[allow(clippy::large_enum_variant)]
pub enum Rme {
    Cc(RmeCc),
    Dsm(RmeDsm),
}

impl Rme {
    pub fn new(algorithm: Algorithm, mem: &mut Memory, n: usize, mutant: Mutant) -> Self {
        match algorithm {
            Algorithm::Cc => Rme::Cc(RmeCc::new(mem, n, mutant)),
            Algorithm::Dsm => Rme::Dsm(RmeDsm::new(mem, n, mutant)),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Rme::Cc(_) => Algorithm::Cc,
            Rme::Dsm(_) => Algorithm::Dsm,
        }
    }

    pub fn seq_cell(&self) -> CellId {
        match self {
            Rme::Cc(l) => l.seq_cell(),
            Rme::Dsm(l) => l.seq_cell(),
        }
    }

    pub fn procs(&self) -> &[Proc] {
        match self {
            Rme::Cc(l) => l.procs(),
            Rme::Dsm(l) => l.procs(),
        }
    }

    pub fn proc(&self, pid: Pid) -> &Proc {
        &self.procs()[pid.index()]
    }

    pub fn invoke(
        &mut self,
        ctx: &mut Ctx<'_>,
        pid: Pid,
        section: Section,
    ) -> Result<(), SimError> {
        let procs = match self {
            Rme::Cc(l) => l.procs_mut(),
            Rme::Dsm(l) => l.procs_mut(),
        };
        let p = procs
            .get_mut(pid.index())
            .ok_or(SimError::UnknownPid(pid))?;
        if !p.invoke(section) {
            ctx.violation(
                ViolationCode::UsePattern,
                Some(pid),
                format!("{pid} invoked {section:?} out of protocol"),
            );
        }
        Ok(())
    }

    pub fn step(&mut self, ctx: &mut Ctx<'_>, pid: Pid) -> Result<SectionOutcome, SimError> {
        match self {
            Rme::Cc(l) => l.step(ctx, pid),
            Rme::Dsm(l) => l.step(ctx, pid),
        }
    }

    pub fn on_crash(&mut self) {
        match self {
            Rme::Cc(l) => l.on_crash(),
            Rme::Dsm(l) => l.on_crash(),
        }
    }

    /// Volatile registers hold garbage after a crash.
    pub fn scramble_volatile<R: rand::Rng>(&mut self, rng: &mut R) {
        let procs = match self {
            Rme::Cc(l) => l.procs_mut(),
            Rme::Dsm(l) => l.procs_mut(),
        };
        for p in procs {
            p.x = rng.gen_range(0..64);
        }
    }

    pub fn view(&self, mem: &Memory) -> InvariantView {
        match self {
            Rme::Cc(l) => l.view(mem),
            Rme::Dsm(l) => l.view(mem),
        }
    }

    /// Indices of base locks that currently break their own mutual exclusion
    /// while still inside their use pattern.
    pub fn base_mutex_failures(&self) -> Vec<usize> {
        let locks = match self {
            Rme::Cc(l) => l.locks(),
            Rme::Dsm(l) => l.locks(),
        };
        locks
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_clean() && l.ghost().cs_set.len() > 1)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn hash_into<H: Hasher>(&self, h: &mut H) {
        self.hash(h)
    }
}
