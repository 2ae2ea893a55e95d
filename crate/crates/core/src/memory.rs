//! Shared memory with per-access RMR accounting under both cost models.
//!
//! Every access is charged under the cache-coherent model and the
//! distributed-shared-memory model at once. The CC model keeps a per-cell
//! sharer list: a read by a process already holding a copy is free, anything
//! else is remote. The DSM model charges any access to a cell outside the
//! accessing process's partition.

use std::hash::{Hash, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::value::{CellId, Pid, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemOp {
    Read,
    Write(Value),
    Cas { expect: Value, new: Value },
    Fas(Value),
}

impl MemOp {
    pub fn name(&self) -> &'static str {
        match self {
            MemOp::Read => "read",
            MemOp::Write(_) => "write",
            MemOp::Cas { .. } => "cas",
            MemOp::Fas(_) => "fas",
        }
    }

    pub fn is_read(&self) -> bool {
        matches!(self, MemOp::Read)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cell {
    pub value: Value,
    pub persistent: bool,
    /// Partition owner. `None` means remote for everyone under DSM.
    pub owner: Option<Pid>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RmrCounters {
    pub total_cc: u64,
    pub total_dsm: u64,
    pub passage_cc: u64,
    pub passage_dsm: u64,
}

/// One completed access. CAS reports success as `Value::Bool`; writes report `Bot`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Access {
    pub pid: Pid,
    pub cell: CellId,
    pub op: MemOp,
    pub result: Value,
    pub rmr_cc: bool,
    pub rmr_dsm: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Memory {
    cells: Vec<Cell>,
    /// Cache membership as one bitset per cell, `words` u64s each.
    sharers: Vec<u64>,
    words: usize,
    counters: Vec<RmrCounters>,
}

impl Memory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc_cell(&mut self, persistent: bool, owner: Option<Pid>, init: Value) -> CellId {
        let id = CellId(self.cells.len() as u32);
        self.cells.push(Cell {
            value: init,
            persistent,
            owner,
        });
        self.sharers.extend(std::iter::repeat_n(0, self.words));
        if let Some(p) = owner {
            self.ensure_pid(p);
        }
        id
    }

    pub fn ensure_pid(&mut self, pid: Pid) {
        if self.counters.len() <= pid.index() {
            self.counters
                .resize(pid.index() + 1, RmrCounters::default());
        }
        let need = pid.index() / 64 + 1;
        if need > self.words {
            let mut wide = vec![0; self.cells.len() * need];
            for (c, chunk) in self
                .sharers
                .chunks(self.words.max(1))
                .enumerate()
                .take(self.cells.len())
            {
                wide[c * need..c * need + chunk.len()].copy_from_slice(chunk);
            }
            self.sharers = wide;
            self.words = need;
        }
    }

    fn shares(&self, pid: Pid, idx: usize) -> bool {
        let w = pid.index() / 64;
        w < self.words && self.sharers[idx * self.words + w] & (1 << (pid.index() % 64)) != 0
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, id: CellId) -> Option<&Cell> {
        self.cells.get(id.index())
    }

    /// Current value without accounting. For checkers only.
    pub fn peek(&self, id: CellId) -> Value {
        self.cells[id.index()].value
    }

    /// True if `pid` holds a valid cached copy of `id`.
    pub fn is_cached(&self, pid: Pid, id: CellId) -> bool {
        id.index() < self.cells.len() && self.shares(pid, id.index())
    }

    /// Cells for which `pid` holds a cached copy, in id order.
    pub fn cache_of(&self, pid: Pid) -> Vec<CellId> {
        (0..self.cells.len())
            .filter(|&i| self.shares(pid, i))
            .map(|i| CellId(i as u32))
            .collect()
    }

    pub fn access(&mut self, pid: Pid, cell: CellId, op: MemOp) -> Result<Access, SimError> {
        let idx = cell.index();
        if idx >= self.cells.len() {
            return Err(SimError::UnallocatedCell(cell));
        }
        self.ensure_pid(pid);
        let c = &mut self.cells[idx];
        let rmr_dsm = c.owner != Some(pid);
        let result = match op {
            MemOp::Read => c.value,
            MemOp::Write(v) => {
                c.value = v;
                Value::Bot
            }
            MemOp::Cas { expect, new } => {
                let ok = c.value == expect;
                if ok {
                    c.value = new;
                }
                Value::Bool(ok)
            }
            MemOp::Fas(v) => std::mem::replace(&mut c.value, v),
        };
        let rmr_cc = if op.is_read() {
            let hit = self.shares(pid, idx);
            self.sharers[idx * self.words + pid.index() / 64] |= 1 << (pid.index() % 64);
            !hit
        } else {
            self.sharers[idx * self.words..(idx + 1) * self.words].fill(0);
            true
        };
        let k = &mut self.counters[pid.index()];
        k.total_cc += rmr_cc as u64;
        k.passage_cc += rmr_cc as u64;
        k.total_dsm += rmr_dsm as u64;
        k.passage_dsm += rmr_dsm as u64;
        Ok(Access {
            pid,
            cell,
            op,
            result,
            rmr_cc,
            rmr_dsm,
        })
    }

    /// System-wide crash: caches are lost and volatile cells take adversarial
    /// values drawn from `rng`. Persistent cells and counters survive.
    pub fn system_crash<R: Rng>(&mut self, rng: &mut R) {
        let ncells = self.cells.len() as u32;
        let npids = self.counters.len().max(1) as u32;
        for c in self.cells.iter_mut().filter(|c| !c.persistent) {
            c.value = adversarial_value(rng, ncells, npids);
        }
        self.clear_caches();
    }

    /// Crash variant for exhaustive exploration: volatile cells become `Bot`.
    pub fn system_crash_canonical(&mut self) {
        for c in self.cells.iter_mut().filter(|c| !c.persistent) {
            c.value = Value::Bot;
        }
        self.clear_caches();
    }

    fn clear_caches(&mut self) {
        self.sharers.fill(0);
    }

    pub fn rmr_stats(&self, pid: Pid) -> RmrCounters {
        self.counters.get(pid.index()).copied().unwrap_or_default()
    }

    pub fn begin_passage(&mut self, pid: Pid) {
        self.ensure_pid(pid);
        let k = &mut self.counters[pid.index()];
        k.passage_cc = 0;
        k.passage_dsm = 0;
    }

    /// Hashes cell values only. Caches and counters are not part of a
    /// configuration's identity for exploration.
    pub fn hash_values<H: Hasher>(&self, h: &mut H) {
        for c in &self.cells {
            c.value.hash(h);
        }
    }
}

/// Values biased toward what breaks code that trusts volatile state.
pub fn adversarial_value<R: Rng>(rng: &mut R, ncells: u32, npids: u32) -> Value {
    match rng.gen_range(0..8) {
        0 | 1 => Value::Bot,
        2 => Value::Token,
        3 if ncells > 0 => Value::Ref(CellId(rng.gen_range(0..ncells))),
        4 => Value::Pid(Pid(rng.gen_range(0..npids))),
        5 => Value::Bool(rng.gen()),
        6 => Value::Pair(rng.gen_range(0..4), rng.gen()),
        _ => Value::Nat(rng.gen_range(0..4)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn read_after_read_is_local_in_cc() {
        let mut m = Memory::new();
        let c = m.alloc_cell(true, None, Value::Nat(1));
        let p = Pid(0);
        assert!(m.access(p, c, MemOp::Read).unwrap().rmr_cc);
        assert!(!m.access(p, c, MemOp::Read).unwrap().rmr_cc);
        m.access(Pid(1), c, MemOp::Write(Value::Nat(2))).unwrap();
        assert!(m.access(p, c, MemOp::Read).unwrap().rmr_cc);
    }

    #[test]
    fn failed_cas_still_invalidates() {
        let mut m = Memory::new();
        let c = m.alloc_cell(true, None, Value::Bot);
        m.access(Pid(0), c, MemOp::Read).unwrap();
        let a = m
            .access(
                Pid(1),
                c,
                MemOp::Cas {
                    expect: Value::Nat(9),
                    new: Value::Nat(1),
                },
            )
            .unwrap();
        assert_eq!(a.result, Value::Bool(false));
        assert!(a.rmr_cc);
        assert!(!m.is_cached(Pid(0), c));
    }

    #[test]
    fn dsm_charges_by_owner() {
        let mut m = Memory::new();
        let mine = m.alloc_cell(true, Some(Pid(0)), Value::Bool(false));
        let nobody = m.alloc_cell(true, None, Value::Bool(false));
        assert!(
            !m.access(Pid(0), mine, MemOp::Write(Value::Bool(true)))
                .unwrap()
                .rmr_dsm
        );
        assert!(m.access(Pid(1), mine, MemOp::Read).unwrap().rmr_dsm);
        assert!(m.access(Pid(0), nobody, MemOp::Read).unwrap().rmr_dsm);
    }

    #[test]
    fn fas_returns_previous() {
        let mut m = Memory::new();
        let c = m.alloc_cell(true, None, Value::Bot);
        let a = m.access(Pid(0), c, MemOp::Fas(Value::Token)).unwrap();
        assert_eq!(a.result, Value::Bot);
        assert_eq!(m.peek(c), Value::Token);
    }

    #[test]
    fn crash_keeps_persistent_and_drops_caches() {
        let mut m = Memory::new();
        let nv = m.alloc_cell(true, None, Value::Nat(5));
        let vol = m.alloc_cell(false, None, Value::Nat(5));
        m.access(Pid(0), nv, MemOp::Read).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        m.system_crash(&mut rng);
        assert_eq!(m.peek(nv), Value::Nat(5));
        assert!(!m.is_cached(Pid(0), nv));
        m.system_crash_canonical();
        assert_eq!(m.peek(vol), Value::Bot);
    }

    #[test]
    fn unallocated_is_hard_fault() {
        let mut m = Memory::new();
        assert_eq!(
            m.access(Pid(0), CellId(3), MemOp::Read),
            Err(SimError::UnallocatedCell(CellId(3)))
        );
    }
}
