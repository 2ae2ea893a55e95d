use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use rme_core::memory::{MemOp, Memory};
use rme_core::{CellId, Pid, Value};

const PIDS: u32 = 4;
const CELLS: usize = 5;

/// Straightforward write-invalidate model: one copy set per cell.
#[derive(Default)]
struct Reference {
    values: Vec<Value>,
    persistent: Vec<bool>,
    owner: Vec<Option<Pid>>,
    copies: HashMap<usize, BTreeSet<Pid>>,
}

impl Reference {
    fn access(&mut self, pid: Pid, cell: usize, op: MemOp) -> (Value, bool, bool) {
        let dsm = self.owner[cell] != Some(pid);
        let v = &mut self.values[cell];
        let result = match op {
            MemOp::Read => *v,
            MemOp::Write(x) => {
                *v = x;
                Value::Bot
            }
            MemOp::Cas { expect, new } => {
                let ok = *v == expect;
                if ok {
                    *v = new;
                }
                Value::Bool(ok)
            }
            MemOp::Fas(x) => std::mem::replace(v, x),
        };
        let copies = self.copies.entry(cell).or_default();
        let cc = match op {
            MemOp::Read => copies.insert(pid),
            _ => {
                copies.clear();
                true
            }
        };
        (result, cc, dsm)
    }

    fn crash(&mut self) {
        self.copies.clear();
        for (v, &p) in self.values.iter_mut().zip(&self.persistent) {
            if !p {
                *v = Value::Bot;
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Action {
    Access(u32, usize, MemOp),
    Crash,
}

fn small_value() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Bot),
        any::<bool>().prop_map(Value::Bool),
        (0..3u64).prop_map(Value::Nat),
    ]
}

fn action() -> impl Strategy<Value = Action> {
    let op = prop_oneof![
        Just(MemOp::Read),
        small_value().prop_map(MemOp::Write),
        (small_value(), small_value()).prop_map(|(expect, new)| MemOp::Cas { expect, new }),
        small_value().prop_map(MemOp::Fas),
    ];
    prop_oneof![
        10 => (0..PIDS, 0..CELLS, op).prop_map(|(p, c, o)| Action::Access(p, c, o)),
        1 => Just(Action::Crash),
    ]
}

fn layout() -> impl Strategy<Value = Vec<(bool, Option<u32>)>> {
    prop::collection::vec((any::<bool>(), prop::option::of(0..PIDS)), CELLS)
}

proptest! {
    #[test]
    fn memory_agrees_with_reference(cells in layout(), actions in prop::collection::vec(action(), 1..200)) {
        let mut mem = Memory::new();
        let mut model = Reference::default();
        for &(persistent, owner) in &cells {
            mem.alloc_cell(persistent, owner.map(Pid), Value::Bot);
            model.values.push(Value::Bot);
            model.persistent.push(persistent);
            model.owner.push(owner.map(Pid));
        }
        let mut totals = vec![(0u64, 0u64); PIDS as usize];
        for a in actions {
            match a {
                Action::Access(p, c, op) => {
                    let got = mem.access(Pid(p), CellId(c as u32), op).unwrap();
                    let (result, cc, dsm) = model.access(Pid(p), c, op);
                    prop_assert_eq!(got.result, result);
                    prop_assert_eq!(got.rmr_cc, cc);
                    prop_assert_eq!(got.rmr_dsm, dsm);
                    totals[p as usize].0 += cc as u64;
                    totals[p as usize].1 += dsm as u64;
                }
                Action::Crash => {
                    mem.system_crash_canonical();
                    model.crash();
                }
            }
            for p in 0..PIDS {
                for c in 0..CELLS {
                    let cached = model.copies.get(&c).is_some_and(|s| s.contains(&Pid(p)));
                    prop_assert_eq!(mem.is_cached(Pid(p), CellId(c as u32)), cached);
                }
            }
        }
        for (c, &v) in model.values.iter().enumerate() {
            prop_assert_eq!(mem.peek(CellId(c as u32)), v);
        }
        for (p, &(cc, dsm)) in totals.iter().enumerate() {
            let k = mem.rmr_stats(Pid(p as u32));
            prop_assert_eq!((k.total_cc, k.total_dsm), (cc, dsm));
        }
    }

    #[test]
    fn random_crash_keeps_persistent_cells(cells in layout(), seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut mem = Memory::new();
        for (i, &(persistent, owner)) in cells.iter().enumerate() {
            mem.alloc_cell(persistent, owner.map(Pid), Value::Nat(i as u64 + 7));
        }
        mem.access(Pid(0), CellId(0), MemOp::Read).unwrap();
        mem.system_crash(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(!mem.is_cached(Pid(0), CellId(0)));
        for (i, &(persistent, _)) in cells.iter().enumerate() {
            if persistent {
                prop_assert_eq!(mem.peek(CellId(i as u32)), Value::Nat(i as u64 + 7));
            }
        }
    }
}

#[test]
fn second_read_hits_until_someone_writes() {
    let mut mem = Memory::new();
    let c = mem.alloc_cell(true, Some(Pid(1)), Value::Bool(false));
    assert!(mem.access(Pid(0), c, MemOp::Read).unwrap().rmr_cc);
    assert!(!mem.access(Pid(0), c, MemOp::Read).unwrap().rmr_cc);
    let w = mem
        .access(Pid(1), c, MemOp::Write(Value::Bool(true)))
        .unwrap();
    assert!(w.rmr_cc && !w.rmr_dsm);
    assert!(mem.access(Pid(0), c, MemOp::Read).unwrap().rmr_cc);
}
