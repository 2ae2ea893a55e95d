//! Bounded exhaustive exploration.
//!
//! Depth-first over every interleaving and crash placement within the
//! budgets. Configurations are deduplicated by a 128-bit fingerprint of
//! cell values, process states, client bookkeeping and the crash budget.
//! Caches are left out: they only affect RMR charging, which exploration
//! does not judge.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{BuildHasher, BuildHasherDefault, Hash, Hasher};
use std::str::FromStr;

use foldhash::quality::FixedState;
use serde::{Deserialize, Serialize};

use crate::checkers::invariant::eval_invariant;
use crate::error::SimError;
use crate::memory::Memory;
use crate::rme::{Pc, Rme, Status};
use crate::trace::{EventKind, Outcome, TraceEvent, ViolationCode};
use crate::value::Pid;

use super::client::{can_step, client_step, crash_clients, Client, Start};
use super::config::ExploreConfig;

/// One edge of the configuration graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Move {
    Step(Pid),
    /// An idle process calls Recover instead of Try.
    SpuriousRecover(Pid),
    Crash,
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::Step(p) => write!(f, "{p}"),
            Move::SpuriousRecover(p) => write!(f, "{p}r"),
            Move::Crash => f.write_str("crash"),
        }
    }
}

impl FromStr for Move {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "crash" {
            return Ok(Move::Crash);
        }
        let body = s
            .strip_prefix('p')
            .ok_or_else(|| format!("bad move `{s}`"))?;
        let (num, spurious) = match body.strip_suffix('r') {
            Some(b) => (b, true),
            None => (body, false),
        };
        let pid = Pid(num.parse().map_err(|_| format!("bad move `{s}`"))?);
        Ok(if spurious {
            Move::SpuriousRecover(pid)
        } else {
            Move::Step(pid)
        })
    }
}

impl Serialize for Move {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Move {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreViolation {
    pub code: ViolationCode,
    pub pid: Option<Pid>,
    pub detail: String,
    /// Moves from the initial configuration to the failing one.
    pub path: Vec<Move>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreReport {
    pub states: usize,
    pub transitions: usize,
    /// False if the state cap was hit.
    pub complete: bool,
    /// True if some branch was cut by the depth limit.
    pub depth_limited: bool,
    pub liveness_checked: bool,
    pub max_depth_seen: u32,
    pub violations: Vec<ExploreViolation>,
}

impl ExploreReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn found(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    /// The shortest recorded witness for `code`.
    pub fn witness(&self, code: ViolationCode) -> Option<&ExploreViolation> {
        self.violations
            .iter()
            .filter(|v| v.code == code)
            .min_by_key(|v| v.path.len())
    }
}

/// A configuration plus what the explorer needs to judge its edges.
#[derive(Clone, Debug)]
pub struct World {
    pub mem: Memory,
    pub rme: Rme,
    pub clients: Vec<Client>,
    pub crashes_left: u32,
    pub seq_at_crash: u64,
}

impl World {
    pub fn initial(cfg: &ExploreConfig) -> Self {
        let mut mem = Memory::new();
        let rme = Rme::new(cfg.algorithm, &mut mem, cfg.n, cfg.mutant);
        Self {
            mem,
            rme,
            clients: vec![Client::default(); cfg.n],
            crashes_left: cfg.crashes,
            seq_at_crash: 1,
        }
    }

    pub fn seq(&self) -> u64 {
        self.mem.peek(self.rme.seq_cell()).as_nat().unwrap_or(0)
    }

    /// 128-bit identity of the configuration. Caches and RMR counters are
    /// left out.
    pub fn fingerprint(&self) -> u128 {
        let mut sink = ByteSink(Vec::with_capacity(1024));
        self.mem.hash_values(&mut sink);
        self.rme.hash_into(&mut sink);
        self.clients.hash(&mut sink);
        self.crashes_left.hash(&mut sink);
        self.seq_at_crash.hash(&mut sink);
        let [a, b] = FP_SEEDS.map(|seed| FixedState::with_seed(seed).hash_one(&sink.0[..]));
        (u128::from(a) << 64) | u128::from(b)
    }

    /// Moves enabled here, in a fixed order.
    pub fn moves(&self, cfg: &ExploreConfig) -> Vec<Move> {
        let mut out = Vec::new();
        for i in 0..cfg.n as u32 {
            let pid = Pid(i);
            if !can_step(
                &self.rme,
                &self.clients[i as usize],
                pid,
                Some(cfg.passages),
            ) {
                continue;
            }
            out.push(Move::Step(pid));
            let p = self.rme.proc(pid);
            if cfg.spurious_recover && p.pc == Pc::Rem && p.status == Status::Good {
                out.push(Move::SpuriousRecover(pid));
            }
        }
        if self.crashes_left > 0 {
            out.push(Move::Crash);
        }
        out
    }

    /// True once every process has used its passage budget.
    pub fn finished(&self, cfg: &ExploreConfig) -> bool {
        (0..cfg.n as u32).all(|i| {
            !can_step(
                &self.rme,
                &self.clients[i as usize],
                Pid(i),
                Some(cfg.passages),
            )
        })
    }

    /// Applies `mv` and returns the trace events plus edge violations.
    pub fn apply(
        &mut self,
        cfg: &ExploreConfig,
        mv: Move,
        step: u64,
    ) -> Result<Vec<TraceEvent>, SimError> {
        let seq_before = self.seq();
        let mut events = Vec::new();
        match mv {
            Move::Crash => {
                self.mem.system_crash_canonical();
                self.rme.on_crash();
                crash_clients(&mut self.clients);
                self.crashes_left -= 1;
                self.seq_at_crash = seq_before;
                events.push(TraceEvent {
                    step,
                    kind: EventKind::Crash,
                });
            }
            Move::Step(pid) | Move::SpuriousRecover(pid) => {
                let start = if matches!(mv, Move::SpuriousRecover(_)) {
                    Start::Recover
                } else {
                    Start::Try
                };
                let rec = client_step(
                    &mut self.mem,
                    &mut self.rme,
                    &mut self.clients[pid.index()],
                    pid,
                    start,
                    cfg.cs_dwell,
                )?;
                events.extend(rec.events(step));
                if let Some((_, Outcome::InCs)) = rec.returned {
                    if let Some(q) = self
                        .rme
                        .procs()
                        .iter()
                        .find(|q| q.pid != pid && q.status == Status::RecoverFromCs)
                    {
                        events.push(violation(
                            step,
                            ViolationCode::Csr,
                            Some(pid),
                            format!("{pid} entered the CS while {} must recover from it", q.pid),
                        ));
                    }
                }
            }
        }
        let in_cs: Vec<Pid> = self
            .rme
            .procs()
            .iter()
            .filter(|p| p.pc == Pc::Cs)
            .map(|p| p.pid)
            .collect();
        if in_cs.len() > 1 {
            events.push(violation(
                step,
                ViolationCode::Mutex,
                Some(in_cs[1]),
                format!("{} and {} are both in the CS", in_cs[0], in_cs[1]),
            ));
        }
        let seq = self.seq();
        if seq < seq_before || seq > self.seq_at_crash + 1 {
            events.push(violation(
                step,
                ViolationCode::SeqMonotone,
                None,
                format!(
                    "Seq moved from {seq_before} to {seq}, last crash at {}",
                    self.seq_at_crash
                ),
            ));
        }
        Ok(events)
    }

    /// Checks that depend on the configuration alone.
    pub fn config_violations(&self, step: u64) -> Vec<TraceEvent> {
        let mut out = Vec::new();
        for i in self.rme.base_mutex_failures() {
            out.push(violation(
                step,
                ViolationCode::BaseMutex,
                None,
                format!("two holders in clean base lock {i}"),
            ));
        }
        for f in eval_invariant(&self.rme.view(&self.mem)) {
            out.push(violation(
                step,
                ViolationCode::Invariant,
                Some(f.pid),
                format!("{}: {}", f.condition, f.detail),
            ));
        }
        out
    }
}

fn violation(step: u64, code: ViolationCode, pid: Option<Pid>, detail: String) -> TraceEvent {
    TraceEvent {
        step,
        kind: EventKind::Violation { code, pid, detail },
    }
}

/// Dedup key: one witness per code, and per condition for the invariant.
fn dedup_key(code: ViolationCode, detail: &str) -> String {
    match code {
        ViolationCode::Invariant => detail.split(':').next().unwrap_or("").to_string(),
        _ => String::new(),
    }
}

const FP_SEEDS: [u64; 2] = [0x243f_6a88_85a3_08d3, 0x1319_8a2e_0370_7344];

/// Collects the bytes a `Hash` impl feeds in, so the configuration is
/// serialized once and hashed twice in bulk.
struct ByteSink(Vec<u8>);

impl Hasher for ByteSink {
    fn finish(&self) -> u64 {
        0
    }

    fn write(&mut self, bytes: &[u8]) {
        self.0.extend_from_slice(bytes);
    }
}

/// Fingerprints are already uniform, so the table uses their low bits.
#[derive(Clone, Copy, Default)]
struct FpHasher(u64);

impl Hasher for FpHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 << 8) | u64::from(b);
        }
    }

    fn write_u128(&mut self, v: u128) {
        self.0 = v as u64;
    }
}

type FpMap = HashMap<u128, u32, BuildHasherDefault<FpHasher>>;

struct Graph {
    ids: FpMap,
    parent: Vec<(u32, Option<Move>)>,
    /// Crash-free successors, stored contiguously per expanded state:
    /// `succ[edge_start[v]..edge_start[v] + edge_len[v]]`. Self-loops are
    /// dropped since they cannot make a component non-terminal.
    edge_start: Vec<u32>,
    edge_len: Vec<u8>,
    succ: Vec<u32>,
    finished: Vec<bool>,
}

impl Graph {
    fn add(&mut self, fp: u128, parent: u32, mv: Option<Move>, finished: bool) -> u32 {
        let id = self.parent.len() as u32;
        self.ids.insert(fp, id);
        self.parent.push((parent, mv));
        self.edge_start.push(0);
        self.edge_len.push(0);
        self.finished.push(finished);
        id
    }

    fn successors(&self, v: u32) -> &[u32] {
        let s = self.edge_start[v as usize] as usize;
        &self.succ[s..s + self.edge_len[v as usize] as usize]
    }

    fn path(&self, mut id: u32) -> Vec<Move> {
        let mut out = Vec::new();
        while let (p, Some(mv)) = self.parent[id as usize] {
            out.push(mv);
            id = p;
        }
        out.reverse();
        out
    }
}

pub fn explore(cfg: &ExploreConfig) -> Result<ExploreReport, SimError> {
    cfg.validate()?;
    let init = World::initial(cfg);
    let mut g = Graph {
        ids: FpMap::default(),
        parent: Vec::new(),
        edge_start: Vec::new(),
        edge_len: Vec::new(),
        succ: Vec::new(),
        finished: Vec::new(),
    };
    g.add(init.fingerprint(), 0, None, init.finished(cfg));
    let mut report = ExploreReport {
        states: 1,
        complete: true,
        ..Default::default()
    };
    let mut seen: BTreeMap<(ViolationCode, String), usize> = BTreeMap::new();
    let mut record = |report: &mut ExploreReport,
                      g: &Graph,
                      id: u32,
                      tail: Option<Move>,
                      events: &[TraceEvent]| {
        for e in events {
            if let EventKind::Violation { code, pid, detail } = &e.kind {
                let key = (*code, dedup_key(*code, detail));
                if seen.contains_key(&key) {
                    continue;
                }
                let mut path = g.path(id);
                path.extend(tail);
                seen.insert(key, report.violations.len());
                report.violations.push(ExploreViolation {
                    code: *code,
                    pid: *pid,
                    detail: detail.clone(),
                    path,
                });
            }
        }
    };
    record(&mut report, &g, 0, None, &init.config_violations(0));

    let mut stack = vec![(0u32, 0u32, init)];
    let mut out_edges = Vec::new();
    'search: while let Some((id, depth, world)) = stack.pop() {
        report.max_depth_seen = report.max_depth_seen.max(depth);
        if cfg.max_depth.is_some_and(|d| depth >= d) {
            report.depth_limited = true;
            continue;
        }
        out_edges.clear();
        for mv in world.moves(cfg) {
            let mut next = world.clone();
            let events = next.apply(cfg, mv, u64::from(depth))?;
            report.transitions += 1;
            record(&mut report, &g, id, Some(mv), &events);
            let fp = next.fingerprint();
            let nid = match g.ids.get(&fp) {
                Some(&nid) => nid,
                None => {
                    if g.parent.len() >= cfg.max_states {
                        report.complete = false;
                        break 'search;
                    }
                    let nid = g.add(fp, id, Some(mv), next.finished(cfg));
                    let cv = next.config_violations(u64::from(depth) + 1);
                    record(&mut report, &g, nid, None, &cv);
                    stack.push((nid, depth + 1, next));
                    nid
                }
            };
            if mv != Move::Crash && nid != id && !out_edges.contains(&nid) {
                out_edges.push(nid);
            }
        }
        g.edge_start[id as usize] = g.succ.len() as u32;
        g.edge_len[id as usize] = out_edges.len() as u8;
        g.succ.extend_from_slice(&out_edges);
        if cfg.stop_on_violation && !report.violations.is_empty() {
            report.complete = false;
            break;
        }
    }
    report.states = g.parent.len();

    if cfg.liveness && report.complete && !report.depth_limited {
        report.liveness_checked = true;
        if let Some(stuck) = stuck_state(&g) {
            let path = g.path(stuck);
            report.violations.push(ExploreViolation {
                code: ViolationCode::Starvation,
                pid: None,
                detail: format!(
                    "from this configuration no crash-free schedule lets every process finish ({} moves in)",
                    path.len()
                ),
                path,
            });
        }
    }
    Ok(report)
}

/// A state in a terminal strongly connected component of the crash-free
/// graph that is not the finished state, if one exists. Every fair
/// crash-free continuation from there stays in the component forever.
fn stuck_state(g: &Graph) -> Option<u32> {
    let n = g.parent.len();
    let scc = tarjan(n, |v| g.successors(v));
    let ncomp = scc.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut finishes = vec![false; ncomp];
    let mut terminal = vec![true; ncomp];
    for v in 0..n as u32 {
        let c = scc[v as usize] as usize;
        if g.successors(v)
            .iter()
            .any(|&w| scc[w as usize] as usize != c)
        {
            terminal[c] = false;
        }
        if g.finished[v as usize] {
            finishes[c] = true;
        }
    }
    (0..n as u32).find(|&v| {
        let c = scc[v as usize] as usize;
        terminal[c] && !finishes[c]
    })
}

/// Iterative Tarjan. Returns the component index of every vertex.
fn tarjan<'a>(n: usize, succ: impl Fn(u32) -> &'a [u32]) -> Vec<u32> {
    const UNSEEN: u32 = u32::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSEEN; n];
    let mut stack = Vec::new();
    let mut next_index = 0u32;
    let mut next_comp = 0u32;
    let mut call: Vec<(u32, usize)> = Vec::new();
    for root in 0..n as u32 {
        if index[root as usize] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root as usize] = next_index;
        low[root as usize] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        while let Some(&mut (v, ref mut i)) = call.last_mut() {
            let vu = v as usize;
            let out = succ(v);
            if *i < out.len() {
                let w = out[*i];
                *i += 1;
                let wu = w as usize;
                if index[wu] == UNSEEN {
                    index[wu] = next_index;
                    low[wu] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[wu] = true;
                    call.push((w, 0));
                } else if on_stack[wu] {
                    low[vu] = low[vu].min(index[wu]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent as usize] = low[parent as usize].min(low[vu]);
            }
            if low[vu] == index[vu] {
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w as usize] = false;
                    comp[w as usize] = next_comp;
                    if w == v {
                        break;
                    }
                }
                next_comp += 1;
            }
        }
    }
    comp
}

/// Re-runs a witness path from the initial configuration and returns the
/// events it produces.
pub fn replay(cfg: &ExploreConfig, path: &[Move]) -> Result<Vec<TraceEvent>, SimError> {
    let mut w = World::initial(cfg);
    let mut out = Vec::new();
    for (i, &mv) in path.iter().enumerate() {
        if !w.moves(cfg).contains(&mv) {
            return Err(SimError::Config(format!(
                "move {mv} is not enabled at step {i}"
            )));
        }
        out.extend(w.apply(cfg, mv, i as u64)?);
        out.extend(w.config_violations(i as u64));
    }
    Ok(out)
}
