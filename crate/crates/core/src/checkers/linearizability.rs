//! Strict-linearizability checking for the wait objects.
//!
//! A history is a sequence of invocations, responses and system-wide
//! crashes. It passes if some sequential order of the operations respects
//! real time, matches the sequential object, and places every operation cut
//! by a crash either before that crash or nowhere.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use crate::error::{HistoryError, SimError};
use crate::memory::Memory;
use crate::objects::{BoolSignal, CapOp, Capturable, SigOp};
use crate::step::{Ctx, Progress};
use crate::value::{Pid, Value};

/// Histories above this many operations are rejected.
pub const MAX_HISTORY_OPS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObjOp {
    Cap(CapOp),
    Sig(SigOp),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HistoryEvent {
    Invoke { pid: Pid, op: ObjOp },
    Return { pid: Pid, result: Value },
    Crash,
}

/// Sequential behaviour of the two objects. `apply` returns `None` when the
/// operation cannot take effect in `state` (a Wait that would block).
pub trait SeqSpec {
    fn initial(&self) -> Value;
    fn apply(&self, state: Value, pid: Pid, op: ObjOp) -> Option<(Value, Value)>;
    /// Whether the response value is meaningful for `op`.
    fn observes(&self, op: ObjOp) -> bool;
}

pub struct CapturableSpec;

impl SeqSpec for CapturableSpec {
    fn initial(&self) -> Value {
        Value::Bot
    }

    fn apply(&self, state: Value, pid: Pid, op: ObjOp) -> Option<(Value, Value)> {
        let ObjOp::Cap(op) = op else { return None };
        match op {
            CapOp::Read => Some((state, state)),
            CapOp::Write => Some((Value::Pid(pid), Value::Bot)),
            CapOp::Capture if state.is_bot() => Some((Value::Pid(pid), Value::Bool(true))),
            CapOp::Capture => Some((state, Value::Bool(false))),
            CapOp::Release => Some((Value::Bot, Value::Bot)),
            CapOp::Wait(_) if state.is_bot() => Some((state, Value::Bot)),
            CapOp::Wait(_) => None,
        }
    }

    fn observes(&self, op: ObjOp) -> bool {
        matches!(op, ObjOp::Cap(CapOp::Read | CapOp::Capture))
    }
}

pub struct SignalSpec;

impl SeqSpec for SignalSpec {
    fn initial(&self) -> Value {
        Value::Bool(false)
    }

    fn apply(&self, state: Value, _pid: Pid, op: ObjOp) -> Option<(Value, Value)> {
        let ObjOp::Sig(op) = op else { return None };
        match op {
            SigOp::Read => Some((state, state)),
            SigOp::Set => Some((Value::Bool(true), Value::Bot)),
            SigOp::Reset => Some((Value::Bool(false), Value::Bot)),
            SigOp::Wait if state == Value::Bool(true) => Some((state, Value::Bot)),
            SigOp::Wait => None,
        }
    }

    fn observes(&self, op: ObjOp) -> bool {
        matches!(op, ObjOp::Sig(SigOp::Read))
    }
}

#[derive(Clone, Debug)]
struct Op {
    pid: Pid,
    op: ObjOp,
    inv: usize,
    /// Response index and value for completed operations.
    ret: Option<(usize, Value)>,
    /// Index of the crash that cut it, if any.
    cut: Option<usize>,
}

fn collect_ops(history: &[HistoryEvent]) -> Result<Vec<Op>, HistoryError> {
    let mut ops: Vec<Op> = Vec::new();
    let mut pending: BTreeMap<Pid, usize> = BTreeMap::new();
    for (t, e) in history.iter().enumerate() {
        match *e {
            HistoryEvent::Invoke { pid, op } => {
                if let Some(i) = pending.insert(pid, ops.len()) {
                    // A new invocation abandons the previous one.
                    ops[i].cut.get_or_insert(t);
                }
                ops.push(Op {
                    pid,
                    op,
                    inv: t,
                    ret: None,
                    cut: None,
                });
            }
            HistoryEvent::Return { pid, result } => {
                let i = pending.remove(&pid).ok_or(HistoryError::Unmatched(pid))?;
                ops[i].ret = Some((t, result));
            }
            HistoryEvent::Crash => {
                for (_, i) in std::mem::take(&mut pending) {
                    ops[i].cut = Some(t);
                }
            }
        }
    }
    Ok(ops)
}

/// True if some legal sequential witness exists.
pub fn check_history<S: SeqSpec>(spec: &S, history: &[HistoryEvent]) -> Result<bool, HistoryError> {
    let ops = collect_ops(history)?;
    if ops.len() > MAX_HISTORY_OPS {
        return Err(HistoryError::TooLarge(ops.len(), MAX_HISTORY_OPS));
    }
    let mandatory: u32 = ops
        .iter()
        .enumerate()
        .filter(|(_, o)| o.ret.is_some())
        .fold(0, |m, (i, _)| m | (1 << i));
    // must_precede[i]: completed ops that returned before op i was invoked.
    let must_precede: Vec<u32> = ops
        .iter()
        .map(|o| {
            ops.iter()
                .enumerate()
                .filter(|(_, b)| b.ret.is_some_and(|(r, _)| r < o.inv))
                .fold(0, |m, (j, _)| m | (1 << j))
        })
        .collect();
    // expired[i]: cut ops whose crash came before op i was invoked; once i
    // takes effect they can no longer take effect.
    let expired: Vec<u32> = ops
        .iter()
        .map(|o| {
            ops.iter()
                .enumerate()
                .filter(|(_, b)| b.cut.is_some_and(|c| c < o.inv))
                .fold(0, |m, (j, _)| m | (1 << j))
        })
        .collect();
    let mut failed = HashSet::new();
    Ok(search(
        spec,
        &ops,
        &must_precede,
        &expired,
        mandatory,
        0,
        0,
        spec.initial(),
        &mut failed,
    ))
}

#[allow(clippy::too_many_arguments)]
fn search<S: SeqSpec>(
    spec: &S,
    ops: &[Op],
    must_precede: &[u32],
    expired: &[u32],
    mandatory: u32,
    linearized: u32,
    resolved: u32,
    state: Value,
    failed: &mut HashSet<(u32, u32, Value)>,
) -> bool {
    if linearized & mandatory == mandatory {
        return true;
    }
    if !failed.insert((linearized, resolved, state)) {
        return false;
    }
    for (i, o) in ops.iter().enumerate() {
        let bit = 1 << i;
        if resolved & bit != 0 || must_precede[i] & !linearized != 0 {
            continue;
        }
        let Some((next, out)) = spec.apply(state, o.pid, o.op) else {
            continue;
        };
        if let Some((_, r)) = o.ret {
            if spec.observes(o.op) && r != out {
                continue;
            }
        }
        let dropped = expired[i] & !resolved;
        if dropped & mandatory != 0 {
            continue;
        }
        if search(
            spec,
            ops,
            must_precede,
            expired,
            mandatory,
            linearized | bit,
            resolved | bit | dropped,
            next,
            failed,
        ) {
            return true;
        }
    }
    false
}

/// An object instance driven through its step machines.
trait Driven {
    fn invoke(&mut self, ctx: &mut Ctx<'_>, pid: Pid, op: ObjOp);
    fn step(&mut self, ctx: &mut Ctx<'_>, pid: Pid) -> Result<Progress, SimError>;
    fn on_crash(&mut self);
}

impl Driven for Capturable {
    fn invoke(&mut self, ctx: &mut Ctx<'_>, pid: Pid, op: ObjOp) {
        let ObjOp::Cap(op) = op else {
            panic!("signal op on a capturable object")
        };
        Capturable::invoke(self, ctx, pid, op)
    }
    fn step(&mut self, ctx: &mut Ctx<'_>, pid: Pid) -> Result<Progress, SimError> {
        Capturable::step(self, ctx, pid)
    }
    fn on_crash(&mut self) {
        Capturable::on_crash(self)
    }
}

impl Driven for BoolSignal {
    fn invoke(&mut self, ctx: &mut Ctx<'_>, pid: Pid, op: ObjOp) {
        let ObjOp::Sig(op) = op else {
            panic!("capturable op on a signal")
        };
        BoolSignal::invoke(self, ctx, pid, op)
    }
    fn step(&mut self, ctx: &mut Ctx<'_>, pid: Pid) -> Result<Progress, SimError> {
        BoolSignal::step(self, ctx, pid)
    }
    fn on_crash(&mut self) {
        BoolSignal::on_crash(self)
    }
}

/// Budgets for [`enumerate_histories`].
#[derive(Clone, Debug)]
pub struct HistoryBudget {
    /// One program of operations per process, run in order.
    pub programs: Vec<Vec<ObjOp>>,
    pub crashes: u32,
    /// Maximum simulator steps along one history.
    pub horizon: usize,
}

#[derive(Clone)]
struct GenState<O> {
    mem: Memory,
    obj: O,
    /// Next program index and whether that op is in flight.
    progress: Vec<(usize, bool)>,
    history: Vec<HistoryEvent>,
    crashes_left: u32,
    steps: usize,
}

/// Calls `visit` on every maximal history the real step machines can
/// produce for the given programs, with a system-wide crash allowed
/// between any two steps. Returns the number of histories visited.
pub fn enumerate_histories(
    budget: &HistoryBudget,
    visit: &mut dyn FnMut(&[HistoryEvent]),
) -> Result<usize, SimError> {
    let is_sig = budget
        .programs
        .iter()
        .flatten()
        .any(|o| matches!(o, ObjOp::Sig(_)));
    let mut mem = Memory::new();
    let n = budget.programs.len();
    let mut count = 0;
    if is_sig {
        let mut obj = BoolSignal::new(&mut mem);
        for i in 0..n as u32 {
            obj.register(&mut mem, Pid(i));
        }
        walk(budget, init_state(mem, obj, budget), visit, &mut count)?;
    } else {
        let mut obj = Capturable::new(&mut mem);
        for i in 0..n as u32 {
            obj.register(&mut mem, Pid(i));
        }
        walk(budget, init_state(mem, obj, budget), visit, &mut count)?;
    }
    Ok(count)
}

fn init_state<O>(mem: Memory, obj: O, budget: &HistoryBudget) -> GenState<O> {
    GenState {
        mem,
        obj,
        progress: vec![(0, false); budget.programs.len()],
        history: Vec::new(),
        crashes_left: budget.crashes,
        steps: 0,
    }
}

fn walk<O: Driven + Clone>(
    budget: &HistoryBudget,
    st: GenState<O>,
    visit: &mut dyn FnMut(&[HistoryEvent]),
    count: &mut usize,
) -> Result<(), SimError> {
    let runnable: Vec<usize> = (0..budget.programs.len())
        .filter(|&i| st.progress[i].0 < budget.programs[i].len())
        .collect();
    if runnable.is_empty() || st.steps >= budget.horizon {
        *count += 1;
        visit(&st.history);
        return Ok(());
    }
    for i in runnable {
        let pid = Pid(i as u32);
        let mut next = st.clone();
        let (k, in_flight) = next.progress[i];
        let mut ctx = Ctx::new(&mut next.mem);
        if !in_flight {
            let op = budget.programs[i][k];
            next.obj.invoke(&mut ctx, pid, op);
            next.history.push(HistoryEvent::Invoke { pid, op });
        }
        match next.obj.step(&mut ctx, pid)? {
            Progress::Done(result) => {
                next.history.push(HistoryEvent::Return { pid, result });
                next.progress[i] = (k + 1, false);
            }
            Progress::Pending => next.progress[i] = (k, true),
        }
        next.steps += 1;
        walk(budget, next, visit, count)?;
    }
    if st.crashes_left > 0 && st.progress.iter().any(|&(_, f)| f) {
        let mut next = st;
        next.mem.system_crash_canonical();
        next.obj.on_crash();
        next.crashes_left -= 1;
        next.steps += 1;
        next.history.push(HistoryEvent::Crash);
        for p in &mut next.progress {
            if p.1 {
                *p = (p.0 + 1, false);
            }
        }
        walk(budget, next, visit, count)?;
    }
    Ok(())
}

/// Which object an exhaustive check drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObjectKind {
    Capturable,
    Signal,
}

impl ObjectKind {
    /// Operations process `pid` may invoke. Each process waits on its own
    /// capturable slot; only `p0` waits on the signal, which allows a single
    /// waiter.
    pub fn alphabet(self, pid: Pid) -> Vec<ObjOp> {
        match self {
            ObjectKind::Capturable => [CapOp::Read, CapOp::Write, CapOp::Capture, CapOp::Release]
                .into_iter()
                .chain(std::iter::once(CapOp::Wait(
                    pid.index() % crate::objects::WAIT_SLOTS,
                )))
                .map(ObjOp::Cap)
                .collect(),
            ObjectKind::Signal => {
                let mut ops = vec![SigOp::Read, SigOp::Set, SigOp::Reset];
                if pid == Pid(0) {
                    ops.push(SigOp::Wait);
                }
                ops.into_iter().map(ObjOp::Sig).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum AnyObject {
    Cap(Capturable),
    Sig(BoolSignal),
}

impl Driven for AnyObject {
    fn invoke(&mut self, ctx: &mut Ctx<'_>, pid: Pid, op: ObjOp) {
        match self {
            AnyObject::Cap(o) => Driven::invoke(o, ctx, pid, op),
            AnyObject::Sig(o) => Driven::invoke(o, ctx, pid, op),
        }
    }
    fn step(&mut self, ctx: &mut Ctx<'_>, pid: Pid) -> Result<Progress, SimError> {
        match self {
            AnyObject::Cap(o) => Driven::step(o, ctx, pid),
            AnyObject::Sig(o) => Driven::step(o, ctx, pid),
        }
    }
    fn on_crash(&mut self) {
        match self {
            AnyObject::Cap(o) => Driven::on_crash(o),
            AnyObject::Sig(o) => Driven::on_crash(o),
        }
    }
}

/// One sequential configuration still consistent with the history so far:
/// the object state plus, per process, its pending operation and the result
/// it got if it has already taken effect.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Abstract {
    state: Value,
    pending: Vec<Option<(u8, Option<Value>)>>,
}

#[derive(Clone, Debug)]
struct ObjWorld {
    mem: Memory,
    obj: AnyObject,
    in_flight: Vec<Option<ObjOp>>,
    ops_left: u32,
    crashes_left: u32,
    abs: BTreeSet<Abstract>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectReport {
    /// Distinct (implementation, abstract set) pairs visited.
    pub states: usize,
    /// Invoke, return and crash edges taken.
    pub transitions: usize,
    /// Longest history reached, in operations.
    pub max_ops: u32,
    /// A history with no sequential witness, if one was found.
    pub counterexample: Option<Vec<HistoryEvent>>,
}

/// Budgets for [`explore_object`].
#[derive(Clone, Debug)]
pub struct ObjectBudget {
    pub processes: usize,
    /// Operations invoked across all processes.
    pub ops: u32,
    pub crashes: u32,
}

/// Explores every history of up to `budget.ops` operations that the real step
/// machines can produce, with crashes at every point, and checks strict
/// linearizability on the fly, breadth first so a counterexample is as
/// short as possible. Each path carries the set of sequential
/// configurations that could explain it; a path whose set becomes empty is a
/// history with no witness.
pub fn explore_object<S: SeqSpec>(
    kind: ObjectKind,
    spec: &S,
    budget: &ObjectBudget,
) -> Result<ObjectReport, SimError> {
    let n = budget.processes;
    let mut mem = Memory::new();
    let obj = match kind {
        ObjectKind::Capturable => {
            let mut o = Capturable::new(&mut mem);
            (0..n as u32).for_each(|i| o.register(&mut mem, Pid(i)));
            AnyObject::Cap(o)
        }
        ObjectKind::Signal => {
            let mut o = BoolSignal::new(&mut mem);
            (0..n as u32).for_each(|i| o.register(&mut mem, Pid(i)));
            AnyObject::Sig(o)
        }
    };
    let alphabets: Vec<Vec<ObjOp>> = (0..n as u32).map(|i| kind.alphabet(Pid(i))).collect();
    let init = ObjWorld {
        mem,
        obj,
        in_flight: vec![None; n],
        ops_left: budget.ops,
        crashes_left: budget.crashes,
        abs: BTreeSet::from([Abstract {
            state: spec.initial(),
            pending: vec![None; n],
        }]),
    };
    let mut report = ObjectReport {
        states: 0,
        transitions: 0,
        max_ops: 0,
        counterexample: None,
    };
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([(init, Vec::<HistoryEvent>::new())]);
    while let Some((w, hist)) = queue.pop_front() {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        w.mem.hash_values(&mut h);
        std::hash::Hash::hash(
            &(&w.obj, &w.in_flight, w.ops_left, w.crashes_left, &w.abs),
            &mut h,
        );
        if !seen.insert(std::hash::Hasher::finish(&h)) {
            continue;
        }
        report.states += 1;
        report.max_ops = report.max_ops.max(budget.ops - w.ops_left);
        let mut push = |next: ObjWorld, hist: Vec<HistoryEvent>, report: &mut ObjectReport| {
            report.transitions += 1;
            if next.abs.is_empty() {
                report.counterexample.get_or_insert(hist);
                return;
            }
            queue.push_back((next, hist));
        };
        for i in 0..n {
            let pid = Pid(i as u32);
            match w.in_flight[i] {
                Some(_) => {
                    let mut next = w.clone();
                    let mut ctx = Ctx::new(&mut next.mem);
                    let out = next.obj.step(&mut ctx, pid)?;
                    let mut hist = hist.clone();
                    if let Progress::Done(result) = out {
                        hist.push(HistoryEvent::Return { pid, result });
                        let op = next.in_flight[i].take().expect("in flight");
                        next.abs = on_return(spec, &next.abs, i, op, result);
                    }
                    push(next, hist, &mut report);
                }
                None if w.ops_left > 0 => {
                    for (k, &op) in alphabets[i].iter().enumerate() {
                        let mut next = w.clone();
                        next.ops_left -= 1;
                        let mut ctx = Ctx::new(&mut next.mem);
                        next.obj.invoke(&mut ctx, pid, op);
                        next.in_flight[i] = Some(op);
                        next.abs = on_invoke(spec, &next.abs, i, k as u8, &alphabets);
                        let mut hist = hist.clone();
                        hist.push(HistoryEvent::Invoke { pid, op });
                        push(next, hist, &mut report);
                    }
                }
                None => {}
            }
        }
        if w.crashes_left > 0 && w.in_flight.iter().any(Option::is_some) {
            let mut next = w.clone();
            next.crashes_left -= 1;
            next.mem.system_crash_canonical();
            next.obj.on_crash();
            next.in_flight.iter_mut().for_each(|f| *f = None);
            next.abs = next
                .abs
                .iter()
                .map(|a| Abstract {
                    state: a.state,
                    pending: vec![None; n],
                })
                .collect();
            let mut hist = hist.clone();
            hist.push(HistoryEvent::Crash);
            push(next, hist, &mut report);
        }
        if report.counterexample.is_some() {
            break;
        }
    }
    Ok(report)
}

fn on_invoke<S: SeqSpec>(
    spec: &S,
    abs: &BTreeSet<Abstract>,
    i: usize,
    op_index: u8,
    alphabets: &[Vec<ObjOp>],
) -> BTreeSet<Abstract> {
    let mut out: BTreeSet<Abstract> = abs
        .iter()
        .map(|a| {
            let mut a = a.clone();
            a.pending[i] = Some((op_index, None));
            a
        })
        .collect();
    // Close under letting any pending operation take effect.
    let mut frontier: Vec<Abstract> = out.iter().cloned().collect();
    while let Some(a) = frontier.pop() {
        for (j, alphabet) in alphabets.iter().enumerate() {
            let Some((k, None)) = a.pending[j] else {
                continue;
            };
            let op = alphabet[k as usize];
            if let Some((s, r)) = spec.apply(a.state, Pid(j as u32), op) {
                let mut b = a.clone();
                b.state = s;
                b.pending[j] = Some((k, Some(r)));
                if out.insert(b.clone()) {
                    frontier.push(b);
                }
            }
        }
    }
    out
}

fn on_return<S: SeqSpec>(
    spec: &S,
    abs: &BTreeSet<Abstract>,
    i: usize,
    op: ObjOp,
    result: Value,
) -> BTreeSet<Abstract> {
    abs.iter()
        .filter_map(|a| match &a.pending[i] {
            Some((_, Some(r))) if !spec.observes(op) || *r == result => {
                let mut b = a.clone();
                b.pending[i] = None;
                Some(b)
            }
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv(p: u32, op: CapOp) -> HistoryEvent {
        HistoryEvent::Invoke {
            pid: Pid(p),
            op: ObjOp::Cap(op),
        }
    }

    fn ret(p: u32, v: Value) -> HistoryEvent {
        HistoryEvent::Return {
            pid: Pid(p),
            result: v,
        }
    }

    #[test]
    fn overlapping_read_linearizes_first() {
        let h = [
            inv(2, CapOp::Read),
            inv(0, CapOp::Capture),
            ret(0, Value::Bool(true)),
            inv(1, CapOp::Capture),
            ret(1, Value::Bool(false)),
            ret(2, Value::Bot),
        ];
        assert!(check_history(&CapturableSpec, &h).unwrap());
    }

    #[test]
    fn double_capture_fails() {
        let h = [
            inv(0, CapOp::Capture),
            ret(0, Value::Bool(true)),
            inv(1, CapOp::Capture),
            ret(1, Value::Bool(true)),
        ];
        assert!(!check_history(&CapturableSpec, &h).unwrap());
    }

    #[test]
    fn cut_write_took_effect_or_never_did() {
        let took = [
            inv(0, CapOp::Write),
            HistoryEvent::Crash,
            inv(1, CapOp::Read),
            ret(1, Value::Pid(Pid(0))),
        ];
        assert!(check_history(&CapturableSpec, &took).unwrap());
        // It cannot take effect after a later operation that saw it absent.
        let late = [
            inv(0, CapOp::Write),
            HistoryEvent::Crash,
            inv(1, CapOp::Read),
            ret(1, Value::Bot),
            inv(1, CapOp::Read),
            ret(1, Value::Pid(Pid(0))),
        ];
        assert!(!check_history(&CapturableSpec, &late).unwrap());
    }

    #[test]
    fn size_guard() {
        let h: Vec<_> = (0..21)
            .flat_map(|_| [inv(0, CapOp::Read), ret(0, Value::Bot)])
            .collect();
        assert!(matches!(
            check_history(&CapturableSpec, &h),
            Err(HistoryError::TooLarge(21, MAX_HISTORY_OPS))
        ));
    }

    #[test]
    fn unmatched_response_rejected() {
        assert!(check_history(&CapturableSpec, &[ret(0, Value::Bot)]).is_err());
    }

    fn budget(ops: u32) -> ObjectBudget {
        ObjectBudget {
            processes: 2,
            ops,
            crashes: 1,
        }
    }

    #[test]
    fn small_object_explorations_are_clean() {
        let r = explore_object(ObjectKind::Capturable, &CapturableSpec, &budget(4)).unwrap();
        assert_eq!(r.counterexample, None);
        assert_eq!(r.max_ops, 4);
        let r = explore_object(ObjectKind::Signal, &SignalSpec, &budget(3)).unwrap();
        assert_eq!(r.counterexample, None);
    }

    /// A Set that read `W` during one Wait delivers its wake to a later Wait
    /// after a Reset, so the later Wait returns while the state is false.
    #[test]
    fn signal_stale_wake_is_found_at_four_operations() {
        let r = explore_object(ObjectKind::Signal, &SignalSpec, &budget(4)).unwrap();
        let h = r.counterexample.expect("stale wake");
        assert_eq!(
            h.iter()
                .filter(|e| matches!(e, HistoryEvent::Invoke { .. }))
                .count(),
            4
        );
        assert!(!h.contains(&HistoryEvent::Crash));
        assert!(!check_history(&SignalSpec, &h).unwrap());
    }

    /// Capture that always wins; the real object must refute it.
    struct GreedyCapture;

    impl SeqSpec for GreedyCapture {
        fn initial(&self) -> Value {
            CapturableSpec.initial()
        }
        fn apply(&self, state: Value, pid: Pid, op: ObjOp) -> Option<(Value, Value)> {
            match op {
                ObjOp::Cap(CapOp::Capture) => Some((Value::Pid(pid), Value::Bool(true))),
                _ => CapturableSpec.apply(state, pid, op),
            }
        }
        fn observes(&self, op: ObjOp) -> bool {
            CapturableSpec.observes(op)
        }
    }

    #[test]
    fn wrong_spec_yields_counterexample_the_history_checker_agrees_with() {
        let r = explore_object(ObjectKind::Capturable, &GreedyCapture, &budget(3)).unwrap();
        let h = r.counterexample.expect("greedy capture is refuted");
        assert!(!check_history(&GreedyCapture, &h).unwrap());
        assert!(check_history(&CapturableSpec, &h).unwrap());
    }
}
