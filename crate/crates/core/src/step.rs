//! Per-step context threaded through the step machines.
//!
//! A step performs at most one shared-memory access. The context records that
//! access and any violations the machines notice, so the engine can turn them
//! into trace events afterwards.

use crate::error::SimError;
use crate::memory::{Access, MemOp, Memory};
use crate::trace::ViolationCode;
use crate::value::{CellId, Pid, Value};

pub struct Ctx<'a> {
    pub mem: &'a mut Memory,
    pub access: Option<Access>,
    pub violations: Vec<(ViolationCode, Option<Pid>, String)>,
}

impl<'a> Ctx<'a> {
    pub fn new(mem: &'a mut Memory) -> Self {
        Self {
            mem,
            access: None,
            violations: Vec::new(),
        }
    }

    fn op(&mut self, pid: Pid, cell: CellId, op: MemOp) -> Result<Value, SimError> {
        debug_assert!(self.access.is_none(), "{pid} made two accesses in one step");
        let a = self.mem.access(pid, cell, op)?;
        self.access = Some(a);
        Ok(a.result)
    }

    pub fn read(&mut self, pid: Pid, cell: CellId) -> Result<Value, SimError> {
        self.op(pid, cell, MemOp::Read)
    }

    pub fn write(&mut self, pid: Pid, cell: CellId, v: Value) -> Result<(), SimError> {
        self.op(pid, cell, MemOp::Write(v)).map(|_| ())
    }

    pub fn cas(
        &mut self,
        pid: Pid,
        cell: CellId,
        expect: Value,
        new: Value,
    ) -> Result<bool, SimError> {
        Ok(self.op(pid, cell, MemOp::Cas { expect, new })? == Value::Bool(true))
    }

    pub fn fas(&mut self, pid: Pid, cell: CellId, v: Value) -> Result<Value, SimError> {
        self.op(pid, cell, MemOp::Fas(v))
    }

    pub fn violation(&mut self, code: ViolationCode, pid: Option<Pid>, detail: impl Into<String>) {
        self.violations.push((code, pid, detail.into()));
    }
}

/// Outcome of one step of an object or base-lock method.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Progress {
    Pending,
    Done(Value),
}

impl Progress {
    pub fn is_done(self) -> bool {
        matches!(self, Progress::Done(_))
    }
}
