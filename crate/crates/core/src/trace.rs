//! Trace events and their JSON-lines encoding.
//!
//! Each line is a flat object. Fields that do not apply to an event kind are
//! omitted, so the encoding is lossless in both directions.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{ParseError, TraceIoError};
use crate::memory::MemOp;
use crate::rme::{Pc, Section};
use crate::value::{CellId, Pid, Value};

/// Checked properties. Also used as the code on violation events.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    Mutex,
    Csr,
    BoundedExit,
    BoundedRecovery,
    Starvation,
    RmrBound,
    UsePattern,
    WaitSingle,
    SeqMonotone,
    Invariant,
    BaseMutex,
    Fairness,
}

impl ViolationCode {
    pub const ALL: [ViolationCode; 12] = [
        ViolationCode::Mutex,
        ViolationCode::Csr,
        ViolationCode::BoundedExit,
        ViolationCode::BoundedRecovery,
        ViolationCode::Starvation,
        ViolationCode::RmrBound,
        ViolationCode::UsePattern,
        ViolationCode::WaitSingle,
        ViolationCode::SeqMonotone,
        ViolationCode::Invariant,
        ViolationCode::BaseMutex,
        ViolationCode::Fairness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ViolationCode::Mutex => "MUTEX",
            ViolationCode::Csr => "CSR",
            ViolationCode::BoundedExit => "BOUNDED_EXIT",
            ViolationCode::BoundedRecovery => "BOUNDED_RECOVERY",
            ViolationCode::Starvation => "STARVATION",
            ViolationCode::RmrBound => "RMR_BOUND",
            ViolationCode::UsePattern => "USE_PATTERN",
            ViolationCode::WaitSingle => "WAIT_SINGLE",
            ViolationCode::SeqMonotone => "SEQ_MONOTONE",
            ViolationCode::Invariant => "INVARIANT",
            ViolationCode::BaseMutex => "BASE_MUTEX",
            ViolationCode::Fairness => "FAIRNESS",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    InCs,
    InRem,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventKind {
    Access {
        pid: Pid,
        cell: CellId,
        op: MemOp,
        result: Value,
        rmr_cc: bool,
        rmr_dsm: bool,
        pc_from: Pc,
        pc_to: Pc,
    },
    Local {
        pid: Pid,
        pc_from: Pc,
        pc_to: Pc,
    },
    Crash,
    Enter {
        pid: Pid,
        section: Section,
    },
    Return {
        pid: Pid,
        section: Section,
        outcome: Outcome,
    },
    PassageClose {
        pid: Pid,
        cc: u64,
        dsm: u64,
    },
    Violation {
        code: ViolationCode,
        pid: Option<Pid>,
        detail: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub step: u64,
    pub kind: EventKind,
}

impl TraceEvent {
    pub fn pid(&self) -> Option<Pid> {
        match &self.kind {
            EventKind::Access { pid, .. }
            | EventKind::Local { pid, .. }
            | EventKind::Enter { pid, .. }
            | EventKind::Return { pid, .. }
            | EventKind::PassageClose { pid, .. } => Some(*pid),
            EventKind::Violation { pid, .. } => *pid,
            EventKind::Crash => None,
        }
    }

    /// True for events that represent a step taken by a process.
    pub fn is_process_step(&self) -> bool {
        matches!(
            self.kind,
            EventKind::Access { .. } | EventKind::Local { .. }
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Record {
    step: u64,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pid: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cell: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    op: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expect: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rmr_cc: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rmr_dsm: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pc_from: Option<Pc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pc_to: Option<Pc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    section: Option<Section>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    passage_cc: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    passage_dsm: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    code: Option<ViolationCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    detail: Option<String>,
}

impl From<&TraceEvent> for Record {
    fn from(e: &TraceEvent) -> Self {
        let mut r = Record {
            step: e.step,
            pid: e.pid().map(|p| p.0),
            ..Default::default()
        };
        match &e.kind {
            EventKind::Access {
                cell,
                op,
                result,
                rmr_cc,
                rmr_dsm,
                pc_from,
                pc_to,
                ..
            } => {
                r.kind = "access".into();
                r.cell = Some(cell.0);
                r.op = Some(op.name().into());
                match *op {
                    MemOp::Read => {}
                    MemOp::Write(v) | MemOp::Fas(v) => r.value = Some(v),
                    MemOp::Cas { expect, new } => {
                        r.expect = Some(expect);
                        r.value = Some(new);
                    }
                }
                r.result = Some(*result);
                r.rmr_cc = Some(*rmr_cc);
                r.rmr_dsm = Some(*rmr_dsm);
                r.pc_from = Some(*pc_from);
                r.pc_to = Some(*pc_to);
            }
            EventKind::Local { pc_from, pc_to, .. } => {
                r.kind = "local".into();
                r.pc_from = Some(*pc_from);
                r.pc_to = Some(*pc_to);
            }
            EventKind::Crash => r.kind = "crash".into(),
            EventKind::Enter { section, .. } => {
                r.kind = "enter".into();
                r.section = Some(*section);
            }
            EventKind::Return {
                section, outcome, ..
            } => {
                r.kind = "return".into();
                r.section = Some(*section);
                r.outcome = Some(*outcome);
            }
            EventKind::PassageClose { cc, dsm, .. } => {
                r.kind = "passage".into();
                r.passage_cc = Some(*cc);
                r.passage_dsm = Some(*dsm);
            }
            EventKind::Violation { code, detail, .. } => {
                r.kind = "violation".into();
                r.code = Some(*code);
                r.detail = Some(detail.clone());
            }
        }
        r
    }
}

impl Record {
    fn into_event(self, line: usize) -> Result<TraceEvent, ParseError> {
        let err = |msg: &str| ParseError::Trace {
            line,
            msg: msg.to_string(),
        };
        let pid = self.pid.map(Pid);
        let need_pid = || pid.ok_or_else(|| err("missing pid"));
        let kind = match self.kind.as_str() {
            "access" => {
                let op = match self.op.as_deref() {
                    Some("read") => MemOp::Read,
                    Some("write") => MemOp::Write(self.value.ok_or_else(|| err("missing value"))?),
                    Some("fas") => MemOp::Fas(self.value.ok_or_else(|| err("missing value"))?),
                    Some("cas") => MemOp::Cas {
                        expect: self.expect.ok_or_else(|| err("missing expect"))?,
                        new: self.value.ok_or_else(|| err("missing value"))?,
                    },
                    _ => return Err(err("bad op")),
                };
                EventKind::Access {
                    pid: need_pid()?,
                    cell: CellId(self.cell.ok_or_else(|| err("missing cell"))?),
                    op,
                    result: self.result.ok_or_else(|| err("missing result"))?,
                    rmr_cc: self.rmr_cc.ok_or_else(|| err("missing rmr_cc"))?,
                    rmr_dsm: self.rmr_dsm.ok_or_else(|| err("missing rmr_dsm"))?,
                    pc_from: self.pc_from.ok_or_else(|| err("missing pc_from"))?,
                    pc_to: self.pc_to.ok_or_else(|| err("missing pc_to"))?,
                }
            }
            "local" => EventKind::Local {
                pid: need_pid()?,
                pc_from: self.pc_from.ok_or_else(|| err("missing pc_from"))?,
                pc_to: self.pc_to.ok_or_else(|| err("missing pc_to"))?,
            },
            "crash" => EventKind::Crash,
            "enter" => EventKind::Enter {
                pid: need_pid()?,
                section: self.section.ok_or_else(|| err("missing section"))?,
            },
            "return" => EventKind::Return {
                pid: need_pid()?,
                section: self.section.ok_or_else(|| err("missing section"))?,
                outcome: self.outcome.ok_or_else(|| err("missing outcome"))?,
            },
            "passage" => EventKind::PassageClose {
                pid: need_pid()?,
                cc: self.passage_cc.ok_or_else(|| err("missing passage_cc"))?,
                dsm: self.passage_dsm.ok_or_else(|| err("missing passage_dsm"))?,
            },
            "violation" => EventKind::Violation {
                code: self.code.ok_or_else(|| err("missing code"))?,
                pid,
                detail: self.detail.unwrap_or_default(),
            },
            other => return Err(err(&format!("unknown kind `{other}`"))),
        };
        Ok(TraceEvent {
            step: self.step,
            kind,
        })
    }
}

pub fn to_json_line(e: &TraceEvent) -> String {
    serde_json::to_string(&Record::from(e)).expect("records always serialize")
}

pub fn export<W: Write>(events: &[TraceEvent], mut w: W) -> std::io::Result<()> {
    for e in events {
        writeln!(w, "{}", to_json_line(e))?;
    }
    Ok(())
}

pub fn import<R: BufRead>(r: R) -> Result<Vec<TraceEvent>, TraceIoError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| ParseError::Trace {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec.into_event(i + 1)?);
    }
    Ok(out)
}
