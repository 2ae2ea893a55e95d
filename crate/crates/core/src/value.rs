//! Cell contents, process identifiers and cell handles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ParseError;

/// Process identifier. Pids are dense, starting at zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pid(pub u32);

impl Pid {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Pid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Handle to an allocated shared cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId(pub u32);

impl CellId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// A value stored in a shared cell.
///
/// `Pair` packs a sequence number with a flag so that the wait objects can
/// update both with a single CAS.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Nat(u64),
    Pid(Pid),
    Bool(bool),
    Ref(CellId),
    Bot,
    Token,
    Pair(u64, bool),
}

impl Value {
    pub fn as_bool(self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_nat(self) -> Option<u64> {
        match self {
            Value::Nat(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_ref_cell(self) -> Option<CellId> {
        match self {
            Value::Ref(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_pid(self) -> Option<Pid> {
        match self {
            Value::Pid(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_bot(self) -> bool {
        matches!(self, Value::Bot)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Nat(n) => write!(f, "nat:{n}"),
            Value::Pid(p) => write!(f, "pid:{}", p.0),
            Value::Bool(b) => write!(f, "bool:{b}"),
            Value::Ref(c) => write!(f, "ref:{}", c.0),
            Value::Bot => f.write_str("bot"),
            Value::Token => f.write_str("token"),
            Value::Pair(s, b) => write!(f, "pair:{s}:{b}"),
        }
    }
}

impl FromStr for Value {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseError::Value(s.to_string());
        let mut parts = s.split(':');
        let tag = parts.next().ok_or_else(bad)?;
        let v = match tag {
            "bot" => Value::Bot,
            "token" => Value::Token,
            "nat" => Value::Nat(parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?),
            "pid" => Value::Pid(Pid(parts
                .next()
                .ok_or_else(bad)?
                .parse()
                .map_err(|_| bad())?)),
            "bool" => Value::Bool(parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?),
            "ref" => Value::Ref(CellId(
                parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?,
            )),
            "pair" => {
                let seq = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                let flag = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                Value::Pair(seq, flag)
            }
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(v)
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
