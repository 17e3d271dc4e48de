use std::fmt;

use serde::{Deserialize, Serialize};

/// An exception object.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Exc {
    Plain(String),
    Multiple(Vec<Exc>),
}

impl Exc {
    /// Order-insensitive form: every `Multiple` list sorted, so two outcomes
    /// that differ only in task completion order compare equal.
    pub fn canonical(&self) -> Exc {
        match self {
            Exc::Plain(t) => Exc::Plain(t.clone()),
            Exc::Multiple(list) => {
                let mut v: Vec<Exc> = list.iter().map(Exc::canonical).collect();
                v.sort();
                Exc::Multiple(v)
            }
        }
    }

    /// All plain tags, at any nesting depth.
    pub fn tags(&self) -> Vec<String> {
        let mut out = Vec::new();
        fn go(e: &Exc, out: &mut Vec<String>) {
            match e {
                Exc::Plain(t) => out.push(t.clone()),
                Exc::Multiple(l) => l.iter().for_each(|x| go(x, out)),
            }
        }
        go(self, &mut out);
        out.sort();
        out
    }

    /// Deepest `Multiple` nesting.
    pub fn depth(&self) -> usize {
        match self {
            Exc::Plain(_) => 0,
            Exc::Multiple(l) => 1 + l.iter().map(Exc::depth).max().unwrap_or(0),
        }
    }
}

impl fmt::Display for Exc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exc::Plain(t) => write!(f, "{t}"),
            Exc::Multiple(l) => {
                write!(f, "ME[")?;
                for (i, e) in l.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, "]")
            }
        }
    }
}

pub type ClockId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Null,
    Exc(Exc),
    Clock(ClockId),
}

impl Value {
    pub fn kind(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Bool(_) => "bool",
            Value::Null => "null",
            Value::Exc(_) => "exception",
            Value::Clock(_) => "clock",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Null => write!(f, "null"),
            Value::Exc(e) => write!(f, "{e}"),
            Value::Clock(c) => write!(f, "clock#{c}"),
        }
    }
}
