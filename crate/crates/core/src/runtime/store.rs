use std::collections::HashMap;
use std::sync::atomic::{AtomicI64, Ordering};

use crate::ir::{Global, Program};

/// Shared global memory. Cells are atomics so racing tasks never tear a
/// value; only accumulations are read-modify-write atomic.
pub struct Store {
    names: Vec<String>,
    index: HashMap<String, usize>,
    cells: Vec<Vec<AtomicI64>>,
    arrays: Vec<bool>,
}

impl Store {
    pub fn new(program: &Program) -> Store {
        let mut s = Store {
            names: Vec::new(),
            index: HashMap::new(),
            cells: Vec::new(),
            arrays: Vec::new(),
        };
        for g in &program.globals {
            let (cells, array) = match g {
                Global::Scalar { init, .. } => (vec![AtomicI64::new(*init)], false),
                Global::Array { len, .. } => ((0..*len).map(|_| AtomicI64::new(0)).collect(), true),
            };
            s.index.insert(g.name().to_string(), s.names.len());
            s.names.push(g.name().to_string());
            s.cells.push(cells);
            s.arrays.push(array);
        }
        s
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn is_array(&self, slot: usize) -> bool {
        self.arrays[slot]
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn cell(&self, slot: usize, i: i64) -> Option<&AtomicI64> {
        usize::try_from(i).ok().and_then(|i| self.cells[slot].get(i))
    }

    pub fn len(&self, slot: usize) -> usize {
        self.cells[slot].len()
    }

    /// Name-sorted copy of every global.
    pub fn snapshot(&self) -> Vec<(String, Vec<i64>)> {
        let mut out: Vec<(String, Vec<i64>)> = self
            .names
            .iter()
            .zip(&self.cells)
            .map(|(n, c)| (n.clone(), c.iter().map(|a| a.load(Ordering::SeqCst)).collect()))
            .collect();
        out.sort();
        out
    }
}

/// FNV-1a over the name-sorted globals.
pub fn checksum(snapshot: &[(String, Vec<i64>)]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut feed = |bytes: &[u8]| {
        for b in bytes {
            h ^= u64::from(*b);
            h = h.wrapping_mul(PRIME);
        }
    };
    for (name, values) in snapshot {
        feed(name.as_bytes());
        feed(&[0]);
        for v in values {
            feed(&v.to_le_bytes());
        }
    }
    h
}
