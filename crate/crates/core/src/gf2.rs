//! Incremental Gaussian elimination over GF(2) on sparse rows.
//!
//! Rows are sorted sets of packet ids. Each stored row is keyed by its
//! smallest id (its pivot); reducing a vector against the basis strictly
//! increases its leading id, so reduction always terminates.

use std::collections::HashMap;

pub type PacketId = u64;

/// Symmetric difference of two sorted id lists.
fn xor_sorted(a: &[PacketId], b: &[PacketId]) -> Vec<PacketId> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Row space of everything a receiver has collected so far.
#[derive(Clone, Debug, Default)]
pub struct Gf2Basis {
    rows: HashMap<PacketId, Vec<PacketId>>,
}

impl Gf2Basis {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    fn reduce(&self, mut v: Vec<PacketId>) -> Vec<PacketId> {
        while let Some(&lead) = v.first() {
            match self.rows.get(&lead) {
                Some(row) => v = xor_sorted(&v, row),
                None => break,
            }
        }
        v
    }

    /// Adds a received combination (any order, duplicates cancel). Returns
    /// whether the rank grew.
    pub fn insert(&mut self, combo: &[PacketId]) -> bool {
        let mut v: Vec<PacketId> = Vec::with_capacity(combo.len());
        let mut sorted = combo.to_vec();
        sorted.sort_unstable();
        for id in sorted {
            if v.last() == Some(&id) {
                v.pop();
            } else {
                v.push(id);
            }
        }
        let v = self.reduce(v);
        match v.first() {
            Some(&lead) => {
                self.rows.insert(lead, v);
                true
            }
            None => false,
        }
    }

    /// Whether the unit vector of `id` lies in the row space, i.e. the
    /// packet can be decoded.
    pub fn decodes(&self, id: PacketId) -> bool {
        self.reduce(vec![id]).is_empty()
    }
}
