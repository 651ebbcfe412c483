//! Constraints a branch condition places on a single value.

use std::collections::BTreeSet;

use crate::frontend::RelopKind;

use super::num::{arc_ranges, Domain, Num};

/// A set of `i32`s a value is known to lie in on one side of a branch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Keep {
    /// `len` consecutive values from `start`, wrapping modulo 2^32. Both signed
    /// and unsigned ranges are arcs.
    Arc {
        start: u32,
        len: u64,
    },
    NotEq(i32),
    InSet(BTreeSet<i32>),
}

impl Keep {
    pub const ALL: Keep = Keep::Arc { start: 0, len: 1 << 32 };

    pub fn truth(positive: bool) -> Keep {
        if positive {
            Keep::NotEq(0)
        } else {
            Keep::InSet(BTreeSet::from([0]))
        }
    }

    pub fn signed(lo: i32, hi: i32) -> Keep {
        if lo > hi {
            return Keep::InSet(BTreeSet::new());
        }
        Keep::Arc { start: lo as u32, len: (hi as i64 - lo as i64 + 1) as u64 }
    }

    pub fn unsigned(lo: u32, hi: u32) -> Keep {
        if lo > hi {
            return Keep::InSet(BTreeSet::new());
        }
        Keep::Arc { start: lo, len: (hi - lo) as u64 + 1 }
    }

    pub fn contains(&self, v: i32) -> bool {
        match self {
            Keep::Arc { start, len } => ((v as u32).wrapping_sub(*start) as u64) < *len,
            Keep::NotEq(c) => v != *c,
            Keep::InSet(s) => s.contains(&v),
        }
    }

    pub fn is_all(&self) -> bool {
        matches!(self, Keep::Arc { len, .. } if *len >= 1 << 32)
    }

    /// `{ v + c | v ∈ self }`, wrapping.
    pub fn shift(&self, c: i32) -> Keep {
        match self {
            Keep::Arc { start, len } => Keep::Arc { start: start.wrapping_add(c as u32), len: *len },
            Keep::NotEq(k) => Keep::NotEq(k.wrapping_add(c)),
            Keep::InSet(s) => Keep::InSet(s.iter().map(|v| v.wrapping_add(c)).collect()),
        }
    }

    /// `{ c - v | v ∈ self }`, wrapping.
    pub fn reflect(&self, c: i32) -> Keep {
        match self {
            Keep::Arc { start, len } => {
                if *len >= 1 << 32 {
                    return self.clone();
                }
                // the arc's last element maps to the new start
                let last = start.wrapping_add((*len - 1) as u32);
                Keep::Arc { start: (c as u32).wrapping_sub(last), len: *len }
            }
            Keep::NotEq(k) => Keep::NotEq(c.wrapping_sub(*k)),
            Keep::InSet(s) => Keep::InSet(s.iter().map(|v| c.wrapping_sub(*v)).collect()),
        }
    }

    /// γ(n) ∩ self, or `None` if empty.
    pub fn meet(&self, d: &Domain, n: &Num) -> Option<Num> {
        if let Num::Set(s) = n {
            return d.from_values(s.iter().copied().filter(|v| self.contains(*v)));
        }
        match self {
            Keep::Arc { start, len } => {
                let (lo, hi) = (n.min(), n.max());
                let pieces: Vec<(i32, i32)> = arc_ranges(*start, *len)
                    .into_iter()
                    .filter_map(|(a, b)| {
                        let (l, h) = (a.max(lo), b.min(hi));
                        (l <= h).then_some((l, h))
                    })
                    .collect();
                d.from_ranges(&pieces)
            }
            Keep::NotEq(c) => {
                let (mut lo, mut hi) = (n.min(), n.max());
                if lo == *c {
                    lo = lo.checked_add(1)?;
                }
                if hi == *c {
                    hi = hi.checked_sub(1)?;
                }
                (lo <= hi).then(|| d.range(lo, hi))
            }
            Keep::InSet(s) => d.from_values(s.iter().copied().filter(|v| n.contains(*v))),
        }
    }
}

/// `{ x | ∃ b ∈ γ(other). x op b }`.
pub fn keep_for_cmp(op: RelopKind, other: &Num) -> Keep {
    let (lo, hi) = (other.min(), other.max());
    let (ulo, uhi) = other.umin_umax();
    match op {
        RelopKind::Eq => match other {
            Num::Set(s) => Keep::InSet(s.clone()),
            _ => Keep::signed(lo, hi),
        },
        RelopKind::Ne => match other.as_singleton() {
            Some(c) => Keep::NotEq(c),
            None => Keep::ALL,
        },
        RelopKind::LtS => match hi.checked_sub(1) {
            Some(h) => Keep::signed(i32::MIN, h),
            None => Keep::InSet(BTreeSet::new()),
        },
        RelopKind::LeS => Keep::signed(i32::MIN, hi),
        RelopKind::GtS => match lo.checked_add(1) {
            Some(l) => Keep::signed(l, i32::MAX),
            None => Keep::InSet(BTreeSet::new()),
        },
        RelopKind::GeS => Keep::signed(lo, i32::MAX),
        RelopKind::LtU => match uhi.checked_sub(1) {
            Some(h) => Keep::unsigned(0, h),
            None => Keep::InSet(BTreeSet::new()),
        },
        RelopKind::LeU => Keep::unsigned(0, uhi),
        RelopKind::GtU => match ulo.checked_add(1) {
            Some(l) => Keep::unsigned(l, u32::MAX),
            None => Keep::InSet(BTreeSet::new()),
        },
        RelopKind::GeU => Keep::unsigned(ulo, u32::MAX),
    }
}
