//! The numeric layer: small finite sets, then intervals, then top.

use std::collections::BTreeSet;
use std::fmt;

use crate::frontend::{BinopKind, RelopKind, UnopKind};
use crate::numeric::{eval_binop, eval_relop, eval_unop};

pub const DEFAULT_K: usize = 16;

/// Pairwise evaluation of two sets is used while the product stays below this.
const PRODUCT_LIMIT: usize = 1024;

/// A nonempty set of `i32`s.
///
/// Values are kept canonical for a given [`Domain`]: `Set` iff at most `k`
/// elements, `Top` iff every `i32`, `Interval` otherwise. `Interval` bounds of
/// `i32::MIN`/`i32::MAX` play the role of -inf/+inf.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Num {
    Set(BTreeSet<i32>),
    Interval { lo: i32, hi: i32 },
    Top,
}

impl Num {
    pub fn singleton(v: i32) -> Num {
        Num::Set(BTreeSet::from([v]))
    }

    pub fn contains(&self, v: i32) -> bool {
        match self {
            Num::Set(s) => s.contains(&v),
            Num::Interval { lo, hi } => *lo <= v && v <= *hi,
            Num::Top => true,
        }
    }

    pub fn min(&self) -> i32 {
        match self {
            Num::Set(s) => *s.first().unwrap(),
            Num::Interval { lo, .. } => *lo,
            Num::Top => i32::MIN,
        }
    }

    pub fn max(&self) -> i32 {
        match self {
            Num::Set(s) => *s.last().unwrap(),
            Num::Interval { hi, .. } => *hi,
            Num::Top => i32::MAX,
        }
    }

    /// Number of concrete values, up to 2^32.
    pub fn card(&self) -> u64 {
        match self {
            Num::Set(s) => s.len() as u64,
            _ => (self.max() as i64 - self.min() as i64 + 1) as u64,
        }
    }

    pub fn as_singleton(&self) -> Option<i32> {
        match self {
            Num::Set(s) if s.len() == 1 => s.first().copied(),
            _ => None,
        }
    }

    pub fn as_set(&self) -> Option<&BTreeSet<i32>> {
        match self {
            Num::Set(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_top(&self) -> bool {
        matches!(self, Num::Top)
    }

    /// γ as a list of signed ranges.
    pub fn ranges(&self) -> Vec<(i32, i32)> {
        match self {
            Num::Set(s) => s.iter().map(|&v| (v, v)).collect(),
            _ => vec![(self.min(), self.max())],
        }
    }

    /// Unsigned bounds of γ.
    pub fn umin_umax(&self) -> (u32, u32) {
        match self {
            Num::Set(s) => {
                let us = s.iter().map(|&v| v as u32);
                (us.clone().min().unwrap(), us.max().unwrap())
            }
            _ => {
                let (lo, hi) = (self.min(), self.max());
                if lo >= 0 || hi < 0 {
                    (lo as u32, hi as u32)
                } else {
                    // straddles zero: contains both 0 and -1
                    (0, u32::MAX)
                }
            }
        }
    }

    /// Every element, when there are at most `limit` of them.
    pub fn enumerate(&self, limit: u64) -> Option<Vec<i32>> {
        if self.card() > limit {
            return None;
        }
        Some(match self {
            Num::Set(s) => s.iter().copied().collect(),
            _ => (self.min()..=self.max()).collect(),
        })
    }

    /// ⊑ as γ-inclusion.
    pub fn leq(&self, other: &Num) -> bool {
        match (self, other) {
            (_, Num::Top) => true,
            (Num::Set(a), Num::Set(b)) => a.is_subset(b),
            (Num::Set(a), _) => a.iter().all(|v| other.contains(*v)),
            (_, Num::Set(b)) => self.card() <= b.len() as u64 && (self.min()..=self.max()).all(|v| b.contains(&v)),
            (_, Num::Interval { lo, hi }) => *lo <= self.min() && self.max() <= *hi,
        }
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num::Set(s) => {
                f.write_str("{")?;
                for (i, v) in s.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("}")
            }
            Num::Interval { lo, hi } => {
                let lo = if *lo == i32::MIN { "-inf".to_string() } else { lo.to_string() };
                let hi = if *hi == i32::MAX { "+inf".to_string() } else { hi.to_string() };
                write!(f, "[{lo},{hi}]")
            }
            Num::Top => f.write_str("top"),
        }
    }
}

/// Splits an exact integer interval into the signed `i32` ranges it wraps onto.
fn wrap_ranges(lo: i64, hi: i64) -> Option<Vec<(i32, i32)>> {
    if hi - lo + 1 >= 1 << 32 {
        return None;
    }
    let start = lo.rem_euclid(1 << 32) as u32;
    Some(arc_ranges(start, (hi - lo + 1) as u64))
}

/// The signed ranges covered by `len` consecutive values starting at `start` on the 2^32 circle.
pub(crate) fn arc_ranges(start: u32, len: u64) -> Vec<(i32, i32)> {
    if len == 0 {
        return Vec::new();
    }
    if len >= 1 << 32 {
        return vec![(i32::MIN, i32::MAX)];
    }
    // work in signed order: shift so that i32::MIN maps to 0
    let s = (start ^ 0x8000_0000) as u64;
    let e = s + len - 1;
    let to_i32 = |u: u64| ((u as u32) ^ 0x8000_0000) as i32;
    if e < 1 << 32 {
        vec![(to_i32(s), to_i32(e))]
    } else {
        vec![(i32::MIN, to_i32(e - (1 << 32))), (to_i32(s), i32::MAX)]
    }
}

/// Lattice operations and transfer functions for a set bound `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Domain {
    pub k: usize,
}

impl Default for Domain {
    fn default() -> Self {
        Domain { k: DEFAULT_K }
    }
}

impl Domain {
    pub fn new(k: usize) -> Self {
        assert!(k >= 1, "set bound must be positive");
        Domain { k }
    }

    /// α of a nonempty set.
    pub fn from_set(&self, s: BTreeSet<i32>) -> Num {
        assert!(!s.is_empty(), "abstract values are nonempty");
        if s.len() <= self.k {
            Num::Set(s)
        } else {
            self.range(*s.first().unwrap(), *s.last().unwrap())
        }
    }

    pub fn from_values(&self, vals: impl IntoIterator<Item = i32>) -> Option<Num> {
        let s: BTreeSet<i32> = vals.into_iter().collect();
        (!s.is_empty()).then(|| self.from_set(s))
    }

    /// α of `[lo, hi]`.
    pub fn range(&self, lo: i32, hi: i32) -> Num {
        assert!(lo <= hi);
        if lo == i32::MIN && hi == i32::MAX {
            return Num::Top;
        }
        if (hi as i64 - lo as i64) < self.k as i64 {
            return Num::Set((lo..=hi).collect());
        }
        Num::Interval { lo, hi }
    }

    /// α of a union of ranges; `None` when empty.
    pub fn from_ranges(&self, ranges: &[(i32, i32)]) -> Option<Num> {
        if ranges.is_empty() {
            return None;
        }
        let total: u64 = ranges.iter().map(|(l, h)| (*h as i64 - *l as i64 + 1) as u64).sum();
        if total <= self.k as u64 {
            let s: BTreeSet<i32> = ranges.iter().flat_map(|&(l, h)| l..=h).collect();
            return Some(self.from_set(s));
        }
        let lo = ranges.iter().map(|r| r.0).min().unwrap();
        let hi = ranges.iter().map(|r| r.1).max().unwrap();
        Some(self.range(lo, hi))
    }

    pub fn join(&self, a: &Num, b: &Num) -> Num {
        match (a, b) {
            (Num::Top, _) | (_, Num::Top) => Num::Top,
            (Num::Set(x), Num::Set(y)) => self.from_set(x.union(y).copied().collect()),
            _ => self.range(a.min().min(b.min()), a.max().max(b.max())),
        }
    }

    /// Join while the union fits in `k` elements, interval widening beyond.
    pub fn widen(&self, old: &Num, new: &Num) -> Num {
        if new.leq(old) {
            return old.clone();
        }
        let joined = self.join(old, new);
        if let Num::Set(_) = joined {
            return joined;
        }
        let lo = if new.min() < old.min() { i32::MIN } else { old.min() };
        let hi = if new.max() > old.max() { i32::MAX } else { old.max() };
        self.range(lo, hi)
    }

    /// γa ∩ γb, or `None` if disjoint.
    pub fn meet(&self, a: &Num, b: &Num) -> Option<Num> {
        match (a, b) {
            (Num::Top, x) | (x, Num::Top) => Some(x.clone()),
            (Num::Set(x), y) | (y, Num::Set(x)) => self.from_values(x.iter().copied().filter(|v| y.contains(*v))),
            _ => {
                let lo = a.min().max(b.min());
                let hi = a.max().min(b.max());
                (lo <= hi).then(|| self.range(lo, hi))
            }
        }
    }

    pub fn unop(&self, op: UnopKind, v: &Num) -> Num {
        if let Num::Set(s) = v {
            return self.from_set(s.iter().map(|&x| eval_unop(op, x)).collect());
        }
        match op {
            UnopKind::Eqz => {
                if !v.contains(0) {
                    Num::singleton(0)
                } else {
                    self.range(0, 1)
                }
            }
            _ => self.range(0, 32),
        }
    }

    /// `left op right`; `None` when every combination traps.
    pub fn binop(&self, op: BinopKind, left: &Num, right: &Num) -> Option<Num> {
        if let (Num::Set(a), Num::Set(b)) = (left, right) {
            if a.len() * b.len() <= PRODUCT_LIMIT {
                return self
                    .from_values(a.iter().flat_map(|&x| b.iter().filter_map(move |&y| eval_binop(op, x, y).ok())));
            }
        }
        let (al, ah) = (left.min() as i64, left.max() as i64);
        let (bl, bh) = (right.min() as i64, right.max() as i64);
        let wrapped = |lo: i64, hi: i64| wrap_ranges(lo, hi).and_then(|r| self.from_ranges(&r)).unwrap_or(Num::Top);
        let divisor = right.as_singleton();
        Some(match op {
            BinopKind::Add => wrapped(al + bl, ah + bh),
            BinopKind::Sub => wrapped(al - bh, ah - bl),
            BinopKind::Mul => {
                let corners = [al * bl, al * bh, ah * bl, ah * bh];
                wrapped(*corners.iter().min().unwrap(), *corners.iter().max().unwrap())
            }
            BinopKind::And if left.min() >= 0 || right.min() >= 0 => {
                let bound = match (left.min() >= 0, right.min() >= 0) {
                    (true, true) => left.max().min(right.max()),
                    (true, false) => left.max(),
                    _ => right.max(),
                };
                self.range(0, bound)
            }
            BinopKind::ShrU => match divisor.map(|c| c as u32 & 31) {
                Some(0) => left.clone(),
                Some(c) => self.range(0, (u32::MAX >> c) as i32),
                None => Num::Top,
            },
            BinopKind::ShrS => match divisor.map(|c| c as u32 & 31) {
                Some(c) => self.range(left.min() >> c, left.max() >> c),
                None => Num::Top,
            },
            BinopKind::RemU => match divisor {
                Some(0) => return None,
                Some(c) if (c as u32) <= 1 << 31 => self.range(0, (c as u32 - 1) as i32),
                _ => Num::Top,
            },
            BinopKind::RemS => match divisor {
                Some(0) => return None,
                Some(c) => {
                    let m = (c as i64).abs() - 1;
                    let lo = if left.min() >= 0 { 0 } else { -m };
                    let hi = if left.max() < 0 { 0 } else { m };
                    self.range(lo as i32, hi as i32)
                }
                None => Num::Top,
            },
            BinopKind::DivS | BinopKind::DivU if divisor == Some(0) => return None,
            _ => Num::Top,
        })
    }

    /// `left op right` as 0/1.
    pub fn relop(&self, op: RelopKind, left: &Num, right: &Num) -> Num {
        if let (Num::Set(a), Num::Set(b)) = (left, right) {
            if a.len() * b.len() <= PRODUCT_LIMIT {
                return self
                    .from_set(a.iter().flat_map(|&x| b.iter().map(move |&y| eval_relop(op, x, y) as i32)).collect());
            }
        }
        let (al, ah, bl, bh) = (left.min(), left.max(), right.min(), right.max());
        let (aul, auh) = left.umin_umax();
        let (bul, buh) = right.umin_umax();
        let (must_true, must_false) = match op {
            RelopKind::Eq | RelopKind::Ne => {
                let disjoint = ah < bl || bh < al;
                let same_singleton = left.as_singleton().is_some() && left.as_singleton() == right.as_singleton();
                if op == RelopKind::Eq {
                    (same_singleton, disjoint)
                } else {
                    (disjoint, same_singleton)
                }
            }
            RelopKind::LtS => (ah < bl, al >= bh),
            RelopKind::LeS => (ah <= bl, al > bh),
            RelopKind::GtS => (al > bh, ah <= bl),
            RelopKind::GeS => (al >= bh, ah < bl),
            RelopKind::LtU => (auh < bul, aul >= buh),
            RelopKind::LeU => (auh <= bul, aul > buh),
            RelopKind::GtU => (aul > buh, auh <= bul),
            RelopKind::GeU => (aul >= buh, auh < bul),
        };
        if must_true {
            Num::singleton(1)
        } else if must_false {
            Num::singleton(0)
        } else {
            self.range(0, 1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(vals: &[i32]) -> Num {
        Num::Set(vals.iter().copied().collect())
    }

    #[test]
    fn join_examples() {
        let d = Domain::default();
        assert_eq!(d.join(&set(&[1]), &set(&[3])), set(&[1, 3]));
        let a = d.range(-5, 40);
        assert_eq!(d.join(&a, &a), a);
    }

    #[test]
    fn k_plus_one_singletons_become_hull() {
        let d = Domain::default();
        let mut acc = Num::singleton(0);
        let inputs: Vec<i32> = (0..=d.k as i32).map(|i| i * 3).collect();
        for &v in &inputs {
            acc = d.join(&acc, &Num::singleton(v));
        }
        assert_eq!(acc, Num::Interval { lo: 0, hi: 3 * d.k as i32 });
        assert!(inputs.iter().all(|&v| acc.contains(v)));
    }

    #[test]
    fn widen_examples() {
        let d = Domain::new(4);
        assert_eq!(
            d.widen(&Num::Interval { lo: 0, hi: 5 }, &Num::Interval { lo: 0, hi: 7 }),
            Num::Interval { lo: 0, hi: i32::MAX }
        );
        let a = d.range(0, 100);
        assert_eq!(d.widen(&a, &set(&[3, 4])), a);
    }

    #[test]
    fn counter_chain_stabilizes() {
        let d = Domain::default();
        let mut y = Num::singleton(0);
        let mut steps = 0;
        for i in 1.. {
            let next = d.widen(&y, &d.join(&y, &Num::singleton(i)));
            steps += 1;
            if next == y {
                break;
            }
            y = next;
        }
        assert_eq!(y, Num::Interval { lo: 0, hi: i32::MAX });
        assert!(steps <= d.k + 2, "took {steps} widenings");
    }

    #[test]
    fn canonical_forms() {
        let d = Domain::new(4);
        assert_eq!(d.range(1, 4), set(&[1, 2, 3, 4]));
        assert_eq!(d.range(i32::MIN, i32::MAX), Num::Top);
        assert_eq!(d.meet(&Num::Interval { lo: 0, hi: 10 }, &Num::Interval { lo: 8, hi: 20 }), Some(set(&[8, 9, 10])));
        assert_eq!(d.meet(&set(&[1]), &set(&[2])), None);
    }

    #[test]
    fn arithmetic_examples() {
        let d = Domain::default();
        assert_eq!(d.binop(BinopKind::Add, &set(&[1, 2]), &set(&[10])), Some(set(&[11, 12])));
        assert_eq!(d.binop(BinopKind::DivS, &set(&[6]), &set(&[0, 2])), Some(set(&[3])));
        assert_eq!(d.binop(BinopKind::DivS, &set(&[6]), &set(&[0])), None);
        assert_eq!(d.binop(BinopKind::Add, &Num::Interval { lo: 0, hi: i32::MAX }, &set(&[1])), Some(Num::Top));
        let wrapped =
            d.binop(BinopKind::Add, &Num::Interval { lo: i32::MAX - 100, hi: i32::MAX }, &Num::singleton(10)).unwrap();
        assert!(wrapped.contains(i32::MIN + 5));
        assert!(wrapped.contains(i32::MAX - 50));
    }

    #[test]
    fn arc_ranges_split_at_sign_boundary() {
        assert_eq!(arc_ranges(5, 3), vec![(5, 7)]);
        assert_eq!(arc_ranges(u32::MAX, 2), vec![(-1, 0)]);
        assert_eq!(arc_ranges(0x7fff_ffff, 2), vec![(i32::MIN, i32::MIN), (i32::MAX, i32::MAX)]);
    }

    #[test]
    fn relop_bounds() {
        let d = Domain::default();
        let big = Num::Interval { lo: 100, hi: 1000 };
        assert_eq!(d.relop(RelopKind::LtS, &big, &Num::singleton(50)), Num::singleton(0));
        assert_eq!(d.relop(RelopKind::GtU, &Num::singleton(-1), &big), Num::singleton(1));
        assert_eq!(d.relop(RelopKind::Eq, &big, &Num::singleton(500)), set(&[0, 1]));
    }
}
