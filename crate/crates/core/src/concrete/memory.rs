//! Concrete memory σ and the auxiliary stack operations.

use crate::frontend::{FuncIdx, LabelId};

/// One operand stack slot: a value or the marker pushed when a label is entered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Value(i32),
    Label(LabelId),
}

/// Global store: global values plus the function table.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Store {
    pub globals: Vec<i32>,
    pub funtable: Vec<Option<FuncIdx>>,
}

/// σ = (se, sk, loc).
///
/// `loc` is an arena shared by all live frames; each frame's
/// [`Environment`](super::Environment) names its window of it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConcreteMemory {
    pub se: Store,
    pub sk: Vec<Slot>,
    pub loc: Vec<i32>,
}

impl ConcreteMemory {
    pub fn push(&mut self, v: i32) {
        self.sk.push(Slot::Value(v));
    }

    pub fn pop(&mut self) -> i32 {
        match self.sk.pop() {
            Some(Slot::Value(v)) => v,
            other => panic!("operand stack holds {other:?} where validation guaranteed a value"),
        }
    }

    /// Pops `v_right` and then `v_left`; returns `(v_left, v_right)`.
    pub fn pop_twice(&mut self) -> (i32, i32) {
        let right = self.pop();
        let left = self.pop();
        (left, right)
    }

    /// Pops `n` values, returned in stack order (deepest first).
    pub fn pop_n(&mut self, n: u32) -> Vec<i32> {
        let mut vals: Vec<i32> = (0..n).map(|_| self.pop()).collect();
        vals.reverse();
        vals
    }

    pub fn push_all(&mut self, vals: &[i32]) {
        for &v in vals {
            self.push(v);
        }
    }

    /// Values on the stack, ignoring label markers (deepest first).
    pub fn values(&self) -> Vec<i32> {
        self.sk
            .iter()
            .filter_map(|s| match s {
                Slot::Value(v) => Some(*v),
                Slot::Label(_) => None,
            })
            .collect()
    }
}

/// 0 is false, any other value is true.
pub fn intbool(v: i32) -> bool {
    v != 0
}

/// Instance stamp φ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct InstanceStamp(pub u64);

/// Timestamp generator issuing strictly increasing stamps.
#[derive(Debug, Clone, Default)]
pub struct Ticker {
    last: u64,
}

impl Ticker {
    pub fn tick(&mut self) -> InstanceStamp {
        self.last += 1;
        InstanceStamp(self.last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pop_twice_binds_left_on_second_pop() {
        let mut m = ConcreteMemory::default();
        m.push(7);
        m.push(2);
        assert_eq!(m.pop_twice(), (7, 2));
    }

    #[test]
    fn pop_n_keeps_stack_order() {
        let mut m = ConcreteMemory::default();
        m.push_all(&[1, 2, 3]);
        assert_eq!(m.pop_n(2), vec![2, 3]);
        assert_eq!(m.values(), vec![1]);
    }

    #[test]
    fn tick_is_strictly_increasing() {
        let mut t = Ticker::default();
        let a = t.tick();
        let b = t.tick();
        assert!(b > a);
    }

    #[test]
    fn intbool_zero_is_false() {
        assert!(!intbool(0));
        assert!(intbool(42));
        assert!(intbool(-1));
    }
}
