//! Abstract memories, their lattice operations, and branch filtering.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::frontend::{BinopKind, FuncIdx, LabelId};

use super::expr::{SymExpr, Valuation};
use super::keep::{keep_for_cmp, Keep};
use super::num::{Domain, Num};
use super::value::AbstractValue;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AbsSlot {
    Value(AbstractValue),
    Label(LabelId),
}

/// The possible functions in each table slot. An empty set is an empty slot.
pub type AbstractTable = Arc<Vec<BTreeSet<FuncIdx>>>;

/// σ̂ for the in-context frame, or bottom.
///
/// Locals and globals hold numeric values only; expressions live on the stack.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AbstractMemory {
    pub globals: Vec<Num>,
    pub table: AbstractTable,
    pub stack: Vec<AbsSlot>,
    pub locals: Vec<Num>,
    bottom: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("abstract memories of different shape: {0}")]
pub struct ShapeMismatch(pub String);

impl Valuation for AbstractMemory {
    fn local(&self, i: u32) -> &Num {
        &self.locals[i as usize]
    }

    fn global(&self, i: u32) -> &Num {
        &self.globals[i as usize]
    }
}

impl AbstractMemory {
    pub fn bottom() -> Self {
        AbstractMemory {
            globals: Vec::new(),
            table: Arc::new(Vec::new()),
            stack: Vec::new(),
            locals: Vec::new(),
            bottom: true,
        }
    }

    pub fn new(globals: Vec<Num>, table: AbstractTable, locals: Vec<Num>) -> Self {
        AbstractMemory { globals, table, stack: Vec::new(), locals, bottom: false }
    }

    pub fn is_bottom(&self) -> bool {
        self.bottom
    }

    pub fn push(&mut self, v: AbstractValue) {
        self.stack.push(AbsSlot::Value(v));
    }

    pub fn pop(&mut self) -> AbstractValue {
        match self.stack.pop() {
            Some(AbsSlot::Value(v)) => v,
            other => panic!("abstract stack holds {other:?} where validation guaranteed a value"),
        }
    }

    /// Pops `v_right`, then `v_left`; returns `(v_left, v_right)`.
    pub fn pop_twice(&mut self) -> (AbstractValue, AbstractValue) {
        let right = self.pop();
        let left = self.pop();
        (left, right)
    }

    pub fn pop_n(&mut self, n: u32) -> Vec<AbstractValue> {
        let mut vals: Vec<AbstractValue> = (0..n).map(|_| self.pop()).collect();
        vals.reverse();
        vals
    }

    /// The value slots of the stack, deepest first.
    pub fn values(&self) -> impl Iterator<Item = &AbstractValue> {
        self.stack.iter().filter_map(|s| match s {
            AbsSlot::Value(v) => Some(v),
            AbsSlot::Label(_) => None,
        })
    }

    /// Evaluates `v` against this memory: its numeric layer met with its expression.
    pub fn force(&self, d: &Domain, v: &AbstractValue) -> Option<Num> {
        match &v.expr {
            None => Some(v.num.clone()),
            Some(e) => d.meet(&v.num, &e.eval(d, self)?),
        }
    }

    fn drop_exprs(&mut self, d: &Domain, stale: impl Fn(&SymExpr) -> bool) {
        let mut stack = std::mem::take(&mut self.stack);
        let mut empty = false;
        for slot in &mut stack {
            if let AbsSlot::Value(v) = slot {
                if v.expr.as_deref().is_some_and(&stale) {
                    match self.force(d, v) {
                        Some(n) => *v = AbstractValue::of(n),
                        None => empty = true,
                    }
                }
            }
        }
        self.stack = stack;
        if empty {
            *self = AbstractMemory::bottom();
        }
    }

    /// Stores into local `i`, first forcing and dropping every stack
    /// expression that reads it.
    pub fn set_local(&mut self, d: &Domain, i: u32, v: &AbstractValue) {
        let Some(n) = self.force(d, v) else {
            *self = AbstractMemory::bottom();
            return;
        };
        self.drop_exprs(d, |e| e.mentions_local(i));
        if !self.bottom {
            self.locals[i as usize] = n;
        }
    }

    pub fn set_global(&mut self, d: &Domain, i: u32, v: &AbstractValue) {
        let Some(n) = self.force(d, v) else {
            *self = AbstractMemory::bottom();
            return;
        };
        self.drop_exprs(d, |e| e.mentions_global(Some(i)));
        if !self.bottom {
            self.globals[i as usize] = n;
        }
    }

    /// Forces and drops every expression mentioning any global, e.g. before a call.
    pub fn forget_globals(&mut self, d: &Domain) {
        self.drop_exprs(d, |e| e.mentions_global(None));
    }

    /// Re-forces every stack value against the current locals and globals.
    fn refresh(&mut self, d: &Domain) {
        let mut stack = std::mem::take(&mut self.stack);
        let mut empty = false;
        for slot in &mut stack {
            if let AbsSlot::Value(v) = slot {
                match self.force(d, v) {
                    Some(n) => v.num = n,
                    None => empty = true,
                }
            }
        }
        self.stack = stack;
        if empty {
            *self = AbstractMemory::bottom();
        }
    }

    pub fn leq(&self, other: &Self) -> bool {
        if self.bottom {
            return true;
        }
        if other.bottom {
            return false;
        }
        self.stack.len() == other.stack.len()
            && self.locals.len() == other.locals.len()
            && self.globals.iter().zip(&other.globals).all(|(a, b)| a.leq(b))
            && self.locals.iter().zip(&other.locals).all(|(a, b)| a.leq(b))
            && self.table.iter().zip(other.table.iter()).all(|(a, b)| a.is_subset(b))
            && self.stack.iter().zip(&other.stack).all(|(a, b)| match (a, b) {
                (AbsSlot::Value(x), AbsSlot::Value(y)) => x.leq(y),
                (AbsSlot::Label(x), AbsSlot::Label(y)) => x == y,
                _ => false,
            })
    }

    fn combine(
        &self,
        other: &Self,
        num: impl Fn(&Num, &Num) -> Num,
        value: impl Fn(&AbstractValue, &AbstractValue) -> AbstractValue,
    ) -> Result<Self, ShapeMismatch> {
        if self.bottom {
            return Ok(other.clone());
        }
        if other.bottom {
            return Ok(self.clone());
        }
        if self.stack.len() != other.stack.len()
            || self.locals.len() != other.locals.len()
            || self.globals.len() != other.globals.len()
            || self.table.len() != other.table.len()
        {
            return Err(ShapeMismatch(format!(
                "stack {} vs {}, locals {} vs {}",
                self.stack.len(),
                other.stack.len(),
                self.locals.len(),
                other.locals.len()
            )));
        }
        let stack = self
            .stack
            .iter()
            .zip(&other.stack)
            .map(|(a, b)| match (a, b) {
                (AbsSlot::Value(x), AbsSlot::Value(y)) => Ok(AbsSlot::Value(value(x, y))),
                (AbsSlot::Label(x), AbsSlot::Label(y)) if x == y => Ok(AbsSlot::Label(*x)),
                _ => Err(ShapeMismatch(format!("stack slots {a:?} vs {b:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let table = if Arc::ptr_eq(&self.table, &other.table) || self.table == other.table {
            self.table.clone()
        } else {
            Arc::new(self.table.iter().zip(other.table.iter()).map(|(a, b)| a | b).collect())
        };
        Ok(AbstractMemory {
            globals: self.globals.iter().zip(&other.globals).map(|(a, b)| num(a, b)).collect(),
            table,
            stack,
            locals: self.locals.iter().zip(&other.locals).map(|(a, b)| num(a, b)).collect(),
            bottom: false,
        })
    }
}

impl fmt::Display for AbstractMemory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.bottom {
            return f.write_str("bottom");
        }
        let list = |items: &[Num]| items.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(", ");
        let stack: Vec<String> = self
            .stack
            .iter()
            .map(|s| match s {
                AbsSlot::Value(v) => v.to_string(),
                AbsSlot::Label(l) => format!("L{l}"),
            })
            .collect();
        write!(f, "stack [{}] locals [{}] globals [{}]", stack.join(", "), list(&self.locals), list(&self.globals))
    }
}

impl Domain {
    pub fn join_mem(&self, a: &AbstractMemory, b: &AbstractMemory) -> Result<AbstractMemory, ShapeMismatch> {
        a.combine(b, |x, y| self.join(x, y), |x, y| self.join_value(x, y))
    }

    pub fn widen_mem(&self, old: &AbstractMemory, new: &AbstractMemory) -> Result<AbstractMemory, ShapeMismatch> {
        old.combine(new, |x, y| self.widen(x, y), |x, y| self.widen_value(x, y))
    }

    /// Refines `m` to the states where `cond` is nonzero (`positive`) or zero.
    ///
    /// Only constraints expressible through the symbolic expression are used;
    /// without an expression the memory is returned unchanged.
    pub fn filter(&self, cond: Option<&SymExpr>, positive: bool, m: &AbstractMemory) -> AbstractMemory {
        if m.is_bottom() {
            return m.clone();
        }
        let Some(e) = cond else {
            return m.clone();
        };
        let mut out = m.clone();
        if !self.restrict(e, &Keep::truth(positive), &mut out) {
            return AbstractMemory::bottom();
        }
        out.refresh(self);
        out
    }

    /// Narrows the variables of `m` so that `e` evaluates into `keep`.
    /// Returns `false` when no state remains.
    pub fn restrict(&self, e: &SymExpr, keep: &Keep, m: &mut AbstractMemory) -> bool {
        if keep.is_all() {
            return true;
        }
        match e {
            SymExpr::Local(i) => match keep.meet(self, &m.locals[*i as usize]) {
                Some(n) => {
                    m.locals[*i as usize] = n;
                    true
                }
                None => false,
            },
            SymExpr::Global(i) => match keep.meet(self, &m.globals[*i as usize]) {
                Some(n) => {
                    m.globals[*i as usize] = n;
                    true
                }
                None => false,
            },
            SymExpr::Literal(c) => keep.contains(*c),
            SymExpr::Eqz(inner) => match (keep.contains(1), keep.contains(0)) {
                (true, true) => true,
                (true, false) => self.restrict(inner, &Keep::truth(false), m),
                (false, true) => self.restrict(inner, &Keep::truth(true), m),
                (false, false) => false,
            },
            SymExpr::Compare(op, a, b) => match (keep.contains(1), keep.contains(0)) {
                (true, true) => true,
                (true, false) => self.restrict_cmp(*op, a, b, m),
                (false, true) => self.restrict_cmp(op.negate(), a, b, m),
                (false, false) => false,
            },
            SymExpr::Arith(op @ (BinopKind::Add | BinopKind::Sub), a, b) => {
                let Some(bv) = b.eval(self, m) else { return false };
                if let Some(c) = bv.as_singleton() {
                    // a + c ∈ K  ⇔  a ∈ K - c;   a - c ∈ K  ⇔  a ∈ K + c
                    let shifted = if *op == BinopKind::Add { keep.shift(c.wrapping_neg()) } else { keep.shift(c) };
                    return self.restrict(a, &shifted, m);
                }
                let Some(av) = a.eval(self, m) else { return false };
                if let Some(c) = av.as_singleton() {
                    // c + b ∈ K  ⇔  b ∈ K - c;   c - b ∈ K  ⇔  b ∈ c - K
                    let target = if *op == BinopKind::Add { keep.shift(c.wrapping_neg()) } else { keep.reflect(c) };
                    return self.restrict(b, &target, m);
                }
                true
            }
            SymExpr::Arith(..) => true,
        }
    }

    fn restrict_cmp(&self, op: crate::frontend::RelopKind, a: &SymExpr, b: &SymExpr, m: &mut AbstractMemory) -> bool {
        let Some(bv) = b.eval(self, m) else { return false };
        if !self.restrict(a, &keep_for_cmp(op, &bv), m) {
            return false;
        }
        let Some(av) = a.eval(self, m) else { return false };
        self.restrict(b, &keep_for_cmp(op.flip(), &av), m)
    }
}

/// Outcome of resolving an abstract table index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Indices {
    /// Every function stored at an in-bounds index the value may take.
    Funcs(BTreeSet<FuncIdx>),
    TooWide,
}

/// The functions `call_indirect` may reach with index `v`.
pub fn concretize_indices(v: &Num, table: &[BTreeSet<FuncIdx>]) -> Indices {
    let len = table.len() as u64;
    let slots: Vec<i32> = match v {
        Num::Set(s) => s.iter().copied().collect(),
        Num::Interval { .. } if v.card() <= len => (v.min()..=v.max()).collect(),
        _ => return Indices::TooWide,
    };
    let funcs =
        slots.into_iter().filter_map(|i| table.get(i as u32 as usize)).flat_map(|s| s.iter().copied()).collect();
    Indices::Funcs(funcs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::RelopKind;

    fn mem(locals: Vec<Num>) -> AbstractMemory {
        AbstractMemory::new(Vec::new(), Arc::new(Vec::new()), locals)
    }

    fn set(vals: &[i32]) -> Num {
        Num::Set(vals.iter().copied().collect())
    }

    #[test]
    fn join_mem_bottom_identity_and_pointwise() {
        let d = Domain::default();
        let mut m = mem(vec![set(&[1])]);
        m.push(AbstractValue::constant(1));
        assert_eq!(d.join_mem(&AbstractMemory::bottom(), &m).unwrap(), m);
        let mut n = mem(vec![set(&[1])]);
        n.push(AbstractValue::constant(2));
        let j = d.join_mem(&m, &n).unwrap();
        assert_eq!(j.values().next().unwrap().num, set(&[1, 2]));
        let mut deeper = n.clone();
        deeper.push(AbstractValue::constant(3));
        assert!(d.join_mem(&m, &deeper).is_err());
    }

    #[test]
    fn filter_equality_with_constant() {
        let d = Domain::default();
        let m = mem(vec![set(&[0, 1, 2])]);
        let e = SymExpr::Compare(RelopKind::Eq, Arc::new(SymExpr::Local(0)), Arc::new(SymExpr::Literal(1)));
        assert_eq!(d.filter(Some(&e), true, &m).locals[0], set(&[1]));
        assert_eq!(d.filter(Some(&e), false, &m).locals[0], set(&[0, 2]));
    }

    #[test]
    fn filter_unsupported_is_identity() {
        let d = Domain::default();
        let m = mem(vec![set(&[0, 1, 2]), set(&[3, 4])]);
        let e = SymExpr::Arith(BinopKind::Mul, Arc::new(SymExpr::Local(0)), Arc::new(SymExpr::Local(1)));
        assert_eq!(d.filter(Some(&e), true, &m), m);
        assert_eq!(d.filter(None, false, &m), m);
    }

    #[test]
    fn filter_refreshes_stack_values() {
        let d = Domain::default();
        let mut m = mem(vec![set(&[0, 1, 2])]);
        m.push(AbstractValue::with_expr(
            set(&[10, 11, 12]),
            SymExpr::Arith(BinopKind::Add, Arc::new(SymExpr::Local(0)), Arc::new(SymExpr::Literal(10))),
        ));
        let cond = SymExpr::Compare(RelopKind::LtS, Arc::new(SymExpr::Local(0)), Arc::new(SymExpr::Literal(1)));
        let t = d.filter(Some(&cond), true, &m);
        assert_eq!(t.values().next().unwrap().num, set(&[10]));
    }

    #[test]
    fn filter_through_offset() {
        let d = Domain::default();
        let m = mem(vec![d.range(0, 100)]);
        // (local0 - 3) == 4
        let e = SymExpr::Compare(
            RelopKind::Eq,
            Arc::new(SymExpr::Arith(BinopKind::Sub, Arc::new(SymExpr::Local(0)), Arc::new(SymExpr::Literal(3)))),
            Arc::new(SymExpr::Literal(4)),
        );
        assert_eq!(d.filter(Some(&e), true, &m).locals[0], set(&[7]));
        // eqz(10 - local0) holds only for local0 = 10
        let z = SymExpr::Eqz(Arc::new(SymExpr::Arith(
            BinopKind::Sub,
            Arc::new(SymExpr::Literal(10)),
            Arc::new(SymExpr::Local(0)),
        )));
        assert_eq!(d.filter(Some(&z), true, &m).locals[0], set(&[10]));
    }

    #[test]
    fn impossible_branch_is_bottom() {
        let d = Domain::default();
        let m = mem(vec![set(&[5])]);
        let e = SymExpr::Compare(RelopKind::GtS, Arc::new(SymExpr::Local(0)), Arc::new(SymExpr::Literal(9)));
        assert!(d.filter(Some(&e), true, &m).is_bottom());
    }

    #[test]
    fn set_local_drops_dependent_exprs() {
        let d = Domain::default();
        let mut m = mem(vec![set(&[1, 2])]);
        m.push(AbstractValue::with_expr(set(&[1, 2]), SymExpr::Local(0)));
        m.set_local(&d, 0, &AbstractValue::constant(9));
        let v = m.values().next().unwrap();
        assert_eq!(v.expr, None);
        assert_eq!(v.num, set(&[1, 2]));
        assert_eq!(m.locals[0], set(&[9]));
    }

    #[test]
    fn concretize_examples() {
        let f = |i: u32| BTreeSet::from([FuncIdx(i)]);
        let two = vec![f(0), f(1)];
        assert_eq!(concretize_indices(&set(&[1]), &two), Indices::Funcs(BTreeSet::from([FuncIdx(1)])));
        let three = vec![f(0), f(1), f(2)];
        assert_eq!(concretize_indices(&Num::Top, &three), Indices::TooWide);
        let interval = Num::Interval { lo: 0, hi: 1 };
        assert_eq!(concretize_indices(&interval, &three), Indices::Funcs(BTreeSet::from([FuncIdx(0), FuncIdx(1)])));
        assert_eq!(concretize_indices(&set(&[5]), &two), Indices::Funcs(BTreeSet::new()));
    }
}
