//! Symbolic expressions attached to stack values.
//!
//! An expression records how a value was computed from the frame's locals,
//! the globals, and literals. It is evaluated on demand against the memory at
//! hand, which lets a branch filter on a local sharpen stack values derived
//! from that local.

use std::fmt;
use std::sync::Arc;

use crate::frontend::{BinopKind, RelopKind};

use super::num::{Domain, Num};

/// Expressions deeper than this are dropped rather than extended.
pub const MAX_DEPTH: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SymExpr {
    Local(u32),
    Global(u32),
    Literal(i32),
    Eqz(Arc<SymExpr>),
    /// Only `add`, `sub` and `mul` are kept symbolic; other operators are forced.
    Arith(BinopKind, Arc<SymExpr>, Arc<SymExpr>),
    Compare(RelopKind, Arc<SymExpr>, Arc<SymExpr>),
}

/// Read access to the abstract variables an expression's leaves refer to.
pub trait Valuation {
    fn local(&self, i: u32) -> &Num;
    fn global(&self, i: u32) -> &Num;
}

impl SymExpr {
    pub fn is_lazy_binop(op: BinopKind) -> bool {
        matches!(op, BinopKind::Add | BinopKind::Sub | BinopKind::Mul)
    }

    pub fn depth(&self) -> usize {
        match self {
            SymExpr::Local(_) | SymExpr::Global(_) | SymExpr::Literal(_) => 1,
            SymExpr::Eqz(e) => 1 + e.depth(),
            SymExpr::Arith(_, a, b) | SymExpr::Compare(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn mentions_local(&self, i: u32) -> bool {
        match self {
            SymExpr::Local(j) => *j == i,
            SymExpr::Global(_) | SymExpr::Literal(_) => false,
            SymExpr::Eqz(e) => e.mentions_local(i),
            SymExpr::Arith(_, a, b) | SymExpr::Compare(_, a, b) => a.mentions_local(i) || b.mentions_local(i),
        }
    }

    pub fn mentions_global(&self, i: Option<u32>) -> bool {
        match self {
            SymExpr::Global(j) => i.is_none_or(|i| *j == i),
            SymExpr::Local(_) | SymExpr::Literal(_) => false,
            SymExpr::Eqz(e) => e.mentions_global(i),
            SymExpr::Arith(_, a, b) | SymExpr::Compare(_, a, b) => a.mentions_global(i) || b.mentions_global(i),
        }
    }

    /// Forces the expression to the numeric layer; `None` if it cannot produce a value.
    pub fn eval(&self, d: &Domain, v: &impl Valuation) -> Option<Num> {
        Some(match self {
            SymExpr::Local(i) => v.local(*i).clone(),
            SymExpr::Global(i) => v.global(*i).clone(),
            SymExpr::Literal(c) => Num::singleton(*c),
            SymExpr::Eqz(e) => d.unop(crate::frontend::UnopKind::Eqz, &e.eval(d, v)?),
            SymExpr::Arith(op, a, b) => d.binop(*op, &a.eval(d, v)?, &b.eval(d, v)?)?,
            SymExpr::Compare(op, a, b) => d.relop(*op, &a.eval(d, v)?, &b.eval(d, v)?),
        })
    }

    /// Concrete evaluation under an assignment of locals; the test oracle for filtering.
    pub fn eval_concrete(&self, locals: &[i32], globals: &[i32]) -> Option<i32> {
        use crate::numeric::{eval_binop, eval_relop};
        Some(match self {
            SymExpr::Local(i) => locals[*i as usize],
            SymExpr::Global(i) => globals[*i as usize],
            SymExpr::Literal(c) => *c,
            SymExpr::Eqz(e) => (e.eval_concrete(locals, globals)? == 0) as i32,
            SymExpr::Arith(op, a, b) => {
                eval_binop(*op, a.eval_concrete(locals, globals)?, b.eval_concrete(locals, globals)?).ok()?
            }
            SymExpr::Compare(op, a, b) => {
                eval_relop(*op, a.eval_concrete(locals, globals)?, b.eval_concrete(locals, globals)?) as i32
            }
        })
    }
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymExpr::Local(i) => write!(f, "local{i}"),
            SymExpr::Global(i) => write!(f, "global{i}"),
            SymExpr::Literal(c) => write!(f, "{c}"),
            SymExpr::Eqz(e) => write!(f, "eqz({e})"),
            SymExpr::Arith(op, a, b) => {
                let sym = match op {
                    BinopKind::Add => "+",
                    BinopKind::Sub => "-",
                    _ => "*",
                };
                write!(f, "({a} {sym} {b})")
            }
            SymExpr::Compare(op, a, b) => write!(f, "({a} {} {b})", op.mnemonic().trim_start_matches("i32.")),
        }
    }
}
