use std::fmt;
use std::sync::Arc;

use super::expr::SymExpr;
use super::num::{Domain, Num};

/// A stack value: the numeric layer plus, optionally, how it was computed.
///
/// The numeric layer is always kept up to date as a cached over-approximation
/// of the expression; forcing re-evaluates the expression against the current
/// memory and meets the two.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AbstractValue {
    pub num: Num,
    pub expr: Option<Arc<SymExpr>>,
}

impl AbstractValue {
    pub fn top() -> Self {
        AbstractValue { num: Num::Top, expr: None }
    }

    pub fn of(num: Num) -> Self {
        AbstractValue { num, expr: None }
    }

    pub fn constant(c: i32) -> Self {
        AbstractValue { num: Num::singleton(c), expr: Some(Arc::new(SymExpr::Literal(c))) }
    }

    pub fn with_expr(num: Num, expr: SymExpr) -> Self {
        let expr = (expr.depth() <= super::expr::MAX_DEPTH).then(|| Arc::new(expr));
        AbstractValue { num, expr }
    }

    pub fn stripped(&self) -> Self {
        AbstractValue::of(self.num.clone())
    }

    pub fn leq(&self, other: &Self) -> bool {
        self.num.leq(&other.num) && (other.expr.is_none() || other.expr == self.expr)
    }
}

impl Domain {
    pub fn join_value(&self, a: &AbstractValue, b: &AbstractValue) -> AbstractValue {
        AbstractValue { num: self.join(&a.num, &b.num), expr: if a.expr == b.expr { a.expr.clone() } else { None } }
    }

    pub fn widen_value(&self, old: &AbstractValue, new: &AbstractValue) -> AbstractValue {
        AbstractValue {
            num: self.widen(&old.num, &new.num),
            expr: if old.expr == new.expr { old.expr.clone() } else { None },
        }
    }
}

impl fmt::Display for AbstractValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.expr {
            Some(e) if !matches!(**e, SymExpr::Literal(_)) => write!(f, "{} = {}", e, self.num),
            _ => write!(f, "{}", self.num),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    MustTrue,
    MustFalse,
    Unknown,
}

/// Result of the abstract intbool: what is known of a condition, and the
/// expression it came from, which filtering uses later.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractBool {
    pub truth: Truth,
    pub expr: Option<Arc<SymExpr>>,
}

impl AbstractBool {
    pub fn of(v: &AbstractValue) -> Self {
        let truth = if !v.num.contains(0) {
            Truth::MustTrue
        } else if v.num.as_singleton() == Some(0) {
            Truth::MustFalse
        } else {
            Truth::Unknown
        };
        AbstractBool { truth, expr: v.expr.clone() }
    }

    pub fn may_be(&self, positive: bool) -> bool {
        match self.truth {
            Truth::MustTrue => positive,
            Truth::MustFalse => !positive,
            Truth::Unknown => true,
        }
    }
}
