//! Concrete `i32` operator semantics shared by both interpreters.

use crate::frontend::{BinopKind, RelopKind, UnopKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithTrap {
    DivByZero,
    Overflow,
}

pub fn eval_unop(op: UnopKind, v: i32) -> i32 {
    match op {
        UnopKind::Eqz => (v == 0) as i32,
        UnopKind::Clz => v.leading_zeros() as i32,
        UnopKind::Ctz => v.trailing_zeros() as i32,
        UnopKind::Popcnt => v.count_ones() as i32,
    }
}

/// Applies `op` to `left op right`; `left` is the deeper stack operand.
pub fn eval_binop(op: BinopKind, left: i32, right: i32) -> Result<i32, ArithTrap> {
    let (l, r) = (left as u32, right as u32);
    Ok(match op {
        BinopKind::Add => left.wrapping_add(right),
        BinopKind::Sub => left.wrapping_sub(right),
        BinopKind::Mul => left.wrapping_mul(right),
        BinopKind::DivS => {
            if right == 0 {
                return Err(ArithTrap::DivByZero);
            }
            if left == i32::MIN && right == -1 {
                return Err(ArithTrap::Overflow);
            }
            left / right
        }
        BinopKind::DivU => {
            if r == 0 {
                return Err(ArithTrap::DivByZero);
            }
            (l / r) as i32
        }
        BinopKind::RemS => {
            if right == 0 {
                return Err(ArithTrap::DivByZero);
            }
            left.wrapping_rem(right)
        }
        BinopKind::RemU => {
            if r == 0 {
                return Err(ArithTrap::DivByZero);
            }
            (l % r) as i32
        }
        BinopKind::And => left & right,
        BinopKind::Or => left | right,
        BinopKind::Xor => left ^ right,
        BinopKind::Shl => left.wrapping_shl(r),
        BinopKind::ShrS => left.wrapping_shr(r),
        BinopKind::ShrU => l.wrapping_shr(r) as i32,
        BinopKind::Rotl => l.rotate_left(r % 32) as i32,
        BinopKind::Rotr => l.rotate_right(r % 32) as i32,
    })
}

pub fn eval_relop(op: RelopKind, left: i32, right: i32) -> bool {
    let (l, r) = (left as u32, right as u32);
    match op {
        RelopKind::Eq => left == right,
        RelopKind::Ne => left != right,
        RelopKind::LtS => left < right,
        RelopKind::LtU => l < r,
        RelopKind::GtS => left > right,
        RelopKind::GtU => l > r,
        RelopKind::LeS => left <= right,
        RelopKind::LeU => l <= r,
        RelopKind::GeS => left >= right,
        RelopKind::GeU => l >= r,
    }
}
