//! Reference interpreter: executes lowered code and records every call edge taken.

mod machine;
mod memory;

use std::collections::BTreeSet;
use std::fmt;

pub use machine::{Continuation, Environment, Frame, LabelBinding, LabelMap, Machine, Transformation};
pub use memory::{intbool, ConcreteMemory, InstanceStamp, Slot, Store, Ticker};

use crate::frontend::{FuncIdx, ValidatedModule};
use crate::site::CallEdge;

pub const DEFAULT_FUEL: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub fuel: u64,
    /// Values imported functions return, cycling across calls. Empty means `[0]`.
    pub import_values: Vec<i32>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { fuel: DEFAULT_FUEL, import_values: vec![0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Trap {
    UndefinedTableEntry { index: i32 },
    TypeMismatch { index: i32, callee: FuncIdx },
    TableOutOfBounds { index: i32, size: u32 },
    DivByZero,
    Overflow,
}

impl Trap {
    pub fn kind(&self) -> &'static str {
        match self {
            Trap::UndefinedTableEntry { .. } => "undefined-table-entry",
            Trap::TypeMismatch { .. } => "type-mismatch",
            Trap::TableOutOfBounds { .. } => "table-out-of-bounds",
            Trap::DivByZero => "div-by-zero",
            Trap::Overflow => "overflow",
        }
    }
}

impl fmt::Display for Trap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trap::UndefinedTableEntry { index } => write!(f, "{}: table slot {index} is empty", self.kind()),
            Trap::TypeMismatch { index, callee } => {
                write!(f, "{}: table slot {index} holds function {callee} of another type", self.kind())
            }
            Trap::TableOutOfBounds { index, size } => {
                write!(f, "{}: index {} outside table of size {size}", self.kind(), *index as u32)
            }
            Trap::DivByZero | Trap::Overflow => f.write_str(self.kind()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Returned(Vec<i32>),
    Trapped(Trap),
    FuelExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcreteTrace {
    pub edges: BTreeSet<CallEdge>,
    /// Every executed call in execution order.
    pub log: Vec<CallEdge>,
    pub steps: u64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error("function {0} does not exist")]
    UnknownEntry(FuncIdx),
    #[error("entry expects {expected} arguments, got {got}")]
    ArgCount { expected: u32, got: usize },
}

/// Runs `entry` on a fresh instance with the default import stubs.
pub fn run(m: &ValidatedModule, entry: FuncIdx, args: &[i32], fuel: u64) -> Result<ConcreteTrace, RunError> {
    run_with(m, entry, args, &RunConfig { fuel, ..RunConfig::default() })
}

/// Instantiates `m` (running its start function, if any) and then invokes `entry`.
///
/// Fuel and the trace are shared by both phases. A trap or fuel exhaustion in
/// the start function ends the run before `entry` is invoked.
pub fn run_with(
    m: &ValidatedModule,
    entry: FuncIdx,
    args: &[i32],
    config: &RunConfig,
) -> Result<ConcreteTrace, RunError> {
    let ty = m.module().func_type(entry).ok_or(RunError::UnknownEntry(entry))?;
    if ty.params as usize != args.len() {
        return Err(RunError::ArgCount { expected: ty.params, got: args.len() });
    }
    let mut machine = Machine::new(m, config);
    if let Some(start) = m.module().start {
        match machine.invoke(start, &[]) {
            Outcome::Returned(_) => {}
            stopped => return Ok(machine.into_trace(stopped)),
        }
    }
    let outcome = machine.invoke(entry, args);
    debug_assert!(
        !matches!(outcome, Outcome::Returned(_)) || machine.call_depth() == 0,
        "frames left on the call context after a normal return"
    );
    Ok(machine.into_trace(outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{load, BinopKind, FuncIdx, UnopKind};

    fn exec(src: &str, entry: &str, args: &[i32]) -> ConcreteTrace {
        let m = load(src).unwrap();
        let f = m.module().resolve_func(entry).unwrap();
        run(&m, f, args, DEFAULT_FUEL).unwrap()
    }

    fn edge(caller: u32, callee: u32, site: u32) -> CallEdge {
        CallEdge { caller: FuncIdx(caller), callee: FuncIdx(callee), site }
    }

    #[test]
    fn arithmetic_only() {
        let t = exec("(module (func $m (result i32) i32.const 2 i32.const 3 i32.add))", "$m", &[]);
        assert_eq!(t.outcome, Outcome::Returned(vec![5]));
        assert!(t.edges.is_empty());
    }

    #[test]
    fn direct_call_is_one_edge() {
        let t = exec("(module (func $m (call 1)) (func))", "$m", &[]);
        assert_eq!(t.edges, BTreeSet::from([edge(0, 1, 0)]));
        assert_eq!(t.log.len(), 1);
    }

    #[test]
    fn call_indirect_selects_slot() {
        let src = "(module (type $t (func))
            (table funcref (elem $f $g))
            (func $m (call_indirect (type $t) (i32.const 1)))
            (func $f) (func $g))";
        let t = exec(src, "$m", &[]);
        assert_eq!(t.outcome, Outcome::Returned(vec![]));
        assert_eq!(t.edges, BTreeSet::from([edge(0, 2, 1)]));
    }

    #[test]
    fn call_indirect_slot_zero() {
        let src = "(module (type $t (func (result i32)))
            (table 1 funcref) (elem (i32.const 0) 5)
            (func $m (result i32) (call_indirect (type $t) (i32.const 0)))
            (func) (func) (func) (func) (func $five (result i32) (i32.const 55)))";
        let t = exec(src, "$m", &[]);
        assert_eq!(t.outcome, Outcome::Returned(vec![55]));
        assert_eq!(t.edges, BTreeSet::from([edge(0, 5, 1)]));
    }

    #[test]
    fn binop_operand_order_and_wrap() {
        let t = exec("(module (func $m (result i32) i32.const 7 i32.const 2 i32.sub))", "$m", &[]);
        assert_eq!(t.outcome, Outcome::Returned(vec![5]));
        let t = exec("(module (func $m (result i32) i32.const 2147483647 i32.const 1 i32.add))", "$m", &[]);
        assert_eq!(t.outcome, Outcome::Returned(vec![i32::MIN]));
        let t = exec("(module (func $m (result i32) i32.const 0 i32.eqz))", "$m", &[]);
        assert_eq!(t.outcome, Outcome::Returned(vec![1]));
    }

    #[test]
    fn div_by_zero_traps() {
        let t = exec("(module (func $m (result i32) i32.const 1 i32.const 0 i32.div_s))", "$m", &[]);
        assert_eq!(t.outcome, Outcome::Trapped(Trap::DivByZero));
        let t = exec("(module (func $m (result i32) i32.const 1 i32.const 0 i32.rem_s))", "$m", &[]);
        assert_eq!(t.outcome, Outcome::Trapped(Trap::DivByZero));
        let t = exec("(module (func $m (result i32) i32.const -2147483648 i32.const -1 i32.div_s))", "$m", &[]);
        assert_eq!(t.outcome, Outcome::Trapped(Trap::Overflow));
    }

    #[test]
    fn locals_and_globals() {
        let t = exec("(module (func $m (param i32) (result i32) local.get 0))", "$m", &[9]);
        assert_eq!(t.outcome, Outcome::Returned(vec![9]));
        let src = "(module (global $g (mut i32) (i32.const 0))
            (func $m (result i32) i32.const 4 global.set $g global.get $g))";
        assert_eq!(exec(src, "$m", &[]).outcome, Outcome::Returned(vec![4]));
    }

    /// `local.tee i` leaves the same memory as `local.set i; local.get i`, over small states.
    #[test]
    fn tee_is_set_then_get() {
        let m = load("(module (func $f (param i32 i32)))").unwrap();
        let values = [-1, 0, 1, 7];
        for &a in &values {
            for &b in &values {
                for &top in &values {
                    for i in 0..2 {
                        let mut base = Machine::new(&m, &RunConfig::default());
                        base.enter(FuncIdx(0), &[a, b]);
                        base.memory_mut().push(99);
                        base.memory_mut().push(top);
                        let mut tee = base.clone();
                        tee.step_local_tee(i);
                        let mut set_get = base.clone();
                        set_get.step_local_set(i);
                        set_get.step_local_get(i);
                        assert_eq!(tee.memory(), set_get.memory());
                        assert_eq!(tee.memory().loc[i as usize], top);
                    }
                }
            }
        }
    }

    #[test]
    fn step_unop_and_binop_pop_counts() {
        let m = load("(module (func $f))").unwrap();
        let mut mach = Machine::new(&m, &RunConfig::default());
        mach.enter(FuncIdx(0), &[]);
        mach.memory_mut().push_all(&[1, 7, 2]);
        mach.step_binop(BinopKind::Sub).unwrap();
        assert_eq!(mach.memory().values(), vec![1, 5]);
        mach.step_unop(UnopKind::Eqz);
        assert_eq!(mach.memory().values(), vec![1, 0]);
    }

    #[test]
    fn block_marker_is_removed_at_end() {
        let m = load("(module (func $f (result i32) (block (result i32) (i32.const 1))))").unwrap();
        let mut mach = Machine::new(&m, &RunConfig::default());
        mach.enter(FuncIdx(0), &[]);
        let outcome = mach.resume();
        assert_eq!(outcome, Outcome::Returned(vec![1]));
        assert!(mach.memory().sk.is_empty());
        assert_eq!(mach.call_depth(), 0);
    }

    #[test]
    fn divergent_loop_exhausts_fuel() {
        let m = load("(module (func $f (loop (br 0))))").unwrap();
        let t = run(&m, FuncIdx(0), &[], 1000).unwrap();
        assert_eq!(t.outcome, Outcome::FuelExhausted);
        assert_eq!(t.steps, 1000);
    }

    #[test]
    fn counting_loop_reaches_three() {
        let src = "(module (func $f (result i32) (local $i i32)
            (loop $l
              (local.set $i (i32.add (local.get $i) (i32.const 1)))
              (br_if $l (i32.lt_s (local.get $i) (i32.const 3))))
            (local.get $i)))";
        assert_eq!(exec(src, "$f", &[]).outcome, Outcome::Returned(vec![3]));
    }

    #[test]
    fn br_if_zero_falls_through_and_nonzero_branches() {
        let src = "(module (func $f (param i32) (result i32)
            (block $b (result i32)
              (br_if $b (i32.const 10) (local.get 0))
              drop
              (i32.const 20))))";
        assert_eq!(exec(src, "$f", &[0]).outcome, Outcome::Returned(vec![20]));
        assert_eq!(exec(src, "$f", &[42]).outcome, Outcome::Returned(vec![10]));
    }

    /// A branch out of two nested blocks leaves the stack at the outer block's entry
    /// height plus its arity, whatever the inner blocks had pushed.
    #[test]
    fn br_unwinds_nested_blocks() {
        for extra_outer in 0..3 {
            for extra_inner in 0..3 {
                for depth in 0..2u32 {
                    let pushes = |n: usize| "(i32.const 5) ".repeat(n);
                    let drop_all = |n: usize| "drop ".repeat(n);
                    let src = format!(
                        "(module (func $f (result i32)
                           (i32.const 100)
                           (block $outer (result i32)
                             {}
                             (block $inner (result i32)
                               {}
                               (br {depth} (i32.const 7)))
                             (drop)
                             {}
                             (i32.const 8))
                           (i32.add)))",
                        pushes(extra_outer),
                        pushes(extra_inner),
                        drop_all(extra_outer),
                    );
                    let m = load(&src).unwrap();
                    let mut mach = Machine::new(&m, &RunConfig::default());
                    mach.enter(FuncIdx(0), &[]);
                    let outcome = mach.resume();
                    // br 1 exits $outer with 7; br 0 exits $inner, which is dropped, then 8
                    let expected = if depth == 1 { 107 } else { 108 };
                    assert_eq!(outcome, Outcome::Returned(vec![expected]), "{src}");
                    assert!(mach.memory().sk.is_empty());
                }
            }
        }
    }

    #[test]
    fn factorial_recursion() {
        let src = "(module (func $fact (export \"fact\") (param i32) (result i32)
            (if (result i32) (i32.le_s (local.get 0) (i32.const 1))
              (then (i32.const 1))
              (else (i32.mul (local.get 0) (call $fact (i32.sub (local.get 0) (i32.const 1))))))))";
        let t = exec(src, "fact", &[3]);
        assert_eq!(t.outcome, Outcome::Returned(vec![6]));
        assert_eq!(t.edges.len(), 1);
        let e = *t.edges.iter().next().unwrap();
        assert_eq!((e.caller, e.callee), (FuncIdx(0), FuncIdx(0)));
        assert_eq!(t.log.len(), 2);
    }

    #[test]
    fn indirect_traps() {
        let src = "(module (type $v (func)) (type $r (func (result i32)))
            (table 3 funcref) (elem (i32.const 0) $a $b)
            (func $m (param i32) (call_indirect (type $v) (local.get 0)))
            (func $a) (func $b (result i32) (i32.const 1)))";
        assert_eq!(exec(src, "$m", &[7]).outcome, Outcome::Trapped(Trap::TableOutOfBounds { index: 7, size: 3 }));
        assert_eq!(exec(src, "$m", &[-1]).outcome, Outcome::Trapped(Trap::TableOutOfBounds { index: -1, size: 3 }));
        assert_eq!(exec(src, "$m", &[2]).outcome, Outcome::Trapped(Trap::UndefinedTableEntry { index: 2 }));
        assert_eq!(
            exec(src, "$m", &[1]).outcome,
            Outcome::Trapped(Trap::TypeMismatch { index: 1, callee: FuncIdx(2) })
        );
        let ok = exec(src, "$m", &[0]);
        assert_eq!(ok.outcome, Outcome::Returned(vec![]));
        assert_eq!(ok.edges.len(), 1);
    }

    #[test]
    fn imports_cycle_stub_values() {
        let src = r#"(module (import "env" "h" (func $h (result i32)))
            (func $m (result i32) (i32.add (call $h) (i32.mul (call $h) (i32.const 10)))))"#;
        let m = load(src).unwrap();
        let cfg = RunConfig { import_values: vec![3, 4], ..RunConfig::default() };
        let t = run_with(&m, FuncIdx(1), &[], &cfg).unwrap();
        assert_eq!(t.outcome, Outcome::Returned(vec![43]));
        assert_eq!(t.edges, BTreeSet::from([edge(1, 0, 0), edge(1, 0, 1)]));
    }

    #[test]
    fn start_runs_before_entry() {
        let src = "(module (global $g (mut i32) (i32.const 0))
            (func $init (global.set $g (i32.const 5)))
            (func $m (result i32) (global.get $g))
            (start $init))";
        assert_eq!(exec(src, "$m", &[]).outcome, Outcome::Returned(vec![5]));
    }

    #[test]
    fn rejects_wrong_arity() {
        let m = load("(module (func $f (param i32)))").unwrap();
        assert_eq!(run(&m, FuncIdx(0), &[], 10), Err(RunError::ArgCount { expected: 1, got: 0 }));
    }

    #[test]
    fn runs_are_deterministic() {
        let src = "(module (type $t (func (param i32) (result i32)))
            (table funcref (elem $a $b))
            (func $a (type $t) (i32.add (local.get 0) (i32.const 1)))
            (func $b (type $t) (call_indirect (type $t) (local.get 0) (i32.const 0)))
            (func $m (param i32) (result i32) (call_indirect (type $t) (local.get 0) (local.get 0))))";
        let m = load(src).unwrap();
        for x in 0..2 {
            assert_eq!(run(&m, FuncIdx(2), &[x], 100).unwrap(), run(&m, FuncIdx(2), &[x], 100).unwrap());
        }
    }
}
