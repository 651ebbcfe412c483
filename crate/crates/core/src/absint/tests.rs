use super::*;
use crate::concrete;
use crate::domain::Num;
use crate::frontend::load;

fn run(src: &str, cfg: &AnalysisConfig) -> (ValidatedModule, AnalysisResult) {
    let m = load(src).unwrap();
    let r = analyze(&m, cfg);
    (m, r)
}

fn default(src: &str) -> (ValidatedModule, AnalysisResult) {
    run(src, &AnalysisConfig::default())
}

fn pairs(r: &AnalysisResult) -> Vec<(u32, u32)> {
    let mut v: Vec<(u32, u32)> = r.edges().iter().map(|e| (e.caller.0, e.callee.0)).collect();
    v.dedup();
    v
}

fn callees(r: &AnalysisResult, func: u32, ordinal: u32) -> Vec<u32> {
    r.sites[&SiteId { func: FuncIdx(func), ordinal }].callees.iter().map(|f| f.0).collect()
}

fn only_indirect_site(m: &ValidatedModule, r: &AnalysisResult) -> CalleeSet {
    let ir_sites: Vec<&CalleeSet> = r.sites.values().filter(|s| s.indirect).collect();
    assert_eq!(ir_sites.len(), 1, "{:?}", m.module().exports);
    ir_sites[0].clone()
}

const TWO_TARGETS: &str = r#"
  (type $t (func (result i32)))
  (table funcref (elem $f $g))
  (func $f (type $t) (i32.const 10))
  (func $g (type $t) (i32.const 20))"#;

#[test]
fn direct_chain() {
    let (_, r) = default(
        r#"(module
             (func $main (export "main") (call $f))
             (func $f (call $g))
             (func $g))"#,
    );
    assert_eq!(pairs(&r), vec![(0, 1), (1, 2)]);
    assert_eq!(r.reached, BTreeSet::from([FuncIdx(0), FuncIdx(1), FuncIdx(2)]));
}

#[test]
fn constant_index_resolves_one_slot() {
    let src = format!(
        r#"(module {TWO_TARGETS}
             (func $main (export "main") (result i32) (call_indirect (type $t) (i32.const 1))))"#
    );
    let (m, r) = default(&src);
    let site = only_indirect_site(&m, &r);
    assert_eq!(site.callees, BTreeSet::from([FuncIdx(1)]));
    assert!(!site.fallback);
    let exit = r.exit(FuncIdx(2)).unwrap();
    assert_eq!(exit.values().next().unwrap().num, Num::singleton(20));
}

#[test]
fn joined_local_reaches_both_slots() {
    let src = format!(
        r#"(module {TWO_TARGETS}
             (func $main (export "main") (param $x i32) (result i32) (local $i i32)
               (if (local.get $x)
                 (then (local.set $i (i32.const 0)))
                 (else (local.set $i (i32.const 1))))
               (call_indirect (type $t) (local.get $i))))"#
    );
    let (m, r) = default(&src);
    assert_eq!(only_indirect_site(&m, &r).callees, BTreeSet::from([FuncIdx(0), FuncIdx(1)]));
    // both concrete paths agree
    for x in [0, 1] {
        let t = concrete::run(&m, FuncIdx(2), &[x], 1000).unwrap();
        assert!(t.edges.iter().all(|e| r.edges().contains(e)));
    }
}

#[test]
fn branch_filter_narrows_index() {
    // only the taken side of the comparison reaches the call
    let src = format!(
        r#"(module {TWO_TARGETS}
             (func $main (export "main") (param $x i32) (result i32)
               (block $out
                 (br_if $out (i32.ne (local.get $x) (i32.const 1)))
                 (return (call_indirect (type $t) (local.get $x))))
               (i32.const 0)))"#
    );
    let (m, r) = default(&src);
    assert_eq!(only_indirect_site(&m, &r).callees, BTreeSet::from([FuncIdx(1)]));
}

#[test]
fn filter_through_if_but_not_on_unsupported_conditions() {
    let src = |cond: &str| {
        format!(
            r#"(module {TWO_TARGETS}
                 (func $main (export "main") (param $x i32) (result i32)
                   (if (result i32) {cond}
                     (then (call_indirect (type $t) (local.get $x)))
                     (else (i32.const 0)))))"#
        )
    };
    let (m, r) = default(&src("(i32.lt_u (local.get $x) (i32.const 2))"));
    let site = only_indirect_site(&m, &r);
    assert!(!site.fallback);
    assert_eq!(site.callees.len(), 2);
    let (m, r) = default(&src("(i32.and (local.get $x) (i32.const 1))"));
    assert!(only_indirect_site(&m, &r).fallback);
}

#[test]
fn top_index_falls_back_to_matching_types() {
    let (m, r) = default(
        r#"(module
             (type $t1 (func (result i32)))
             (type $t2 (func (param i32) (result i32)))
             (table funcref (elem $f $g $h))
             (func $f (type $t1) (i32.const 1))
             (func $g (type $t1) (i32.const 2))
             (func $h (type $t2) (local.get 0))
             (func $main (export "main") (param i32) (result i32)
               (call_indirect (type $t1) (local.get 0))))"#,
    );
    let site = only_indirect_site(&m, &r);
    assert!(site.fallback);
    assert_eq!(site.callees, BTreeSet::from([FuncIdx(0), FuncIdx(1)]));
    assert!(!r.reached.contains(&FuncIdx(2)));
}

#[test]
fn certain_trap_cuts_the_path() {
    let src = format!(
        r#"(module {TWO_TARGETS}
             (func $after)
             (func $main (export "main") (result i32)
               (call_indirect (type $t) (i32.const 5))
               (call $after)))"#
    );
    let (m, r) = default(&src);
    assert!(only_indirect_site(&m, &r).callees.is_empty());
    assert!(!r.reached.contains(&FuncIdx(2)));
    assert_eq!(r.exit(FuncIdx(3)).unwrap(), &AbstractMemory::bottom());
}

#[test]
fn counting_loop_index_stays_precise() {
    let (m, r) = default(
        r#"(module
             (type $t (func))
             (table funcref (elem $a $b $c $d))
             (func $a) (func $b) (func $c) (func $d)
             (func $main (export "main") (local $i i32)
               (loop $again
                 (call_indirect (type $t) (local.get $i))
                 (local.set $i (i32.add (local.get $i) (i32.const 1)))
                 (br_if $again (i32.lt_s (local.get $i) (i32.const 3))))))"#,
    );
    let site = only_indirect_site(&m, &r);
    assert_eq!(site.callees, BTreeSet::from([FuncIdx(0), FuncIdx(1), FuncIdx(2)]));
    assert!(!site.fallback);
    let t = concrete::run(&m, FuncIdx(4), &[], 1000).unwrap();
    assert_eq!(t.edges.len(), 3);
}

#[test]
fn unbounded_loop_widens_and_terminates() {
    let (m, r) = default(
        r#"(module
             (type $t (func))
             (table funcref (elem $a $b))
             (func $a) (func $b)
             (func $main (export "main") (local $i i32)
               (loop $again
                 (call_indirect (type $t) (local.get $i))
                 (local.set $i (i32.add (local.get $i) (i32.const 1)))
                 (br $again))))"#,
    );
    let site = only_indirect_site(&m, &r);
    assert!(site.fallback);
    assert_eq!(site.callees.len(), 2);
    assert!(r.iterations < 500, "{} iterations", r.iterations);
}

#[test]
fn recursion_terminates() {
    let (_, r) = default(
        r#"(module
             (func $fact (export "fact") (param $n i32) (result i32)
               (if (result i32) (i32.le_s (local.get $n) (i32.const 1))
                 (then (i32.const 1))
                 (else (i32.mul (local.get $n) (call $fact (i32.sub (local.get $n) (i32.const 1)))))))
             (func $even (export "even") (param i32) (result i32)
               (if (result i32) (i32.eqz (local.get 0))
                 (then (i32.const 1))
                 (else (call $odd (i32.sub (local.get 0) (i32.const 1))))))
             (func $odd (param i32) (result i32)
               (if (result i32) (i32.eqz (local.get 0))
                 (then (i32.const 0))
                 (else (call $even (i32.sub (local.get 0) (i32.const 1)))))))"#,
    );
    assert_eq!(pairs(&r), vec![(0, 0), (1, 2), (2, 1)]);
    assert!(r.exit(FuncIdx(0)).unwrap().values().next().unwrap().num.contains(6));
}

#[test]
fn imported_callee_yields_top() {
    let (_, r) = default(
        r#"(module
             (import "env" "h" (func $h (result i32)))
             (func $main (export "main") (result i32) (call $h)))"#,
    );
    assert_eq!(pairs(&r), vec![(1, 0)]);
    assert!(r.reached.contains(&FuncIdx(0)));
    assert_eq!(r.exit(FuncIdx(1)).unwrap().values().next().unwrap().num, Num::Top);
}

#[test]
fn if_arms_join_at_exit() {
    let body = |then: &str, els: &str| {
        format!(
            r#"(module (func $main (export "main") (param $x i32) (result i32) (local $y i32)
                 (if (local.get $x) (then {then}) (else {els}))
                 (local.get $y)))"#
        )
    };
    let (_, r) = default(&body("(local.set $y (i32.const 0))", "(local.set $y (i32.const 1))"));
    let exit = r.exit(FuncIdx(0)).unwrap();
    assert_eq!(exit.values().next().unwrap().num, Num::Set([0, 1].into()));

    let arm = "(local.set $y (i32.const 7))";
    let (_, both) = default(&body(arm, arm));
    let (_, single) =
        default("(module (func $main (export \"main\") (param $x i32) (result i32) (local $y i32) (local.set $y (i32.const 7)) (local.get $y)))");
    assert_eq!(both.exit(FuncIdx(0)), single.exit(FuncIdx(0)));
}

#[test]
fn dead_code_after_br_emits_nothing() {
    let (_, r) = default(
        r#"(module
             (func $main (export "main")
               (block $b (br $b) (call $f)))
             (func $f))"#,
    );
    assert!(r.sites.is_empty());
    assert!(!r.reached.contains(&FuncIdx(1)));
}

#[test]
fn straight_line_singletons() {
    let (m, r) = default(
        r#"(module
             (global $g (mut i32) (i32.const 3))
             (func $main (export "main") (result i32)
               (global.set $g (i32.mul (global.get $g) (i32.const 7)))
               (i32.sub (global.get $g) (i32.const 1))))"#,
    );
    let exit = r.exit(FuncIdx(0)).unwrap();
    let t = concrete::run(&m, FuncIdx(0), &[], 100).unwrap();
    assert_eq!(t.outcome, concrete::Outcome::Returned(vec![20]));
    assert_eq!(exit.values().next().unwrap().num, Num::singleton(20));
}

#[test]
fn entry_args_pin_parameters() {
    let src = "(module (func $main (export \"main\") (param i32) (result i32) (i32.add (local.get 0) (i32.const 1))))";
    let cfg =
        AnalysisConfig { entry_args: BTreeMap::from([(FuncIdx(0), vec![Num::singleton(4)])]), ..Default::default() };
    let (_, r) = run(src, &cfg);
    assert_eq!(r.exit(FuncIdx(0)).unwrap().values().next().unwrap().num, Num::singleton(5));
}

#[test]
fn call_context_separates_returns() {
    let src = format!(
        r#"(module {TWO_TARGETS}
             (func $id (param i32) (result i32) (local.get 0))
             (func $main (export "main") (result i32)
               (drop (call_indirect (type $t) (call $id (i32.const 0))))
               (call_indirect (type $t) (call $id (i32.const 1)))))"#
    );
    let (_, r0) = default(&src);
    assert_eq!(callees(&r0, 3, 2), vec![0, 1]);
    let (_, r1) = run(&src, &AnalysisConfig { context_depth: 1, ..Default::default() });
    assert_eq!(callees(&r1, 3, 2), vec![0]);
    assert_eq!(callees(&r1, 3, 6), vec![1]);
}

#[test]
fn start_globals_reach_exports() {
    let src = format!(
        r#"(module {TWO_TARGETS}
             (global $sel (mut i32) (i32.const 0))
             (func $init (global.set $sel (i32.const 1)))
             (start $init)
             (func $main (export "main") (result i32) (call_indirect (type $t) (global.get $sel))))"#
    );
    let (m, r) = default(&src);
    let site = only_indirect_site(&m, &r);
    assert!(site.callees.contains(&FuncIdx(1)));
    let t = concrete::run(&m, FuncIdx(3), &[], 100).unwrap();
    assert!(t.edges.iter().all(|e| r.edges().contains(e)));
}

#[test]
fn open_tables_add_roots() {
    let src = r#"(module
         (type $t (func))
         (table (export "tbl") funcref (elem $f))
         (func $f (call $g))
         (func $g)
         (func $main (export "main")))"#;
    let (_, closed) = default(src);
    assert!(closed.sites.is_empty());
    let (_, open) = run(src, &AnalysisConfig { open_tables: true, ..Default::default() });
    assert_eq!(open.roots, vec![FuncIdx(0), FuncIdx(2)]);
    assert_eq!(pairs(&open), vec![(0, 1)]);
}

#[test]
fn analysis_is_deterministic() {
    let src = format!(
        r#"(module {TWO_TARGETS}
             (func $main (export "main") (param i32) (result i32) (call_indirect (type $t) (local.get 0))))"#
    );
    assert_eq!(default(&src).1, default(&src).1);
}
