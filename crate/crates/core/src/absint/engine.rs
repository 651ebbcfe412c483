use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::domain::{
    concretize_indices, AbsSlot, AbstractBool, AbstractMemory, AbstractTable, AbstractValue, Domain, Indices, Num,
    SymExpr,
};
use crate::frontend::{FuncCode, FuncIdx, LabelId, LabelKind, Op, Target, UnopKind, ValidatedModule};
use crate::site::SiteId;

use super::cache::{accumulate, FunctionSummaryCache, Summary, Unit};
use super::{resolve_roots, AnalysisConfig, AnalysisResult, CalleeSet};

struct UnitState<'m> {
    unit: Unit,
    code: &'m FuncCode,
    states: Vec<AbstractMemory>,
    visits: Vec<u32>,
}

pub(super) struct Engine<'m> {
    m: &'m ValidatedModule,
    cfg: &'m AnalysisConfig,
    d: Domain,
    roots: Vec<FuncIdx>,
    table: AbstractTable,
    loop_heads: BTreeMap<FuncIdx, BTreeSet<usize>>,
    units: Vec<UnitState<'m>>,
    index: BTreeMap<Unit, usize>,
    cache: FunctionSummaryCache,
    worklist: BTreeSet<(usize, usize)>,
    root_globals: Vec<Num>,
    sites: BTreeMap<SiteId, CalleeSet>,
    imports_called: BTreeSet<FuncIdx>,
    iterations: u64,
}

/// Where control goes after one op.
enum Succ {
    At(usize, AbstractMemory),
    Exit(AbstractMemory),
}

impl<'m> Engine<'m> {
    pub(super) fn new(m: &'m ValidatedModule, cfg: &'m AnalysisConfig) -> Self {
        let d = Domain::new(cfg.k);
        let ir = m.module();
        let table: Vec<BTreeSet<FuncIdx>> =
            ir.table.iter().flat_map(|t| t.entries.iter()).map(|e| e.iter().copied().collect()).collect();
        let loop_heads = m
            .all_code()
            .iter()
            .map(|c| {
                let heads = c.labels.iter().filter(|l| l.kind == LabelKind::Loop).map(|l| l.start_pc).collect();
                (c.func, heads)
            })
            .collect();
        Engine {
            m,
            cfg,
            d,
            roots: resolve_roots(m, cfg),
            table: Arc::new(table),
            loop_heads,
            units: Vec::new(),
            index: BTreeMap::new(),
            cache: FunctionSummaryCache::new(d, cfg.widen_delay),
            worklist: BTreeSet::new(),
            root_globals: ir.globals.iter().map(|g| Num::singleton(g.init)).collect(),
            sites: BTreeMap::new(),
            imports_called: BTreeSet::new(),
            iterations: 0,
        }
    }

    pub(super) fn run(mut self) -> AnalysisResult {
        self.enter_roots();
        while let Some(item) = self.worklist.pop_first() {
            self.iterations += 1;
            self.process(item);
        }
        self.finish()
    }

    fn enter_roots(&mut self) {
        for f in self.roots.clone() {
            let Some(code) = self.m.code(f) else { continue };
            let params = match self.cfg.entry_args.get(&f) {
                Some(args) => {
                    assert_eq!(args.len(), code.params as usize, "entry arguments for {f} have the wrong arity");
                    args.clone()
                }
                None => vec![Num::Top; code.params as usize],
            };
            for globals in self.root_entry_globals(f) {
                let entry = self.entry_memory(code, params.clone(), globals);
                self.offer_entry((f, None), &entry);
            }
        }
    }

    /// Globals a root may start with: the initial values for the start
    /// function, the start function's exit for everything called afterwards.
    fn root_entry_globals(&self, f: FuncIdx) -> Vec<Vec<Num>> {
        if self.cfg.reentrant {
            return vec![self.root_globals.clone()];
        }
        let ir = self.m.module();
        let init: Vec<Num> = ir.globals.iter().map(|g| Num::singleton(g.init)).collect();
        let Some(start) = ir.start.filter(|s| self.m.code(*s).is_some()) else {
            return vec![init];
        };
        let mut out = Vec::new();
        if f == start {
            out.push(init);
            if !ir.exported_funcs().any(|e| e == f) && self.cfg.roots.is_none() {
                return out;
            }
        }
        if let Some(s) = self.cache.get(&(start, None)).filter(|s| !s.exit.is_bottom()) {
            out.push(s.exit.globals.clone());
        }
        out
    }

    fn entry_memory(&self, code: &FuncCode, params: Vec<Num>, globals: Vec<Num>) -> AbstractMemory {
        let mut locals = params;
        locals.resize(code.locals as usize, Num::singleton(0));
        AbstractMemory::new(globals, self.table.clone(), locals)
    }

    fn unit_id(&mut self, u: Unit) -> usize {
        if let Some(&i) = self.index.get(&u) {
            return i;
        }
        let code = self.m.code(u.0).expect("only defined functions are analysed");
        let n = code.ops.len() + 1;
        self.units.push(UnitState { unit: u, code, states: vec![AbstractMemory::bottom(); n], visits: vec![0; n] });
        self.index.insert(u, self.units.len() - 1);
        self.units.len() - 1
    }

    fn offer_entry(&mut self, u: Unit, entry: &AbstractMemory) {
        if let Some(next) = self.cache.offer_entry(u, entry) {
            let id = self.unit_id(u);
            self.units[id].states[0] = next;
            self.worklist.insert((id, 0));
        }
    }

    fn propagate(&mut self, id: usize, pc: usize, mem: AbstractMemory) {
        if mem.is_bottom() {
            return;
        }
        let unit = &mut self.units[id];
        let is_head = self.loop_heads[&unit.unit.0].contains(&pc);
        let old = &unit.states[pc];
        let next = if is_head {
            accumulate(&self.d, old, &mem, &mut unit.visits[pc], self.cfg.widen_delay)
        } else if mem.leq(old) {
            None
        } else {
            Some(
                self.d
                    .join_mem(old, &mem)
                    .unwrap_or_else(|e| panic!("analyzer invariant broken in {} at pc {pc}: {e}", unit.unit.0)),
            )
        };
        if let Some(next) = next {
            unit.states[pc] = next;
            self.worklist.insert((id, pc));
        }
    }

    fn exit(&mut self, id: usize, mut mem: AbstractMemory) {
        let unit = self.units[id].unit;
        let results = mem.pop_n(self.units[id].code.results);
        let mut exit = AbstractMemory::new(mem.globals.clone(), self.table.clone(), Vec::new());
        for v in results {
            let n = mem.force(&self.d, &v).expect("stack values are forced nonempty");
            exit.push(AbstractValue::of(n));
        }
        let Some(dependents) = self.cache.offer_exit(unit, &exit) else { return };
        self.worklist.extend(dependents);
        if unit.1.is_none() && self.roots.contains(&unit.0) {
            if self.cfg.reentrant {
                self.grow_root_globals(&exit.globals);
            } else if self.m.module().start == Some(unit.0) {
                self.enter_roots();
            }
        }
    }

    fn grow_root_globals(&mut self, globals: &[Num]) {
        let joined: Vec<Num> = self.root_globals.iter().zip(globals).map(|(a, b)| self.d.join(a, b)).collect();
        if joined == self.root_globals {
            return;
        }
        self.root_globals = joined;
        self.enter_roots();
    }

    fn process(&mut self, (id, pc): (usize, usize)) {
        let mem = self.units[id].states[pc].clone();
        if mem.is_bottom() {
            return;
        }
        let code = self.units[id].code;
        let succs = if pc == code.ops.len() { vec![Succ::Exit(mem)] } else { self.step(id, pc, code.ops[pc], mem) };
        for s in succs {
            match s {
                Succ::At(to, m) => self.propagate(id, to, m),
                Succ::Exit(m) if !m.is_bottom() => self.exit(id, m),
                Succ::Exit(_) => {}
            }
        }
    }

    fn step(&mut self, id: usize, pc: usize, op: Op, mut m: AbstractMemory) -> Vec<Succ> {
        let code = self.units[id].code;
        let d = self.d;
        let next = pc + 1;
        match op {
            Op::Const(c) => m.push(AbstractValue::constant(c)),
            Op::Unop(k) => {
                let v = m.pop();
                let Some(n) = m.force(&d, &v) else { return Vec::new() };
                let r = d.unop(k, &n);
                match (&v.expr, k) {
                    (Some(e), UnopKind::Eqz) => m.push(AbstractValue::with_expr(r, SymExpr::Eqz(e.clone()))),
                    _ => m.push(AbstractValue::of(r)),
                }
            }
            Op::Binop(k) => {
                let (l, r) = m.pop_twice();
                let (Some(ln), Some(rn)) = (m.force(&d, &l), m.force(&d, &r)) else { return Vec::new() };
                let Some(res) = d.binop(k, &ln, &rn) else { return Vec::new() };
                match (SymExpr::is_lazy_binop(k), operand(&l, &ln), operand(&r, &rn)) {
                    (true, Some(a), Some(b)) => m.push(AbstractValue::with_expr(res, SymExpr::Arith(k, a, b))),
                    _ => m.push(AbstractValue::of(res)),
                }
            }
            Op::Relop(k) => {
                let (l, r) = m.pop_twice();
                let (Some(ln), Some(rn)) = (m.force(&d, &l), m.force(&d, &r)) else { return Vec::new() };
                let res = d.relop(k, &ln, &rn);
                match (operand(&l, &ln), operand(&r, &rn)) {
                    (Some(a), Some(b)) => m.push(AbstractValue::with_expr(res, SymExpr::Compare(k, a, b))),
                    _ => m.push(AbstractValue::of(res)),
                }
            }
            Op::LocalGet(i) => m.push(AbstractValue::with_expr(m.locals[i as usize].clone(), SymExpr::Local(i))),
            Op::LocalSet(i) => {
                let v = m.pop();
                m.set_local(&d, i, &v);
            }
            Op::LocalTee(i) => {
                let v = m.pop();
                m.set_local(&d, i, &v);
                if !m.is_bottom() {
                    m.push(AbstractValue::with_expr(m.locals[i as usize].clone(), SymExpr::Local(i)));
                }
            }
            Op::GlobalGet(i) => m.push(AbstractValue::with_expr(m.globals[i as usize].clone(), SymExpr::Global(i))),
            Op::GlobalSet(i) => {
                let v = m.pop();
                m.set_global(&d, i, &v);
            }
            Op::Drop => {
                m.pop();
            }
            Op::Nop => {}
            Op::Enter(l) => m.stack.push(AbsSlot::Label(l)),
            Op::If { label, else_pc } => {
                let c = m.pop();
                let b = AbstractBool::of(&c);
                let mut out = Vec::new();
                for (positive, to) in [(true, next), (false, else_pc)] {
                    if b.may_be(positive) {
                        let mut arm = d.filter(b.expr.as_deref(), positive, &m);
                        if !arm.is_bottom() {
                            arm.stack.push(AbsSlot::Label(label));
                        }
                        out.push(Succ::At(to, arm));
                    }
                }
                return out;
            }
            Op::Else(l) => return vec![Succ::At(code.label(l).exit_pc - 1, m)],
            Op::End(l) => {
                let vals = m.pop_n(code.label(l).results);
                match m.stack.pop() {
                    Some(AbsSlot::Label(x)) if x == l => {}
                    other => panic!("expected marker of label {l}, found {other:?}"),
                }
                for v in vals {
                    m.push(v);
                }
            }
            Op::Br(t) => return vec![branch(code, t, m)],
            Op::BrIf(t) => {
                let c = m.pop();
                let b = AbstractBool::of(&c);
                let mut out = Vec::new();
                if b.may_be(true) {
                    let taken = d.filter(b.expr.as_deref(), true, &m);
                    if !taken.is_bottom() {
                        out.push(branch(code, t, taken));
                    }
                }
                if b.may_be(false) {
                    out.push(Succ::At(next, d.filter(b.expr.as_deref(), false, &m)));
                }
                return out;
            }
            Op::Return => return vec![Succ::Exit(m)],
            Op::Call { func, site } => {
                let sid = SiteId { func: code.func, ordinal: site };
                let entry = self.sites.entry(sid).or_default();
                entry.callees.insert(func);
                return self.call(id, pc, sid, &[func], m).into_iter().map(|m| Succ::At(next, m)).collect();
            }
            Op::CallIndirect { type_index, site } => {
                let sid = SiteId { func: code.func, ordinal: site };
                let v = m.pop();
                let Some(idx) = m.force(&d, &v) else { return Vec::new() };
                let ir = self.m.module();
                let expected = ir.types[type_index as usize];
                let (candidates, fallback) = match concretize_indices(&idx, &m.table) {
                    Indices::Funcs(fs) => (fs, false),
                    Indices::TooWide => (m.table.iter().flatten().copied().collect(), true),
                };
                let callees: Vec<FuncIdx> =
                    candidates.into_iter().filter(|&f| ir.func_type(f) == Some(expected)).collect();
                let entry = self.sites.entry(sid).or_default();
                entry.indirect = true;
                entry.fallback |= fallback;
                entry.callees.extend(callees.iter().copied());
                return self.call(id, pc, sid, &callees, m).into_iter().map(|m| Succ::At(next, m)).collect();
            }
        }
        vec![Succ::At(next, m)]
    }

    /// Memory after calling any of `callees` from `m`, arguments still on the
    /// stack; `None` while no callee has a known exit.
    fn call(
        &mut self,
        id: usize,
        pc: usize,
        site: SiteId,
        callees: &[FuncIdx],
        mut m: AbstractMemory,
    ) -> Option<AbstractMemory> {
        let ty = self.m.module().func_type(*callees.first()?).expect("callees are valid functions");
        let args = m.pop_n(ty.params);
        let mut params = Vec::with_capacity(args.len());
        for a in &args {
            params.push(m.force(&self.d, a)?);
        }
        m.forget_globals(&self.d);
        if m.is_bottom() {
            return None;
        }
        let context = (self.cfg.context_depth > 0).then_some(site);
        let mut out = AbstractMemory::bottom();
        for &f in callees {
            let after = match self.m.code(f) {
                None => {
                    self.imports_called.insert(f);
                    let mut after = m.clone();
                    for _ in 0..ty.results {
                        after.push(AbstractValue::top());
                    }
                    Some(after)
                }
                Some(code) => {
                    let unit = (f, context);
                    let entry = self.entry_memory(code, params.clone(), m.globals.clone());
                    self.offer_entry(unit, &entry);
                    self.cache.depend(unit, (id, pc));
                    let exit = &self.cache.get(&unit).expect("entry was offered").exit;
                    (!exit.is_bottom()).then(|| {
                        let mut after = m.clone();
                        after.globals = exit.globals.clone();
                        for v in exit.values() {
                            after.push(v.clone());
                        }
                        after
                    })
                }
            };
            if let Some(after) = after {
                out = self.d.join_mem(&out, &after).unwrap_or_else(|e| panic!("analyzer invariant broken: {e}"));
            }
        }
        (!out.is_bottom()).then_some(out)
    }

    fn finish(self) -> AnalysisResult {
        let mut summaries: BTreeMap<FuncIdx, Summary> = BTreeMap::new();
        for ((f, _), s) in self.cache.iter() {
            if s.entry.is_bottom() {
                continue;
            }
            let joined = match summaries.remove(f) {
                None => s.clone(),
                Some(prev) => Summary {
                    entry: self.d.join_mem(&prev.entry, &s.entry).expect("entries of one function agree in shape"),
                    exit: self.d.join_mem(&prev.exit, &s.exit).expect("exits of one function agree in shape"),
                },
            };
            summaries.insert(*f, joined);
        }
        let mut reached: BTreeSet<FuncIdx> = summaries.keys().copied().collect();
        reached.extend(self.imports_called.iter().copied());
        AnalysisResult { sites: self.sites, reached, roots: self.roots, summaries, iterations: self.iterations }
    }
}

/// The expression to record for an operand: its own, or its value when that
/// is a single constant.
fn operand(v: &AbstractValue, n: &Num) -> Option<Arc<SymExpr>> {
    v.expr.clone().or_else(|| n.as_singleton().map(|c| Arc::new(SymExpr::Literal(c))))
}

fn branch(code: &FuncCode, t: Target, mut m: AbstractMemory) -> Succ {
    let l: LabelId = match t {
        Target::Function => return Succ::Exit(m),
        Target::Label(l) => l,
    };
    let info = code.label(l);
    let vals = m.pop_n(info.arity);
    let pos = m
        .stack
        .iter()
        .rposition(|s| *s == AbsSlot::Label(l))
        .unwrap_or_else(|| panic!("branch to label {l} without its marker"));
    m.stack.truncate(if info.kind == LabelKind::Loop { pos + 1 } else { pos });
    for v in vals {
        m.push(v);
    }
    Succ::At(info.branch_pc(), m)
}
