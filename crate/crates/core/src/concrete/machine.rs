//! The continuation-style interpreter, realized as an explicit state machine.
//!
//! The continuation χ of the current instruction is the next program counter
//! of the current function; label bindings in ρ pair a [`Transformation`]
//! with the program counter a branch resumes at, and each call frame in κ
//! keeps the caller's continuation, environment and label map.

use std::collections::{BTreeMap, BTreeSet};

use crate::frontend::{FuncCode, FuncIdx, LabelId, LabelKind, Op, Target, ValidatedModule};
use crate::numeric::{eval_binop, eval_relop, eval_unop, ArithTrap};
use crate::site::CallEdge;

use super::memory::{intbool, ConcreteMemory, InstanceStamp, Slot, Store, Ticker};
use super::{ConcreteTrace, Outcome, RunConfig, Trap};

/// ε: where the in-context instance's locals live in the arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Environment {
    pub stamp: InstanceStamp,
    pub base: usize,
    pub count: u32,
}

impl Environment {
    /// Location of local `i` in `σ.loc`.
    pub fn local(&self, i: u32) -> usize {
        debug_assert!(i < self.count);
        self.base + i as usize
    }

    /// Location of global `i` in `σ.se.globals`; globals are shared by all instances.
    pub fn global(&self, i: u32) -> usize {
        i as usize
    }
}

/// τ: unwinds the operand stack to a label or frame boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transformation {
    /// Keep `keep` top values, discard everything above `label`'s marker, and
    /// drop the marker too unless the label is a loop.
    Unwind { label: LabelId, keep: u32, drop_marker: bool },
    /// Keep `keep` top values and truncate the stack to `base`.
    Return { base: usize, keep: u32 },
}

impl Transformation {
    pub fn apply(&self, mem: &mut ConcreteMemory) {
        match *self {
            Transformation::Unwind { label, keep, drop_marker } => {
                let kept = mem.pop_n(keep);
                loop {
                    match mem.sk.last() {
                        Some(Slot::Label(l)) if *l == label => break,
                        Some(_) => {
                            mem.sk.pop();
                        }
                        None => panic!("marker of label {label} missing from the stack"),
                    }
                }
                if drop_marker {
                    mem.sk.pop();
                }
                mem.push_all(&kept);
            }
            Transformation::Return { base, keep } => {
                let kept = mem.pop_n(keep);
                mem.sk.truncate(base);
                mem.push_all(&kept);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelBinding {
    pub tau: Transformation,
    /// Program counter the branch continues at.
    pub chi: usize,
}

/// ρ for the in-context frame.
pub type LabelMap = BTreeMap<LabelId, LabelBinding>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Continuation {
    pub func: FuncIdx,
    pub pc: usize,
}

/// One κ entry: where to continue after the callee returns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    /// `None` for the host's invocation of an entry point.
    pub ret: Option<Continuation>,
    pub env: Environment,
    pub tau: Transformation,
    pub rho: LabelMap,
}

enum Flow {
    Continue,
    Finished(Vec<i32>),
}

#[derive(Debug, Clone)]
pub struct Machine<'m> {
    module: &'m ValidatedModule,
    mem: ConcreteMemory,
    func: FuncIdx,
    pc: usize,
    env: Environment,
    rho: LabelMap,
    kappa: Vec<Frame>,
    ticker: Ticker,
    steps: u64,
    fuel: u64,
    import_values: Vec<i32>,
    import_calls: usize,
    edges: BTreeSet<CallEdge>,
    log: Vec<CallEdge>,
}

impl<'m> Machine<'m> {
    /// A fresh instance: globals at their initial values and the table filled.
    pub fn new(module: &'m ValidatedModule, config: &RunConfig) -> Self {
        let ir = module.module();
        let se = Store { globals: ir.globals.iter().map(|g| g.init).collect(), funtable: ir.table_entries().to_vec() };
        let import_values = if config.import_values.is_empty() { vec![0] } else { config.import_values.clone() };
        Machine {
            module,
            mem: ConcreteMemory { se, sk: Vec::new(), loc: Vec::new() },
            func: FuncIdx(0),
            pc: 0,
            env: Environment { stamp: InstanceStamp::default(), base: 0, count: 0 },
            rho: LabelMap::new(),
            kappa: Vec::new(),
            ticker: Ticker::default(),
            steps: 0,
            fuel: config.fuel,
            import_values,
            import_calls: 0,
            edges: BTreeSet::new(),
            log: Vec::new(),
        }
    }

    pub fn memory(&self) -> &ConcreteMemory {
        &self.mem
    }

    pub fn memory_mut(&mut self) -> &mut ConcreteMemory {
        &mut self.mem
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn call_depth(&self) -> usize {
        self.kappa.len()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn code(&self) -> &'m FuncCode {
        self.module.code(self.func).expect("in-context function is defined")
    }

    fn import_result(&mut self) -> i32 {
        let v = self.import_values[self.import_calls % self.import_values.len()];
        self.import_calls += 1;
        v
    }

    /// Binds the parameters of `f` and makes its body the current continuation,
    /// without executing anything.
    pub fn enter(&mut self, f: FuncIdx, args: &[i32]) {
        let code = self.module.code(f).expect("entered function is defined");
        let base_sk = self.mem.sk.len();
        self.push_frame(None, code, args, base_sk);
        self.func = f;
        self.pc = 0;
    }

    fn push_frame(&mut self, ret: Option<Continuation>, code: &FuncCode, args: &[i32], base_sk: usize) {
        let stamp = self.ticker.tick();
        let base = self.mem.loc.len();
        self.mem.loc.extend_from_slice(args);
        self.mem.loc.resize(base + code.locals as usize, 0);
        let frame = Frame {
            ret,
            env: self.env,
            tau: Transformation::Return { base: base_sk, keep: code.results },
            rho: std::mem::take(&mut self.rho),
        };
        self.kappa.push(frame);
        self.env = Environment { stamp, base, count: code.locals };
    }

    /// Runs from the current continuation until the entered function returns.
    pub fn resume(&mut self) -> Outcome {
        loop {
            if self.pc == self.code().ops.len() {
                // falling off the end of a body is an implicit return
                if let Flow::Finished(vals) = self.step_return() {
                    return Outcome::Returned(vals);
                }
                continue;
            }
            if self.steps >= self.fuel {
                return Outcome::FuelExhausted;
            }
            self.steps += 1;
            match self.step() {
                Ok(Flow::Continue) => {}
                Ok(Flow::Finished(vals)) => return Outcome::Returned(vals),
                Err(trap) => return Outcome::Trapped(trap),
            }
        }
    }

    /// Invokes `f` with `args` as the host would, continuing from the current store.
    pub fn invoke(&mut self, f: FuncIdx, args: &[i32]) -> Outcome {
        if self.module.module().is_import(f) {
            let results = self.module.module().func_type(f).map_or(0, |t| t.results);
            return Outcome::Returned((0..results).map(|_| self.import_result()).collect());
        }
        self.enter(f, args);
        self.resume()
    }

    pub fn into_trace(self, outcome: Outcome) -> ConcreteTrace {
        ConcreteTrace { edges: self.edges, log: self.log, steps: self.steps, outcome }
    }

    fn step(&mut self) -> Result<Flow, Trap> {
        let op = self.code().ops[self.pc];
        match op {
            Op::Const(v) => self.mem.push(v),
            Op::Unop(k) => self.step_unop(k),
            Op::Binop(k) => self.step_binop(k)?,
            Op::Relop(k) => {
                let (l, r) = self.mem.pop_twice();
                self.mem.push(eval_relop(k, l, r) as i32);
            }
            Op::LocalGet(i) => self.step_local_get(i),
            Op::LocalSet(i) => self.step_local_set(i),
            Op::LocalTee(i) => self.step_local_tee(i),
            Op::GlobalGet(i) => self.step_global_get(i),
            Op::GlobalSet(i) => self.step_global_set(i),
            Op::Drop => {
                self.mem.pop();
            }
            Op::Nop => {}
            Op::Enter(l) => self.step_label(l),
            Op::If { label, else_pc } => {
                let cond = intbool(self.mem.pop());
                self.step_label(label);
                if !cond {
                    self.pc = else_pc;
                    return Ok(Flow::Continue);
                }
            }
            Op::Else(l) => {
                // the then-branch is done: continue at the shared End
                self.pc = self.code().label(l).exit_pc - 1;
                return Ok(Flow::Continue);
            }
            Op::End(l) => {
                let results = self.code().label(l).results;
                let vals = self.mem.pop_n(results);
                match self.mem.sk.pop() {
                    Some(Slot::Label(m)) if m == l => {}
                    other => panic!("expected marker of label {l}, found {other:?}"),
                }
                self.mem.push_all(&vals);
                self.rho.remove(&l);
            }
            Op::Br(target) => return Ok(self.step_br(target)),
            Op::BrIf(target) => {
                if intbool(self.mem.pop()) {
                    return Ok(self.step_br(target));
                }
            }
            Op::Call { func, site } => return Ok(self.step_call(func, site)),
            Op::CallIndirect { type_index, site } => return self.step_call_indirect(type_index, site),
            Op::Return => return Ok(self.step_return()),
        }
        self.pc += 1;
        Ok(Flow::Continue)
    }

    pub fn step_unop(&mut self, k: crate::frontend::UnopKind) {
        let v = self.mem.pop();
        self.mem.push(eval_unop(k, v));
    }

    pub fn step_binop(&mut self, k: crate::frontend::BinopKind) -> Result<(), Trap> {
        let (l, r) = self.mem.pop_twice();
        let v = eval_binop(k, l, r).map_err(|t| match t {
            ArithTrap::DivByZero => Trap::DivByZero,
            ArithTrap::Overflow => Trap::Overflow,
        })?;
        self.mem.push(v);
        Ok(())
    }

    pub fn step_local_get(&mut self, i: u32) {
        let v = self.mem.loc[self.env.local(i)];
        self.mem.push(v);
    }

    pub fn step_local_set(&mut self, i: u32) {
        let v = self.mem.pop();
        let at = self.env.local(i);
        self.mem.loc[at] = v;
    }

    pub fn step_local_tee(&mut self, i: u32) {
        let v = self.mem.pop();
        let at = self.env.local(i);
        self.mem.loc[at] = v;
        self.mem.push(v);
    }

    pub fn step_global_get(&mut self, i: u32) {
        let v = self.mem.se.globals[self.env.global(i)];
        self.mem.push(v);
    }

    pub fn step_global_set(&mut self, i: u32) {
        let v = self.mem.pop();
        let at = self.env.global(i);
        self.mem.se.globals[at] = v;
    }

    /// Pushes the marker of `l` and binds ρ[l] to its branch behaviour.
    pub fn step_label(&mut self, l: LabelId) {
        let info = *self.code().label(l);
        // block parameters are always empty in the subset, so pop_n(arity l) moves nothing
        self.mem.sk.push(Slot::Label(l));
        let tau = Transformation::Unwind { label: l, keep: info.arity, drop_marker: info.kind != LabelKind::Loop };
        self.rho.insert(l, LabelBinding { tau, chi: info.branch_pc() });
    }

    fn step_br(&mut self, target: Target) -> Flow {
        match target {
            Target::Function => self.step_return(),
            Target::Label(l) => {
                let binding = *self.rho.get(&l).expect("branch target is bound");
                binding.tau.apply(&mut self.mem);
                if let Transformation::Unwind { drop_marker: true, .. } = binding.tau {
                    self.rho.remove(&l);
                }
                self.pc = binding.chi;
                Flow::Continue
            }
        }
    }

    fn record(&mut self, callee: FuncIdx, site: u32) {
        let edge = CallEdge { caller: self.func, callee, site };
        self.edges.insert(edge);
        self.log.push(edge);
    }

    fn step_call(&mut self, callee: FuncIdx, site: u32) -> Flow {
        self.record(callee, site);
        let ir = self.module.module();
        let ty = ir.func_type(callee).expect("validated callee");
        let args = self.mem.pop_n(ty.params);
        if ir.is_import(callee) {
            for _ in 0..ty.results {
                let v = self.import_result();
                self.mem.push(v);
            }
            self.pc += 1;
            return Flow::Continue;
        }
        let code = self.module.code(callee).expect("defined callee");
        let ret = Continuation { func: self.func, pc: self.pc + 1 };
        let base_sk = self.mem.sk.len();
        self.push_frame(Some(ret), code, &args, base_sk);
        self.func = callee;
        self.pc = 0;
        Flow::Continue
    }

    fn step_call_indirect(&mut self, type_index: u32, site: u32) -> Result<Flow, Trap> {
        let i = self.mem.pop();
        let table = &self.mem.se.funtable;
        let size = table.len() as u32;
        let slot = table.get(i as u32 as usize).copied().ok_or(Trap::TableOutOfBounds { index: i, size })?;
        let callee = slot.ok_or(Trap::UndefinedTableEntry { index: i })?;
        let ir = self.module.module();
        let expected = ir.types[type_index as usize];
        let actual = ir.func_type(callee).expect("table entries are validated");
        if expected != actual {
            return Err(Trap::TypeMismatch { index: i, callee });
        }
        Ok(self.step_call(callee, site))
    }

    fn step_return(&mut self) -> Flow {
        let frame = self.kappa.pop().expect("return with an empty call context");
        frame.tau.apply(&mut self.mem);
        self.mem.loc.truncate(self.env.base);
        self.env = frame.env;
        self.rho = frame.rho;
        match frame.ret {
            Some(k) => {
                self.func = k.func;
                self.pc = k.pc;
                Flow::Continue
            }
            None => {
                let Transformation::Return { base, .. } = frame.tau else { unreachable!() };
                let vals = self.mem.pop_n((self.mem.sk.len() - base) as u32);
                Flow::Finished(vals)
            }
        }
    }
}
