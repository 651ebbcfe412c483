//! Module validation and lowering to [`FuncCode`].

use std::collections::BTreeSet;

use super::code::*;
use super::error::{Location, Rule, ValidationError};
use super::ir::*;

pub fn validate(module: ModuleIR) -> Result<ValidatedModule, ValidationError> {
    check_module(&module)?;
    let mut code = Vec::with_capacity(module.functions.len());
    for (i, def) in module.functions.iter().enumerate() {
        let func = FuncIdx((module.imports.len() + i) as u32);
        code.push(Lowerer::new(&module, func, def).run(&def.body)?);
    }
    Ok(ValidatedModule { module, code })
}

fn module_error(rule: Rule, message: impl Into<String>) -> ValidationError {
    ValidationError { rule, location: Location { func: None, ordinal: None }, message: message.into() }
}

fn check_module(m: &ModuleIR) -> Result<(), ValidationError> {
    for (i, t) in m.types.iter().enumerate() {
        if t.results > 1 {
            return Err(module_error(Rule::ResultArity, format!("type {i} has {} results", t.results)));
        }
    }
    let type_count = m.types.len() as u32;
    for (i, imp) in m.imports.iter().enumerate() {
        if imp.type_index >= type_count {
            return Err(module_error(Rule::TypeIndex, format!("import {i} uses unknown type {}", imp.type_index)));
        }
    }
    for (i, def) in m.functions.iter().enumerate() {
        if def.type_index >= type_count {
            let func = (m.imports.len() + i) as u32;
            return Err(ValidationError {
                rule: Rule::TypeIndex,
                location: Location { func: Some(func), ordinal: None },
                message: format!("unknown type {}", def.type_index),
            });
        }
    }
    let func_count = m.func_count() as u32;
    for (slot, entry) in m.table_entries().iter().enumerate() {
        if let Some(f) = entry {
            if f.0 >= func_count {
                return Err(module_error(Rule::FuncIndex, format!("table slot {slot} refers to unknown function {f}")));
            }
        }
    }
    let mut names = BTreeSet::new();
    for e in &m.exports {
        if !names.insert(e.name.as_str()) {
            return Err(module_error(Rule::ExportName, format!("duplicate export \"{}\"", e.name)));
        }
        match e.kind {
            ExportKind::Func if e.index >= func_count => {
                return Err(module_error(
                    Rule::FuncIndex,
                    format!("export \"{}\" refers to unknown function {}", e.name, e.index),
                ))
            }
            ExportKind::Global if e.index as usize >= m.globals.len() => {
                return Err(module_error(
                    Rule::GlobalIndex,
                    format!("export \"{}\" refers to unknown global {}", e.name, e.index),
                ))
            }
            ExportKind::Table if m.table.is_none() || e.index != 0 => {
                return Err(module_error(Rule::TableIndex, format!("export \"{}\" refers to a missing table", e.name)))
            }
            _ => {}
        }
    }
    if let Some(s) = m.start {
        if s.0 >= func_count {
            return Err(module_error(Rule::FuncIndex, format!("start refers to unknown function {s}")));
        }
        if m.func_type(s) != Some(FuncType::new(0, 0)) {
            return Err(module_error(Rule::StartSignature, "start function must take and return nothing"));
        }
    }
    Ok(())
}

struct Ctrl {
    /// `None` for the function body frame.
    label: Option<LabelId>,
    arity: u32,
    results: u32,
    height: u32,
    unreachable: bool,
}

struct Lowerer<'m> {
    m: &'m ModuleIR,
    func: FuncIdx,
    params: u32,
    locals: u32,
    results: u32,
    ops: Vec<Op>,
    labels: Vec<LabelInfo>,
    ordinals: Vec<u32>,
    heights: Vec<Option<u32>>,
    ctrl: Vec<Ctrl>,
    height: u32,
    next_ordinal: u32,
    ordinal: u32,
}

impl<'m> Lowerer<'m> {
    fn new(m: &'m ModuleIR, func: FuncIdx, def: &FunctionDef) -> Self {
        let ty = m.types[def.type_index as usize];
        Lowerer {
            m,
            func,
            params: ty.params,
            locals: ty.params + def.locals,
            results: ty.results,
            ops: Vec::new(),
            labels: Vec::new(),
            ordinals: Vec::new(),
            heights: Vec::new(),
            ctrl: vec![Ctrl { label: None, arity: ty.results, results: ty.results, height: 0, unreachable: false }],
            height: 0,
            next_ordinal: 0,
            ordinal: 0,
        }
    }

    fn run(mut self, body: &[Instr]) -> Result<FuncCode, ValidationError> {
        self.seq(body)?;
        self.ordinal = self.next_ordinal;
        self.close_frame("function end")?;
        Ok(FuncCode {
            func: self.func,
            params: self.params,
            locals: self.locals,
            results: self.results,
            ops: self.ops,
            labels: self.labels,
            ordinals: self.ordinals,
            heights: self.heights,
        })
    }

    fn err(&self, rule: Rule, message: impl Into<String>) -> ValidationError {
        ValidationError {
            rule,
            location: Location { func: Some(self.func.0), ordinal: Some(self.ordinal) },
            message: message.into(),
        }
    }

    fn frame(&self) -> &Ctrl {
        self.ctrl.last().unwrap()
    }

    fn emit(&mut self, op: Op) {
        let h = if self.frame().unreachable { None } else { Some(self.height) };
        self.ops.push(op);
        self.ordinals.push(self.ordinal);
        self.heights.push(h);
    }

    fn pop(&mut self, n: u32, what: &str) -> Result<(), ValidationError> {
        for _ in 0..n {
            let frame = self.frame();
            if self.height > frame.height {
                self.height -= 1;
            } else if !frame.unreachable {
                return Err(self.err(Rule::StackUnderflow, format!("stack underflow at {what}")));
            }
        }
        Ok(())
    }

    fn push(&mut self, n: u32) {
        self.height += n;
    }

    fn set_unreachable(&mut self) {
        let base = self.frame().height;
        self.height = base;
        self.ctrl.last_mut().unwrap().unreachable = true;
    }

    /// Checks the stack at the end of the innermost frame.
    fn close_frame(&mut self, what: &str) -> Result<(), ValidationError> {
        let frame = self.frame();
        let extra = self.height - frame.height;
        let ok = if frame.unreachable { extra <= frame.results } else { extra == frame.results };
        if !ok {
            let expected = frame.results;
            let rule = if extra < expected { Rule::StackUnderflow } else { Rule::StackHeight };
            return Err(self.err(rule, format!("{what} leaves {extra} values, expected {expected}")));
        }
        self.height = self.frame().height + self.frame().results;
        Ok(())
    }

    fn resolve(&self, depth: u32) -> Result<(Target, u32), ValidationError> {
        let nesting = self.ctrl.len() as u32 - 1;
        if depth > nesting {
            return Err(self.err(Rule::BranchDepth, format!("br depth {depth} exceeds nesting {nesting}")));
        }
        let frame = &self.ctrl[(nesting - depth) as usize];
        let target = match frame.label {
            Some(l) => Target::Label(l),
            None => Target::Function,
        };
        Ok((target, frame.arity))
    }

    fn open_label(&mut self, kind: LabelKind, results: u32) -> Result<LabelId, ValidationError> {
        if results > 1 {
            return Err(self.err(Rule::ResultArity, format!("block declares {results} results")));
        }
        let id = self.labels.len() as LabelId;
        let arity = if kind == LabelKind::Loop { 0 } else { results };
        self.labels.push(LabelInfo {
            kind,
            arity,
            results,
            entry_height: self.height,
            start_pc: self.ops.len() + 1,
            exit_pc: usize::MAX,
        });
        Ok(id)
    }

    fn enter(&mut self, label: LabelId) {
        let info = self.labels[label as usize];
        self.ctrl.push(Ctrl {
            label: Some(label),
            arity: info.arity,
            results: info.results,
            height: self.height,
            unreachable: false,
        });
    }

    fn leave(&mut self, label: LabelId, owner: u32) -> Result<(), ValidationError> {
        self.close_frame("block end")?;
        self.ordinal = owner;
        let h = self.height;
        self.ctrl.pop();
        // the End op observes the block's result height even when its body ended unreachable
        self.height = h;
        self.emit(Op::End(label));
        self.labels[label as usize].exit_pc = self.ops.len();
        Ok(())
    }

    fn seq(&mut self, body: &[Instr]) -> Result<(), ValidationError> {
        for instr in body {
            self.instr(instr)?;
        }
        Ok(())
    }

    fn instr(&mut self, instr: &Instr) -> Result<(), ValidationError> {
        let ordinal = self.next_ordinal;
        self.next_ordinal += 1;
        self.ordinal = ordinal;
        let what = instr.mnemonic();
        match instr {
            Instr::Const(v) => {
                self.emit(Op::Const(*v));
                self.push(1);
            }
            Instr::Unop(k) => {
                self.emit(Op::Unop(*k));
                self.pop(1, what)?;
                self.push(1);
            }
            Instr::Binop(k) => {
                self.emit(Op::Binop(*k));
                self.pop(2, what)?;
                self.push(1);
            }
            Instr::Relop(k) => {
                self.emit(Op::Relop(*k));
                self.pop(2, what)?;
                self.push(1);
            }
            Instr::LocalGet(i) | Instr::LocalSet(i) | Instr::LocalTee(i) => {
                if *i >= self.locals {
                    return Err(self.err(Rule::LocalIndex, format!("local {i} not declared ({} locals)", self.locals)));
                }
                match instr {
                    Instr::LocalGet(_) => {
                        self.emit(Op::LocalGet(*i));
                        self.push(1);
                    }
                    Instr::LocalSet(_) => {
                        self.emit(Op::LocalSet(*i));
                        self.pop(1, what)?;
                    }
                    _ => {
                        self.emit(Op::LocalTee(*i));
                        self.pop(1, what)?;
                        self.push(1);
                    }
                }
            }
            Instr::GlobalGet(i) | Instr::GlobalSet(i) => {
                let Some(g) = self.m.globals.get(*i as usize) else {
                    return Err(self.err(Rule::GlobalIndex, format!("global {i} not declared")));
                };
                if let Instr::GlobalSet(_) = instr {
                    if !g.mutable {
                        return Err(self.err(Rule::ImmutableGlobal, format!("global {i} is immutable")));
                    }
                    self.emit(Op::GlobalSet(*i));
                    self.pop(1, what)?;
                } else {
                    self.emit(Op::GlobalGet(*i));
                    self.push(1);
                }
            }
            Instr::Drop => {
                self.emit(Op::Drop);
                self.pop(1, what)?;
            }
            Instr::Nop => self.emit(Op::Nop),
            Instr::Block { results, body } | Instr::Loop { results, body } => {
                let kind = if matches!(instr, Instr::Block { .. }) { LabelKind::Block } else { LabelKind::Loop };
                let label = self.open_label(kind, *results)?;
                self.emit(Op::Enter(label));
                self.enter(label);
                self.seq(body)?;
                self.ordinal = ordinal;
                self.leave(label, ordinal)?;
            }
            Instr::If { results, then_body, else_body } => {
                if *results > 0 && else_body.is_empty() {
                    return Err(self.err(Rule::ElseArity, "if with a result needs an else branch"));
                }
                self.pop(1, what)?;
                let label = self.open_label(LabelKind::If, *results)?;
                let if_pc = self.ops.len();
                self.emit(Op::If { label, else_pc: usize::MAX });
                if let Some(h) = self.heights.last_mut().unwrap() {
                    // recorded before the condition was popped
                    *h += 1;
                }
                self.enter(label);
                self.seq(then_body)?;
                self.ordinal = ordinal;
                self.close_frame("then branch")?;
                self.emit(Op::Else(label));
                let else_pc = self.ops.len();
                if let Op::If { else_pc: slot, .. } = &mut self.ops[if_pc] {
                    *slot = else_pc;
                }
                let frame = self.ctrl.last_mut().unwrap();
                frame.unreachable = false;
                self.height = frame.height;
                self.seq(else_body)?;
                self.ordinal = ordinal;
                self.leave(label, ordinal)?;
            }
            Instr::Br(d) | Instr::BrIf(d) => {
                let (target, arity) = self.resolve(*d)?;
                if let Instr::Br(_) = instr {
                    self.emit(Op::Br(target));
                    self.pop(arity, what)?;
                    self.set_unreachable();
                } else {
                    self.emit(Op::BrIf(target));
                    self.pop(1, what)?;
                    self.pop(arity, what)?;
                    self.push(arity);
                }
            }
            Instr::Call(f) => {
                let Some(ty) = self.m.func_type(*f) else {
                    return Err(self.err(Rule::FuncIndex, format!("call to unknown function {f}")));
                };
                self.emit(Op::Call { func: *f, site: ordinal });
                self.pop(ty.params, what)?;
                self.push(ty.results);
            }
            Instr::CallIndirect(t) => {
                if self.m.table.is_none() {
                    return Err(self.err(Rule::MissingTable, "call_indirect without a table"));
                }
                let Some(ty) = self.m.types.get(*t as usize).copied() else {
                    return Err(self.err(Rule::TypeIndex, format!("call_indirect uses unknown type {t}")));
                };
                self.emit(Op::CallIndirect { type_index: *t, site: ordinal });
                self.pop(1, what)?;
                self.pop(ty.params, what)?;
                self.push(ty.results);
            }
            Instr::Return => {
                self.emit(Op::Return);
                self.pop(self.results, what)?;
                self.set_unreachable();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    fn check(src: &str) -> Result<ValidatedModule, ValidationError> {
        validate(parse(src).expect("parses"))
    }

    #[test]
    fn branch_depth_exceeds_nesting() {
        let err = check("(module (func (block (br 2))))").unwrap_err();
        assert_eq!(err.rule, Rule::BranchDepth);
        assert!(err.message.contains("br depth 2 exceeds nesting 1"), "{}", err.message);
        // depth equal to the nesting targets the function body
        assert!(check("(module (func (block (br 1))))").is_ok());
    }

    #[test]
    fn binop_without_operands_underflows() {
        let err = check("(module (func (result i32) i32.add))").unwrap_err();
        assert_eq!(err.rule, Rule::StackUnderflow);
        assert!(err.message.contains("stack underflow at i32.add"));
        assert_eq!(err.location.ordinal, Some(0));
    }

    #[test]
    fn block_height_mismatch() {
        let err = check("(module (func (block (result i32) (nop))))").unwrap_err();
        assert_eq!(err.rule, Rule::StackUnderflow);
        let err = check("(module (func (block (i32.const 1))))").unwrap_err();
        assert_eq!(err.rule, Rule::StackHeight);
    }

    #[test]
    fn unreachable_code_is_polymorphic() {
        assert!(check("(module (func (result i32) (return (i32.const 1)) (i32.add)))").is_ok());
        assert!(check("(module (func (result i32) (block (result i32) (br 0 (i32.const 2)) (drop))))").is_ok());
    }

    #[test]
    fn if_with_result_needs_else() {
        let err =
            check("(module (func (result i32) (if (result i32) (i32.const 1) (then (i32.const 2)))))").unwrap_err();
        assert_eq!(err.rule, Rule::ElseArity);
    }

    #[test]
    fn index_rules() {
        assert_eq!(check("(module (func (local.get 0) drop))").unwrap_err().rule, Rule::LocalIndex);
        assert_eq!(check("(module (func (global.get 0) drop))").unwrap_err().rule, Rule::GlobalIndex);
        assert_eq!(
            check("(module (global i32 (i32.const 0)) (func (global.set 0 (i32.const 1))))").unwrap_err().rule,
            Rule::ImmutableGlobal
        );
        assert_eq!(check("(module (func (call 4)))").unwrap_err().rule, Rule::FuncIndex);
        assert_eq!(
            check("(module (type (func)) (func (call_indirect (type 0) (i32.const 0))))").unwrap_err().rule,
            Rule::MissingTable
        );
        assert_eq!(check("(module (func $f (param i32)) (start $f))").unwrap_err().rule, Rule::StartSignature);
        assert_eq!(check(r#"(module (func (export "a")) (func (export "a")))"#).unwrap_err().rule, Rule::ExportName);
    }

    #[test]
    fn lowering_layout() {
        let v = check(
            "(module (func (param i32) (result i32)
               (block $b (result i32)
                 (loop $l
                   (br_if $l (local.get 0)))
                 (if (result i32) (local.get 0) (then (i32.const 1)) (else (i32.const 2))))))",
        )
        .unwrap();
        let code = v.code(FuncIdx(0)).unwrap();
        assert_eq!(
            code.ops,
            vec![
                Op::Enter(0),
                Op::Enter(1),
                Op::LocalGet(0),
                Op::BrIf(Target::Label(1)),
                Op::End(1),
                Op::LocalGet(0),
                Op::If { label: 2, else_pc: 9 },
                Op::Const(1),
                Op::Else(2),
                Op::Const(2),
                Op::End(2),
                Op::End(0),
            ]
        );
        assert_eq!(code.label(0).exit_pc, 12);
        assert_eq!(code.label(1).start_pc, 2);
        assert_eq!(code.label(1).branch_pc(), 2);
        assert_eq!(code.label(2).exit_pc, 11);
        assert_eq!(code.heights[10], Some(1));
        // ordinals are pre-order over the source tree
        assert_eq!(code.ordinals, vec![0, 1, 2, 3, 1, 4, 5, 6, 5, 7, 5, 0]);
    }

    #[test]
    fn site_ordinals_match_walk() {
        let src = "(module (table 1 funcref) (type (func))
            (func $a (call $b) (block (call_indirect (type 0) (i32.const 0))) (call $b))
            (func $b))";
        let v = check(src).unwrap();
        let mut walked = Vec::new();
        walk_instrs(&v.module().functions[0].body, &mut |ord, i| {
            if matches!(i, Instr::Call(_) | Instr::CallIndirect(_)) {
                walked.push(ord);
            }
        });
        let lowered: Vec<u32> = v
            .code(FuncIdx(0))
            .unwrap()
            .sites()
            .map(|(_, op)| match op {
                Op::Call { site, .. } | Op::CallIndirect { site, .. } => *site,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(walked, lowered);
        assert_eq!(lowered, vec![0, 3, 4]);
    }
}
