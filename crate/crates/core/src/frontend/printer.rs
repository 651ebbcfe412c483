//! Prints a [`ModuleIR`] back to text that [`parse`](super::parse) reads into the same IR.

use std::fmt::Write;

use super::ir::*;

pub fn print(m: &ModuleIR) -> String {
    let mut out = String::from("(module\n");
    for t in &m.types {
        out.push_str("  (type (func");
        push_sig(&mut out, *t);
        out.push_str("))\n");
    }
    for imp in &m.imports {
        let _ = write!(out, "  (import {:?} {:?} (func", imp.module, imp.field);
        push_id(&mut out, imp.name.as_deref());
        let _ = writeln!(out, " (type {})))", imp.type_index);
    }
    if let Some(t) = &m.table {
        out.push_str("  (table");
        push_id(&mut out, t.name.as_deref());
        let _ = writeln!(out, " {} funcref)", t.entries.len());
        for (slot, entry) in t.entries.iter().enumerate() {
            if let Some(f) = entry {
                let _ = writeln!(out, "  (elem (i32.const {slot}) {f})");
            }
        }
    }
    for g in &m.globals {
        out.push_str("  (global");
        push_id(&mut out, g.name.as_deref());
        let ty = if g.mutable { "(mut i32)" } else { "i32" };
        let _ = writeln!(out, " {ty} (i32.const {}))", g.init);
    }
    for f in &m.functions {
        out.push_str("  (func");
        push_id(&mut out, f.name.as_deref());
        let _ = write!(out, " (type {})", f.type_index);
        if f.locals > 0 {
            out.push_str(" (local");
            for _ in 0..f.locals {
                out.push_str(" i32");
            }
            out.push(')');
        }
        out.push('\n');
        push_body(&mut out, &f.body, 2);
        out.push_str("  )\n");
    }
    for e in &m.exports {
        let kind = match e.kind {
            ExportKind::Func => "func",
            ExportKind::Table => "table",
            ExportKind::Global => "global",
        };
        let _ = writeln!(out, "  (export {:?} ({kind} {}))", e.name, e.index);
    }
    if let Some(s) = m.start {
        let _ = writeln!(out, "  (start {s})");
    }
    out.push_str(")\n");
    out
}

fn push_id(out: &mut String, name: Option<&str>) {
    if let Some(n) = name {
        out.push_str(" $");
        out.push_str(n);
    }
}

fn push_sig(out: &mut String, t: FuncType) {
    if t.params > 0 {
        out.push_str(" (param");
        for _ in 0..t.params {
            out.push_str(" i32");
        }
        out.push(')');
    }
    if t.results > 0 {
        out.push_str(" (result i32)");
    }
}

fn push_block_type(out: &mut String, results: u32) {
    for _ in 0..results {
        out.push_str(" (result i32)");
    }
}

fn push_body(out: &mut String, body: &[Instr], depth: usize) {
    for instr in body {
        let pad = "  ".repeat(depth);
        out.push_str(&pad);
        match instr {
            Instr::Block { results, body } | Instr::Loop { results, body } => {
                out.push_str(instr.mnemonic());
                push_block_type(out, *results);
                out.push('\n');
                push_body(out, body, depth + 1);
                let _ = writeln!(out, "{pad}end");
            }
            Instr::If { results, then_body, else_body } => {
                out.push_str("if");
                push_block_type(out, *results);
                out.push('\n');
                push_body(out, then_body, depth + 1);
                if !else_body.is_empty() {
                    let _ = writeln!(out, "{pad}else");
                    push_body(out, else_body, depth + 1);
                }
                let _ = writeln!(out, "{pad}end");
            }
            Instr::Const(v) => {
                let _ = writeln!(out, "i32.const {v}");
            }
            Instr::LocalGet(i)
            | Instr::LocalSet(i)
            | Instr::LocalTee(i)
            | Instr::GlobalGet(i)
            | Instr::GlobalSet(i) => {
                let _ = writeln!(out, "{} {i}", instr.mnemonic());
            }
            Instr::Br(d) | Instr::BrIf(d) => {
                let _ = writeln!(out, "{} {d}", instr.mnemonic());
            }
            Instr::Call(f) => {
                let _ = writeln!(out, "call {f}");
            }
            Instr::CallIndirect(t) => {
                let _ = writeln!(out, "call_indirect (type {t})");
            }
            _ => {
                out.push_str(instr.mnemonic());
                out.push('\n');
            }
        }
    }
}
