//! Flat, label-resolved code produced by validation.
//!
//! Structured instructions become `Enter`/`If`/`Else`/`End` markers with
//! explicit jump targets, and every branch names a unique label id instead of
//! a relative depth. Both interpreters execute this form.

use super::ir::{BinopKind, FuncIdx, ModuleIR, RelopKind, UnopKind};

/// Function-local label identifier, unique per function body.
pub type LabelId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Block,
    Loop,
    If,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelInfo {
    pub kind: LabelKind,
    /// Values a branch to this label carries: 0 for loops, the result count otherwise.
    pub arity: u32,
    /// Values the block leaves on the stack when it completes.
    pub results: u32,
    /// Operand stack height of the frame (values only) when the label was entered.
    pub entry_height: u32,
    /// First op of the body.
    pub start_pc: usize,
    /// First op after the closing `End`.
    pub exit_pc: usize,
}

impl LabelInfo {
    /// Where a branch to this label continues.
    pub fn branch_pc(&self) -> usize {
        match self.kind {
            LabelKind::Loop => self.start_pc,
            LabelKind::Block | LabelKind::If => self.exit_pc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Label(LabelId),
    /// The function body itself: branching here returns.
    Function,
}

/// Call-site identity: the pre-order ordinal of the call instruction within its function.
pub type SiteOrdinal = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Const(i32),
    Unop(UnopKind),
    Binop(BinopKind),
    Relop(RelopKind),
    LocalGet(u32),
    LocalSet(u32),
    LocalTee(u32),
    GlobalGet(u32),
    GlobalSet(u32),
    Drop,
    Nop,
    /// Pushes the marker of a block or loop.
    Enter(LabelId),
    /// Pops the condition, pushes the marker, and jumps to `else_pc` when it is zero.
    If {
        label: LabelId,
        else_pc: usize,
    },
    /// End of a then-branch: continues at the matching `End`.
    Else(LabelId),
    /// Removes the marker, keeping the label's result values.
    End(LabelId),
    Br(Target),
    BrIf(Target),
    Call {
        func: FuncIdx,
        site: SiteOrdinal,
    },
    CallIndirect {
        type_index: u32,
        site: SiteOrdinal,
    },
    Return,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuncCode {
    pub func: FuncIdx,
    pub params: u32,
    /// Parameters plus declared locals.
    pub locals: u32,
    pub results: u32,
    pub ops: Vec<Op>,
    pub labels: Vec<LabelInfo>,
    /// Source instruction ordinal of each op; structural markers map to their owner.
    pub ordinals: Vec<u32>,
    /// Static value-stack height before each op; `None` for unreachable ops.
    pub heights: Vec<Option<u32>>,
}

impl FuncCode {
    pub fn label(&self, l: LabelId) -> &LabelInfo {
        &self.labels[l as usize]
    }

    /// Call and call_indirect sites in program order.
    pub fn sites(&self) -> impl Iterator<Item = (usize, &Op)> + '_ {
        self.ops.iter().enumerate().filter(|(_, op)| matches!(op, Op::Call { .. } | Op::CallIndirect { .. }))
    }
}

/// A module that passed validation, together with its lowered code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedModule {
    pub(crate) module: ModuleIR,
    pub(crate) code: Vec<FuncCode>,
}

impl ValidatedModule {
    pub fn module(&self) -> &ModuleIR {
        &self.module
    }

    /// Lowered code of a defined function; `None` for imports.
    pub fn code(&self, f: FuncIdx) -> Option<&FuncCode> {
        f.index().checked_sub(self.module.imports.len()).and_then(|i| self.code.get(i))
    }

    pub fn all_code(&self) -> &[FuncCode] {
        &self.code
    }

    /// Default analysis roots: exported functions plus the start function.
    pub fn default_roots(&self) -> Vec<FuncIdx> {
        let mut roots: Vec<FuncIdx> = self.module.exported_funcs().collect();
        roots.extend(self.module.start);
        roots.sort();
        roots.dedup();
        roots
    }

    /// Display name for a function: its `$id`, else an export name, else its index.
    pub fn display_name(&self, f: FuncIdx) -> String {
        if let Some(n) = self.module.func_name(f) {
            return n.to_string();
        }
        if let Some(e) = self.module.exports.iter().find(|e| e.kind == super::ir::ExportKind::Func && e.index == f.0) {
            return e.name.clone();
        }
        if let Some(imp) = self.module.imports.get(f.index()) {
            return format!("{}.{}", imp.module, imp.field);
        }
        f.to_string()
    }
}
