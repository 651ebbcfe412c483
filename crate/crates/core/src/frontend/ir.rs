//! In-memory form of a parsed module.
//!
//! Function indices follow WebAssembly numbering: imported functions come
//! first, then the module's own definitions.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Index into the module's function index space (imports first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FuncIdx(pub u32);

impl FuncIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for FuncIdx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Signature of a function. Every value is an `i32`, so only arities matter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FuncType {
    pub params: u32,
    pub results: u32,
}

impl FuncType {
    pub fn new(params: u32, results: u32) -> Self {
        FuncType { params, results }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalDef {
    pub name: Option<String>,
    pub mutable: bool,
    pub init: i32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportDecl {
    pub module: String,
    pub field: String,
    /// The `$id` given to the imported function, if any.
    pub name: Option<String>,
    pub type_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    Func,
    Table,
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportDecl {
    pub name: String,
    pub kind: ExportKind,
    pub index: u32,
}

/// The single function table. `entries[i]` is the function stored in slot `i`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TableDef {
    pub name: Option<String>,
    pub entries: Vec<Option<FuncIdx>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDef {
    pub name: Option<String>,
    pub type_index: u32,
    /// Declared locals, not counting parameters.
    pub locals: u32,
    pub body: Vec<Instr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnopKind {
    Eqz,
    Clz,
    Ctz,
    Popcnt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinopKind {
    Add,
    Sub,
    Mul,
    DivS,
    DivU,
    RemS,
    RemU,
    And,
    Or,
    Xor,
    Shl,
    ShrS,
    ShrU,
    Rotl,
    Rotr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelopKind {
    Eq,
    Ne,
    LtS,
    LtU,
    GtS,
    GtU,
    LeS,
    LeU,
    GeS,
    GeU,
}

impl RelopKind {
    /// The relation holding exactly when `self` does not.
    pub fn negate(self) -> RelopKind {
        use RelopKind::*;
        match self {
            Eq => Ne,
            Ne => Eq,
            LtS => GeS,
            LtU => GeU,
            GtS => LeS,
            GtU => LeU,
            LeS => GtS,
            LeU => GtU,
            GeS => LtS,
            GeU => LtU,
        }
    }

    /// The relation with operands swapped: `a op b` iff `b op.flip() a`.
    pub fn flip(self) -> RelopKind {
        use RelopKind::*;
        match self {
            Eq => Eq,
            Ne => Ne,
            LtS => GtS,
            LtU => GtU,
            GtS => LtS,
            GtU => LtU,
            LeS => GeS,
            LeU => GeU,
            GeS => LeS,
            GeU => LeU,
        }
    }
}

/// Structured instruction tree. Branch targets are relative depths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    Const(i32),
    Unop(UnopKind),
    Binop(BinopKind),
    Relop(RelopKind),
    LocalGet(u32),
    LocalSet(u32),
    LocalTee(u32),
    GlobalGet(u32),
    GlobalSet(u32),
    Block { results: u32, body: Vec<Instr> },
    Loop { results: u32, body: Vec<Instr> },
    If { results: u32, then_body: Vec<Instr>, else_body: Vec<Instr> },
    Br(u32),
    BrIf(u32),
    Call(FuncIdx),
    CallIndirect(u32),
    Return,
    Drop,
    Nop,
}

impl Instr {
    pub fn mnemonic(&self) -> &'static str {
        match self {
            Instr::Const(_) => "i32.const",
            Instr::Unop(k) => k.mnemonic(),
            Instr::Binop(k) => k.mnemonic(),
            Instr::Relop(k) => k.mnemonic(),
            Instr::LocalGet(_) => "local.get",
            Instr::LocalSet(_) => "local.set",
            Instr::LocalTee(_) => "local.tee",
            Instr::GlobalGet(_) => "global.get",
            Instr::GlobalSet(_) => "global.set",
            Instr::Block { .. } => "block",
            Instr::Loop { .. } => "loop",
            Instr::If { .. } => "if",
            Instr::Br(_) => "br",
            Instr::BrIf(_) => "br_if",
            Instr::Call(_) => "call",
            Instr::CallIndirect(_) => "call_indirect",
            Instr::Return => "return",
            Instr::Drop => "drop",
            Instr::Nop => "nop",
        }
    }
}

macro_rules! mnemonics {
    ($ty:ident { $($variant:ident => $text:literal),* $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),*];

            pub fn mnemonic(self) -> &'static str {
                match self {
                    $($ty::$variant => $text),*
                }
            }

            pub fn from_mnemonic(text: &str) -> Option<$ty> {
                match text {
                    $($text => Some($ty::$variant),)*
                    _ => None,
                }
            }
        }
    };
}

mnemonics!(UnopKind {
    Eqz => "i32.eqz",
    Clz => "i32.clz",
    Ctz => "i32.ctz",
    Popcnt => "i32.popcnt",
});

mnemonics!(BinopKind {
    Add => "i32.add",
    Sub => "i32.sub",
    Mul => "i32.mul",
    DivS => "i32.div_s",
    DivU => "i32.div_u",
    RemS => "i32.rem_s",
    RemU => "i32.rem_u",
    And => "i32.and",
    Or => "i32.or",
    Xor => "i32.xor",
    Shl => "i32.shl",
    ShrS => "i32.shr_s",
    ShrU => "i32.shr_u",
    Rotl => "i32.rotl",
    Rotr => "i32.rotr",
});

mnemonics!(RelopKind {
    Eq => "i32.eq",
    Ne => "i32.ne",
    LtS => "i32.lt_s",
    LtU => "i32.lt_u",
    GtS => "i32.gt_s",
    GtU => "i32.gt_u",
    LeS => "i32.le_s",
    LeU => "i32.le_u",
    GeS => "i32.ge_s",
    GeU => "i32.ge_u",
});

/// A parsed module.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModuleIR {
    pub types: Vec<FuncType>,
    pub imports: Vec<ImportDecl>,
    pub functions: Vec<FunctionDef>,
    pub globals: Vec<GlobalDef>,
    pub table: Option<TableDef>,
    pub exports: Vec<ExportDecl>,
    pub start: Option<FuncIdx>,
}

impl ModuleIR {
    /// Number of entries in the function index space.
    pub fn func_count(&self) -> usize {
        self.imports.len() + self.functions.len()
    }

    pub fn is_import(&self, f: FuncIdx) -> bool {
        f.index() < self.imports.len()
    }

    /// The definition of a non-imported function.
    pub fn defined(&self, f: FuncIdx) -> Option<&FunctionDef> {
        f.index().checked_sub(self.imports.len()).and_then(|i| self.functions.get(i))
    }

    pub fn func_type_index(&self, f: FuncIdx) -> Option<u32> {
        if let Some(imp) = self.imports.get(f.index()) {
            return Some(imp.type_index);
        }
        self.defined(f).map(|d| d.type_index)
    }

    pub fn func_type(&self, f: FuncIdx) -> Option<FuncType> {
        self.func_type_index(f).and_then(|t| self.types.get(t as usize).copied())
    }

    pub fn func_name(&self, f: FuncIdx) -> Option<&str> {
        if let Some(imp) = self.imports.get(f.index()) {
            return imp.name.as_deref();
        }
        self.defined(f).and_then(|d| d.name.as_deref())
    }

    /// Looks up a function by `$name` (with or without the sigil), export name, or index.
    pub fn resolve_func(&self, key: &str) -> Option<FuncIdx> {
        let bare = key.strip_prefix('$').unwrap_or(key);
        if let Some(e) = self.exports.iter().find(|e| e.kind == ExportKind::Func && e.name == bare) {
            return Some(FuncIdx(e.index));
        }
        if let Some(i) = (0..self.func_count()).find(|&i| self.func_name(FuncIdx(i as u32)) == Some(bare)) {
            return Some(FuncIdx(i as u32));
        }
        key.parse::<u32>().ok().filter(|&i| (i as usize) < self.func_count()).map(FuncIdx)
    }

    pub fn table_entries(&self) -> &[Option<FuncIdx>] {
        self.table.as_ref().map(|t| t.entries.as_slice()).unwrap_or(&[])
    }

    pub fn exported_funcs(&self) -> impl Iterator<Item = FuncIdx> + '_ {
        self.exports.iter().filter(|e| e.kind == ExportKind::Func).map(|e| FuncIdx(e.index))
    }

    pub fn table_exported(&self) -> bool {
        self.exports.iter().any(|e| e.kind == ExportKind::Table)
    }
}

/// Visits every instruction of `body` in pre-order together with its ordinal.
///
/// Ordinals number instructions of one function body from zero; they identify
/// call sites across the IR, the lowered code and the call graph.
pub fn walk_instrs<'a>(body: &'a [Instr], visit: &mut impl FnMut(u32, &'a Instr)) {
    fn go<'a>(body: &'a [Instr], next: &mut u32, visit: &mut impl FnMut(u32, &'a Instr)) {
        for instr in body {
            let ordinal = *next;
            *next += 1;
            visit(ordinal, instr);
            match instr {
                Instr::Block { body, .. } | Instr::Loop { body, .. } => go(body, next, visit),
                Instr::If { then_body, else_body, .. } => {
                    go(then_body, next, visit);
                    go(else_body, next, visit);
                }
                _ => {}
            }
        }
    }
    let mut next = 0;
    go(body, &mut next, visit);
}
