use std::fmt;

use thiserror::Error;

use super::sexpr::Pos;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    /// Malformed text: bad s-expressions, unknown fields, bad literals.
    Syntax,
    /// Well-formed WebAssembly outside the supported subset.
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: {kind}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub pos: Pos,
    pub message: String,
}

impl ParseError {
    pub fn new(kind: ParseErrorKind, pos: Pos, message: impl Into<String>) -> Self {
        ParseError { kind, pos, message: message.into() }
    }

    pub fn unsupported(what: impl Into<String>, pos: Pos) -> Self {
        let what = what.into();
        let message = format!("`{what}` is outside the supported subset");
        ParseError::new(ParseErrorKind::Unsupported(what), pos, message)
    }
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax => f.write_str("syntax error"),
            ParseErrorKind::Unsupported(_) => f.write_str("unsupported"),
        }
    }
}

/// Validation rule that a module broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    BranchDepth,
    StackUnderflow,
    StackHeight,
    FuncIndex,
    TypeIndex,
    LocalIndex,
    GlobalIndex,
    ImmutableGlobal,
    TableIndex,
    MissingTable,
    ResultArity,
    ElseArity,
    StartSignature,
    ExportName,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::BranchDepth => "branch-depth",
            Rule::StackUnderflow => "stack-underflow",
            Rule::StackHeight => "stack-height",
            Rule::FuncIndex => "function-index",
            Rule::TypeIndex => "type-index",
            Rule::LocalIndex => "local-index",
            Rule::GlobalIndex => "global-index",
            Rule::ImmutableGlobal => "immutable-global",
            Rule::TableIndex => "table-index",
            Rule::MissingTable => "missing-table",
            Rule::ResultArity => "result-arity",
            Rule::ElseArity => "if-without-else",
            Rule::StartSignature => "start-signature",
            Rule::ExportName => "export-name",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a validation error was found: a function and an instruction ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Location {
    pub func: Option<u32>,
    pub ordinal: Option<u32>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.func, self.ordinal) {
            (Some(func), Some(ord)) => write!(f, "func {func}, instr {ord}"),
            (Some(func), None) => write!(f, "func {func}"),
            _ => f.write_str("module"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("validation failed [{rule}] at {location}: {message}")]
pub struct ValidationError {
    pub rule: Rule,
    pub location: Location,
    pub message: String,
}
