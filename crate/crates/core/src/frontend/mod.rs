//! Text-format frontend: parsing, printing, validation, and lowering.

mod code;
mod error;
mod ir;
mod parser;
mod printer;
mod sexpr;
mod validate;

pub use code::*;
pub use error::*;
pub use ir::*;
pub use parser::parse;
pub use printer::print;
pub use sexpr::Pos;
pub use validate::validate;

/// Parses and validates `source` in one step.
pub fn load(source: &str) -> Result<ValidatedModule, LoadError> {
    Ok(validate(parse(source)?)?)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoadError {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}
