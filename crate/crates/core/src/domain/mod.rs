//! The abstract value domain: bounded sets with interval fallback, symbolic
//! expressions for branch refinement, and abstract memories.

mod expr;
mod keep;
mod memory;
mod num;
mod value;

pub use expr::{SymExpr, Valuation, MAX_DEPTH};
pub use keep::{keep_for_cmp, Keep};
pub use memory::{concretize_indices, AbsSlot, AbstractMemory, AbstractTable, Indices, ShapeMismatch};
pub use num::{Domain, Num, DEFAULT_K};
pub use value::{AbstractBool, AbstractValue, Truth};
