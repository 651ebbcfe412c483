//! Sound call-graph construction for a WebAssembly text subset.
//!
//! The pipeline is: [`frontend::load`] a `.wat` module, run the abstract
//! interpreter with [`absint::analyze`], and turn the per-site callee sets
//! into a [`callgraph::CallGraph`]. The [`concrete`] interpreter executes the
//! same lowered code and records the call edges a run actually takes, which is
//! what the [`harness`] checks the analysis against.

pub mod absint;
pub mod callgraph;
pub mod concrete;
pub mod domain;
pub mod frontend;
pub mod harness;
pub mod numeric;
pub mod site;

pub use site::{CallEdge, SiteId};
