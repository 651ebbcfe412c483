//! Abstract interpretation of lowered code: a worklist fixpoint over program
//! points with per-function summaries, emitting the possible callees of every
//! reachable call site.

mod cache;
mod engine;

use std::collections::{BTreeMap, BTreeSet};

pub use cache::{FunctionSummaryCache, Summary, Unit};

use crate::domain::{AbstractMemory, Num, DEFAULT_K};
use crate::frontend::{FuncIdx, ValidatedModule};
use crate::site::{CallEdge, SiteId};

pub const DEFAULT_WIDEN_DELAY: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisConfig {
    /// Set-cardinality bound of the value domain.
    pub k: usize,
    /// Joins applied at a loop head or summary before widening starts.
    pub widen_delay: u32,
    /// 0: one summary per function. 1: one per calling site.
    pub context_depth: u8,
    /// Overrides the exported functions plus start.
    pub roots: Option<Vec<FuncIdx>>,
    /// Treat every table entry as a root too.
    pub open_tables: bool,
    /// Parameter values for specific roots; other roots get Top.
    pub entry_args: BTreeMap<FuncIdx, Vec<Num>>,
    /// The host may call roots repeatedly on one instance, so each root also
    /// starts from globals any root leaves behind. Off: every call starts
    /// from a fresh instance after the start function.
    pub reentrant: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            k: DEFAULT_K,
            widen_delay: DEFAULT_WIDEN_DELAY,
            context_depth: 0,
            roots: None,
            open_tables: false,
            entry_args: BTreeMap::new(),
            reentrant: false,
        }
    }
}

/// Possible callees of one call site.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CalleeSet {
    pub callees: BTreeSet<FuncIdx>,
    pub indirect: bool,
    /// The index was too wide to enumerate, so callees were chosen by type alone.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisResult {
    /// Only sites reached with a non-bottom memory appear.
    pub sites: BTreeMap<SiteId, CalleeSet>,
    /// Functions entered by the analysis, imports included.
    pub reached: BTreeSet<FuncIdx>,
    pub roots: Vec<FuncIdx>,
    /// Entry and exit per function, joined over contexts.
    pub summaries: BTreeMap<FuncIdx, Summary>,
    /// Program points processed.
    pub iterations: u64,
}

impl AnalysisResult {
    pub fn edges(&self) -> BTreeSet<CallEdge> {
        self.sites
            .iter()
            .flat_map(|(s, cs)| {
                cs.callees.iter().map(move |&c| CallEdge { caller: s.func, callee: c, site: s.ordinal })
            })
            .collect()
    }

    pub fn exit(&self, f: FuncIdx) -> Option<&AbstractMemory> {
        self.summaries.get(&f).map(|s| &s.exit)
    }

    pub fn fallback_sites(&self) -> usize {
        self.sites.values().filter(|cs| cs.fallback).count()
    }
}

/// Roots the analysis starts from under `cfg`.
pub fn resolve_roots(m: &ValidatedModule, cfg: &AnalysisConfig) -> Vec<FuncIdx> {
    let mut roots = cfg.roots.clone().unwrap_or_else(|| m.default_roots());
    if cfg.open_tables {
        if let Some(t) = &m.module().table {
            roots.extend(t.entries.iter().flatten());
        }
    }
    roots.sort();
    roots.dedup();
    roots
}

pub fn analyze(m: &ValidatedModule, cfg: &AnalysisConfig) -> AnalysisResult {
    engine::Engine::new(m, cfg).run()
}

#[cfg(test)]
mod tests;
