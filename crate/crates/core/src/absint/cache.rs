use std::collections::{BTreeMap, BTreeSet};

use crate::domain::{AbstractMemory, Domain};
use crate::frontend::FuncIdx;
use crate::site::SiteId;

/// A function analysed under a calling context (`None` for roots and in
/// context-insensitive runs).
pub type Unit = (FuncIdx, Option<SiteId>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    /// Locals (parameters then declared locals) and globals on entry.
    pub entry: AbstractMemory,
    /// Globals on exit with the result values on the stack.
    pub exit: AbstractMemory,
}

#[derive(Debug, Clone)]
struct CacheEntry {
    summary: Summary,
    entry_updates: u32,
    exit_updates: u32,
    /// Worklist items to revisit when the exit grows.
    dependents: BTreeSet<(usize, usize)>,
}

/// Entry/exit memories per analysed unit.
///
/// Entries only grow: a caller whose entry is not covered is joined in (then
/// widened once the delay is spent), and the same holds for exits.
#[derive(Debug, Clone)]
pub struct FunctionSummaryCache {
    domain: Domain,
    delay: u32,
    entries: BTreeMap<Unit, CacheEntry>,
}

/// `old` grown to cover `new`, or `None` if it already does.
pub(crate) fn accumulate(
    d: &Domain,
    old: &AbstractMemory,
    new: &AbstractMemory,
    updates: &mut u32,
    delay: u32,
) -> Option<AbstractMemory> {
    if new.leq(old) {
        return None;
    }
    let next = if *updates < delay { d.join_mem(old, new) } else { d.widen_mem(old, new) };
    let next = next.unwrap_or_else(|e| panic!("analyzer invariant broken: {e}"));
    *updates += 1;
    Some(next)
}

impl FunctionSummaryCache {
    pub fn new(domain: Domain, delay: u32) -> Self {
        FunctionSummaryCache { domain, delay, entries: BTreeMap::new() }
    }

    fn slot(&mut self, u: Unit) -> &mut CacheEntry {
        self.entries.entry(u).or_insert_with(|| CacheEntry {
            summary: Summary { entry: AbstractMemory::bottom(), exit: AbstractMemory::bottom() },
            entry_updates: 0,
            exit_updates: 0,
            dependents: BTreeSet::new(),
        })
    }

    pub fn get(&self, u: &Unit) -> Option<&Summary> {
        self.entries.get(u).map(|e| &e.summary)
    }

    /// Grows the entry of `u`; returns the new entry if it changed.
    pub fn offer_entry(&mut self, u: Unit, new: &AbstractMemory) -> Option<AbstractMemory> {
        let (d, delay) = (self.domain, self.delay);
        let e = self.slot(u);
        let next = accumulate(&d, &e.summary.entry, new, &mut e.entry_updates, delay)?;
        assert!(e.summary.entry.leq(&next), "summary entry of {u:?} shrank");
        e.summary.entry = next.clone();
        Some(next)
    }

    /// Grows the exit of `u`; returns the items depending on it if it changed.
    pub fn offer_exit(&mut self, u: Unit, new: &AbstractMemory) -> Option<Vec<(usize, usize)>> {
        let (d, delay) = (self.domain, self.delay);
        let e = self.slot(u);
        e.summary.exit = accumulate(&d, &e.summary.exit, new, &mut e.exit_updates, delay)?;
        Some(e.dependents.iter().copied().collect())
    }

    /// Records that `item` read the exit of `u`.
    pub fn depend(&mut self, u: Unit, item: (usize, usize)) {
        self.slot(u).dependents.insert(item);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Unit, &Summary)> {
        self.entries.iter().map(|(u, e)| (u, &e.summary))
    }
}
