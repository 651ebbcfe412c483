use std::fmt::Write as _;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub name: String,
    pub tags: Vec<String>,
    /// Every concrete edge is in the abstract graph.
    pub sound: bool,
    /// Every abstract edge is in the type-only baseline.
    pub within_baseline: bool,
    pub ground_truth_reproduced: bool,
    pub abstract_edges: usize,
    pub baseline_edges: usize,
    pub oracle_edges: usize,
    pub fallback_sites: usize,
    /// abstract / baseline edge counts; 1 when the baseline is empty.
    pub precision_ratio: f64,
    pub runs: usize,
    pub traps: usize,
    pub fuel_exhausted: usize,
    /// Concrete edges the analysis missed.
    pub missed: Vec<String>,
    pub beyond_baseline: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Totals {
    pub cases: usize,
    pub sound_cases: usize,
    pub within_baseline_cases: usize,
    pub abstract_edges: usize,
    pub baseline_edges: usize,
    pub oracle_edges: usize,
    pub fallback_sites: usize,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub cases: Vec<CaseReport>,
    pub totals: Totals,
}

impl Report {
    /// Sorts cases by name and sums the totals.
    pub fn new(mut cases: Vec<CaseReport>) -> Report {
        cases.sort_by(|a, b| a.name.cmp(&b.name));
        let mut t = Totals { cases: cases.len(), ..Totals::default() };
        for c in &cases {
            t.sound_cases += c.sound as usize;
            t.within_baseline_cases += c.within_baseline as usize;
            t.abstract_edges += c.abstract_edges;
            t.baseline_edges += c.baseline_edges;
            t.oracle_edges += c.oracle_edges;
            t.fallback_sites += c.fallback_sites;
            t.runs += c.runs;
        }
        Report { cases, totals: t }
    }

    pub fn all_sound(&self) -> bool {
        self.cases.iter().all(|c| c.sound)
    }

    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.sound && c.within_baseline)
    }

    /// Pretty JSON with object keys sorted.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("reports serialize");
        let mut s = serde_json::to_string_pretty(&value).expect("values serialize");
        s.push('\n');
        s
    }

    pub fn table(&self) -> String {
        let width = self.cases.iter().map(|c| c.name.len()).max().unwrap_or(4).max(4);
        let mut out = String::new();
        writeln!(out, "{:width$}  sound  abstract  baseline  oracle  fallback  ratio", "case").unwrap();
        for c in &self.cases {
            writeln!(
                out,
                "{:width$}  {:5}  {:8}  {:8}  {:6}  {:8}  {:.3}",
                c.name,
                if c.sound { "yes" } else { "NO" },
                c.abstract_edges,
                c.baseline_edges,
                c.oracle_edges,
                c.fallback_sites,
                c.precision_ratio
            )
            .unwrap();
        }
        let t = &self.totals;
        writeln!(
            out,
            "{:width$}  {:>5}  {:8}  {:8}  {:6}  {:8}",
            "total",
            format!("{}/{}", t.sound_cases, t.cases),
            t.abstract_edges,
            t.baseline_edges,
            t.oracle_edges,
            t.fallback_sites
        )
        .unwrap();
        out
    }
}
