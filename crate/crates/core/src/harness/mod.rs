//! Differential evaluation over a corpus: abstract graph, type-only baseline
//! and concrete oracle per case, gathered into a report.

mod manifest;
mod report;

use std::collections::BTreeSet;

pub use manifest::{load_case, load_corpus, CaseSpec, CorpusCase, CorpusError, InputPolicy, Manifest, DEFAULT_RANGE};
pub use report::{CaseReport, Report, Totals};

use crate::absint::{analyze, AnalysisConfig, AnalysisResult};
use crate::callgraph::{build, build_type_baseline, CallGraph};
use crate::concrete::{run_with, ConcreteTrace, Outcome, RunConfig};
use crate::frontend::FuncIdx;
use crate::site::CallEdge;

/// Analysis settings applied to every case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub k: usize,
    pub widen_delay: u32,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let a = AnalysisConfig::default();
        BenchConfig { k: a.k, widen_delay: a.widen_delay }
    }
}

impl BenchConfig {
    pub fn analysis(&self, case: &CorpusCase) -> AnalysisConfig {
        AnalysisConfig {
            k: self.k,
            widen_delay: self.widen_delay,
            context_depth: case.context,
            open_tables: case.open_tables,
            ..AnalysisConfig::default()
        }
    }
}

/// Functions the oracle calls from the host: exports, plus table entries
/// when the case treats its table as open.
pub fn oracle_entries(case: &CorpusCase) -> Vec<FuncIdx> {
    let m = &case.module;
    let mut entries: Vec<FuncIdx> = m.module().exported_funcs().collect();
    if case.open_tables {
        entries.extend(m.module().table_entries().iter().flatten());
    }
    entries.retain(|f| m.code(*f).is_some());
    entries.sort();
    entries.dedup();
    entries
}

/// One concrete execution of the oracle.
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub entry: FuncIdx,
    pub args: Vec<i32>,
    pub import_values: Vec<i32>,
    pub trace: ConcreteTrace,
}

/// Every run the input policy prescribes, in a fixed order.
pub fn oracle_runs(case: &CorpusCase) -> Vec<OracleRun> {
    let mut runs = Vec::new();
    for entry in oracle_entries(case) {
        let arity = case.module.code(entry).expect("entries are defined").params as usize;
        for args in case.inputs.vectors(arity) {
            for imports in &case.import_values {
                let cfg = RunConfig { fuel: case.fuel, import_values: imports.clone() };
                let trace = run_with(&case.module, entry, &args, &cfg).expect("arity matches the entry");
                runs.push(OracleRun { entry, args: args.clone(), import_values: imports.clone(), trace });
            }
        }
    }
    runs
}

/// Everything computed for one case.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub analysis: AnalysisResult,
    pub graph: CallGraph,
    pub baseline: CallGraph,
    pub runs: Vec<OracleRun>,
    pub report: CaseReport,
}

pub fn evaluate_case(case: &CorpusCase, cfg: &BenchConfig) -> Evaluation {
    let analysis = analyze(&case.module, &cfg.analysis(case));
    let graph = build(&case.module, &analysis);
    let baseline = build_type_baseline(&case.module, &analysis.roots);
    let runs = oracle_runs(case);
    let oracle: BTreeSet<CallEdge> = runs.iter().flat_map(|r| r.trace.edges.iter().copied()).collect();
    let abstract_edges = graph.call_edges();
    let baseline_edges = baseline.call_edges();
    let count = |p: fn(&Outcome) -> bool| runs.iter().filter(|r| p(&r.trace.outcome)).count();
    let report = CaseReport {
        name: case.name.clone(),
        tags: case.tags.clone(),
        sound: oracle.is_subset(&abstract_edges),
        within_baseline: abstract_edges.is_subset(&baseline_edges),
        ground_truth_reproduced: case.ground_truth.is_subset(&oracle),
        abstract_edges: abstract_edges.len(),
        baseline_edges: baseline_edges.len(),
        oracle_edges: oracle.len(),
        fallback_sites: analysis.fallback_sites(),
        precision_ratio: if baseline_edges.is_empty() {
            1.0
        } else {
            abstract_edges.len() as f64 / baseline_edges.len() as f64
        },
        runs: runs.len(),
        traps: count(|o| matches!(o, Outcome::Trapped(_))),
        fuel_exhausted: count(|o| matches!(o, Outcome::FuelExhausted)),
        missed: oracle.difference(&abstract_edges).map(|e| e.to_string()).collect(),
        beyond_baseline: abstract_edges.difference(&baseline_edges).map(|e| e.to_string()).collect(),
    };
    Evaluation { analysis, graph, baseline, runs, report }
}

pub fn evaluate_sequential(cases: &[CorpusCase], cfg: &BenchConfig) -> Report {
    Report::new(cases.iter().map(|c| evaluate_case(c, cfg).report).collect())
}

#[cfg(feature = "parallel")]
pub fn evaluate_parallel(cases: &[CorpusCase], cfg: &BenchConfig) -> Report {
    use rayon::prelude::*;
    Report::new(cases.par_iter().map(|c| evaluate_case(c, cfg).report).collect())
}

/// Evaluates all cases, on worker threads when built with `parallel`.
pub fn evaluate(cases: &[CorpusCase], cfg: &BenchConfig) -> Report {
    #[cfg(feature = "parallel")]
    return evaluate_parallel(cases, cfg);
    #[cfg(not(feature = "parallel"))]
    evaluate_sequential(cases, cfg)
}
