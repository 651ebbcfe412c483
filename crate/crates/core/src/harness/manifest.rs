//! Corpus manifests: which programs to run, how to drive them, and what they
//! are expected to call.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::frontend::{load, FuncIdx, LoadError, ValidatedModule};
use crate::site::CallEdge;

pub const DEFAULT_RANGE: (i32, i32) = (-2, 3);

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub cases: Vec<CaseSpec>,
}

/// One program of the corpus as written in `manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub name: String,
    pub file: String,
    #[serde(default)]
    pub tags: Vec<String>,
    /// Hand-derived edges as `[caller, callee, site]`, functions by `$id` or export name.
    pub ground_truth: Vec<(String, String, u32)>,
    /// Explicit argument vectors; replaces the range enumeration.
    #[serde(default)]
    pub inputs: Option<Vec<Vec<i32>>>,
    /// Inclusive per-parameter range for exhaustive enumeration.
    #[serde(default)]
    pub range: Option<(i32, i32)>,
    /// Import stub sequences to try, one concrete run each.
    #[serde(default)]
    pub import_values: Option<Vec<Vec<i32>>>,
    #[serde(default)]
    pub open_tables: bool,
    #[serde(default)]
    pub context: u8,
    #[serde(default)]
    pub fuel: Option<u64>,
}

/// How the oracle drives a case's entry points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputPolicy {
    Explicit(Vec<Vec<i32>>),
    Range { lo: i32, hi: i32 },
}

impl InputPolicy {
    /// Argument vectors for a function with `arity` parameters.
    pub fn vectors(&self, arity: usize) -> Vec<Vec<i32>> {
        match self {
            InputPolicy::Explicit(v) => v.iter().filter(|a| a.len() == arity).cloned().collect(),
            InputPolicy::Range { lo, hi } => (0..arity).fold(vec![Vec::new()], |acc, _| {
                acc.into_iter()
                    .flat_map(|prefix| {
                        (*lo..=*hi).map(move |v| {
                            let mut p = prefix.clone();
                            p.push(v);
                            p
                        })
                    })
                    .collect()
            }),
        }
    }
}

/// A case with its module loaded and names resolved.
#[derive(Debug, Clone)]
pub struct CorpusCase {
    pub name: String,
    pub path: PathBuf,
    pub source: String,
    pub module: ValidatedModule,
    pub tags: Vec<String>,
    pub ground_truth: BTreeSet<CallEdge>,
    pub inputs: InputPolicy,
    pub import_values: Vec<Vec<i32>>,
    pub open_tables: bool,
    pub context: u8,
    pub fuel: u64,
}

impl CorpusCase {
    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest {path}: {source}")]
    Manifest { path: PathBuf, source: serde_json::Error },
    #[error("case {case}: {source}")]
    Load { case: String, source: LoadError },
    #[error("case {case}: unknown function {name}")]
    UnknownFunction { case: String, name: String },
    #[error("case {case}: explicit inputs and a range are exclusive")]
    ConflictingInputs { case: String },
    #[error("duplicate case name {0}")]
    Duplicate(String),
}

fn read(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

/// Loads `dir/manifest.json` and every module it lists, sorted by case name.
pub fn load_corpus(dir: &Path) -> Result<Vec<CorpusCase>, CorpusError> {
    let path = dir.join("manifest.json");
    let manifest: Manifest =
        serde_json::from_str(&read(&path)?).map_err(|source| CorpusError::Manifest { path, source })?;
    let mut names = BTreeSet::new();
    let mut cases = Vec::with_capacity(manifest.cases.len());
    for spec in manifest.cases {
        if !names.insert(spec.name.clone()) {
            return Err(CorpusError::Duplicate(spec.name));
        }
        cases.push(load_case(dir, spec)?);
    }
    cases.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(cases)
}

pub fn load_case(dir: &Path, spec: CaseSpec) -> Result<CorpusCase, CorpusError> {
    let path = dir.join(&spec.file);
    let source = read(&path)?;
    let module = load(&source).map_err(|source| CorpusError::Load { case: spec.name.clone(), source })?;
    let resolve = |name: &str| -> Result<FuncIdx, CorpusError> {
        module
            .module()
            .resolve_func(name)
            .ok_or_else(|| CorpusError::UnknownFunction { case: spec.name.clone(), name: name.to_string() })
    };
    let ground_truth = spec
        .ground_truth
        .iter()
        .map(|(from, to, site)| Ok(CallEdge { caller: resolve(from)?, callee: resolve(to)?, site: *site }))
        .collect::<Result<_, CorpusError>>()?;
    let inputs = match (spec.inputs, spec.range) {
        (Some(_), Some(_)) => return Err(CorpusError::ConflictingInputs { case: spec.name }),
        (Some(v), None) => InputPolicy::Explicit(v),
        (None, r) => {
            let (lo, hi) = r.unwrap_or(DEFAULT_RANGE);
            InputPolicy::Range { lo, hi }
        }
    };
    Ok(CorpusCase {
        name: spec.name,
        path,
        source,
        module,
        tags: spec.tags,
        ground_truth,
        inputs,
        import_values: spec.import_values.unwrap_or_else(|| vec![vec![0]]),
        open_tables: spec.open_tables,
        context: spec.context,
        fuel: spec.fuel.unwrap_or(crate::concrete::DEFAULT_FUEL),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_enumeration() {
        let p = InputPolicy::Range { lo: -2, hi: 3 };
        assert_eq!(p.vectors(0), vec![Vec::<i32>::new()]);
        assert_eq!(p.vectors(1).len(), 6);
        let two = p.vectors(2);
        assert_eq!(two.len(), 36);
        assert_eq!(two[0], vec![-2, -2]);
        assert_eq!(two[35], vec![3, 3]);
        let e = InputPolicy::Explicit(vec![vec![1], vec![1, 2]]);
        assert_eq!(e.vectors(1), vec![vec![1]]);
    }

    #[test]
    fn manifest_rejects_unknown_fields() {
        let bad = r#"{"cases":[{"name":"a","file":"a.wat","ground_truth":[],"colour":1}]}"#;
        assert!(serde_json::from_str::<Manifest>(bad).is_err());
        let ok = r#"{"cases":[{"name":"a","file":"a.wat","ground_truth":[["$main","$f",1]]}]}"#;
        let m: Manifest = serde_json::from_str(ok).unwrap();
        assert_eq!(m.cases[0].ground_truth, vec![("$main".into(), "$f".into(), 1)]);
    }
}
