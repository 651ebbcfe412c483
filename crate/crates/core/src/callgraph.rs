//! Call graphs from analysis results and from function types alone, their
//! comparison, and DOT/JSON output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::absint::AnalysisResult;
use crate::frontend::{FuncIdx, Op, ValidatedModule};
use crate::site::CallEdge;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Direct,
    Indirect,
    /// Resolved by the callee's type alone.
    IndirectFallback,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Direct => "direct",
            EdgeKind::Indirect => "indirect",
            EdgeKind::IndirectFallback => "indirect-fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Node {
    pub id: FuncIdx,
    pub name: String,
    pub imported: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: FuncIdx,
    pub to: FuncIdx,
    pub site: u32,
    pub kind: EdgeKind,
}

impl GraphEdge {
    pub fn call_edge(&self) -> CallEdge {
        CallEdge { caller: self.from, callee: self.to, site: self.site }
    }
}

/// Functions reachable from the roots, and the may-call edges between them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<GraphEdge>,
    pub roots: Vec<FuncIdx>,
}

impl CallGraph {
    fn assemble(m: &ValidatedModule, roots: &[FuncIdx], edges: BTreeSet<GraphEdge>) -> CallGraph {
        let ir = m.module();
        let mut ids: BTreeSet<FuncIdx> = roots.iter().copied().collect();
        ids.extend(edges.iter().flat_map(|e| [e.from, e.to]));
        CallGraph {
            nodes: ids
                .into_iter()
                .map(|id| Node { id, name: m.display_name(id), imported: ir.is_import(id) })
                .collect(),
            edges: edges.into_iter().collect(),
            roots: roots.to_vec(),
        }
    }

    /// Edges as (caller, callee, site), ignoring kind.
    pub fn call_edges(&self) -> BTreeSet<CallEdge> {
        self.edges.iter().map(GraphEdge::call_edge).collect()
    }

    pub fn node(&self, id: FuncIdx) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn fallback_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.kind == EdgeKind::IndirectFallback).count()
    }
}

/// The graph the abstract interpretation justifies.
pub fn build(m: &ValidatedModule, result: &AnalysisResult) -> CallGraph {
    let edges = result
        .sites
        .iter()
        .flat_map(|(site, cs)| {
            let kind = match (cs.indirect, cs.fallback) {
                (false, _) => EdgeKind::Direct,
                (true, false) => EdgeKind::Indirect,
                (true, true) => EdgeKind::IndirectFallback,
            };
            cs.callees.iter().map(move |&to| GraphEdge { from: site.func, to, site: site.ordinal, kind })
        })
        .collect();
    CallGraph::assemble(m, &result.roots, edges)
}

/// The graph obtained by sending every `call_indirect` to every table entry
/// of the annotated type, ignoring the stack.
pub fn build_type_baseline(m: &ValidatedModule, roots: &[FuncIdx]) -> CallGraph {
    let ir = m.module();
    let table: BTreeSet<FuncIdx> = ir.table_entries().iter().flatten().copied().collect();
    let mut edges = BTreeSet::new();
    let mut seen: BTreeSet<FuncIdx> = roots.iter().copied().collect();
    let mut todo: Vec<FuncIdx> = roots.to_vec();
    while let Some(f) = todo.pop() {
        let Some(code) = m.code(f) else { continue };
        for (_, op) in code.sites() {
            match *op {
                Op::Call { func, site } => {
                    edges.insert(GraphEdge { from: f, to: func, site, kind: EdgeKind::Direct });
                }
                Op::CallIndirect { type_index, site } => {
                    let expected = ir.types[type_index as usize];
                    for &g in table.iter().filter(|g| ir.func_type(**g) == Some(expected)) {
                        edges.insert(GraphEdge { from: f, to: g, site, kind: EdgeKind::IndirectFallback });
                    }
                }
                _ => unreachable!("sites() yields calls only"),
            }
        }
        for e in edges.iter().filter(|e| e.from == f) {
            if seen.insert(e.to) {
                todo.push(e.to);
            }
        }
    }
    CallGraph::assemble(m, roots, edges)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphDelta {
    pub only_a: BTreeSet<CallEdge>,
    pub only_b: BTreeSet<CallEdge>,
    pub shared: BTreeSet<CallEdge>,
    pub count_a: usize,
    pub count_b: usize,
}

impl GraphDelta {
    pub fn is_empty(&self) -> bool {
        self.only_a.is_empty() && self.only_b.is_empty()
    }
}

/// Partition of the edges of `a` and `b`, compared by (caller, callee, site).
pub fn diff(a: &CallGraph, b: &CallGraph) -> GraphDelta {
    let (ea, eb) = (a.call_edges(), b.call_edges());
    GraphDelta {
        only_a: ea.difference(&eb).copied().collect(),
        only_b: eb.difference(&ea).copied().collect(),
        shared: ea.intersection(&eb).copied().collect(),
        count_a: ea.len(),
        count_b: eb.len(),
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn emit_dot(g: &CallGraph) -> String {
    let mut out = String::from("digraph callgraph {\n  node [shape=box];\n");
    for n in &g.nodes {
        let mut attrs = format!("label=\"{}:{}\"", n.id, dot_escape(&n.name));
        if g.roots.contains(&n.id) {
            attrs.push_str(", peripheries=2");
        }
        if n.imported {
            attrs.push_str(", style=dotted");
        }
        writeln!(out, "  f{} [{attrs}];", n.id).unwrap();
    }
    for e in &g.edges {
        let style = if e.kind == EdgeKind::IndirectFallback { ", style=dashed" } else { "" };
        writeln!(out, "  f{} -> f{} [label=\"@{}\"{style}];", e.from, e.to, e.site).unwrap();
    }
    out.push_str("}\n");
    out
}

/// Pretty JSON with object keys sorted; arrays keep the graph's own order.
pub fn emit_json(g: &CallGraph) -> String {
    let value = serde_json::to_value(g).expect("call graphs serialize");
    let mut s = serde_json::to_string_pretty(&value).expect("values serialize");
    s.push('\n');
    s
}

pub fn parse_json(text: &str) -> Result<CallGraph, serde_json::Error> {
    serde_json::from_str(text)
}

/// Number of edges per site, for precision reports.
pub fn edges_per_site(g: &CallGraph) -> BTreeMap<(FuncIdx, u32), usize> {
    let mut out = BTreeMap::new();
    for e in &g.edges {
        *out.entry((e.from, e.site)).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::absint::{analyze, AnalysisConfig};
    use crate::frontend::load;

    fn graphs(src: &str) -> (CallGraph, CallGraph) {
        let m = load(src).unwrap();
        let r = analyze(&m, &AnalysisConfig::default());
        (build(&m, &r), build_type_baseline(&m, &r.roots))
    }

    const CONST_INDEX: &str = r#"(module
        (type $t (func (result i32)))
        (table funcref (elem $f $g))
        (func $f (type $t) (i32.const 10))
        (func $g (type $t) (i32.const 20))
        (func $main (export "main") (result i32) (call_indirect (type $t) (i32.const 1))))"#;

    #[test]
    fn direct_call_graph() {
        let (g, base) = graphs(r#"(module (func $main (export "main") (call $f)) (func $f) (func $unused))"#);
        assert_eq!(g.call_edges(), BTreeSet::from([CallEdge { caller: FuncIdx(0), callee: FuncIdx(1), site: 0 }]));
        assert_eq!(g.edges[0].kind, EdgeKind::Direct);
        assert!(g.node(FuncIdx(2)).is_none());
        assert_eq!(g, base);
    }

    #[test]
    fn indirect_site_with_two_callees() {
        let (g, _) = graphs(
            r#"(module
                 (type $t (func))
                 (table funcref (elem $f $g))
                 (func $f) (func $g)
                 (func $main (export "main") (param i32)
                   (call_indirect (type $t) (i32.and (local.get 0) (i32.const 1)))))"#,
        );
        assert_eq!(g.edges.len(), 2);
        assert!(g.edges.iter().all(|e| e.site == g.edges[0].site && e.kind == EdgeKind::Indirect));
    }

    #[test]
    fn baseline_uses_types_only() {
        let m = load(
            r#"(module
                 (type $t1 (func)) (type $t2 (func (param i32)))
                 (table funcref (elem $f $g))
                 (func $f (type $t1)) (func $g (type $t1))
                 (func $main (export "main")
                   (call_indirect (type $t1) (i32.const 0))
                   (call_indirect (type $t2) (i32.const 0) (i32.const 0))))"#,
        )
        .unwrap();
        let base = build_type_baseline(&m, &m.default_roots());
        let targets: Vec<(u32, u32)> = base.edges.iter().map(|e| (e.site, e.to.0)).collect();
        assert_eq!(targets, vec![(1, 0), (1, 1)]);
    }

    #[test]
    fn constant_index_is_strictly_smaller() {
        let (g, base) = graphs(CONST_INDEX);
        let delta = diff(&g, &base);
        assert!(delta.only_a.is_empty());
        assert_eq!(delta.only_b, BTreeSet::from([CallEdge { caller: FuncIdx(2), callee: FuncIdx(0), site: 1 }]));
        assert_eq!((delta.count_a, delta.count_b), (1, 2));
        let back = diff(&base, &g);
        assert_eq!((back.only_a, back.only_b), (delta.only_b, delta.only_a));
        assert!(diff(&g, &g).is_empty());
    }

    #[test]
    fn dot_output() {
        let (g, base) = graphs(CONST_INDEX);
        let dot = emit_dot(&g);
        assert!(dot.starts_with("digraph callgraph {"));
        assert!(dot.contains("f2 [label=\"2:main\", peripheries=2];"));
        assert!(dot.contains("f2 -> f1 [label=\"@1\"];"));
        assert!(emit_dot(&base).contains("style=dashed"));
        let empty =
            CallGraph { nodes: vec![Node { id: FuncIdx(0), name: "m".into(), imported: false }], ..Default::default() };
        assert_eq!(emit_dot(&empty), "digraph callgraph {\n  node [shape=box];\n  f0 [label=\"0:m\"];\n}\n");
    }

    #[test]
    fn json_is_sorted_and_round_trips() {
        let (g, _) = graphs(CONST_INDEX);
        let text = emit_json(&g);
        assert_eq!(text, emit_json(&g));
        assert_eq!(parse_json(&text).unwrap(), g);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let edge = &v["edges"][0];
        assert_eq!(edge["kind"], "indirect");
        let keys: Vec<&String> = edge.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["from", "kind", "site", "to"]);
        assert!(text.find("\"edges\"").unwrap() < text.find("\"nodes\"").unwrap());
    }
}
