//! Parses every corpus module with `wat` and `wasmparser` and compares the
//! module structure with ours.

use std::path::PathBuf;

use wasmcg::frontend::{load, ModuleIR};
use wasmparser::{ElementItems, ElementKind, Operator, Parser, Payload, TypeRef, Validator};

#[derive(Debug, Default, PartialEq)]
struct Shape {
    /// (params, results) for every function, imports first.
    sigs: Vec<(usize, usize)>,
    globals: Vec<(bool, i32)>,
    table: Vec<Option<u32>>,
    exported_funcs: Vec<(String, u32)>,
    start: Option<u32>,
}

fn reference_shape(bytes: &[u8]) -> Shape {
    let mut types = Vec::new();
    let mut shape = Shape::default();
    for payload in Parser::new(0).parse_all(bytes) {
        match payload.unwrap() {
            Payload::TypeSection(r) => {
                for ft in r.into_iter_err_on_gc_types() {
                    let ft = ft.unwrap();
                    types.push((ft.params().len(), ft.results().len()));
                }
            }
            Payload::ImportSection(r) => {
                for imp in r.into_imports() {
                    if let TypeRef::Func(t) = imp.unwrap().ty {
                        shape.sigs.push(types[t as usize]);
                    }
                }
            }
            Payload::FunctionSection(r) => {
                for t in r {
                    shape.sigs.push(types[t.unwrap() as usize]);
                }
            }
            Payload::TableSection(r) => {
                for t in r {
                    shape.table = vec![None; t.unwrap().ty.initial as usize];
                }
            }
            Payload::GlobalSection(r) => {
                for g in r {
                    let g = g.unwrap();
                    let init = match g.init_expr.get_operators_reader().read().unwrap() {
                        Operator::I32Const { value } => value,
                        op => panic!("unexpected global init {op:?}"),
                    };
                    shape.globals.push((g.ty.mutable, init));
                }
            }
            Payload::ExportSection(r) => {
                for e in r {
                    let e = e.unwrap();
                    if e.kind == wasmparser::ExternalKind::Func {
                        shape.exported_funcs.push((e.name.to_string(), e.index));
                    }
                }
            }
            Payload::StartSection { func, .. } => shape.start = Some(func),
            Payload::ElementSection(r) => {
                for el in r {
                    let el = el.unwrap();
                    let ElementKind::Active { offset_expr, .. } = el.kind else { panic!("passive segment") };
                    let Operator::I32Const { value: offset } = offset_expr.get_operators_reader().read().unwrap()
                    else {
                        panic!("non-constant offset")
                    };
                    let ElementItems::Functions(funcs) = el.items else { panic!("expression elements") };
                    for (i, f) in funcs.into_iter().enumerate() {
                        shape.table[offset as usize + i] = Some(f.unwrap());
                    }
                }
            }
            _ => {}
        }
    }
    shape.exported_funcs.sort();
    shape
}

fn our_shape(m: &ModuleIR) -> Shape {
    let mut exported_funcs: Vec<(String, u32)> = m
        .exports
        .iter()
        .filter(|e| e.kind == wasmcg::frontend::ExportKind::Func)
        .map(|e| (e.name.clone(), e.index))
        .collect();
    exported_funcs.sort();
    Shape {
        sigs: (0..m.func_count())
            .map(|i| {
                let t = m.func_type(wasmcg::frontend::FuncIdx(i as u32)).unwrap();
                (t.params as usize, t.results as usize)
            })
            .collect(),
        globals: m.globals.iter().map(|g| (g.mutable, g.init)).collect(),
        table: m.table_entries().iter().map(|e| e.map(|f| f.0)).collect(),
        exported_funcs,
        start: m.start.map(|f| f.0),
    }
}

#[test]
fn corpus_modules_match_reference_parser() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    let mut checked = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "wat") {
            continue;
        }
        let src = std::fs::read_to_string(&path).unwrap();
        let bytes = wat::parse_str(&src).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        Validator::new().validate_all(&bytes).unwrap();
        let ours = load(&src).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(our_shape(ours.module()), reference_shape(&bytes), "{}", path.display());
        checked += 1;
    }
    assert!(checked >= 15);
}

#[test]
fn reference_rejects_what_we_reject() {
    for src in [
        "(module (func (br 1)))",
        "(module (func (result i32)))",
        "(module (func i32.add drop))",
        "(module (global i32 (i32.const 0)) (func (global.set 0 (i32.const 1))))",
        "(module (func (call 3)))",
        "(module (func (local.get 0) drop))",
    ] {
        assert!(load(src).is_err(), "{src}");
        let rejected = match wat::parse_str(src) {
            Err(_) => true,
            Ok(bytes) => Validator::new().validate_all(&bytes).is_err(),
        };
        assert!(rejected, "reference accepts {src}");
    }
}
