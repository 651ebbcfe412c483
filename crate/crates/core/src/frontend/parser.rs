//! Text-format parser for the supported subset.
//!
//! Both the flat (`block ... end`) and the folded (`(block ...)`) instruction
//! syntaxes are accepted. Symbolic names (`$f`, `$l`, `$x`) are resolved to
//! indices and depths here, so the resulting IR is purely numeric.

use std::collections::HashMap;

use super::error::{ParseError, ParseErrorKind};
use super::ir::*;
use super::sexpr::{read_all, Pos, SExpr};

pub fn parse(source: &str) -> Result<ModuleIR, ParseError> {
    let top = read_all(source)?;
    let fields: Vec<SExpr> = match top.as_slice() {
        [single] if single.head() == Some("module") => {
            let items = single.as_list().unwrap_or(&[]);
            let mut rest = &items[1..];
            if let Some(SExpr::Atom(a, _)) = rest.first() {
                if a.starts_with('$') {
                    rest = &rest[1..];
                }
            }
            rest.to_vec()
        }
        _ => top,
    };
    ModuleParser::default().run(&fields)
}

fn syntax(pos: Pos, msg: impl Into<String>) -> ParseError {
    ParseError::new(ParseErrorKind::Syntax, pos, msg)
}

fn id_of(item: Option<&SExpr>) -> Option<String> {
    match item {
        Some(SExpr::Atom(a, _)) if a.starts_with('$') => Some(a[1..].to_string()),
        _ => None,
    }
}

pub(crate) fn parse_i32(text: &str, pos: Pos) -> Result<i32, ParseError> {
    let cleaned: String = text.chars().filter(|&c| c != '_').collect();
    let (neg, digits) = match cleaned.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, cleaned.strip_prefix('+').unwrap_or(&cleaned)),
    };
    let magnitude =
        if let Some(hex) = digits.strip_prefix("0x") { u64::from_str_radix(hex, 16) } else { digits.parse::<u64>() }
            .map_err(|_| syntax(pos, format!("malformed i32 literal `{text}`")))?;
    if neg {
        if magnitude > 1 << 31 {
            return Err(syntax(pos, format!("i32 literal `{text}` out of range")));
        }
        Ok((magnitude as i64).wrapping_neg() as i32)
    } else {
        if magnitude > u32::MAX as u64 {
            return Err(syntax(pos, format!("i32 literal `{text}` out of range")));
        }
        Ok(magnitude as u32 as i32)
    }
}

fn parse_u32(text: &str, pos: Pos) -> Result<u32, ParseError> {
    let cleaned: String = text.chars().filter(|&c| c != '_').collect();
    let parsed = match cleaned.strip_prefix("0x") {
        Some(hex) => u32::from_str_radix(hex, 16),
        None => cleaned.parse::<u32>(),
    };
    parsed.map_err(|_| syntax(pos, format!("expected an index, found `{text}`")))
}

fn check_valtype(item: &SExpr) -> Result<(), ParseError> {
    match item {
        SExpr::Atom(a, _) if a == "i32" => Ok(()),
        SExpr::Atom(a, pos) if matches!(a.as_str(), "i64" | "f32" | "f64" | "v128" | "funcref" | "externref") => {
            Err(ParseError::unsupported(a.clone(), *pos))
        }
        other => Err(syntax(other.pos(), "expected a value type")),
    }
}

/// `(param ...)`, `(result ...)` and `(type ...)` clauses of a type use.
#[derive(Default)]
struct TypeUse {
    explicit: Option<(u32, Pos)>,
    params: Vec<Option<String>>,
    results: u32,
    saw_signature: bool,
}

#[derive(Default)]
struct Names {
    types: HashMap<String, u32>,
    funcs: HashMap<String, u32>,
    globals: HashMap<String, u32>,
    table: Option<String>,
}

#[derive(Default)]
struct ModuleParser {
    m: ModuleIR,
    names: Names,
    table_size: Option<(u32, Pos)>,
    table_inline: Vec<FuncIdx>,
    elems: Vec<(u32, Vec<FuncIdx>, Pos)>,
}

impl ModuleParser {
    fn run(mut self, fields: &[SExpr]) -> Result<ModuleIR, ParseError> {
        self.declare(fields)?;
        for field in fields {
            self.field(field)?;
        }
        self.finish_table()?;
        Ok(self.m)
    }

    /// First pass: explicit types and the names of every indexed entity.
    fn declare(&mut self, fields: &[SExpr]) -> Result<(), ParseError> {
        let mut imports = 0u32;
        let mut defined = 0u32;
        let mut globals = 0u32;
        let mut func_ids = Vec::new();
        for field in fields {
            let items = field.as_list().ok_or_else(|| syntax(field.pos(), "expected a module field"))?;
            match field.head() {
                Some("type") => {
                    let idx = self.m.types.len() as u32;
                    let mut i = 1;
                    if let Some(name) = id_of(items.get(1)) {
                        self.names.types.insert(name, idx);
                        i = 2;
                    }
                    let func = items
                        .get(i)
                        .filter(|f| f.head() == Some("func"))
                        .ok_or_else(|| syntax(field.pos(), "expected (func ...) in type definition"))?;
                    let body = func.as_list().unwrap();
                    let mut j = 1;
                    let tu = self.type_use_clauses(body, &mut j)?;
                    if j != body.len() {
                        return Err(syntax(body[j].pos(), "unexpected item in type definition"));
                    }
                    self.m.types.push(FuncType::new(tu.params.len() as u32, tu.results));
                }
                Some("import") => {
                    let desc = items.get(3);
                    match desc.and_then(SExpr::head) {
                        Some("func") => {
                            if defined > 0 {
                                return Err(syntax(field.pos(), "import after function definition"));
                            }
                            func_ids.push((id_of(desc.and_then(|d| d.as_list()).and_then(|d| d.get(1))), imports));
                            imports += 1;
                        }
                        Some(other) => return Err(ParseError::unsupported(format!("imported {other}"), field.pos())),
                        None => return Err(syntax(field.pos(), "malformed import")),
                    }
                }
                Some("func") => {
                    let inline_import = items.iter().any(|it| it.head() == Some("import"));
                    let name = id_of(items.get(1));
                    if inline_import {
                        if defined > 0 {
                            return Err(syntax(field.pos(), "import after function definition"));
                        }
                        func_ids.push((name, imports));
                        imports += 1;
                    } else {
                        func_ids.push((name, imports + defined));
                        defined += 1;
                    }
                }
                Some("global") => {
                    if let Some(name) = id_of(items.get(1)) {
                        self.names.globals.insert(name, globals);
                    }
                    globals += 1;
                }
                Some("table") => {
                    self.names.table = id_of(items.get(1));
                }
                Some("export" | "elem" | "start") => {}
                Some(other @ ("memory" | "data" | "tag")) => {
                    return Err(ParseError::unsupported(other.to_string(), field.pos()))
                }
                Some(other) => return Err(syntax(field.pos(), format!("unknown module field `{other}`"))),
                None => return Err(syntax(field.pos(), "expected a module field")),
            }
        }
        for (name, idx) in func_ids {
            if let Some(name) = name {
                self.names.funcs.insert(name, idx);
            }
        }
        Ok(())
    }

    fn field(&mut self, field: &SExpr) -> Result<(), ParseError> {
        let items = field.as_list().unwrap();
        match field.head() {
            Some("type") => Ok(()),
            Some("import") => self.import(items, field.pos()),
            Some("func") => self.func(items, field.pos()),
            Some("global") => self.global(items, field.pos()),
            Some("table") => self.table(items, field.pos()),
            Some("elem") => self.elem(items, field.pos()),
            Some("export") => self.export(items, field.pos()),
            Some("start") => {
                let target = items.get(1).ok_or_else(|| syntax(field.pos(), "start needs a function"))?;
                if self.m.start.is_some() {
                    return Err(syntax(field.pos(), "multiple start functions"));
                }
                self.m.start = Some(self.func_ref(target)?);
                Ok(())
            }
            _ => unreachable!("rejected in the declaration pass"),
        }
    }

    fn string_at(items: &[SExpr], i: usize, what: &str, pos: Pos) -> Result<String, ParseError> {
        match items.get(i) {
            Some(SExpr::Str(s, _)) => Ok(s.clone()),
            _ => Err(syntax(pos, format!("expected {what} string"))),
        }
    }

    fn import(&mut self, items: &[SExpr], pos: Pos) -> Result<(), ParseError> {
        let module = Self::string_at(items, 1, "module name", pos)?;
        let field = Self::string_at(items, 2, "field name", pos)?;
        let desc = items[3].as_list().unwrap();
        let mut i = 1;
        let name = id_of(desc.get(1));
        if name.is_some() {
            i = 2;
        }
        let tu = self.type_use_clauses(desc, &mut i)?;
        if i != desc.len() {
            return Err(syntax(desc[i].pos(), "unexpected item in imported function"));
        }
        let type_index = self.resolve_type_use(&tu, pos)?;
        self.m.imports.push(ImportDecl { module, field, name, type_index });
        Ok(())
    }

    fn inline_exports(
        &mut self,
        items: &[SExpr],
        i: &mut usize,
        kind: ExportKind,
        index: u32,
    ) -> Result<(), ParseError> {
        while let Some(item) = items.get(*i) {
            if item.head() != Some("export") {
                break;
            }
            let list = item.as_list().unwrap();
            let name = Self::string_at(list, 1, "export name", item.pos())?;
            self.m.exports.push(ExportDecl { name, kind, index });
            *i += 1;
        }
        Ok(())
    }

    fn func(&mut self, items: &[SExpr], pos: Pos) -> Result<(), ParseError> {
        let mut i = 1;
        let name = id_of(items.get(1));
        if name.is_some() {
            i = 2;
        }
        let index = match &name {
            Some(n) => self.names.funcs[n],
            None => (self.m.imports.len() + self.m.functions.len()) as u32,
        };
        self.inline_exports(items, &mut i, ExportKind::Func, index)?;
        if let Some(imp) = items.get(i).filter(|it| it.head() == Some("import")) {
            let list = imp.as_list().unwrap();
            let module = Self::string_at(list, 1, "module name", imp.pos())?;
            let field = Self::string_at(list, 2, "field name", imp.pos())?;
            i += 1;
            let tu = self.type_use_clauses(items, &mut i)?;
            if i != items.len() {
                return Err(syntax(items[i].pos(), "imported function cannot have a body"));
            }
            let type_index = self.resolve_type_use(&tu, pos)?;
            self.m.imports.push(ImportDecl { module, field, name, type_index });
            return Ok(());
        }
        let tu = self.type_use_clauses(items, &mut i)?;
        let type_index = self.resolve_type_use(&tu, pos)?;
        let ty = self.m.types[type_index as usize];

        let mut locals = HashMap::new();
        let param_names: Vec<Option<String>> =
            if tu.params.is_empty() { vec![None; ty.params as usize] } else { tu.params };
        for (k, p) in param_names.iter().enumerate() {
            if let Some(p) = p {
                locals.insert(p.clone(), k as u32);
            }
        }
        let mut local_count = 0u32;
        while let Some(item) = items.get(i) {
            if item.head() != Some("local") {
                break;
            }
            let list = item.as_list().unwrap();
            let next_index = |count: u32| ty.params + count;
            match id_of(list.get(1)) {
                Some(lname) => {
                    if list.len() != 3 {
                        return Err(syntax(item.pos(), "named local declares exactly one type"));
                    }
                    check_valtype(&list[2])?;
                    locals.insert(lname, next_index(local_count));
                    local_count += 1;
                }
                None => {
                    for t in &list[1..] {
                        check_valtype(t)?;
                        local_count += 1;
                    }
                }
            }
            i += 1;
        }
        let mut ctx = BodyParser { module: self, locals, labels: Vec::new() };
        let mut body = Vec::new();
        ctx.seq(&items[i..], &mut 0, &[], &mut body)?;
        self.m.functions.push(FunctionDef { name, type_index, locals: local_count, body });
        Ok(())
    }

    fn type_use_clauses(&self, items: &[SExpr], i: &mut usize) -> Result<TypeUse, ParseError> {
        let mut tu = TypeUse::default();
        if let Some(item) = items.get(*i).filter(|it| it.head() == Some("type")) {
            let list = item.as_list().unwrap();
            let target = list.get(1).ok_or_else(|| syntax(item.pos(), "expected a type reference"))?;
            tu.explicit = Some((self.type_ref(target)?, item.pos()));
            *i += 1;
        }
        while let Some(item) = items.get(*i) {
            match item.head() {
                Some("param") => {
                    let list = item.as_list().unwrap();
                    match id_of(list.get(1)) {
                        Some(name) => {
                            if list.len() != 3 {
                                return Err(syntax(item.pos(), "named param declares exactly one type"));
                            }
                            check_valtype(&list[2])?;
                            tu.params.push(Some(name));
                        }
                        None => {
                            for t in &list[1..] {
                                check_valtype(t)?;
                                tu.params.push(None);
                            }
                        }
                    }
                }
                Some("result") => {
                    let list = item.as_list().unwrap();
                    for t in &list[1..] {
                        check_valtype(t)?;
                        tu.results += 1;
                    }
                    if tu.results > 1 {
                        return Err(ParseError::unsupported("multi-value results", item.pos()));
                    }
                }
                _ => break,
            }
            tu.saw_signature = true;
            *i += 1;
        }
        Ok(tu)
    }

    fn resolve_type_use(&mut self, tu: &TypeUse, pos: Pos) -> Result<u32, ParseError> {
        let sig = FuncType::new(tu.params.len() as u32, tu.results);
        if let Some((idx, tpos)) = tu.explicit {
            let declared = self.m.types.get(idx as usize).ok_or_else(|| syntax(tpos, format!("unknown type {idx}")))?;
            if tu.saw_signature && *declared != sig {
                return Err(syntax(pos, "inline signature does not match the referenced type"));
            }
            return Ok(idx);
        }
        if let Some(idx) = self.m.types.iter().position(|t| *t == sig) {
            return Ok(idx as u32);
        }
        self.m.types.push(sig);
        Ok(self.m.types.len() as u32 - 1)
    }

    fn type_ref(&self, item: &SExpr) -> Result<u32, ParseError> {
        match item {
            SExpr::Atom(a, pos) if a.starts_with('$') => {
                self.names.types.get(&a[1..]).copied().ok_or_else(|| syntax(*pos, format!("unknown type {a}")))
            }
            SExpr::Atom(a, pos) => parse_u32(a, *pos),
            other => Err(syntax(other.pos(), "expected a type reference")),
        }
    }

    fn func_ref(&self, item: &SExpr) -> Result<FuncIdx, ParseError> {
        match item {
            SExpr::Atom(a, pos) if a.starts_with('$') => self
                .names
                .funcs
                .get(&a[1..])
                .map(|&i| FuncIdx(i))
                .ok_or_else(|| syntax(*pos, format!("unknown function {a}"))),
            SExpr::Atom(a, pos) => parse_u32(a, *pos).map(FuncIdx),
            other => Err(syntax(other.pos(), "expected a function reference")),
        }
    }

    fn global_ref(&self, item: &SExpr) -> Result<u32, ParseError> {
        match item {
            SExpr::Atom(a, pos) if a.starts_with('$') => {
                self.names.globals.get(&a[1..]).copied().ok_or_else(|| syntax(*pos, format!("unknown global {a}")))
            }
            SExpr::Atom(a, pos) => parse_u32(a, *pos),
            other => Err(syntax(other.pos(), "expected a global reference")),
        }
    }

    fn table_ref(&self, item: &SExpr) -> Result<(), ParseError> {
        match item {
            SExpr::Atom(a, pos) if a.starts_with('$') => {
                if self.names.table.as_deref() == Some(&a[1..]) {
                    Ok(())
                } else {
                    Err(syntax(*pos, format!("unknown table {a}")))
                }
            }
            SExpr::Atom(a, pos) => match parse_u32(a, *pos)? {
                0 => Ok(()),
                _ => Err(ParseError::unsupported("multiple tables", *pos)),
            },
            other => Err(syntax(other.pos(), "expected a table reference")),
        }
    }

    fn const_expr(&self, item: &SExpr) -> Result<i32, ParseError> {
        let list = item.as_list().ok_or_else(|| syntax(item.pos(), "expected a constant expression"))?;
        match (list.first().and_then(SExpr::as_atom), list.get(1), list.len()) {
            (Some("i32.const"), Some(SExpr::Atom(lit, pos)), 2) => parse_i32(lit, *pos),
            (Some(op), _, _) if op != "i32.const" => {
                Err(ParseError::unsupported(format!("{op} in constant expression"), item.pos()))
            }
            _ => Err(syntax(item.pos(), "malformed constant expression")),
        }
    }

    fn global(&mut self, items: &[SExpr], pos: Pos) -> Result<(), ParseError> {
        let mut i = 1;
        let name = id_of(items.get(1));
        if name.is_some() {
            i = 2;
        }
        let index = self.m.globals.len() as u32;
        self.inline_exports(items, &mut i, ExportKind::Global, index)?;
        if items.get(i).and_then(SExpr::head) == Some("import") {
            return Err(ParseError::unsupported("imported global", pos));
        }
        let ty = items.get(i).ok_or_else(|| syntax(pos, "global needs a type"))?;
        let mutable = if ty.head() == Some("mut") {
            let list = ty.as_list().unwrap();
            let inner = list.get(1).ok_or_else(|| syntax(ty.pos(), "mut needs a type"))?;
            check_valtype(inner)?;
            true
        } else {
            check_valtype(ty)?;
            false
        };
        let init_item = items.get(i + 1).ok_or_else(|| syntax(pos, "global needs an initializer"))?;
        let init = self.const_expr(init_item)?;
        if items.len() > i + 2 {
            return Err(syntax(items[i + 2].pos(), "unexpected item in global"));
        }
        self.m.globals.push(GlobalDef { name, mutable, init });
        Ok(())
    }

    fn table(&mut self, items: &[SExpr], pos: Pos) -> Result<(), ParseError> {
        if self.table_size.is_some() {
            return Err(ParseError::unsupported("multiple tables", pos));
        }
        let mut i = 1;
        let name = id_of(items.get(1));
        if name.is_some() {
            i = 2;
        }
        self.inline_exports(items, &mut i, ExportKind::Table, 0)?;
        if items.get(i).and_then(SExpr::head) == Some("import") {
            return Err(ParseError::unsupported("imported table", pos));
        }
        let is_reftype = |it: Option<&SExpr>| matches!(it.and_then(SExpr::as_atom), Some("funcref" | "anyfunc"));
        if is_reftype(items.get(i)) {
            // (table funcref (elem $f $g))
            let elem = items
                .get(i + 1)
                .filter(|it| it.head() == Some("elem"))
                .ok_or_else(|| syntax(pos, "expected (elem ...) after funcref"))?;
            let refs = &elem.as_list().unwrap()[1..];
            let funcs = refs.iter().map(|r| self.func_ref(r)).collect::<Result<Vec<_>, _>>()?;
            self.table_size = Some((funcs.len() as u32, pos));
            self.table_inline = funcs;
        } else {
            let min = match items.get(i) {
                Some(SExpr::Atom(a, p)) => parse_u32(a, *p)?,
                _ => return Err(syntax(pos, "expected table limits")),
            };
            i += 1;
            if let Some(SExpr::Atom(a, p)) = items.get(i) {
                if !is_reftype(items.get(i)) {
                    let max = parse_u32(a, *p)?;
                    if max < min {
                        return Err(syntax(*p, "table maximum below minimum"));
                    }
                    i += 1;
                }
            }
            match items.get(i) {
                Some(SExpr::Atom(a, _)) if a == "funcref" || a == "anyfunc" => {}
                Some(SExpr::Atom(a, p)) if a == "externref" => return Err(ParseError::unsupported(a.clone(), *p)),
                _ => return Err(syntax(pos, "expected funcref table")),
            }
            self.table_size = Some((min, pos));
        }
        self.m.table = Some(TableDef { name, entries: Vec::new() });
        Ok(())
    }

    fn elem(&mut self, items: &[SExpr], pos: Pos) -> Result<(), ParseError> {
        let mut i = 1;
        if id_of(items.get(1)).is_some() {
            i = 2;
        }
        if let Some(t) = items.get(i).filter(|it| it.head() == Some("table")) {
            let list = t.as_list().unwrap();
            self.table_ref(list.get(1).ok_or_else(|| syntax(t.pos(), "expected a table reference"))?)?;
            i += 1;
        }
        let offset_item = items.get(i).ok_or_else(|| syntax(pos, "elem needs an offset"))?;
        let offset = match offset_item {
            SExpr::Atom(a, p) if a == "declare" || a == "func" => {
                return Err(ParseError::unsupported("passive or declarative elem segment", *p))
            }
            SExpr::List(list, _) if offset_item.head() == Some("offset") => {
                let inner = list.get(1).ok_or_else(|| syntax(offset_item.pos(), "empty offset"))?;
                self.const_expr(inner)?
            }
            _ => self.const_expr(offset_item)?,
        };
        i += 1;
        if items.get(i).and_then(SExpr::as_atom) == Some("func") {
            i += 1;
        }
        let mut funcs = Vec::new();
        for r in &items[i..] {
            if r.as_list().is_some() {
                return Err(ParseError::unsupported("element expressions", r.pos()));
            }
            funcs.push(self.func_ref(r)?);
        }
        if offset < 0 {
            return Err(syntax(pos, "elem segment out of table bounds"));
        }
        self.elems.push((offset as u32, funcs, pos));
        Ok(())
    }

    fn finish_table(&mut self) -> Result<(), ParseError> {
        let Some((size, _)) = self.table_size else {
            if let Some((_, _, pos)) = self.elems.first() {
                return Err(syntax(*pos, "elem segment without a table"));
            }
            return Ok(());
        };
        let mut entries: Vec<Option<FuncIdx>> = vec![None; size as usize];
        for (k, f) in self.table_inline.iter().enumerate() {
            entries[k] = Some(*f);
        }
        for (offset, funcs, pos) in &self.elems {
            let end = *offset as usize + funcs.len();
            if end > entries.len() {
                return Err(syntax(*pos, "elem segment out of table bounds"));
            }
            for (k, f) in funcs.iter().enumerate() {
                entries[*offset as usize + k] = Some(*f);
            }
        }
        if let Some(t) = self.m.table.as_mut() {
            t.entries = entries;
        }
        Ok(())
    }

    fn export(&mut self, items: &[SExpr], pos: Pos) -> Result<(), ParseError> {
        let name = Self::string_at(items, 1, "export name", pos)?;
        let desc = items.get(2).ok_or_else(|| syntax(pos, "export needs a descriptor"))?;
        let list = desc.as_list().ok_or_else(|| syntax(desc.pos(), "malformed export descriptor"))?;
        let target = list.get(1).ok_or_else(|| syntax(desc.pos(), "export needs a reference"))?;
        let (kind, index) = match desc.head() {
            Some("func") => (ExportKind::Func, self.func_ref(target)?.0),
            Some("global") => (ExportKind::Global, self.global_ref(target)?),
            Some("table") => {
                self.table_ref(target)?;
                (ExportKind::Table, 0)
            }
            Some(other) => return Err(ParseError::unsupported(format!("{other} export"), desc.pos())),
            None => return Err(syntax(desc.pos(), "malformed export descriptor")),
        };
        self.m.exports.push(ExportDecl { name, kind, index });
        Ok(())
    }
}

struct BodyParser<'p> {
    module: &'p mut ModuleParser,
    locals: HashMap<String, u32>,
    labels: Vec<Option<String>>,
}

impl BodyParser<'_> {
    fn atom<'s>(&self, items: &'s [SExpr], i: &mut usize, what: &str, pos: Pos) -> Result<&'s SExpr, ParseError> {
        match items.get(*i) {
            Some(item @ SExpr::Atom(..)) => {
                *i += 1;
                Ok(item)
            }
            _ => Err(syntax(pos, format!("expected {what}"))),
        }
    }

    fn local_ref(&self, item: &SExpr) -> Result<u32, ParseError> {
        match item {
            SExpr::Atom(a, pos) if a.starts_with('$') => {
                self.locals.get(&a[1..]).copied().ok_or_else(|| syntax(*pos, format!("unknown local {a}")))
            }
            SExpr::Atom(a, pos) => parse_u32(a, *pos),
            other => Err(syntax(other.pos(), "expected a local reference")),
        }
    }

    fn label_ref(&self, item: &SExpr) -> Result<u32, ParseError> {
        match item {
            SExpr::Atom(a, pos) if a.starts_with('$') => {
                let name = &a[1..];
                self.labels
                    .iter()
                    .rev()
                    .position(|l| l.as_deref() == Some(name))
                    .map(|d| d as u32)
                    .ok_or_else(|| syntax(*pos, format!("unknown label {a}")))
            }
            SExpr::Atom(a, pos) => parse_u32(a, *pos),
            other => Err(syntax(other.pos(), "expected a label reference")),
        }
    }

    /// `$label?` and `(result i32)?` of a block, loop or if.
    fn block_header(&self, items: &[SExpr], i: &mut usize) -> Result<(Option<String>, u32), ParseError> {
        let label = id_of(items.get(*i));
        if label.is_some() {
            *i += 1;
        }
        let mut results = 0;
        while let Some(item) = items.get(*i) {
            match item.head() {
                Some("result") => {
                    for t in &item.as_list().unwrap()[1..] {
                        check_valtype(t)?;
                        results += 1;
                    }
                    if results > 1 {
                        return Err(ParseError::unsupported("multi-value block results", item.pos()));
                    }
                }
                Some("param") => return Err(ParseError::unsupported("block parameters", item.pos())),
                Some("type") => return Err(ParseError::unsupported("block type index", item.pos())),
                _ => break,
            }
            *i += 1;
        }
        Ok((label, results))
    }

    fn closing_label(&self, items: &[SExpr], i: &mut usize, label: &Option<String>) -> Result<(), ParseError> {
        if let Some(SExpr::Atom(a, pos)) = items.get(*i) {
            if let Some(name) = a.strip_prefix('$') {
                if label.as_deref() != Some(name) {
                    return Err(syntax(*pos, format!("mismatched label {a}")));
                }
                *i += 1;
            }
        }
        Ok(())
    }

    /// Parses instructions until one of `terminators` (consumed and returned)
    /// or the end of `items`.
    fn seq(
        &mut self,
        items: &[SExpr],
        i: &mut usize,
        terminators: &[&str],
        out: &mut Vec<Instr>,
    ) -> Result<Option<String>, ParseError> {
        while let Some(item) = items.get(*i) {
            match item {
                SExpr::Atom(a, _) if terminators.contains(&a.as_str()) => {
                    *i += 1;
                    return Ok(Some(a.clone()));
                }
                SExpr::Atom(..) => self.flat(items, i, out)?,
                SExpr::List(..) => {
                    self.folded(item, out)?;
                    *i += 1;
                }
                SExpr::Str(_, pos) => return Err(syntax(*pos, "unexpected string in instruction sequence")),
            }
        }
        if terminators.is_empty() {
            Ok(None)
        } else {
            let pos = items.last().map(SExpr::pos).unwrap_or_default();
            Err(syntax(pos, format!("missing `{}`", terminators.join("` or `"))))
        }
    }

    fn flat(&mut self, items: &[SExpr], i: &mut usize, out: &mut Vec<Instr>) -> Result<(), ParseError> {
        let (op, pos) = match &items[*i] {
            SExpr::Atom(a, p) => (a.clone(), *p),
            _ => unreachable!(),
        };
        *i += 1;
        match op.as_str() {
            "block" | "loop" => {
                let (label, results) = self.block_header(items, i)?;
                self.labels.push(label.clone());
                let mut body = Vec::new();
                self.seq(items, i, &["end"], &mut body)?;
                self.labels.pop();
                self.closing_label(items, i, &label)?;
                out.push(if op == "block" { Instr::Block { results, body } } else { Instr::Loop { results, body } });
            }
            "if" => {
                let (label, results) = self.block_header(items, i)?;
                self.labels.push(label.clone());
                let mut then_body = Vec::new();
                let mut else_body = Vec::new();
                let term = self.seq(items, i, &["else", "end"], &mut then_body)?;
                if term.as_deref() == Some("else") {
                    self.closing_label(items, i, &label)?;
                    self.seq(items, i, &["end"], &mut else_body)?;
                }
                self.labels.pop();
                self.closing_label(items, i, &label)?;
                out.push(Instr::If { results, then_body, else_body });
            }
            "else" | "end" => return Err(syntax(pos, format!("unexpected `{op}`"))),
            _ => {
                let instr = self.plain(&op, pos, items, i)?;
                out.push(instr);
            }
        }
        Ok(())
    }

    /// A non-structured instruction and its immediates.
    fn plain(&mut self, op: &str, pos: Pos, items: &[SExpr], i: &mut usize) -> Result<Instr, ParseError> {
        if let Some(k) = UnopKind::from_mnemonic(op) {
            return Ok(Instr::Unop(k));
        }
        if let Some(k) = BinopKind::from_mnemonic(op) {
            return Ok(Instr::Binop(k));
        }
        if let Some(k) = RelopKind::from_mnemonic(op) {
            return Ok(Instr::Relop(k));
        }
        Ok(match op {
            "i32.const" => match self.atom(items, i, "an i32 literal", pos)? {
                SExpr::Atom(lit, p) => Instr::Const(parse_i32(lit, *p)?),
                _ => unreachable!(),
            },
            "local.get" | "local.set" | "local.tee" => {
                let idx = self.local_ref(self.atom(items, i, "a local index", pos)?)?;
                match op {
                    "local.get" => Instr::LocalGet(idx),
                    "local.set" => Instr::LocalSet(idx),
                    _ => Instr::LocalTee(idx),
                }
            }
            "global.get" | "global.set" => {
                let idx = self.module.global_ref(self.atom(items, i, "a global index", pos)?)?;
                if op == "global.get" {
                    Instr::GlobalGet(idx)
                } else {
                    Instr::GlobalSet(idx)
                }
            }
            "br" | "br_if" => {
                let depth = self.label_ref(self.atom(items, i, "a label", pos)?)?;
                if op == "br" {
                    Instr::Br(depth)
                } else {
                    Instr::BrIf(depth)
                }
            }
            "call" => Instr::Call(self.module.func_ref(self.atom(items, i, "a function", pos)?)?),
            "call_indirect" => {
                if let Some(item @ SExpr::Atom(..)) = items.get(*i) {
                    self.module.table_ref(item)?;
                    *i += 1;
                }
                // no type use at all means the empty signature
                let tu = self.module.type_use_clauses(items, i)?;
                if tu.params.iter().any(Option::is_some) {
                    return Err(syntax(pos, "call_indirect parameters cannot be named"));
                }
                Instr::CallIndirect(self.module.resolve_type_use(&tu, pos)?)
            }
            "return" => Instr::Return,
            "drop" => Instr::Drop,
            "nop" => Instr::Nop,
            other if other.starts_with('$') || other.starts_with(|c: char| c.is_ascii_digit() || c == '-') => {
                return Err(syntax(pos, format!("unexpected `{other}`")))
            }
            other => return Err(ParseError::unsupported(other.to_string(), pos)),
        })
    }

    fn folded(&mut self, item: &SExpr, out: &mut Vec<Instr>) -> Result<(), ParseError> {
        let items = item.as_list().unwrap();
        let (op, pos) = match items.first() {
            Some(SExpr::Atom(a, p)) => (a.clone(), *p),
            _ => return Err(syntax(item.pos(), "expected an instruction")),
        };
        let mut i = 1;
        match op.as_str() {
            "block" | "loop" => {
                let (label, results) = self.block_header(items, &mut i)?;
                self.labels.push(label);
                let mut body = Vec::new();
                self.seq(items, &mut i, &[], &mut body)?;
                self.labels.pop();
                out.push(if op == "block" { Instr::Block { results, body } } else { Instr::Loop { results, body } });
            }
            "if" => {
                let (label, results) = self.block_header(items, &mut i)?;
                while let Some(cond) = items.get(i) {
                    if matches!(cond.head(), Some("then" | "else")) {
                        break;
                    }
                    if cond.as_list().is_none() {
                        return Err(syntax(cond.pos(), "expected a folded condition or (then ...)"));
                    }
                    self.folded(cond, out)?;
                    i += 1;
                }
                self.labels.push(label);
                let mut then_body = Vec::new();
                let mut else_body = Vec::new();
                match items.get(i) {
                    Some(t) if t.head() == Some("then") => {
                        self.seq(t.as_list().unwrap(), &mut 1, &[], &mut then_body)?;
                        i += 1;
                    }
                    _ => return Err(syntax(pos, "folded if needs (then ...)")),
                }
                if let Some(e) = items.get(i).filter(|e| e.head() == Some("else")) {
                    self.seq(e.as_list().unwrap(), &mut 1, &[], &mut else_body)?;
                    i += 1;
                }
                self.labels.pop();
                if i != items.len() {
                    return Err(syntax(items[i].pos(), "unexpected item after folded if"));
                }
                out.push(Instr::If { results, then_body, else_body });
            }
            "then" | "else" | "end" => return Err(syntax(pos, format!("unexpected `{op}`"))),
            _ => {
                let instr = self.plain(&op, pos, items, &mut i)?;
                for operand in &items[i..] {
                    if operand.as_list().is_none() {
                        return Err(syntax(operand.pos(), format!("unexpected operand for `{op}`")));
                    }
                    self.folded(operand, out)?;
                }
                out.push(instr);
            }
        }
        Ok(())
    }
}
