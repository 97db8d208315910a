//! Parsed model of a Java repository.
//!
//! [`RepoContext::load`] walks a directory tree, parses every `.java` file
//! with tree-sitter, and indexes type declarations, method declarations and
//! a name+arity call graph. The context is immutable once loaded.

mod callgraph;
pub mod syntax;

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tree_sitter::{Node, Tree};

pub use callgraph::{CallEdge, Callee, ReachableThrow};

pub const DEFAULT_MAX_DEPTH: usize = 5;

#[derive(Debug, Error)]
pub enum JModelError {
    #[error("no .java sources under {0}")]
    NoJavaSources(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown method {0}")]
    UnknownMethod(String),
    #[error("max_depth must be at least 1")]
    ZeroDepth,
}

/// Identity of a method declaration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MethodId {
    /// Binary name of the declaring class (nested classes joined by `$`).
    pub fqn: String,
    pub name: String,
    pub param_arity: usize,
    /// Path relative to the repository root, `/`-separated.
    pub decl_file: String,
    pub decl_line: u32,
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}/{}", self.fqn, self.name, self.param_arity)
    }
}

impl MethodId {
    /// Simple name of the declaring top-level class.
    pub fn class_simple_name(&self) -> &str {
        let last = self.fqn.rsplit('.').next().unwrap_or(&self.fqn);
        last.split('$').next().unwrap_or(last)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Method,
    Constructor,
    /// Static initializer block or static field initializer (`<clinit>`).
    StaticInit,
    /// Instance initializer block or instance field initializer (`<init>`).
    InstanceInit,
}

#[derive(Debug, Clone)]
pub struct MethodDecl {
    pub id: MethodId,
    pub kind: MethodKind,
    pub params: Vec<String>,
    pub varargs: bool,
    pub annotations: Vec<String>,
    pub is_public: bool,
    pub start_line: u32,
    pub end_line: u32,
    pub byte_range: Range<usize>,
}

impl MethodDecl {
    pub fn contains_line(&self, line: u32) -> bool {
        (self.start_line..=self.end_line).contains(&line)
    }

    pub fn is_test(&self) -> bool {
        self.annotations.iter().any(|a| is_test_annotation(a))
    }

    /// Whether a call with `arity` arguments can bind to this declaration.
    pub fn accepts_arity(&self, arity: usize) -> bool {
        if self.varargs {
            arity + 1 >= self.params.len()
        } else {
            arity == self.params.len()
        }
    }
}

pub fn is_test_annotation(simple: &str) -> bool {
    matches!(simple, "Test" | "ParameterizedTest" | "RepeatedTest")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeKind {
    Class,
    Interface,
    Enum,
    Record,
    Annotation,
}

#[derive(Debug, Clone)]
pub struct TypeDecl {
    pub fqn: String,
    pub simple_name: String,
    pub kind: TypeKind,
    pub start_line: u32,
    pub end_line: u32,
}

pub struct CompilationUnit {
    pub path: String,
    pub source: String,
    pub tree: Tree,
    pub package: Option<String>,
    pub types: Vec<TypeDecl>,
    pub methods: Vec<MethodDecl>,
    pub is_test: bool,
}

impl fmt::Debug for CompilationUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompilationUnit")
            .field("path", &self.path)
            .field("package", &self.package)
            .field("types", &self.types.len())
            .field("methods", &self.methods.len())
            .field("is_test", &self.is_test)
            .finish()
    }
}

impl CompilationUnit {
    pub fn root(&self) -> Node<'_> {
        self.tree.root_node()
    }

    pub fn file_name(&self) -> &str {
        self.path.rsplit('/').next().unwrap_or(&self.path)
    }

    pub fn file_stem(&self) -> &str {
        self.file_name().strip_suffix(".java").unwrap_or(self.file_name())
    }

    /// Syntax node of a declaration in this unit.
    pub fn node_of(&self, decl: &MethodDecl) -> Option<Node<'_>> {
        self.root().descendant_for_byte_range(decl.byte_range.start, decl.byte_range.end).map(|mut n| {
            // descend-for-range may return an ancestor; walk down to the exact span
            while n.byte_range() != decl.byte_range {
                match syntax::named_children(n)
                    .into_iter()
                    .find(|c| c.start_byte() <= decl.byte_range.start && c.end_byte() >= decl.byte_range.end)
                {
                    Some(c) => n = c,
                    None => break,
                }
            }
            n
        })
    }

    pub fn text(&self, range: Range<usize>) -> &str {
        &self.source[range]
    }

    /// Innermost declaration whose span contains the byte offset.
    pub fn method_at_byte(&self, offset: usize) -> Option<&MethodDecl> {
        self.methods.iter().filter(|m| m.byte_range.contains(&offset)).min_by_key(|m| m.byte_range.len())
    }
}

/// A `throw` statement in repository source.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ThrowSite {
    pub method: MethodId,
    pub line: u32,
    pub exception_type: String,
    pub statement_text: String,
}

impl ThrowSite {
    pub fn file(&self) -> &str {
        &self.method.decl_file
    }

    /// `file:line` key used on the command line and in output records.
    pub fn key(&self) -> String {
        format!("{}:{}", self.method.decl_file, self.line)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    MainOnly,
    All,
}

/// Partition of source files into main and test roots.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceRoots {
    pub main: Vec<String>,
    pub test: Vec<String>,
}

impl SourceRoots {
    /// Parses `main=src/main/java,test=src/test/java` (either side optional,
    /// multiple roots separated by `:`).
    pub fn parse(spec: &str) -> Result<SourceRoots, String> {
        let mut roots = SourceRoots::default();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| format!("expected key=value in `{part}`"))?;
            let list: Vec<String> = v.split(':').map(|s| s.trim().trim_end_matches('/').to_string()).collect();
            match k.trim() {
                "main" => roots.main = list,
                "test" => roots.test = list,
                other => return Err(format!("unknown source root kind `{other}`")),
            }
        }
        Ok(roots)
    }

    pub fn is_test(&self, rel: &str) -> bool {
        let under = |root: &String| rel == root || rel.starts_with(&format!("{root}/"));
        if !self.test.is_empty() || !self.main.is_empty() {
            return self.test.iter().any(under);
        }
        // convention: src/test/... or a top-level test(s)/ directory
        rel.starts_with("test/") || rel.starts_with("tests/") || rel.contains("src/test/")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadWarning {
    pub path: String,
    pub message: String,
}

#[derive(Debug)]
pub struct RepoContext {
    pub root: PathBuf,
    pub units: Vec<CompilationUnit>,
    pub call_edges: Vec<CallEdge>,
    pub main_files: Vec<String>,
    pub test_files: Vec<String>,
    pub warnings: Vec<LoadWarning>,
}

fn rel_path(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .filter_map(|c| match c {
            Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
            _ => None,
        })
        .collect::<Vec<_>>()
        .join("/")
}

impl RepoContext {
    pub fn load(root: &Path) -> Result<RepoContext, JModelError> {
        RepoContext::load_with(root, &SourceRoots::default())
    }

    pub fn load_with(root: &Path, roots: &SourceRoots) -> Result<RepoContext, JModelError> {
        let meta = std::fs::metadata(root).map_err(|source| JModelError::Io { path: root.to_path_buf(), source })?;
        if !meta.is_dir() {
            return Err(JModelError::NoJavaSources(root.to_path_buf()));
        }
        let mut files = Vec::new();
        for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(|e| JModelError::Io {
                path: e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf()),
                source: e.into_io_error().unwrap_or_else(|| std::io::Error::other("walk error")),
            })?;
            if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "java") {
                files.push(entry.into_path());
            }
        }
        if files.is_empty() {
            return Err(JModelError::NoJavaSources(root.to_path_buf()));
        }
        let mut sources = Vec::with_capacity(files.len());
        for path in files {
            let source = std::fs::read_to_string(&path).map_err(|source| JModelError::Io { path: path.clone(), source })?;
            sources.push((rel_path(root, &path), source));
        }
        Ok(RepoContext::from_sources(root, sources, roots))
    }

    /// Builds a context from in-memory `(relative path, source)` pairs.
    pub fn from_sources(root: &Path, sources: Vec<(String, String)>, roots: &SourceRoots) -> RepoContext {
        let mut units = Vec::new();
        let mut warnings = Vec::new();
        let mut main_files = Vec::new();
        let mut test_files = Vec::new();
        let mut sources = sources;
        sources.sort_by(|a, b| a.0.cmp(&b.0));
        for (path, source) in sources {
            let tree = syntax::parse(&source);
            if tree.root_node().has_error() {
                let line = first_error_line(tree.root_node()).unwrap_or(1);
                log::warn!("{path}: syntax error near line {line}; file skipped");
                warnings.push(LoadWarning { path, message: format!("syntax error near line {line}") });
                continue;
            }
            let is_test = roots.is_test(&path);
            if is_test {
                test_files.push(path.clone());
            } else {
                main_files.push(path.clone());
            }
            units.push(index_unit(path, source, tree, is_test));
        }
        let call_edges = callgraph::build_edges(&units);
        RepoContext { root: root.to_path_buf(), units, call_edges, main_files, test_files, warnings }
    }

    pub fn unit(&self, path: &str) -> Option<&CompilationUnit> {
        self.units.iter().find(|u| u.path == path)
    }

    pub fn methods(&self) -> impl Iterator<Item = (&CompilationUnit, &MethodDecl)> {
        self.units.iter().flat_map(|u| u.methods.iter().map(move |m| (u, m)))
    }

    pub fn method(&self, id: &MethodId) -> Option<(&CompilationUnit, &MethodDecl)> {
        let unit = self.unit(&id.decl_file)?;
        unit.methods.iter().find(|m| &m.id == id).map(|m| (unit, m))
    }

    /// Looks up a method by `fqn#name` or `fqn#name/arity`; `fqn.name` is
    /// accepted too. Ambiguous overloads resolve to the first in file order.
    pub fn find_method(&self, spec: &str) -> Result<&MethodId, JModelError> {
        let (owner, rest) =
            spec.split_once('#').or_else(|| spec.rsplit_once('.')).ok_or_else(|| JModelError::UnknownMethod(spec.to_string()))?;
        let (name, arity) = match rest.split_once('/') {
            Some((n, a)) => (n, a.parse::<usize>().ok()),
            None => (rest, None),
        };
        self.methods()
            .map(|(_, m)| &m.id)
            .find(|id| id.fqn == owner && id.name == name && arity.is_none_or(|a| a == id.param_arity))
            .ok_or_else(|| JModelError::UnknownMethod(spec.to_string()))
    }

    pub fn declares_class(&self, fqn: &str) -> bool {
        self.units.iter().any(|u| u.types.iter().any(|t| t.fqn == fqn))
    }

    pub fn unit_declaring(&self, fqn: &str) -> Option<&CompilationUnit> {
        self.units.iter().find(|u| u.types.iter().any(|t| t.fqn == fqn))
    }

    pub fn is_test_class(&self, fqn: &str) -> bool {
        self.unit_declaring(fqn).is_some_and(|u| u.is_test)
    }

    /// Resolves a stack-trace frame to the declaration that contains `line`.
    /// Lambda frames (`lambda$name$0`) resolve to the enclosing method.
    pub fn resolve_frame(&self, class_fqn: &str, method: &str, line: u32) -> Option<(&CompilationUnit, &MethodDecl)> {
        let name = frame_method_name(method);
        // anonymous/local classes (Outer$1) resolve into the enclosing named type
        let mut owner = class_fqn.to_string();
        loop {
            if let Some(unit) = self.unit_declaring(&owner) {
                let hit = unit
                    .methods
                    .iter()
                    .filter(|m| m.id.fqn == owner && m.contains_line(line))
                    .filter(|m| owner != class_fqn || m.id.name == name || name.starts_with('<') && m.id.name.starts_with('<'))
                    .min_by_key(|m| m.byte_range.len());
                return hit.map(|m| (unit, m));
            }
            owner.truncate(owner.rfind('$')?);
        }
    }

    /// Throw statements in scope, ordered by (file, line).
    pub fn find_throw_sites(&self, scope: Scope) -> Vec<ThrowSite> {
        let mut out = Vec::new();
        for unit in &self.units {
            if scope == Scope::MainOnly && unit.is_test {
                continue;
            }
            out.extend(throw_sites_in_unit(unit));
        }
        out.sort_by(|a, b| (a.file(), a.line, &a.statement_text).cmp(&(b.file(), b.line, &b.statement_text)));
        out
    }

    pub fn throw_sites_of(&self, id: &MethodId) -> Vec<ThrowSite> {
        match self.unit(&id.decl_file) {
            Some(unit) => throw_sites_in_unit(unit).into_iter().filter(|s| &s.method == id).collect(),
            None => Vec::new(),
        }
    }

    pub fn throw_site_at(&self, file: &str, line: u32) -> Option<ThrowSite> {
        let unit = self.unit(file)?;
        throw_sites_in_unit(unit).into_iter().find(|s| s.line == line)
    }

    /// Finds a throw site by `file:line`, where `file` may be a suffix of the
    /// repository-relative path.
    pub fn throw_site_by_key(&self, key: &str) -> Option<ThrowSite> {
        let (file, line) = key.rsplit_once(':')?;
        let line: u32 = line.parse().ok()?;
        let unit =
            self.units.iter().find(|u| u.path == file).or_else(|| self.units.iter().find(|u| u.path.ends_with(&format!("/{file}"))))?;
        self.throw_site_at(&unit.path.clone(), line)
    }

    pub fn reachable_throws(&self, mut_id: &MethodId, max_depth: usize) -> Result<Vec<ReachableThrow>, JModelError> {
        callgraph::reachable_throws(self, mut_id, max_depth)
    }

    /// Methods directly invoked from `caller` that resolve inside the repo.
    pub fn direct_callees(&self, caller: &MethodId) -> BTreeSet<&MethodId> {
        self.call_edges
            .iter()
            .filter(|e| &e.caller == caller)
            .filter_map(|e| match &e.callee {
                Callee::Resolved(id) => Some(id),
                Callee::External { .. } => None,
            })
            .collect()
    }

    /// SHA-256 over `(path, content)` of all main-source units.
    pub fn main_source_digest(&self) -> String {
        let mut h = Sha256::new();
        for unit in self.units.iter().filter(|u| !u.is_test) {
            h.update(unit.path.as_bytes());
            h.update([0]);
            h.update(Sha256::digest(unit.source.as_bytes()));
        }
        hex::encode(h.finalize())
    }
}

/// Normalizes JVM frame method names: `lambda$check$0` → `check`,
/// `lambda$static$1` → `<clinit>`.
pub fn frame_method_name(method: &str) -> &str {
    if let Some(rest) = method.strip_prefix("lambda$") {
        let name = rest.split('$').next().unwrap_or(rest);
        return match name {
            "static" => "<clinit>",
            "new" => "<init>",
            other => other,
        };
    }
    method
}

fn first_error_line(node: Node<'_>) -> Option<u32> {
    if node.is_error() || node.is_missing() {
        return Some(syntax::line(node));
    }
    let mut cursor = node.walk();
    let children: Vec<_> = node.children(&mut cursor).collect();
    children.into_iter().filter(|c| c.has_error()).find_map(first_error_line)
}

fn index_unit(path: String, source: String, tree: Tree, is_test: bool) -> CompilationUnit {
    let root = tree.root_node();
    let package = syntax::named_children(root)
        .into_iter()
        .find(|n| n.kind() == "package_declaration")
        .and_then(|p| syntax::named_children(p).into_iter().find(|c| matches!(c.kind(), "scoped_identifier" | "identifier")))
        .map(|n| syntax::text(n, &source).to_string());
    let mut types = Vec::new();
    let mut methods = Vec::new();
    for child in syntax::named_children(root) {
        if syntax::is_type_declaration(child.kind()) {
            collect_type(child, package.as_deref(), None, &source, &path, &mut types, &mut methods);
        }
    }
    CompilationUnit { path, source, tree, package, types, methods, is_test }
}

fn collect_type(
    node: Node<'_>,
    package: Option<&str>,
    outer: Option<&str>,
    source: &str,
    path: &str,
    types: &mut Vec<TypeDecl>,
    methods: &mut Vec<MethodDecl>,
) {
    let Some(name_node) = node.child_by_field_name("name") else { return };
    let simple = syntax::text(name_node, source).to_string();
    let fqn = match (outer, package) {
        (Some(o), _) => format!("{o}${simple}"),
        (None, Some(p)) => format!("{p}.{simple}"),
        (None, None) => simple.clone(),
    };
    let kind = match node.kind() {
        "interface_declaration" => TypeKind::Interface,
        "enum_declaration" => TypeKind::Enum,
        "record_declaration" => TypeKind::Record,
        "annotation_type_declaration" => TypeKind::Annotation,
        _ => TypeKind::Class,
    };
    types.push(TypeDecl { fqn: fqn.clone(), simple_name: simple, kind, start_line: syntax::line(node), end_line: syntax::end_line(node) });
    let Some(body) = node.child_by_field_name("body") else { return };
    let mut members = syntax::named_children(body);
    // enum constants and members live under enum_body_declarations
    if let Some(decls) = members.iter().position(|m| m.kind() == "enum_body_declarations") {
        let inner = syntax::named_children(members[decls]);
        members.extend(inner);
    }
    let in_interface = kind == TypeKind::Interface;
    for member in members {
        match member.kind() {
            k if syntax::is_type_declaration(k) => {
                collect_type(member, package, Some(&fqn), source, path, types, methods);
            }
            "method_declaration" | "constructor_declaration" | "compact_constructor_declaration" => {
                let (name, kind) = if member.kind() == "method_declaration" {
                    let n = member.child_by_field_name("name").map(|n| syntax::text(n, source)).unwrap_or("?");
                    (n.to_string(), MethodKind::Method)
                } else {
                    ("<init>".to_string(), MethodKind::Constructor)
                };
                let (params, varargs) = if member.kind() == "compact_constructor_declaration" {
                    record_components(node, source)
                } else {
                    params_of(member, source)
                };
                let modifiers = syntax::modifiers_of(member);
                let modifier_text = modifiers.map(|m| syntax::text(m, source)).unwrap_or("");
                methods.push(MethodDecl {
                    id: MethodId {
                        fqn: fqn.clone(),
                        name,
                        param_arity: params.len(),
                        decl_file: path.to_string(),
                        decl_line: syntax::line(member),
                    },
                    kind,
                    params,
                    varargs,
                    annotations: syntax::annotation_names(modifiers, source),
                    is_public: in_interface || modifier_text.split_whitespace().any(|w| w == "public"),
                    start_line: syntax::line(member),
                    end_line: syntax::end_line(member),
                    byte_range: member.byte_range(),
                });
            }
            "static_initializer" | "block" => {
                let kind = if member.kind() == "static_initializer" { MethodKind::StaticInit } else { MethodKind::InstanceInit };
                methods.push(pseudo_method(member, &fqn, path, kind));
            }
            // field initializers only become pseudo-methods when they can throw
            "field_declaration" | "constant_declaration" if !syntax::descendants_of_kind(member, "throw_statement").is_empty() => {
                let is_static = in_interface
                    || syntax::modifiers_of(member).is_some_and(|m| syntax::text(m, source).split_whitespace().any(|w| w == "static"));
                let kind = if is_static { MethodKind::StaticInit } else { MethodKind::InstanceInit };
                methods.push(pseudo_method(member, &fqn, path, kind));
            }
            _ => {}
        }
    }
}

fn pseudo_method(node: Node<'_>, fqn: &str, path: &str, kind: MethodKind) -> MethodDecl {
    let name = if kind == MethodKind::StaticInit { "<clinit>" } else { "<init>" };
    MethodDecl {
        id: MethodId {
            fqn: fqn.to_string(),
            name: name.to_string(),
            param_arity: 0,
            decl_file: path.to_string(),
            decl_line: syntax::line(node),
        },
        kind,
        params: Vec::new(),
        varargs: false,
        annotations: Vec::new(),
        is_public: false,
        start_line: syntax::line(node),
        end_line: syntax::end_line(node),
        byte_range: node.byte_range(),
    }
}

fn params_of(method: Node<'_>, source: &str) -> (Vec<String>, bool) {
    let Some(list) = method.child_by_field_name("parameters") else {
        return (Vec::new(), false);
    };
    let mut names = Vec::new();
    let mut varargs = false;
    for p in syntax::named_children(list) {
        match p.kind() {
            "formal_parameter" => {
                if let Some(n) = p.child_by_field_name("name") {
                    names.push(syntax::text(n, source).to_string());
                }
            }
            "spread_parameter" => {
                varargs = true;
                let name = syntax::named_children(p)
                    .into_iter()
                    .find(|c| c.kind() == "variable_declarator")
                    .and_then(|d| d.child_by_field_name("name"))
                    .map(|n| syntax::text(n, source).to_string())
                    .unwrap_or_default();
                names.push(name);
            }
            _ => {}
        }
    }
    (names, varargs)
}

fn record_components(record: Node<'_>, source: &str) -> (Vec<String>, bool) {
    params_of(record, source)
}

pub(crate) fn throw_sites_in_unit(unit: &CompilationUnit) -> Vec<ThrowSite> {
    let mut out = Vec::new();
    for node in syntax::descendants_of_kind(unit.root(), "throw_statement") {
        let Some(method) = unit.method_at_byte(node.start_byte()) else { continue };
        out.push(ThrowSite {
            method: method.id.clone(),
            line: syntax::line(node),
            exception_type: exception_type_of(node, unit),
            statement_text: syntax::text(node, &unit.source).to_string(),
        });
    }
    out
}

/// Type thrown by a throw statement: the constructed type for `throw new
/// T(..)`, the declared type of a thrown variable when it can be found,
/// otherwise the thrown expression as written.
fn exception_type_of(throw: Node<'_>, unit: &CompilationUnit) -> String {
    let src = &unit.source;
    let Some(expr) = syntax::named_children(throw).into_iter().next() else {
        return String::new();
    };
    match expr.kind() {
        "object_creation_expression" => expr
            .child_by_field_name("type")
            .map(|t| syntax::text(t, src).to_string())
            .unwrap_or_else(|| syntax::text(expr, src).to_string()),
        "identifier" => {
            let name = syntax::text(expr, src);
            declared_type_of(name, throw, unit).unwrap_or_else(|| name.to_string())
        }
        _ => syntax::text(expr, src).to_string(),
    }
}

fn declared_type_of(name: &str, at: Node<'_>, unit: &CompilationUnit) -> Option<String> {
    let src = &unit.source;
    let mut scope = at.parent();
    while let Some(node) = scope {
        if node.kind() == "catch_clause" {
            if let Some(param) = syntax::named_children(node).into_iter().find(|c| c.kind() == "catch_formal_parameter") {
                let pname = param.child_by_field_name("name").map(|n| syntax::text(n, src));
                if pname == Some(name) {
                    let ty = syntax::named_children(param).into_iter().find(|c| c.kind() == "catch_type")?;
                    return Some(syntax::text(ty, src).to_string());
                }
            }
        }
        for child in syntax::named_children(node) {
            if child.start_byte() >= at.start_byte() {
                break;
            }
            match child.kind() {
                "local_variable_declaration" | "formal_parameter" => {
                    let declares = syntax::descendants_of_kind(child, "variable_declarator")
                        .into_iter()
                        .filter_map(|d| d.child_by_field_name("name"))
                        .chain(child.child_by_field_name("name"))
                        .any(|n| syntax::text(n, src) == name);
                    if declares {
                        return child.child_by_field_name("type").map(|t| syntax::text(t, src).to_string());
                    }
                }
                "formal_parameters" => {
                    for p in syntax::named_children(child) {
                        if p.child_by_field_name("name").is_some_and(|n| syntax::text(n, src) == name) {
                            return p.child_by_field_name("type").map(|t| syntax::text(t, src).to_string());
                        }
                    }
                }
                _ => {}
            }
        }
        if syntax::is_type_declaration(node.kind()) {
            break;
        }
        scope = node.parent();
    }
    None
}
