//! Source rewriting that makes executions emit stack traces, and the
//! reader for the resulting trace logs.
//!
//! Throw-bearing main methods get a trace dump as their first statement.
//! When the opening brace ends its line the dump goes on a new line, which
//! shifts later lines; a `<file>.offsets` sidecar records the shift. When
//! code follows the brace on the same line the dump is inserted inline
//! between `/*exbt:trace*/` and `/*exbt:end*/`, which keeps line numbers.
//! Both forms are recognised by [`remove_instrumentation`].

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tree_sitter::Node;

use crate::classifier::{assert_throws_type, try_fail_catch_clause, Pattern, TestKind, TestMethod};
use crate::jmodel::{syntax, throw_sites_in_unit, CompilationUnit, MethodId, MethodKind, RepoContext};
use crate::stacktrace::{self, Frame, FrameLine, StackTrace};

pub const RUNTIME_CLASS: &str = "exbt.runtime.ExbtTraceLog";
const DUMP_CALL: &str = "exbt.runtime.ExbtTraceLog.dump();";
const LINE_MARK: &str = " // exbt:trace";
const INLINE_OPEN: &str = "/*exbt:trace*/";
const INLINE_CLOSE: &str = "/*exbt:end*/";
const EXC_VAR: &str = "__exbtEx";
pub const DEFAULT_LOG_PATH: &str = "exbt-trace.log";

#[derive(Debug, Error)]
pub enum InstrumentError {
    #[error("{0} is not an exceptional behavior test")]
    NotEbt(String),
    #[error("cannot locate the {pattern:?} construct in {method}")]
    PatternNotFound { method: String, pattern: Pattern },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> InstrumentError + '_ {
    move |source| InstrumentError::Io { path: path.to_path_buf(), source }
}

/// A method that could not receive a trace dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteConflict {
    pub method: MethodId,
    pub reason: String,
}

/// Instrumented line numbers (1-based) of inserted lines, ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffsetMap {
    pub inserted: Vec<u32>,
}

impl OffsetMap {
    /// Maps an instrumented line back to the original source. An inserted
    /// line maps to the original line that follows it.
    pub fn to_original(&self, line: u32) -> u32 {
        let before = self.inserted.iter().take_while(|&&l| l < line).count() as u32;
        line - before
    }

    pub fn is_identity(&self) -> bool {
        self.inserted.is_empty()
    }

    /// Sidecar text: one `<instrumented-from> <instrumented-to> <original-from>`
    /// segment per run of unshifted lines; `to` is `*` for the final run.
    pub fn render(&self) -> String {
        let mut out = String::from("# instrumented-from instrumented-to original-from\n");
        let mut from = 1u32;
        for &ins in &self.inserted {
            if ins > from {
                out.push_str(&format!("{} {} {}\n", from, ins - 1, self.to_original(from)));
            }
            from = ins + 1;
        }
        out.push_str(&format!("{} * {}\n", from, self.to_original(from)));
        out
    }

    pub fn parse(text: &str) -> Result<OffsetMap, String> {
        let mut inserted = Vec::new();
        let mut expected_from = 1u32;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [from, to, _orig] = parts.as_slice() else {
                return Err(format!("bad offsets line `{line}`"));
            };
            let from: u32 = from.parse().map_err(|_| format!("bad offsets line `{line}`"))?;
            inserted.extend(expected_from..from);
            if *to == "*" {
                break;
            }
            let to: u32 = to.parse().map_err(|_| format!("bad offsets line `{line}`"))?;
            expected_from = to + 1;
        }
        Ok(OffsetMap { inserted })
    }
}

/// Offset maps keyed by repository-relative source path.
pub type OffsetIndex = BTreeMap<String, OffsetMap>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstrumentedFile {
    pub path: String,
    pub source: String,
    pub offsets: OffsetMap,
    pub methods: Vec<MethodId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InstrumentedTree {
    /// Only files that changed.
    pub files: Vec<InstrumentedFile>,
    pub conflicts: Vec<RewriteConflict>,
}

struct Insertion {
    at: usize,
    text: String,
    new_line: bool,
}

fn line_start(src: &str, at: usize) -> usize {
    src[..at].rfind('\n').map_or(0, |i| i + 1)
}

fn line_end(src: &str, at: usize) -> usize {
    src[at..].find('\n').map_or(src.len(), |i| at + i)
}

fn indent_of(src: &str, at: usize) -> &str {
    let start = line_start(src, at);
    let line = &src[start..line_end(src, start)];
    &line[..line.len() - line.trim_start().len()]
}

/// True if nothing but whitespace or a line comment follows `at` on its line.
fn rest_of_line_is_empty(src: &str, at: usize) -> bool {
    let rest = src[at..line_end(src, at)].trim();
    rest.is_empty() || rest.starts_with("//")
}

fn apply(src: &str, mut inserts: Vec<Insertion>) -> (String, OffsetMap) {
    inserts.sort_by_key(|i| i.at);
    let mut out = String::with_capacity(src.len() + inserts.len() * 48);
    let mut inserted = Vec::new();
    let mut last = 0;
    for ins in &inserts {
        out.push_str(&src[last..ins.at]);
        if ins.new_line {
            inserted.push(out.matches('\n').count() as u32 + 1);
        }
        out.push_str(&ins.text);
        last = ins.at;
    }
    out.push_str(&src[last..]);
    (out, OffsetMap { inserted })
}

/// Places `stmt` right after byte `anchor`: on a new line when the anchor
/// ends its line, otherwise inline between markers.
fn statement_after(src: &str, anchor: usize, indent: &str, stmt: &str) -> Insertion {
    if rest_of_line_is_empty(src, anchor) {
        let eol = line_end(src, anchor);
        let at = (eol + 1).min(src.len());
        let mut text = format!("{indent}{stmt}{LINE_MARK}\n");
        if eol == src.len() {
            text.insert(0, '\n');
        }
        Insertion { at, text, new_line: true }
    } else {
        Insertion { at: anchor, text: format!(" {INLINE_OPEN}{stmt}{INLINE_CLOSE}"), new_line: false }
    }
}

fn unit_insertions(unit: &CompilationUnit) -> (Vec<Insertion>, Vec<MethodId>, Vec<RewriteConflict>) {
    let src = unit.source.as_str();
    let throwing: std::collections::BTreeSet<MethodId> = throw_sites_in_unit(unit).into_iter().map(|s| s.method).collect();
    let mut inserts = Vec::new();
    let mut methods = Vec::new();
    let mut conflicts = Vec::new();
    for decl in unit.methods.iter().filter(|m| throwing.contains(&m.id)) {
        let conflict = |reason: &str| RewriteConflict { method: decl.id.clone(), reason: reason.to_string() };
        if !matches!(decl.kind, MethodKind::Method | MethodKind::Constructor) {
            conflicts.push(conflict("initializer expressions have no body to prefix"));
            continue;
        }
        let Some(node) = unit.node_of(decl) else { continue };
        if node.kind() == "compact_constructor_declaration" {
            conflicts.push(conflict("compact constructor"));
            continue;
        }
        let Some(body) = node.child_by_field_name("body") else {
            conflicts.push(conflict("method has no body"));
            continue;
        };
        if syntax::text(body, src).contains(DUMP_CALL) {
            continue;
        }
        // constructors must keep this(...)/super(...) first
        let first = syntax::named_children(body).into_iter().find(|c| !c.kind().ends_with("comment"));
        let anchor = match first {
            Some(c) if c.kind() == "explicit_constructor_invocation" => c.end_byte(),
            _ => body.start_byte() + 1,
        };
        let indent = format!("{}    ", indent_of(src, node.start_byte()));
        inserts.push(statement_after(src, anchor, &indent, DUMP_CALL));
        methods.push(decl.id.clone());
    }
    (inserts, methods, conflicts)
}

/// Prefixes every main-source method that contains a throw statement with
/// a trace dump. Files without such methods are left out of the result.
pub fn instrument_print_trace(ctx: &RepoContext) -> InstrumentedTree {
    let mut tree = InstrumentedTree::default();
    for unit in ctx.units.iter().filter(|u| !u.is_test) {
        let (inserts, methods, conflicts) = unit_insertions(unit);
        for c in &conflicts {
            log::warn!("not instrumenting {}: {}", c.method, c.reason);
        }
        tree.conflicts.extend(conflicts);
        if inserts.is_empty() {
            continue;
        }
        let (source, offsets) = apply(&unit.source, inserts);
        tree.files.push(InstrumentedFile { path: unit.path.clone(), source, offsets, methods });
    }
    tree
}

/// Removes every inserted line and inline marker.
pub fn remove_instrumentation(src: &str) -> String {
    let mut out = String::with_capacity(src.len());
    for line in src.split_inclusive('\n') {
        let body = line.trim_end_matches(['\n', '\r']);
        if body.ends_with(LINE_MARK) && body[..body.len() - LINE_MARK.len()].trim_start().starts_with("exbt.runtime.ExbtTraceLog.") {
            continue;
        }
        out.push_str(line);
    }
    while let Some(start) = out.find(&format!(" {INLINE_OPEN}")) {
        let Some(rel_end) = out[start..].find(INLINE_CLOSE) else { break };
        out.replace_range(start..start + rel_end + INLINE_CLOSE.len(), "");
    }
    out
}

/// Java source of the runtime helper. `log_path` is the default log file,
/// overridable with `-Dexbt.log=...` or `EXBT_LOG`.
pub fn runtime_helper_source(log_path: &str) -> String {
    let escaped = log_path.replace('\\', "\\\\").replace('"', "\\\"");
    format!(
        r##"package exbt.runtime;

import java.io.FileWriter;
import java.io.IOException;
import java.io.PrintWriter;

public final class ExbtTraceLog {{
    private static final ThreadLocal<String> CURRENT_TEST = new ThreadLocal<>();

    private ExbtTraceLog() {{
    }}

    private static String logPath() {{
        String env = System.getenv("EXBT_LOG");
        return System.getProperty("exbt.log", env != null ? env : "{escaped}");
    }}

    public static void setCurrentTest(String id) {{
        CURRENT_TEST.set(id);
    }}

    public static void clearCurrentTest() {{
        CURRENT_TEST.remove();
    }}

    public static void dump() {{
        write(null, Thread.currentThread().getStackTrace());
    }}

    public static void printException(Throwable t) {{
        write(t.getClass().getName(), t.getStackTrace());
    }}

    public static <T extends Throwable> T printed(T t) {{
        printException(t);
        return t;
    }}

    private static synchronized void write(String exception, StackTraceElement[] frames) {{
        StringBuilder sb = new StringBuilder();
        String test = CURRENT_TEST.get();
        if (test != null) {{
            sb.append("# test ").append(test).append('\n');
        }}
        if (exception != null) {{
            sb.append("# exception ").append(exception).append('\n');
        }}
        for (StackTraceElement f : frames) {{
            sb.append("\tat ").append(f).append('\n');
        }}
        sb.append("---\n");
        try (PrintWriter w = new PrintWriter(new FileWriter(logPath(), true))) {{
            w.print(sb);
        }} catch (IOException e) {{
            // tracing must never fail the test run
        }}
    }}
}}
"##
    )
}

/// JUnit 4 listener that tags log records with the running test.
pub fn junit4_listener_source() -> &'static str {
    r##"package exbt.runtime;

import org.junit.runner.Description;
import org.junit.runner.notification.RunListener;

public class ExbtListener extends RunListener {
    @Override
    public void testStarted(Description d) {
        ExbtTraceLog.setCurrentTest(d.getClassName() + "#" + d.getMethodName());
    }

    @Override
    public void testFinished(Description d) {
        ExbtTraceLog.clearCurrentTest();
    }
}
"##
}

fn write_file(path: &Path, content: &str) -> Result<(), InstrumentError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, content).map_err(io_err(path))
}

/// Copies the repository to `out`, overwrites instrumented files, writes
/// their `.offsets` sidecars and adds the runtime helper and listener.
pub fn write_instrumented(ctx: &RepoContext, tree: &InstrumentedTree, out: &Path, log_path: &str) -> Result<Vec<PathBuf>, InstrumentError> {
    let mut written = Vec::new();
    for entry in walkdir::WalkDir::new(&ctx.root).sort_by_file_name() {
        let entry = entry.map_err(|e| InstrumentError::Io { path: ctx.root.clone(), source: e.into() })?;
        let rel = entry.path().strip_prefix(&ctx.root).expect("walk stays under root");
        if rel.components().any(|c| matches!(c.as_os_str().to_str(), Some(".git" | "target" | "build"))) {
            continue;
        }
        let dest = out.join(rel);
        if entry.file_type().is_dir() {
            fs::create_dir_all(&dest).map_err(io_err(&dest))?;
        } else if entry.file_type().is_file() {
            fs::copy(entry.path(), &dest).map_err(io_err(&dest))?;
        }
    }
    for f in &tree.files {
        let dest = out.join(&f.path);
        write_file(&dest, &f.source)?;
        let sidecar = out.join(format!("{}.offsets", f.path));
        write_file(&sidecar, &f.offsets.render())?;
        written.push(dest);
    }
    let main_root = main_root_of(ctx);
    let helper = out.join(&main_root).join("exbt/runtime/ExbtTraceLog.java");
    write_file(&helper, &runtime_helper_source(log_path))?;
    written.push(helper);
    let test_root = main_root.replacen("main", "test", 1);
    let listener =
        out.join(if test_root == main_root { "src/test/java".to_string() } else { test_root }).join("exbt/runtime/ExbtListener.java");
    write_file(&listener, junit4_listener_source())?;
    written.push(listener);
    Ok(written)
}

/// Source root of the first main file: the path prefix before its package
/// directories.
fn main_root_of(ctx: &RepoContext) -> String {
    for unit in ctx.units.iter().filter(|u| !u.is_test) {
        let pkg_dir = unit.package.as_deref().unwrap_or("").replace('.', "/");
        let dir = unit.path.rsplit_once('/').map_or("", |(d, _)| d);
        if let Some(root) = dir.strip_suffix(&pkg_dir) {
            return root.trim_end_matches('/').to_string();
        }
    }
    "src/main/java".to_string()
}

/// Loads every `<file>.offsets` sidecar under `root`.
pub fn load_offsets(root: &Path) -> Result<OffsetIndex, InstrumentError> {
    let mut index = OffsetIndex::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name().into_iter().filter_map(Result::ok) {
        let Some(name) = entry.path().to_str() else { continue };
        let Some(source_path) = name.strip_suffix(".offsets") else { continue };
        let text = fs::read_to_string(entry.path()).map_err(io_err(entry.path()))?;
        let map = OffsetMap::parse(&text)
            .map_err(|m| InstrumentError::Io { path: entry.path().to_path_buf(), source: io::Error::new(io::ErrorKind::InvalidData, m) })?;
        let rel = Path::new(source_path).strip_prefix(root).unwrap_or(Path::new(source_path));
        index.insert(rel.to_string_lossy().replace('\\', "/"), map);
    }
    Ok(index)
}

fn with_method<T>(method_src: &str, f: impl FnOnce(Node<'_>, &str, usize) -> T) -> Option<T> {
    const PREFIX: &str = "class __ExbtProbe {\n";
    let wrapped = format!("{PREFIX}{method_src}\n}}");
    let tree = syntax::parse(&wrapped);
    let method = syntax::descendants_of_kind(tree.root_node(), "method_declaration").into_iter().next()?;
    Some(f(method, &wrapped, PREFIX.len()))
}

fn print_call(var: &str) -> String {
    format!("{RUNTIME_CLASS}.printException({var});")
}

/// Rewrites an EBT so the exception it expects is logged where the test
/// observes it. Returns the rewritten method text.
pub fn instrument_print_exception(ebt: &TestMethod) -> Result<String, InstrumentError> {
    let (TestKind::Ebt, Some(expected)) = (ebt.kind, ebt.expected_exception.as_deref()) else {
        return Err(InstrumentError::NotEbt(ebt.id.to_string()));
    };
    let src = ebt.body_text.as_str();
    if src.contains(&format!("{RUNTIME_CLASS}.print")) {
        return Ok(src.to_string());
    }
    let not_found = || InstrumentError::PatternNotFound { method: ebt.id.to_string(), pattern: ebt.pattern };
    let inserts = with_method(src, |method, wrapped, shift| -> Option<Vec<Insertion>> {
        let body = method.child_by_field_name("body")?;
        let at = |byte: usize| byte - shift;
        match ebt.pattern {
            Pattern::AnnotationExpected | Pattern::ExpectedExceptionRule => {
                let open = at(body.start_byte() + 1);
                let close = at(body.end_byte() - 1);
                let indent = indent_of(src, at(method.start_byte()));
                let catch = format!("}} catch ({expected} {EXC_VAR}) {{ {} throw {EXC_VAR}; }}", print_call(EXC_VAR));
                let close_ins = if src[line_start(src, close)..close].trim().is_empty() {
                    Insertion { at: line_start(src, close), text: format!("{indent}    {catch}\n"), new_line: true }
                } else {
                    Insertion { at: close, text: format!("{catch} "), new_line: false }
                };
                Some(vec![Insertion { at: open, text: " try {".into(), new_line: false }, close_ins])
            }
            Pattern::TryFailCatch => {
                let catch = try_fail_catch_clause(body, wrapped)?;
                let param = syntax::named_children(catch).into_iter().find(|c| c.kind() == "catch_formal_parameter")?;
                let var = syntax::text(param.child_by_field_name("name")?, wrapped);
                let block = catch.child_by_field_name("body")?;
                let indent = format!("{}    ", indent_of(src, at(catch.start_byte())));
                Some(vec![statement_after(src, at(block.start_byte() + 1), &indent, &print_call(var))])
            }
            Pattern::AssertThrows => {
                let inv = syntax::descendants_of_kind(body, "method_invocation")
                    .into_iter()
                    .find(|i| assert_throws_type(*i, wrapped).is_some())?;
                let parent = inv.parent()?;
                match parent.kind() {
                    "expression_statement" => Some(vec![
                        Insertion { at: at(parent.start_byte()), text: format!("var {EXC_VAR} = "), new_line: false },
                        Insertion { at: at(parent.end_byte()), text: format!(" {}", print_call(EXC_VAR)), new_line: false },
                    ]),
                    "variable_declarator" => {
                        let var = syntax::text(parent.child_by_field_name("name")?, wrapped);
                        let decl = parent.parent()?;
                        Some(vec![Insertion { at: at(decl.end_byte()), text: format!(" {}", print_call(var)), new_line: false }])
                    }
                    _ => Some(vec![
                        Insertion { at: at(inv.start_byte()), text: format!("{RUNTIME_CLASS}.printed("), new_line: false },
                        Insertion { at: at(inv.end_byte()), text: ")".into(), new_line: false },
                    ]),
                }
            }
            Pattern::None => None,
        }
    })
    .flatten()
    .ok_or_else(not_found)?;
    Ok(apply(src, inserts).0)
}

/// Applies [`instrument_print_exception`] to every given EBT declared in
/// `unit` and returns the rewritten file.
pub fn instrument_test_file(unit: &CompilationUnit, ebts: &[TestMethod]) -> Result<String, InstrumentError> {
    let mut edits = Vec::new();
    for t in ebts.iter().filter(|t| t.id.decl_file == unit.path) {
        let Some(decl) = unit.methods.iter().find(|m| m.id == t.id) else { continue };
        edits.push((decl.byte_range.clone(), instrument_print_exception(t)?));
    }
    edits.sort_by_key(|(r, _)| std::cmp::Reverse(r.start));
    let mut out = unit.source.clone();
    for (range, text) in edits {
        out.replace_range(range, &text);
    }
    Ok(out)
}

/// One block of a trace log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedTrace {
    pub trace: StackTrace,
    /// `fqn#method` of the test that was running, if the listener set it.
    pub test: Option<String>,
    /// Exception class for blocks written by `printException`.
    pub exception: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLog {
    pub traces: Vec<LoggedTrace>,
    pub malformed: usize,
}

/// Parses the block format: `# test <fqn>#<method>` and `# exception <type>`
/// header lines, frame lines in JVM order, and a `---` separator line.
/// A block containing any other non-blank line is skipped and counted.
pub fn parse_trace_log(text: &str) -> TraceLog {
    let mut log = TraceLog::default();
    let mut block: Vec<&str> = Vec::new();
    let flush = |block: &mut Vec<&str>, log: &mut TraceLog| {
        if block.iter().all(|l| l.trim().is_empty()) {
            block.clear();
            return;
        }
        match parse_block(block) {
            Some(t) => log.traces.push(t),
            None => {
                log::warn!("skipping malformed trace-log block starting `{}`", block[0].trim());
                log.malformed += 1;
            }
        }
        block.clear();
    };
    for line in text.lines() {
        if line.trim() == "---" {
            flush(&mut block, &mut log);
        } else {
            block.push(line);
        }
    }
    flush(&mut block, &mut log);
    log
}

fn parse_block(lines: &[&str]) -> Option<LoggedTrace> {
    let mut test = None;
    let mut exception = None;
    let mut frames = Vec::new();
    let mut saw_frame = false;
    for line in lines {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix("# test ") {
            test = Some(rest.trim().to_string());
        } else if let Some(rest) = t.strip_prefix("# exception ") {
            exception = Some(rest.trim().to_string());
        } else if t.starts_with('#') || (t.starts_with("...") && t.ends_with("more")) {
            continue;
        } else {
            match stacktrace::parse_frame_line(line)? {
                FrameLine::Frame(f) => {
                    saw_frame = true;
                    frames.push(f);
                }
                FrameLine::Dropped(_) => saw_frame = true,
            }
        }
    }
    if !saw_frame || frames.is_empty() {
        return None;
    }
    frames.reverse();
    Some(LoggedTrace { trace: StackTrace::new(frames), test, exception })
}

/// Maps frame lines from instrumented back to original coordinates.
pub fn normalize_trace(trace: &StackTrace, ctx: &RepoContext, offsets: &OffsetIndex) -> StackTrace {
    if offsets.is_empty() {
        return trace.clone();
    }
    let frames = trace
        .frames
        .iter()
        .map(|f| {
            let mut owner = f.class_fqn.as_str();
            let unit = loop {
                if let Some(u) = ctx.unit_declaring(owner) {
                    break Some(u);
                }
                match owner.rfind('$') {
                    Some(i) => owner = &owner[..i],
                    None => break None,
                }
            };
            match unit.and_then(|u| offsets.get(&u.path)) {
                Some(map) => Frame { line: map.to_original(f.line), ..f.clone() },
                None => f.clone(),
            }
        })
        .collect();
    StackTrace::new(frames)
}
