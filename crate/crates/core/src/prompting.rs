//! Inference-time context: the trace pool built from non-EBT executions,
//! destination test-file selection, prompt bundles and the instruction
//! template.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::TestMethod;
use crate::guardexpr::{compute_guard_expression, GuardRecord};
use crate::instrument::{normalize_trace, OffsetIndex, TraceLog};
use crate::jmodel::{syntax, CompilationUnit, MethodId, RepoContext, Scope, ThrowSite};
use crate::stacktrace::{exclude_test_and_util_frames, render, Frame, StackTrace};

pub const TEMPLATE_ID: &str = "exbt-v1";
pub const RNG_NAME: &str = "chacha8";
pub const DEFAULT_NONEBT_BUDGET: usize = 2048;
pub const MAX_NONEBT_VARIANTS: usize = 5;

/// One way to reach a throw statement, observed while running a non-EBT.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TracePoolEntry {
    /// Frames from the outermost repository method down to the throw line.
    pub trace: StackTrace,
    pub source_test: MethodId,
    pub throw_site: ThrowSite,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TracePool {
    pub entries: Vec<TracePoolEntry>,
    /// Log blocks that could not be parsed.
    pub malformed: usize,
    /// Blocks whose originating non-EBT could not be identified.
    pub unattributed: usize,
}

fn frame_method<'c>(ctx: &'c RepoContext, f: &Frame) -> Option<&'c MethodId> {
    ctx.resolve_frame(&f.class_fqn, &f.method, f.line).map(|(_, d)| &d.id)
}

fn find_test<'t>(nonebts: &'t [TestMethod], ctx: &RepoContext, log_test: Option<&str>, raw: &StackTrace) -> Option<&'t TestMethod> {
    if let Some((fqn, name)) = log_test.and_then(|t| t.split_once('#')) {
        return nonebts.iter().find(|t| t.id.fqn == fqn && t.id.name == name);
    }
    raw.frames.iter().find_map(|f| {
        let id = frame_method(ctx, f)?;
        nonebts.iter().find(|t| &t.id == id)
    })
}

/// Builds the pool from trace-dump logs. Each dump is taken at the entry
/// of a throw-bearing method, so one block yields one entry per throw
/// statement of that method, with the innermost frame moved to the throw.
pub fn collect_stacktrace_set(nonebts: &[TestMethod], ctx: &RepoContext, log: &TraceLog, offsets: &OffsetIndex) -> TracePool {
    let mut pool = TracePool { malformed: log.malformed, ..TracePool::default() };
    let mut seen = BTreeSet::new();
    for logged in log.traces.iter().filter(|t| t.exception.is_none()) {
        let raw = normalize_trace(&logged.trace, ctx, offsets);
        let Some(test) = find_test(nonebts, ctx, logged.test.as_deref(), &raw) else {
            pool.unattributed += 1;
            continue;
        };
        let Ok(trace) = exclude_test_and_util_frames(&raw, "", ctx) else { continue };
        let last = trace.last().expect("exclusion never returns an empty trace");
        let Some(inner) = frame_method(ctx, last) else { continue };
        for site in ctx.throw_sites_of(inner) {
            let mut frames = trace.frames.clone();
            frames.last_mut().expect("non-empty").line = site.line;
            let entry = TracePoolEntry { trace: StackTrace::new(frames), source_test: test.id.clone(), throw_site: site };
            if seen.insert(entry.clone()) {
                pool.entries.push(entry);
            }
        }
    }
    pool.entries.sort();
    log::info!("trace pool: {} entries, {} malformed blocks, {} unattributed", pool.entries.len(), pool.malformed, pool.unattributed);
    pool
}

#[derive(Debug, Error)]
pub enum PoolCacheError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt pool cache {path}: {source}")]
    Corrupt { path: PathBuf, source: serde_json::Error },
}

/// Pool cache keyed by the main-source digest and the log digest, so any
/// change to main sources or logs selects a different file.
pub fn cache_path(dir: &Path, ctx: &RepoContext, log_text: &str) -> PathBuf {
    let key = crate::sha256_hex(format!("{}\n{}", ctx.main_source_digest(), crate::sha256_hex(log_text)));
    dir.join(format!("pool-{}.json", &key[..16]))
}

pub fn load_or_build_pool(
    dir: &Path,
    ctx: &RepoContext,
    log_text: &str,
    build: impl FnOnce() -> TracePool,
) -> Result<(TracePool, bool), PoolCacheError> {
    let path = cache_path(dir, ctx, log_text);
    if let Ok(text) = fs::read_to_string(&path) {
        let pool = serde_json::from_str(&text).map_err(|source| PoolCacheError::Corrupt { path: path.clone(), source })?;
        return Ok((pool, true));
    }
    let pool = build();
    fs::create_dir_all(dir).map_err(|source| PoolCacheError::Io { path: dir.to_path_buf(), source })?;
    let json = serde_json::to_string_pretty(&pool).expect("pool serializes");
    fs::write(&path, json).map_err(|source| PoolCacheError::Io { path: path.clone(), source })?;
    Ok((pool, false))
}

/// Maps `fqn#name/arity` method keys and class names to test files that
/// executed them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoverageIndex {
    pub covered_by: BTreeMap<String, BTreeSet<String>>,
}

impl CoverageIndex {
    pub fn from_pool(pool: &TracePool, ctx: &RepoContext) -> CoverageIndex {
        let mut idx = CoverageIndex::default();
        for e in &pool.entries {
            let test_file = e.source_test.decl_file.clone();
            for f in &e.trace.frames {
                if let Some(id) = frame_method(ctx, f) {
                    idx.add(id.to_string(), &test_file);
                    idx.add(id.fqn.clone(), &test_file);
                }
            }
        }
        idx
    }

    pub fn add(&mut self, key: String, test_file: &str) {
        self.covered_by.entry(key).or_default().insert(test_file.to_string());
    }

    pub fn merge(&mut self, other: CoverageIndex) {
        for (k, files) in other.covered_by {
            self.covered_by.entry(k).or_default().extend(files);
        }
    }

    /// Test files covering the method itself, or else its class.
    pub fn files_for(&self, mut_id: &MethodId) -> Vec<&str> {
        let hit = self.covered_by.get(&mut_id.to_string()).or_else(|| self.covered_by.get(&mut_id.fqn));
        hit.into_iter().flatten().map(String::as_str).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DestRule {
    ByName,
    ByCoverage,
}

/// Picks the test file that will receive the generated test: `<F>Test.java`,
/// then `Test<F>.java` in the MUT's package, then a test file that covers
/// the MUT or its class.
pub fn select_dest_test_file(mut_id: &MethodId, ctx: &RepoContext, coverage: Option<&CoverageIndex>) -> Option<(String, DestRule)> {
    let unit = ctx.unit(&mut_id.decl_file)?;
    let stem = unit.file_stem();
    let pkg_dir = unit.package.as_deref().unwrap_or("").replace('.', "/");
    for file in [format!("{stem}Test.java"), format!("Test{stem}.java")] {
        let mut hits: Vec<&String> = ctx
            .test_files
            .iter()
            .filter(|p| p.rsplit('/').next() == Some(file.as_str()))
            .filter(|p| {
                let dir = p.rsplit_once('/').map_or("", |(d, _)| d);
                pkg_dir.is_empty() || dir == pkg_dir || dir.ends_with(&format!("/{pkg_dir}"))
            })
            .collect();
        hits.sort();
        if let Some(p) = hits.first() {
            return Some(((*p).clone(), DestRule::ByName));
        }
    }
    let covering = coverage?.files_for(mut_id);
    covering.into_iter().find(|p| ctx.test_files.iter().any(|t| t == p)).map(|p| (p.to_string(), DestRule::ByCoverage))
}

/// The test file with every test method removed, keeping fields, setup
/// and helper methods.
pub fn skeleton(unit: &CompilationUnit) -> String {
    let src = unit.source.as_str();
    let mut cuts = Vec::new();
    for decl in unit.methods.iter().filter(|m| m.is_test()) {
        let Some(node) = unit.node_of(decl) else { continue };
        let mut start = node;
        while let Some(prev) = start.prev_named_sibling() {
            if prev.kind().ends_with("comment") && syntax::end_line(prev) + 1 >= syntax::line(start) {
                start = prev;
            } else {
                break;
            }
        }
        let mut from = start.start_byte();
        let line_from = src[..from].rfind('\n').map_or(0, |i| i + 1);
        if src[line_from..from].trim().is_empty() {
            from = line_from;
        }
        let mut to = node.end_byte();
        let eol = src[to..].find('\n').map_or(src.len(), |i| to + i);
        if src[to..eol].trim().is_empty() {
            to = (eol + 1).min(src.len());
        }
        cuts.push(from..to);
    }
    cuts.sort_by_key(|r| r.start);
    let mut out = String::with_capacity(src.len());
    let mut last = 0;
    for r in cuts {
        if r.start < last {
            continue;
        }
        out.push_str(&src[last..r.start]);
        last = r.end;
    }
    out.push_str(&src[last..]);
    tidy_blank_lines(&out)
}

fn tidy_blank_lines(src: &str) -> String {
    let lines: Vec<&str> = src.lines().collect();
    let mut kept: Vec<&str> = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            let prev = kept.last().map(|l| l.trim_end());
            let next = lines[i + 1..].iter().find(|l| !l.trim().is_empty()).map(|l| l.trim_start());
            let redundant = prev.is_none_or(|p| p.is_empty() || p.ends_with('{')) || next.is_none_or(|n| n.starts_with('}'));
            if redundant {
                continue;
            }
        }
        kept.push(line);
    }
    let mut out = kept.join("\n");
    if src.ends_with('\n') {
        out.push('\n');
    }
    out
}

pub fn whitespace_tokens(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Orders relevant non-EBTs: those invoking the MUT first, then those in
/// the destination file, each group by (file, line). A test in both groups
/// appears once. The list is cut before the first test that would exceed
/// `budget` whitespace tokens in total.
pub fn rank_relevant<'a>(same_mut: Vec<&'a TestMethod>, same_file: Vec<&'a TestMethod>, budget: usize) -> Vec<&'a TestMethod> {
    let by_pos = |v: &mut Vec<&'a TestMethod>| v.sort_by(|a, b| (&a.id.decl_file, a.id.decl_line).cmp(&(&b.id.decl_file, b.id.decl_line)));
    let (mut a, mut b) = (same_mut, same_file);
    by_pos(&mut a);
    by_pos(&mut b);
    let mut seen = BTreeSet::new();
    let mut used = 0;
    let mut out = Vec::new();
    for t in a.into_iter().chain(b) {
        if !seen.insert(&t.id) {
            continue;
        }
        let cost = whitespace_tokens(&t.body_text);
        if used + cost > budget {
            break;
        }
        used += cost;
        out.push(t);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutSection {
    #[serde(flatten)]
    pub id: MethodId,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThrowSection {
    pub file: String,
    pub line: u32,
    pub statement: String,
    pub exception_type: String,
    pub method: MethodId,
}

impl From<&ThrowSite> for ThrowSection {
    fn from(s: &ThrowSite) -> Self {
        ThrowSection {
            file: s.file().to_string(),
            line: s.line,
            statement: s.statement_text.clone(),
            exception_type: s.exception_type.clone(),
            method: s.method.clone(),
        }
    }
}

impl ThrowSection {
    pub fn key(&self) -> String {
        format!("{}:{}", self.file, self.line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DestSection {
    pub path: String,
    pub skeleton: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    WithName,
    NoName,
}

/// Everything that goes into one instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub template: String,
    #[serde(rename = "mut")]
    pub mut_method: MutSection,
    pub throw: ThrowSection,
    pub dest: DestSection,
    pub trace: StackTrace,
    pub guard: GuardRecord,
    pub nonebts: Vec<String>,
    pub variant: Variant,
    /// Requested test method name; present for the with-name variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_name: Option<String>,
    pub rendered_instruction: String,
}

impl PromptBundle {
    pub fn rerender(&mut self) {
        self.rendered_instruction = render_instruction(self, &self.template.clone());
    }
}

/// Removes the declaration's own indentation from the lines after the
/// first; method text starts at its first token, so only later lines
/// carry the enclosing indentation. The closing line sets the amount.
pub fn dedent(text: &str) -> String {
    let Some(last) = text.lines().last() else { return String::new() };
    let indent = last.len() - last.trim_start_matches([' ', '\t']).len();
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.lines().enumerate() {
        if i > 0 {
            out.push('\n');
            let ws = line.len() - line.trim_start_matches([' ', '\t']).len();
            out.push_str(&line[ws.min(indent)..]);
        } else {
            out.push_str(line);
        }
    }
    out
}

pub fn mut_section(ctx: &RepoContext, id: &MethodId) -> MutSection {
    let source = ctx.method(id).map(|(u, d)| dedent(u.text(d.byte_range.clone()))).unwrap_or_default();
    MutSection { id: id.clone(), source }
}

pub fn dest_section(ctx: &RepoContext, path: &str) -> DestSection {
    DestSection { path: path.to_string(), skeleton: ctx.unit(path).map(skeleton).unwrap_or_default() }
}

/// Guard for a trace, or the trivial guard when the trace cannot be walked.
pub fn guard_record(trace: &StackTrace, ctx: &RepoContext) -> GuardRecord {
    match compute_guard_expression(trace, ctx) {
        Ok(g) => g.record(),
        Err(e) => {
            log::warn!("guard not computed: {e}");
            GuardRecord { conditions: vec![], original_conditions: vec![], rendered: "true".into(), unresolved_names: vec![] }
        }
    }
}

fn section(out: &mut String, header: &str, body: &str) {
    out.push_str("### ");
    out.push_str(header);
    out.push('\n');
    out.push_str(body.trim_end_matches('\n'));
    out.push_str("\n\n");
}

/// Renders the instruction. Sections appear in a fixed order and empty
/// ones are left out together with their header.
pub fn render_instruction(b: &PromptBundle, template: &str) -> String {
    debug_assert_eq!(template, TEMPLATE_ID, "unknown template");
    let mut out = format!("<!-- template: {template} -->\n");
    section(
        &mut out,
        "Task",
        "Write one JUnit test method that calls the method under test so that the target throw statement \
         executes, and checks that the exception it throws is raised. Reply with the test method only.",
    );
    section(
        &mut out,
        &format!("Method under test: {}#{}", b.mut_method.id.fqn, b.mut_method.id.name),
        &format!("```java\n{}\n```", b.mut_method.source),
    );
    section(
        &mut out,
        "Target throw statement",
        &format!("{} (line {} of {})\nException type: {}", b.throw.statement, b.throw.line, b.throw.file, b.throw.exception_type),
    );
    if !b.trace.is_empty() {
        section(&mut out, "Stack trace from the method under test to the throw statement", &render(&b.trace));
    }
    if !b.guard.conditions.is_empty() {
        section(&mut out, "Condition that must hold to reach the throw statement", &b.guard.rendered);
    }
    if !b.nonebts.is_empty() {
        let body: Vec<String> = b.nonebts.iter().map(|t| format!("```java\n{t}\n```")).collect();
        section(&mut out, "Related tests", &body.join("\n"));
    }
    if !b.dest.skeleton.trim().is_empty() {
        section(&mut out, &format!("Destination test file: {}", b.dest.path), &format!("```java\n{}\n```", b.dest.skeleton));
    }
    if let (Variant::WithName, Some(name)) = (b.variant, &b.test_name) {
        section(&mut out, "Test method name", name);
    }
    out.truncate(out.trim_end().len());
    out.push('\n');
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Error)]
#[serde(rename_all = "kebab-case")]
pub enum NoMatch {
    #[error("no destination test file")]
    NoDestFile,
    #[error("no pooled trace reaches the throw statement from the method under test")]
    NoMatchingTrace,
}

impl NoMatch {
    pub fn as_str(self) -> &'static str {
        match self {
            NoMatch::NoDestFile => "no-dest-file",
            NoMatch::NoMatchingTrace => "no-matching-trace",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRequest {
    pub mut_id: MethodId,
    pub throw_site: ThrowSite,
    pub dest: Option<String>,
    pub test_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptOptions {
    pub seed: u64,
    pub nonebt_budget: usize,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions { seed: 42, nonebt_budget: DEFAULT_NONEBT_BUDGET }
    }
}

/// Pool traces through `mut_id` that end at `site`, each cut to start at the
/// MUT. The flag tells whether the MUT was the trace's first frame, meaning
/// the originating test calls it directly.
pub fn matching_traces(pool: &TracePool, ctx: &RepoContext, mut_id: &MethodId, site: &ThrowSite) -> Vec<(StackTrace, bool, MethodId)> {
    let mut out = Vec::new();
    for e in pool.entries.iter().filter(|e| &e.throw_site == site) {
        let Some(pos) = e.trace.frames.iter().position(|f| frame_method(ctx, f) == Some(mut_id)) else { continue };
        out.push((StackTrace::new(e.trace.frames[pos..].to_vec()), pos == 0, e.source_test.clone()));
    }
    out
}

pub fn assemble_prompt(
    req: &PromptRequest,
    ctx: &RepoContext,
    pool: &TracePool,
    nonebts: &[TestMethod],
    opts: &PromptOptions,
) -> Result<PromptBundle, NoMatch> {
    let candidates = matching_traces(pool, ctx, &req.mut_id, &req.throw_site);
    if candidates.is_empty() {
        return Err(NoMatch::NoMatchingTrace);
    }
    let dest = req.dest.as_deref().ok_or(NoMatch::NoDestFile)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (trace, _, _) = &candidates[rng.gen_range(0..candidates.len())];

    let direct: BTreeSet<&MethodId> = candidates.iter().filter(|c| c.1).map(|c| &c.2).collect();
    let same_mut: Vec<&TestMethod> = nonebts.iter().filter(|t| direct.contains(&t.id)).collect();
    let same_file: Vec<&TestMethod> = nonebts.iter().filter(|t| t.id.decl_file == dest).collect();
    let related = rank_relevant(same_mut, same_file, opts.nonebt_budget);

    let mut bundle = PromptBundle {
        template: TEMPLATE_ID.to_string(),
        mut_method: mut_section(ctx, &req.mut_id),
        throw: ThrowSection::from(&req.throw_site),
        dest: dest_section(ctx, dest),
        trace: trace.clone(),
        guard: guard_record(trace, ctx),
        nonebts: related.iter().map(|t| dedent(&t.body_text)).collect(),
        variant: if req.test_name.is_some() { Variant::WithName } else { Variant::NoName },
        test_name: req.test_name.clone(),
        rendered_instruction: String::new(),
    };
    bundle.rerender();
    Ok(bundle)
}

/// Up to `k` copies of the bundle, each carrying a different single
/// relevant non-EBT. A bundle without non-EBTs yields itself.
pub fn nonebt_variants(bundle: &PromptBundle, k: usize) -> Vec<PromptBundle> {
    if bundle.nonebts.is_empty() {
        return vec![bundle.clone()];
    }
    bundle
        .nonebts
        .iter()
        .take(k)
        .map(|t| {
            let mut b = bundle.clone();
            b.nonebts = vec![t.clone()];
            b.rerender();
            b
        })
        .collect()
}

/// Result for one throw statement in machine-oriented mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepTarget {
    pub target: String,
    #[serde(flatten)]
    pub outcome: SweepOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum SweepOutcome {
    Bundle { dest_rule: DestRule, bundle: Box<PromptBundle> },
    NoMatch { reason: NoMatch },
}

/// Produces a bundle or a no-match reason for every main throw statement.
/// The MUT is chosen among the methods that start a pooled trace to the
/// throw, in (file, line) order, preferring one with a destination file.
pub fn sweep(
    ctx: &RepoContext,
    pool: &TracePool,
    nonebts: &[TestMethod],
    coverage: &CoverageIndex,
    opts: &PromptOptions,
) -> Vec<SweepTarget> {
    let mut out = Vec::new();
    for site in ctx.find_throw_sites(Scope::MainOnly) {
        let mut muts: Vec<&MethodId> = pool
            .entries
            .iter()
            .filter(|e| e.throw_site == site)
            .filter_map(|e| e.trace.first().and_then(|f| frame_method(ctx, f)))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        muts.sort_by(|a, b| (&a.decl_file, a.decl_line).cmp(&(&b.decl_file, b.decl_line)));
        let outcome = if muts.is_empty() {
            SweepOutcome::NoMatch { reason: NoMatch::NoMatchingTrace }
        } else {
            match muts.iter().find_map(|m| select_dest_test_file(m, ctx, Some(coverage)).map(|d| (*m, d))) {
                None => SweepOutcome::NoMatch { reason: NoMatch::NoDestFile },
                Some((mut_id, (dest, rule))) => {
                    let req = PromptRequest { mut_id: mut_id.clone(), throw_site: site.clone(), dest: Some(dest), test_name: None };
                    match assemble_prompt(&req, ctx, pool, nonebts, opts) {
                        Ok(b) => SweepOutcome::Bundle { dest_rule: rule, bundle: Box::new(b) },
                        Err(reason) => SweepOutcome::NoMatch { reason },
                    }
                }
            }
        };
        out.push(SweepTarget { target: site.key(), outcome });
    }
    out
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;
    use crate::classifier::split_test_suite;
    use crate::instrument::parse_trace_log;
    use crate::jmodel::SourceRoots;

    const FOO: &str = "package p;\n\npublic class Foo {\n    public void run(int n) {\n        check(n);\n        guard(n);\n    }\n\n    void check(int v) {\n        if (v < 0) throw new IllegalArgumentException(\"neg\");\n    }\n\n    void guard(int v) {\n        if (v > 9) throw new IllegalStateException(\"big\");\n        if (v == 5) throw new UnsupportedOperationException();\n    }\n}\n";
    const FOO_TEST: &str = "package p;\n\nimport org.junit.Test;\n\npublic class FooTest {\n    private Foo foo = new Foo();\n\n    // runs with a positive value\n    @Test\n    public void runs() {\n        foo.run(1);\n    }\n\n    @Test\n    public void checks() {\n        foo.check(2);\n    }\n\n    @Test(expected = IllegalArgumentException.class)\n    public void rejects() {\n        foo.run(-1);\n    }\n\n    private int helper() {\n        return 3;\n    }\n}\n";
    const BAR: &str = "package q;\n\npublic class Bar {\n    void go() {\n        if (true) throw new RuntimeException();\n    }\n}\n";
    const SUITE: &str = "package q;\n\nimport org.junit.Test;\n\npublic class BarSuite {\n    @Test\n    public void goes() {\n        new Bar().go();\n    }\n}\n";

    fn ctx() -> RepoContext {
        RepoContext::from_sources(
            Path::new("/r"),
            vec![
                ("src/main/java/p/Foo.java".into(), FOO.into()),
                ("src/test/java/p/FooTest.java".into(), FOO_TEST.into()),
                ("src/main/java/q/Bar.java".into(), BAR.into()),
                ("src/test/java/q/BarSuite.java".into(), SUITE.into()),
            ],
            &SourceRoots::default(),
        )
    }

    const LOG: &str = "# test p.FooTest#runs\n\tat p.Foo.check(Foo.java:10)\n\tat p.Foo.run(Foo.java:5)\n\tat p.FooTest.runs(FooTest.java:11)\n---\n# test p.FooTest#runs\n\tat p.Foo.guard(Foo.java:14)\n\tat p.Foo.run(Foo.java:6)\n\tat p.FooTest.runs(FooTest.java:11)\n---\n# test p.FooTest#checks\n\tat p.Foo.check(Foo.java:10)\n\tat p.FooTest.checks(FooTest.java:16)\n---\n";

    fn pool(c: &RepoContext) -> (TracePool, Vec<TestMethod>) {
        let (_, nonebts) = split_test_suite(c);
        (collect_stacktrace_set(&nonebts, c, &parse_trace_log(LOG), &OffsetIndex::new()), nonebts)
    }

    #[test]
    fn pool_has_one_entry_per_site_and_path() {
        let c = ctx();
        let (p, _) = pool(&c);
        let mut keys: Vec<(String, u32)> = p.entries.iter().map(|e| (e.source_test.name.clone(), e.throw_site.line)).collect();
        keys.sort();
        assert_eq!(keys, vec![("checks".into(), 10), ("runs".into(), 10), ("runs".into(), 14), ("runs".into(), 15)]);
        assert_eq!(p.entries.len(), 4);
        let to_check: Vec<_> = p.entries.iter().filter(|e| e.throw_site.line == 10).collect();
        assert_eq!(to_check.len(), 2);
        assert_ne!(to_check[0].trace, to_check[1].trace);
        let guard_entries = p.entries.iter().filter(|e| e.throw_site.method.name == "guard").count();
        assert_eq!(guard_entries, 2);
        assert!(collect_stacktrace_set(&[], &c, &parse_trace_log(""), &OffsetIndex::new()).entries.is_empty());
    }

    #[test]
    fn destination_file_rules() {
        let c = ctx();
        let (p, _) = pool(&c);
        let run = c.find_method("p.Foo#run").unwrap();
        assert_eq!(select_dest_test_file(run, &c, None), Some(("src/test/java/p/FooTest.java".into(), DestRule::ByName)));
        let go = c.find_method("q.Bar#go").unwrap();
        assert_eq!(select_dest_test_file(go, &c, None), None);
        let mut cov = CoverageIndex::from_pool(&p, &c);
        cov.add("q.Bar".into(), "src/test/java/q/BarSuite.java");
        assert_eq!(select_dest_test_file(go, &c, Some(&cov)), Some(("src/test/java/q/BarSuite.java".into(), DestRule::ByCoverage)));

        let alt = RepoContext::from_sources(
            Path::new("/r"),
            vec![
                ("src/main/java/p/Foo.java".into(), FOO.into()),
                ("src/test/java/p/TestFoo.java".into(), "package p;\nclass TestFoo {}\n".into()),
                ("src/test/java/other/FooTest.java".into(), "package other;\nclass FooTest {}\n".into()),
            ],
            &SourceRoots::default(),
        );
        let run = alt.find_method("p.Foo#run").unwrap();
        assert_eq!(select_dest_test_file(run, &alt, None).unwrap().0, "src/test/java/p/TestFoo.java");
    }

    #[test]
    fn dedent_uses_closing_line() {
        assert_eq!(dedent("void f() {\n        x();\n    }"), "void f() {\n    x();\n}");
        assert_eq!(dedent("void g() {}"), "void g() {}");
    }

    #[test]
    fn skeleton_drops_tests_only() {
        let c = ctx();
        let s = skeleton(c.unit("src/test/java/p/FooTest.java").unwrap());
        assert_eq!(
            s,
            "package p;\n\nimport org.junit.Test;\n\npublic class FooTest {\n    private Foo foo = new Foo();\n\n    private int helper() {\n        return 3;\n    }\n}\n"
        );
    }

    #[test]
    fn ranking_and_budget() {
        let t = |name: &str, file: &str, line: u32, body: &str| TestMethod {
            id: MethodId { fqn: "p.T".into(), name: name.into(), param_arity: 0, decl_file: file.into(), decl_line: line },
            body_text: body.into(),
            kind: crate::classifier::TestKind::NonEbt,
            pattern: crate::classifier::Pattern::None,
            expected_exception: None,
        };
        let m = t("m", "b/T.java", 5, "one two three");
        let f1 = t("f1", "a/D.java", 9, "one two three");
        let f2 = t("f2", "a/D.java", 3, "one two three");
        let names = |v: Vec<&TestMethod>| v.into_iter().map(|t| t.id.name.clone()).collect::<Vec<_>>();
        assert_eq!(names(rank_relevant(vec![&m], vec![&f1, &f2], 6)), vec!["m", "f2"]);
        assert_eq!(names(rank_relevant(vec![&m], vec![&m, &f2], 100)), vec!["m", "f2"]);
        assert!(rank_relevant(vec![], vec![], 100).is_empty());
    }

    fn request(c: &RepoContext, line: u32) -> PromptRequest {
        PromptRequest {
            mut_id: c.find_method("p.Foo#run").unwrap().clone(),
            throw_site: c.throw_site_at("src/main/java/p/Foo.java", line).unwrap(),
            dest: Some("src/test/java/p/FooTest.java".into()),
            test_name: None,
        }
    }

    #[test]
    fn assembly_matches_and_is_deterministic() {
        let c = ctx();
        let (p, nonebts) = pool(&c);
        let opts = PromptOptions::default();
        let b = assemble_prompt(&request(&c, 10), &c, &p, &nonebts, &opts).unwrap();
        assert_eq!(b, assemble_prompt(&request(&c, 10), &c, &p, &nonebts, &opts).unwrap());
        assert_eq!(b.trace.frames.iter().map(|f| f.method.as_str()).collect::<Vec<_>>(), vec!["run", "check"]);
        assert_eq!(b.guard.rendered, "n < 0");
        // `runs` calls run directly; `checks` lives in the destination file
        assert_eq!(b.nonebts.len(), 2);
        assert!(b.nonebts[0].contains("runs()"));

        let mut req = request(&c, 10);
        req.mut_id = c.find_method("p.Foo#guard").unwrap().clone();
        assert_eq!(assemble_prompt(&req, &c, &p, &nonebts, &opts), Err(NoMatch::NoMatchingTrace));
        let mut req = request(&c, 10);
        req.dest = None;
        assert_eq!(assemble_prompt(&req, &c, &p, &nonebts, &opts), Err(NoMatch::NoDestFile));
    }

    #[test]
    fn instruction_sections() {
        let c = ctx();
        let (p, nonebts) = pool(&c);
        let b = assemble_prompt(&request(&c, 10), &c, &p, &nonebts, &PromptOptions::default()).unwrap();
        let text = &b.rendered_instruction;
        let order = [
            "### Task",
            "### Method under test",
            "### Target throw statement",
            "### Stack trace",
            "### Condition",
            "### Related tests",
            "### Destination test file",
        ];
        let positions: Vec<usize> = order.iter().map(|h| text.find(h).unwrap_or_else(|| panic!("{h} missing"))).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(text.matches(b.mut_method.source.as_str()).count(), 1);
        assert!(!text.contains("### Test method name"));

        let mut named = b.clone();
        named.variant = Variant::WithName;
        named.test_name = Some("testRunRejectsNegative".into());
        named.rerender();
        let diff: Vec<&str> = named.rendered_instruction.lines().filter(|l| !text.lines().any(|o| o == *l)).collect();
        assert_eq!(diff, vec!["### Test method name", "testRunRejectsNegative"]);

        let mut bare = b.clone();
        bare.nonebts.clear();
        bare.rerender();
        assert!(!bare.rendered_instruction.contains("### Related tests"));

        let variants = nonebt_variants(&b, MAX_NONEBT_VARIANTS);
        assert_eq!(variants.len(), 2);
        assert_ne!(variants[0].nonebts, variants[1].nonebts);
    }

    #[test]
    fn sweep_partitions_targets() {
        let c = ctx();
        let (p, nonebts) = pool(&c);
        let cov = CoverageIndex::from_pool(&p, &c);
        let out = sweep(&c, &p, &nonebts, &cov, &PromptOptions::default());
        assert_eq!(out.len(), c.find_throw_sites(Scope::MainOnly).len());
        let summary: Vec<(String, &str)> = out
            .iter()
            .map(|t| {
                let s = match &t.outcome {
                    SweepOutcome::Bundle { .. } => "bundle",
                    SweepOutcome::NoMatch { reason } => reason.as_str(),
                };
                (t.target.clone(), s)
            })
            .collect();
        assert_eq!(
            summary,
            vec![
                ("src/main/java/p/Foo.java:10".to_string(), "bundle"),
                ("src/main/java/p/Foo.java:14".to_string(), "bundle"),
                ("src/main/java/p/Foo.java:15".to_string(), "bundle"),
                ("src/main/java/q/Bar.java:5".to_string(), "no-matching-trace"),
            ]
        );
    }

    #[test]
    fn pool_cache_follows_sources() {
        let dir = tempfile::tempdir().unwrap();
        let c = ctx();
        let (p, _) = pool(&c);
        let (first, hit) = load_or_build_pool(dir.path(), &c, LOG, || p.clone()).unwrap();
        assert!(!hit);
        let (second, hit) = load_or_build_pool(dir.path(), &c, LOG, || unreachable!()).unwrap();
        assert!(hit);
        assert_eq!(first, second);
        let changed = RepoContext::from_sources(
            Path::new("/r"),
            vec![("src/main/java/p/Foo.java".into(), FOO.replace("9", "8"))],
            &SourceRoots::default(),
        );
        assert_ne!(cache_path(dir.path(), &c, LOG), cache_path(dir.path(), &changed, LOG));
    }
}
