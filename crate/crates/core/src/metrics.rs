//! Similarity and functional-correctness metrics for generated tests.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tree_sitter::Node;

use crate::classifier::{classify_test, extract_expected_exception};
use crate::instrument::{instrument_print_exception, instrument_print_trace, parse_trace_log, write_instrumented, OffsetIndex};
use crate::jmodel::{syntax, RepoContext};
use crate::lexer::{is_keyword, token_texts};
use crate::sha256_hex;
use crate::stacktrace::exclude_test_and_util_frames;

/// Token-stream equality with comments and layout ignored.
pub fn xmatch(candidate: &str, reference: &str) -> bool {
    token_texts(candidate) == token_texts(reference)
}

pub fn xmatch_strict(candidate: &str, reference: &str) -> bool {
    candidate == reference
}

fn ngrams<'t, 'a>(tokens: &'t [&'a str], n: usize) -> BTreeMap<&'t [&'a str], usize> {
    let mut out = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// Clipped matches and candidate total for order `n`, with each candidate
/// n-gram weighted by `weight`.
fn clipped(cand: &[&str], refr: &[&str], n: usize, weight: impl Fn(&[&str]) -> f64) -> (f64, f64) {
    let c = ngrams(cand, n);
    let r = ngrams(refr, n);
    let mut matched = 0.0;
    let mut total = 0.0;
    for (g, &k) in &c {
        let w = weight(g);
        matched += w * k.min(r.get(g).copied().unwrap_or(0)) as f64;
        total += w * k as f64;
    }
    (matched, total)
}

/// Geometric mean of precisions with brevity penalty. Orders above one are
/// add-one smoothed; an empty unigram match gives 0.
fn smoothed_bleu(cand: &[&str], refr: &[&str], max_n: usize, unigram_weight: impl Fn(&str) -> f64) -> f64 {
    if cand.is_empty() || refr.is_empty() {
        return if cand.is_empty() && refr.is_empty() { 1.0 } else { 0.0 };
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (m, t) = if n == 1 { clipped(cand, refr, 1, |g| unigram_weight(g[0])) } else { clipped(cand, refr, n, |_| 1.0) };
        let p = if n == 1 {
            if t == 0.0 {
                0.0
            } else {
                m / t
            }
        } else {
            (m + 1.0) / (t + 1.0)
        };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    let (c, r) = (cand.len() as f64, refr.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    (bp * (log_sum / max_n as f64).exp()).clamp(0.0, 1.0)
}

pub fn bleu_n(candidate: &str, reference: &str, max_n: usize) -> f64 {
    smoothed_bleu(&token_texts(candidate), &token_texts(reference), max_n, |_| 1.0)
}

pub fn bleu(candidate: &str, reference: &str) -> f64 {
    bleu_n(candidate, reference, 4)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeBleu {
    pub score: f64,
    pub ngram: f64,
    pub weighted_ngram: f64,
    pub syntax: f64,
    pub dataflow: f64,
    /// Either side failed to parse as a method or constructor; `score` is plain BLEU.
    pub degraded: bool,
}

fn with_method<T>(src: &str, f: impl FnOnce(Node<'_>, &str) -> T) -> Option<T> {
    let kind = syntax::single_member_kind(src).filter(|k| matches!(*k, "method_declaration" | "constructor_declaration"))?;
    let wrapped = format!("class __ExbtProbe {{\n{src}\n}}");
    let tree = syntax::parse(&wrapped);
    let method = syntax::descendants_of_kind(tree.root_node(), kind).into_iter().next()?;
    Some(f(method, &wrapped))
}

fn is_comment(n: Node<'_>) -> bool {
    n.kind().ends_with("comment")
}

/// Every named subtree, rendered as its node-kind structure.
fn subtrees(method: Node<'_>) -> BTreeMap<String, usize> {
    fn go(n: Node<'_>, out: &mut BTreeMap<String, usize>) -> String {
        let mut s = format!("({}", n.kind());
        for c in syntax::named_children(n).into_iter().filter(|c| !is_comment(*c)) {
            s.push(' ');
            s.push_str(&go(c, out));
        }
        s.push(')');
        *out.entry(s.clone()).or_insert(0) += 1;
        s
    }
    let mut out = BTreeMap::new();
    go(method, &mut out);
    out
}

/// Def-use edges between locals and parameters, with variables renamed
/// by order of first appearance.
fn dataflow(method: Node<'_>, src: &str) -> BTreeMap<(String, &'static str, String), usize> {
    let mut locals = BTreeSet::new();
    syntax::walk(method, &mut |n| {
        let name = match n.kind() {
            "formal_parameter" | "spread_parameter" | "catch_formal_parameter" | "enhanced_for_statement" | "resource" => {
                n.child_by_field_name("name")
            }
            "variable_declarator" => n.child_by_field_name("name"),
            "inferred_parameters" => {
                for c in syntax::named_children(n) {
                    locals.insert(syntax::text(c, src).to_string());
                }
                None
            }
            "lambda_expression" => n.child_by_field_name("parameters").filter(|p| p.kind() == "identifier"),
            _ => None,
        };
        if let Some(name) = name {
            locals.insert(syntax::text(name, src).to_string());
        }
        true
    });
    let mut order: BTreeMap<String, usize> = BTreeMap::new();
    let mut norm = |name: &str| {
        let next = order.len();
        format!("var_{}", *order.entry(name.to_string()).or_insert(next))
    };
    let is_local_ref = |n: Node<'_>| {
        n.kind() == "identifier"
            && locals.contains(syntax::text(n, src))
            && !n.parent().is_some_and(|p| {
                (p.kind() == "method_invocation" && p.child_by_field_name("name") == Some(n))
                    || (p.kind() == "field_access" && p.child_by_field_name("field") == Some(n))
            })
    };
    let mut edges = BTreeMap::new();
    let mut defined_at = BTreeSet::new();
    syntax::walk(method, &mut |n| {
        let (target, value) = match n.kind() {
            "variable_declarator" => (n.child_by_field_name("name"), n.child_by_field_name("value")),
            "assignment_expression" => (n.child_by_field_name("left"), n.child_by_field_name("right")),
            _ => (None, None),
        };
        if let (Some(t), Some(v)) = (target, value) {
            if is_local_ref(t) {
                defined_at.insert(t.id());
                let x = norm(syntax::text(t, src));
                let mut sources = Vec::new();
                syntax::walk(v, &mut |m| {
                    if is_local_ref(m) {
                        sources.push(syntax::text(m, src).to_string());
                    }
                    true
                });
                for y in sources {
                    let y = norm(&y);
                    *edges.entry((x.clone(), "computedFrom", y)).or_insert(0) += 1;
                }
            }
        }
        if is_local_ref(n) && !defined_at.contains(&n.id()) {
            let parent_is_decl = n.parent().is_some_and(|p| p.child_by_field_name("name") == Some(n));
            if !parent_is_decl {
                let x = norm(syntax::text(n, src));
                *edges.entry((x.clone(), "comesFrom", x)).or_insert(0) += 1;
            }
        }
        true
    });
    edges
}

fn multiset_match<K: Ord>(cand: &BTreeMap<K, usize>, refr: &BTreeMap<K, usize>) -> f64 {
    let total: usize = refr.values().sum();
    if total == 0 {
        return 1.0;
    }
    let hit: usize = refr.iter().map(|(k, &n)| n.min(cand.get(k).copied().unwrap_or(0))).sum();
    hit as f64 / total as f64
}

/// Equal-weight mix of n-gram, keyword-weighted n-gram, syntax-subtree
/// and dataflow matching. A reference without dataflow edges scores 1 on
/// that component.
pub fn code_bleu(candidate: &str, reference: &str) -> CodeBleu {
    let (ct, rt) = (token_texts(candidate), token_texts(reference));
    let ngram = smoothed_bleu(&ct, &rt, 4, |_| 1.0);
    let parsed =
        with_method(candidate, |m, s| (subtrees(m), dataflow(m, s))).zip(with_method(reference, |m, s| (subtrees(m), dataflow(m, s))));
    let Some(((c_ast, c_df), (r_ast, r_df))) = parsed else {
        return CodeBleu { score: ngram, ngram, weighted_ngram: ngram, syntax: 0.0, dataflow: 0.0, degraded: true };
    };
    let weighted_ngram = smoothed_bleu(&ct, &rt, 4, |t| if is_keyword(t) { 1.0 } else { 0.2 });
    let syntax = multiset_match(&c_ast, &r_ast);
    let dataflow = multiset_match(&c_df, &r_df);
    let score = 0.25 * (ngram + weighted_ngram + syntax + dataflow);
    CodeBleu { score, ngram, weighted_ngram, syntax, dataflow, degraded: false }
}

/// `1 - levenshtein / max(len)` over characters.
pub fn edit_similarity(candidate: &str, reference: &str) -> f64 {
    strsim::normalized_levenshtein(candidate, reference)
}

/// Whether the candidate is an EBT expecting `target` (compared by
/// simple name).
pub fn matched_exception(candidate: &str, target: &str) -> bool {
    let Ok(t) = classify_test(candidate) else { return false };
    extract_expected_exception(&t).is_ok_and(|e| syntax::simple_name(&e) == syntax::simple_name(target))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalResult {
    pub compilable: Option<bool>,
    pub runnable: Option<bool>,
    pub covers_target: Option<bool>,
}

impl FunctionalResult {
    /// Clears fields that cannot be known: nothing runs unless it compiled,
    /// and coverage is unknown unless it ran.
    pub fn normalized(mut self) -> FunctionalResult {
        if self.compilable != Some(true) {
            self.runnable = None;
        }
        if self.runnable != Some(true) {
            self.covers_target = None;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunnerError {
    #[error("build runner unavailable: {0}")]
    RunnerUnavailable(String),
}

/// Where a candidate must be placed and which throw it must reach.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckTarget {
    pub dest: String,
    pub throw_file: String,
    pub throw_line: u32,
    pub exception_type: String,
}

pub trait BuildRunner: Send + Sync {
    fn kind(&self) -> &'static str;
    fn check(&self, candidate: &str, target: &CheckTarget) -> Result<FunctionalResult, RunnerError>;
}

/// Outcomes recorded earlier, keyed by the SHA-256 of the candidate text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplayRunner {
    pub outcomes: BTreeMap<String, FunctionalResult>,
}

impl ReplayRunner {
    pub fn load(path: &Path) -> Result<ReplayRunner, RunnerError> {
        let text = fs::read_to_string(path).map_err(|e| RunnerError::RunnerUnavailable(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| RunnerError::RunnerUnavailable(format!("{}: {e}", path.display())))
    }
}

impl BuildRunner for ReplayRunner {
    fn kind(&self) -> &'static str {
        "replay"
    }

    fn check(&self, candidate: &str, _target: &CheckTarget) -> Result<FunctionalResult, RunnerError> {
        let digest = sha256_hex(candidate);
        self.outcomes
            .get(&digest)
            .map(|r| r.normalized())
            .ok_or_else(|| RunnerError::RunnerUnavailable(format!("no recorded outcome for candidate {digest}")))
    }
}

/// Runs real build commands on an instrumented copy of the repository.
/// The commands run through `sh -c` in the copy's root; `{test_class}` and
/// `{test_method}` in `test_cmd` are replaced, and the trace log path is
/// exported as `EXBT_LOG`.
pub struct CommandRunner {
    pub repo: PathBuf,
    pub compile_cmd: String,
    pub test_cmd: String,
}

/// Adds `candidate` as the last member of the outermost class in `file_src`.
pub fn inject_candidate(file_src: &str, candidate: &str) -> String {
    let Some(close) = file_src.rfind('}') else {
        return format!("{file_src}\n{candidate}\n");
    };
    let indented: Vec<String> = candidate.lines().map(|l| if l.is_empty() { String::new() } else { format!("    {l}") }).collect();
    format!("{}\n{}\n{}", file_src[..close].trim_end(), indented.join("\n"), &file_src[close..])
}

fn shell(cmd: &str, dir: &Path, log: &Path) -> Result<bool, RunnerError> {
    let status = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .current_dir(dir)
        .env("EXBT_LOG", log)
        .status()
        .map_err(|e| RunnerError::RunnerUnavailable(format!("`{cmd}`: {e}")))?;
    Ok(status.success())
}

impl BuildRunner for CommandRunner {
    fn kind(&self) -> &'static str {
        "command"
    }

    fn check(&self, candidate: &str, target: &CheckTarget) -> Result<FunctionalResult, RunnerError> {
        let unavailable = |e: &dyn std::fmt::Display| RunnerError::RunnerUnavailable(e.to_string());
        let ctx = RepoContext::load(&self.repo).map_err(|e| unavailable(&e))?;
        let work = tempfile::tempdir().map_err(|e| unavailable(&e))?;
        let log = work.path().join("exbt-trace.log");
        let tree = instrument_print_trace(&ctx);
        write_instrumented(&ctx, &tree, work.path(), &log.to_string_lossy()).map_err(|e| unavailable(&e))?;
        let offsets: OffsetIndex = tree.files.iter().map(|f| (f.path.clone(), f.offsets.clone())).collect();

        let Ok(test) = classify_test(candidate) else {
            return Ok(FunctionalResult { compilable: Some(false), ..Default::default() });
        };
        let body = instrument_print_exception(&test).unwrap_or_else(|_| candidate.to_string());
        let dest = work.path().join(&target.dest);
        let original = fs::read_to_string(&dest).map_err(|e| unavailable(&e))?;
        fs::write(&dest, inject_candidate(&original, &body)).map_err(|e| unavailable(&e))?;

        if !shell(&self.compile_cmd, work.path(), &log)? {
            return Ok(FunctionalResult { compilable: Some(false), ..Default::default() });
        }
        let dest_unit_fqn = ctx.unit(&target.dest).and_then(|u| u.types.first()).map(|t| t.fqn.clone()).unwrap_or_default();
        let cmd = self.test_cmd.replace("{test_class}", &dest_unit_fqn).replace("{test_method}", &test.id.name);
        let ran = shell(&cmd, work.path(), &log)?;
        let text = fs::read_to_string(&log).unwrap_or_default();
        let covers = parse_trace_log(&text).traces.iter().filter(|t| t.exception.is_some()).any(|t| {
            let normalized = crate::instrument::normalize_trace(&t.trace, &ctx, &offsets);
            exclude_test_and_util_frames(&normalized, &target.dest, &ctx)
                .ok()
                .and_then(|r| r.last().cloned())
                .and_then(|f| ctx.resolve_frame(&f.class_fqn, &f.method, f.line).map(|(u, _)| (u.path.clone(), f.line)))
                .is_some_and(|(file, line)| file == target.throw_file && line == target.throw_line)
        });
        Ok(FunctionalResult { compilable: Some(true), runnable: Some(ran), covers_target: Some(covers) }.normalized())
    }
}

/// Scores for one generated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMetrics {
    pub target: String,
    pub candidate_id: String,
    /// Similarity fields are absent when no reference test exists.
    pub xmatch: Option<bool>,
    pub xmatch_strict: Option<bool>,
    pub bleu: Option<f64>,
    pub code_bleu: Option<f64>,
    pub code_bleu_degraded: Option<bool>,
    pub edit_sim: Option<f64>,
    pub matched_e: bool,
    pub compilable: Option<bool>,
    pub runnable: Option<bool>,
    pub covers_target: Option<bool>,
}

pub fn score_candidate(
    target: &str,
    candidate_id: &str,
    candidate: Option<&str>,
    reference: Option<&str>,
    exception_type: &str,
    functional: FunctionalResult,
) -> CandidateMetrics {
    let text = candidate.unwrap_or("");
    let cb = reference.map(|r| code_bleu(text, r));
    let functional = functional.normalized();
    CandidateMetrics {
        target: target.to_string(),
        candidate_id: candidate_id.to_string(),
        xmatch: reference.map(|r| candidate.is_some() && xmatch(text, r)),
        xmatch_strict: reference.map(|r| candidate.is_some() && xmatch_strict(text, r)),
        bleu: reference.map(|r| bleu(text, r)),
        code_bleu: cb.map(|c| c.score),
        code_bleu_degraded: cb.map(|c| c.degraded),
        edit_sim: reference.map(|r| edit_similarity(text, r)),
        matched_e: candidate.is_some_and(|c| matched_exception(c, exception_type)),
        compilable: functional.compilable,
        runnable: functional.runnable,
        covers_target: functional.covers_target,
    }
}

/// Means over candidates and throw coverage over targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub candidates: usize,
    pub targets: usize,
    pub bleu: f64,
    pub code_bleu: f64,
    pub edit_sim: f64,
    pub xmatch: f64,
    pub compilable: f64,
    pub matched_e: f64,
    pub runnable: f64,
    pub throw_cov: f64,
    pub covered_targets: Vec<String>,
    /// Some candidates lack functional results.
    pub partial: bool,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn rate(values: impl Iterator<Item = bool>) -> f64 {
    mean(values.map(|b| if b { 1.0 } else { 0.0 }))
}

/// A target counts as covered when some candidate for it compiles, runs,
/// reaches the target throw and expects the target exception type.
pub fn is_success(c: &CandidateMetrics) -> bool {
    c.covers_target == Some(true) && c.matched_e
}

pub fn aggregate(records: &[CandidateMetrics], targets: &[String]) -> Aggregate {
    let covered: BTreeSet<&str> = records.iter().filter(|c| is_success(c)).map(|c| c.target.as_str()).collect();
    let covered: Vec<String> = targets.iter().filter(|t| covered.contains(t.as_str())).cloned().collect();
    Aggregate {
        candidates: records.len(),
        targets: targets.len(),
        bleu: mean(records.iter().filter_map(|c| c.bleu)),
        code_bleu: mean(records.iter().filter_map(|c| c.code_bleu)),
        edit_sim: mean(records.iter().filter_map(|c| c.edit_sim)),
        xmatch: rate(records.iter().filter_map(|c| c.xmatch)),
        compilable: rate(records.iter().map(|c| c.compilable == Some(true))),
        matched_e: rate(records.iter().map(|c| c.matched_e)),
        runnable: rate(records.iter().map(|c| c.runnable == Some(true))),
        throw_cov: if targets.is_empty() { 0.0 } else { covered.len() as f64 / targets.len() as f64 },
        covered_targets: covered,
        partial: records.iter().any(|c| c.compilable.is_none()),
    }
}

/// Per target, the best value of each metric over its candidates, chosen
/// independently per metric.
pub fn best_of_k(records: &[CandidateMetrics]) -> Vec<CandidateMetrics> {
    let mut by_target: BTreeMap<&str, Vec<&CandidateMetrics>> = BTreeMap::new();
    for r in records {
        by_target.entry(&r.target).or_default().push(r);
    }
    let max_f = |v: &[&CandidateMetrics], f: fn(&CandidateMetrics) -> Option<f64>| v.iter().filter_map(|c| f(c)).reduce(f64::max);
    let any_b = |v: &[&CandidateMetrics], f: fn(&CandidateMetrics) -> Option<bool>| v.iter().filter_map(|c| f(c)).reduce(|a, b| a || b);
    by_target
        .into_iter()
        .map(|(target, v)| {
            let success = v.iter().any(|c| is_success(c));
            CandidateMetrics {
                target: target.to_string(),
                candidate_id: format!("best-of-{}", v.len()),
                xmatch: any_b(&v, |c| c.xmatch),
                xmatch_strict: any_b(&v, |c| c.xmatch_strict),
                bleu: max_f(&v, |c| c.bleu),
                code_bleu: max_f(&v, |c| c.code_bleu),
                code_bleu_degraded: any_b(&v, |c| c.code_bleu_degraded),
                edit_sim: max_f(&v, |c| c.edit_sim),
                matched_e: success || v.iter().any(|c| c.matched_e),
                compilable: any_b(&v, |c| c.compilable),
                runnable: any_b(&v, |c| c.runnable),
                covers_target: if success { Some(true) } else { any_b(&v, |c| c.covers_target) },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub notes: Vec<String>,
    pub candidates: Vec<CandidateMetrics>,
    pub aggregate: Aggregate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_of_k: Option<Aggregate>,
    /// Targets without a prompt, with the reason.
    #[serde(default)]
    pub unmatched: BTreeMap<String, String>,
}

pub fn build_report(records: Vec<CandidateMetrics>, targets: &[String]) -> MetricsReport {
    let aggregate = aggregate(&records, targets);
    let multi = {
        let mut seen = BTreeSet::new();
        records.iter().any(|r| !seen.insert(&r.target))
    };
    let mut notes = vec!["similarity means cover candidates that have a reference test".to_string()];
    if aggregate.partial {
        notes.push("functional results missing for some candidates".to_string());
    }
    let best_of_k = multi.then(|| {
        notes.push("best-of-k maximizes each metric independently per target".to_string());
        self::aggregate(&best_of_k(&records), targets)
    });
    MetricsReport { notes, candidates: records, aggregate, best_of_k, unmatched: BTreeMap::new() }
}

/// Text table: similarity columns, then functional columns.
pub fn render_table(report: &MetricsReport) -> String {
    let row = |name: &str, a: &Aggregate| {
        format!(
            "{:<10} {:>6.2} {:>9.2} {:>8.2} {:>7.2} | {:>11.2} {:>10.2} {:>10.2} {:>10.2}\n",
            name,
            a.bleu * 100.0,
            a.code_bleu * 100.0,
            a.edit_sim * 100.0,
            a.xmatch * 100.0,
            a.compilable * 100.0,
            a.matched_e * 100.0,
            a.runnable * 100.0,
            a.throw_cov * 100.0
        )
    };
    let mut out = format!(
        "{:<10} {:>6} {:>9} {:>8} {:>7} | {:>11} {:>10} {:>10} {:>10}\n",
        "", "BLEU", "CodeBLEU", "EditSim", "xMatch", "Compilable%", "Matched-E%", "Runnable%", "ThrowCov%"
    );
    out.push_str(&row("top-1", &report.aggregate));
    if let Some(b) = &report.best_of_k {
        out.push_str(&row("best-of-k", b));
    }
    out.push_str(&format!(
        "targets: {}  candidates: {}  covered: {}\n",
        report.aggregate.targets,
        report.aggregate.candidates,
        report.aggregate.covered_targets.len()
    ));
    if !report.unmatched.is_empty() {
        let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
        for r in report.unmatched.values() {
            *reasons.entry(r).or_insert(0) += 1;
        }
        let parts: Vec<String> = reasons.iter().map(|(r, n)| format!("{r} {n}")).collect();
        out.push_str(&format!("no prompt: {}\n", parts.join(", ")));
    }
    for n in &report.notes {
        out.push_str(&format!("note: {n}\n"));
    }
    out
}
