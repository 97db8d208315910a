//! Training corpus: one prompt plus gold EBT per traced exceptional
//! behavior test.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::TestMethod;
use crate::instrument::{normalize_trace, LoggedTrace, OffsetIndex, TraceLog};
use crate::jmodel::{MethodId, RepoContext};
use crate::prompting::{
    dedent, dest_section, guard_record, mut_section, rank_relevant, PromptBundle, ThrowSection, Variant, DEFAULT_NONEBT_BUDGET, TEMPLATE_ID,
};
use crate::stacktrace::{endpoints, exclude_test_and_util_frames, StackTrace};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusExample {
    pub id: String,
    pub repo: String,
    #[serde(flatten)]
    pub prompt: PromptBundle,
    pub gold_ebt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedEbt {
    pub test: MethodId,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusBuild {
    pub examples: Vec<CorpusExample>,
    pub skipped: Vec<SkippedEbt>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusOptions {
    pub nonebt_budget: usize,
    pub variant: Variant,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions { nonebt_budget: DEFAULT_NONEBT_BUDGET, variant: Variant::WithName }
    }
}

fn trace_of<'l>(ebt: &TestMethod, ctx: &RepoContext, log: &'l TraceLog) -> Option<&'l LoggedTrace> {
    let key = format!("{}#{}", ebt.id.fqn, ebt.id.name);
    let exceptional = || log.traces.iter().filter(|t| t.exception.is_some());
    exceptional().find(|t| t.test.as_deref() == Some(key.as_str())).or_else(|| {
        exceptional().filter(|t| t.test.is_none()).find(|t| {
            t.trace.frames.iter().any(|f| ctx.resolve_frame(&f.class_fqn, &f.method, f.line).is_some_and(|(_, d)| d.id == ebt.id))
        })
    })
}

/// Builds one example per EBT whose logged exception trace resolves to a
/// method under test and a throw statement. EBTs are visited in the given
/// order; skipped ones are recorded with a reason.
pub fn collect_training_corpus(
    repo: &str,
    ebts: &[TestMethod],
    nonebts: &[TestMethod],
    ctx: &RepoContext,
    log: &TraceLog,
    offsets: &OffsetIndex,
    opts: &CorpusOptions,
) -> CorpusBuild {
    let mut build = CorpusBuild::default();
    let mut golds = BTreeSet::new();
    for ebt in ebts {
        let skip = |reason: String| SkippedEbt { test: ebt.id.clone(), reason };
        let Some(logged) = trace_of(ebt, ctx, log) else {
            build.skipped.push(skip("NoTrace".into()));
            continue;
        };
        let dest = ebt.id.decl_file.as_str();
        let raw = normalize_trace(&logged.trace, ctx, offsets);
        let trace = match exclude_test_and_util_frames(&raw, dest, ctx) {
            Ok(t) => t,
            Err(_) => {
                build.skipped.push(skip("EmptyAfterExclusion".into()));
                continue;
            }
        };
        let (mut_id, site) = match endpoints(&trace, ctx) {
            Ok(e) => e,
            Err(e) => {
                build.skipped.push(skip(format!("UnresolvedEndpoint: {e}")));
                continue;
            }
        };
        if !golds.insert(ebt.body_text.clone()) {
            build.skipped.push(skip("DuplicateGold".into()));
            continue;
        }
        let mut example = CorpusExample {
            id: format!("{repo}:{}#{}", ebt.id.fqn, ebt.id.name),
            repo: repo.to_string(),
            prompt: PromptBundle {
                template: TEMPLATE_ID.to_string(),
                mut_method: mut_section(ctx, &mut_id),
                throw: ThrowSection::from(&site),
                dest: dest_section(ctx, dest),
                guard: guard_record(&trace, ctx),
                trace: StackTrace::new(trace.frames),
                nonebts: Vec::new(),
                variant: opts.variant,
                test_name: (opts.variant == Variant::WithName).then(|| ebt.id.name.clone()),
                rendered_instruction: String::new(),
            },
            gold_ebt: dedent(&ebt.body_text),
        };
        link_relevant_nonebts(&mut example, nonebts, ctx, opts.nonebt_budget);
        build.examples.push(example);
    }
    log::info!("corpus: {} examples, {} EBTs skipped", build.examples.len(), build.skipped.len());
    build
}

/// Attaches non-EBTs that directly call the example's MUT or live in its
/// destination file, then re-renders the instruction.
pub fn link_relevant_nonebts(example: &mut CorpusExample, nonebts: &[TestMethod], ctx: &RepoContext, budget: usize) {
    let mut_id = &example.prompt.mut_method.id;
    let same_mut: Vec<&TestMethod> = nonebts.iter().filter(|t| ctx.direct_callees(&t.id).contains(mut_id)).collect();
    let same_file: Vec<&TestMethod> = nonebts.iter().filter(|t| t.id.decl_file == example.prompt.dest.path).collect();
    example.prompt.nonebts = rank_relevant(same_mut, same_file, budget).into_iter().map(|t| dedent(&t.body_text)).collect();
    example.prompt.rerender();
}

/// Ids of examples whose gold test text appears in their own instruction.
pub fn leakage(examples: &[CorpusExample]) -> Vec<String> {
    examples.iter().filter(|e| e.prompt.rendered_instruction.contains(e.gold_ebt.trim())).map(|e| e.id.clone()).collect()
}

#[derive(Debug, Error)]
pub enum CorpusIoError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {source}")]
    Parse { path: PathBuf, line: usize, source: serde_json::Error },
}

pub fn to_jsonl(examples: &[CorpusExample]) -> String {
    let mut out = String::new();
    for e in examples {
        out.push_str(&serde_json::to_string(e).expect("example serializes"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: &Path, examples: &[CorpusExample]) -> Result<(), CorpusIoError> {
    let io_err = |source| CorpusIoError::Io { path: path.to_path_buf(), source };
    let mut f = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    f.write_all(to_jsonl(examples).as_bytes()).map_err(io_err)?;
    f.flush().map_err(io_err)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<CorpusExample>, CorpusIoError> {
    let io_err = |source| CorpusIoError::Io { path: path.to_path_buf(), source };
    let f = io::BufReader::new(fs::File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| CorpusIoError::Parse { path: path.to_path_buf(), line: i + 1, source })?);
    }
    Ok(out)
}
