//! Stage functions shared by the CLI subcommands and the full sweep, and
//! the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{split_test_suite, TestMethod};
use crate::config::{BackendKind, Config, RunnerKind};
use crate::corpus::{collect_training_corpus, to_jsonl, CorpusBuild, CorpusExample, CorpusOptions};
use crate::genbackend::{
    extract_candidate, generate_all, read_request_log, Backend, GenParams, HttpBackend, ReplayBackend, RequestRecord, StubBackend,
};
use crate::instrument::{load_offsets, parse_trace_log, OffsetIndex, TraceLog};
use crate::jmodel::{RepoContext, Scope, SourceRoots};
use crate::metrics::{
    build_report, score_candidate, BuildRunner, CheckTarget, CommandRunner, FunctionalResult, MetricsReport, ReplayRunner,
};
use crate::prompting::{
    collect_stacktrace_set, load_or_build_pool, nonebt_variants, sweep, CoverageIndex, DestRule, NoMatch, PromptOptions, SweepOutcome,
    TracePool, RNG_NAME, TEMPLATE_ID,
};
use crate::sha256_hex;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] crate::jmodel::JModelError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{0}")]
    Setup(String),
}

impl PipelineError {
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Model(_) => "model",
            PipelineError::Config(_) => "config",
            PipelineError::Io { .. } => "io",
            PipelineError::Setup(_) => "setup",
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io { path: path.to_path_buf(), message: e.to_string() }
}

pub fn write_artifact(path: &Path, content: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, content).map_err(|e| io_err(path, e))
}

pub fn jsonl<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|i| serde_json::to_string(i).expect("serializable") + "\n").collect()
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| io_err(path, format!("line {}: {e}", i + 1))))
        .collect()
}

/// Loaded repository plus the recorded executions.
pub struct Inputs {
    pub repo: PathBuf,
    pub ctx: RepoContext,
    pub ebts: Vec<TestMethod>,
    pub nonebts: Vec<TestMethod>,
    pub ebt_log_text: String,
    pub ebt_log: TraceLog,
    pub nonebt_log_text: String,
    pub nonebt_log: TraceLog,
    pub offsets: OffsetIndex,
}

fn read_optional(path: &Path) -> Result<String, PipelineError> {
    match fs::read_to_string(path) {
        Ok(t) => Ok(t),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            log::warn!("{} not found; treating as empty", path.display());
            Ok(String::new())
        }
        Err(e) => Err(io_err(path, e)),
    }
}

pub fn default_artifact(repo: &Path, name: &str) -> PathBuf {
    repo.join(".exbt").join(name)
}

pub fn load_context(repo: &Path, cfg: &Config) -> Result<RepoContext, PipelineError> {
    let roots = match &cfg.source_roots {
        Some(spec) => SourceRoots::parse(spec).map_err(PipelineError::Setup)?,
        None => SourceRoots::default(),
    };
    Ok(RepoContext::load_with(repo, &roots)?)
}

pub fn load_inputs(repo: &Path, cfg: &Config) -> Result<Inputs, PipelineError> {
    let ctx = load_context(repo, cfg)?;
    let (ebts, nonebts) = split_test_suite(&ctx);
    let ebt_log_text = read_optional(&cfg.ebt_log.clone().unwrap_or_else(|| default_artifact(repo, "ebt-traces.log")))?;
    let nonebt_log_text = read_optional(&cfg.nonebt_log.clone().unwrap_or_else(|| default_artifact(repo, "nonebt-traces.log")))?;
    let offsets_dir = cfg.offsets.clone().unwrap_or_else(|| default_artifact(repo, "offsets"));
    let offsets = if offsets_dir.is_dir() { load_offsets(&offsets_dir).map_err(|e| io_err(&offsets_dir, e))? } else { OffsetIndex::new() };
    Ok(Inputs {
        repo: repo.to_path_buf(),
        ebt_log: parse_trace_log(&ebt_log_text),
        nonebt_log: parse_trace_log(&nonebt_log_text),
        ctx,
        ebts,
        nonebts,
        ebt_log_text,
        nonebt_log_text,
        offsets,
    })
}

pub fn repo_name(repo: &Path) -> String {
    let canonical = repo.canonicalize().unwrap_or_else(|_| repo.to_path_buf());
    canonical.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "repo".into())
}

pub fn build_corpus(inputs: &Inputs, cfg: &Config) -> CorpusBuild {
    let opts = CorpusOptions { nonebt_budget: cfg.nonebt_budget, ..CorpusOptions::default() };
    collect_training_corpus(&repo_name(&inputs.repo), &inputs.ebts, &inputs.nonebts, &inputs.ctx, &inputs.ebt_log, &inputs.offsets, &opts)
}

pub fn build_pool(inputs: &Inputs, cache_dir: Option<&Path>) -> Result<TracePool, PipelineError> {
    let build = || collect_stacktrace_set(&inputs.nonebts, &inputs.ctx, &inputs.nonebt_log, &inputs.offsets);
    match cache_dir {
        Some(dir) => {
            let (pool, hit) = load_or_build_pool(dir, &inputs.ctx, &inputs.nonebt_log_text, build).map_err(|e| io_err(dir, e))?;
            log::info!("trace pool cache {}", if hit { "hit" } else { "miss" });
            Ok(pool)
        }
        None => Ok(build()),
    }
}

pub fn coverage_index(inputs: &Inputs, pool: &TracePool, cfg: &Config) -> Result<CoverageIndex, PipelineError> {
    let mut idx = CoverageIndex::from_pool(pool, &inputs.ctx);
    let path = cfg.coverage.clone().unwrap_or_else(|| default_artifact(&inputs.repo, "coverage.json"));
    if path.is_file() {
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        idx.merge(serde_json::from_str(&text).map_err(|e| io_err(&path, e))?);
    }
    Ok(idx)
}

/// A sweep result for one prompt variant of one target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleLine {
    pub target: String,
    pub variant_index: usize,
    #[serde(flatten)]
    pub outcome: SweepOutcome,
}

pub fn sweep_bundles(inputs: &Inputs, pool: &TracePool, coverage: &CoverageIndex, cfg: &Config) -> Vec<BundleLine> {
    let opts = PromptOptions { seed: cfg.seed, nonebt_budget: cfg.nonebt_budget };
    let mut out = Vec::new();
    for t in sweep(&inputs.ctx, pool, &inputs.nonebts, coverage, &opts) {
        match t.outcome {
            SweepOutcome::Bundle { dest_rule, bundle } => {
                let variants = if cfg.variants > 1 { nonebt_variants(&bundle, cfg.variants) } else { vec![*bundle] };
                for (i, b) in variants.into_iter().enumerate() {
                    out.push(BundleLine {
                        target: t.target.clone(),
                        variant_index: i,
                        outcome: SweepOutcome::Bundle { dest_rule, bundle: Box::new(b) },
                    });
                }
            }
            outcome => out.push(BundleLine { target: t.target, variant_index: 0, outcome }),
        }
    }
    out
}

pub fn make_backend(cfg: &Config, repo: &Path) -> Result<Box<dyn Backend>, PipelineError> {
    Ok(match cfg.backend {
        BackendKind::Stub => {
            let path = cfg.canned.clone().unwrap_or_else(|| default_artifact(repo, "canned.json"));
            if path.is_file() {
                Box::new(StubBackend::load(&path).map_err(|e| io_err(&path, e))?)
            } else {
                log::warn!("no canned completions at {}", path.display());
                Box::new(StubBackend::default())
            }
        }
        BackendKind::Http => {
            let url =
                cfg.backend_url.as_deref().ok_or_else(|| PipelineError::Setup("backend_url is required for the http backend".into()))?;
            Box::new(
                HttpBackend::new(url, cfg.backend_token.clone(), Duration::from_millis(cfg.timeout_ms))
                    .map_err(|e| PipelineError::Setup(e.to_string()))?,
            )
        }
        BackendKind::Replay => {
            let path =
                cfg.request_log.clone().ok_or_else(|| PipelineError::Setup("request_log is required for the replay backend".into()))?;
            Box::new(ReplayBackend::from_records(&read_request_log(&path).map_err(|e| io_err(&path, e))?))
        }
    })
}

pub fn make_runner(cfg: &Config, repo: &Path) -> Result<Option<Box<dyn BuildRunner>>, PipelineError> {
    Ok(match cfg.runner {
        RunnerKind::None => None,
        RunnerKind::Replay => {
            let path = cfg.outcomes.clone().unwrap_or_else(|| default_artifact(repo, "outcomes.json"));
            Some(Box::new(ReplayRunner::load(&path).map_err(|e| io_err(&path, e))?))
        }
        RunnerKind::Command => {
            let (Some(compile_cmd), Some(test_cmd)) = (cfg.compile_cmd.clone(), cfg.test_cmd.clone()) else {
                return Err(PipelineError::Setup("compile_cmd and test_cmd are required for the command runner".into()));
            };
            Some(Box::new(CommandRunner { repo: repo.to_path_buf(), compile_cmd, test_cmd }))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateLine {
    pub target: String,
    pub variant_index: usize,
    #[serde(flatten)]
    pub check: CheckTarget,
    pub instruction_digest: String,
    pub completion_digest: Option<String>,
    pub candidate: Option<String>,
    pub error: Option<String>,
}

pub fn generate_candidates(bundles: &[BundleLine], backend: &dyn Backend, cfg: &Config) -> (Vec<CandidateLine>, Vec<RequestRecord>) {
    let ready: Vec<(&BundleLine, &crate::prompting::PromptBundle)> = bundles
        .iter()
        .filter_map(|l| match &l.outcome {
            SweepOutcome::Bundle { bundle, .. } => Some((l, bundle.as_ref())),
            SweepOutcome::NoMatch { .. } => None,
        })
        .collect();
    let instructions: Vec<String> = ready.iter().map(|(_, b)| b.rendered_instruction.clone()).collect();
    let params = GenParams { max_new_tokens: cfg.max_new_tokens, temperature: cfg.temperature, seed: cfg.seed, stop: Vec::new() };
    let (results, records) = generate_all(backend, &instructions, &params, cfg.concurrency);
    let lines = ready
        .iter()
        .zip(&instructions)
        .zip(results)
        .map(|(((line, b), instruction), result)| {
            let (completion_digest, candidate, error) = match result {
                Ok(text) => {
                    let cand = extract_candidate(&text);
                    let err = cand.is_none().then(|| "no test method in completion".to_string());
                    (Some(sha256_hex(&text)), cand, err)
                }
                Err(e) => (None, None, Some(e.to_string())),
            };
            CandidateLine {
                target: line.target.clone(),
                variant_index: line.variant_index,
                check: CheckTarget {
                    dest: b.dest.path.clone(),
                    throw_file: b.throw.file.clone(),
                    throw_line: b.throw.line,
                    exception_type: b.throw.exception_type.clone(),
                },
                instruction_digest: sha256_hex(instruction),
                completion_digest,
                candidate,
                error,
            }
        })
        .collect();
    (lines, records)
}

/// Gold tests by throw key; the first example per key wins.
pub fn references(examples: &[CorpusExample]) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for e in examples {
        out.entry(e.prompt.throw.key()).or_insert_with(|| e.gold_ebt.clone());
    }
    out
}

pub fn evaluate(
    candidates: &[CandidateLine],
    refs: &BTreeMap<String, String>,
    runner: Option<&dyn BuildRunner>,
    targets: &[String],
) -> MetricsReport {
    let records = candidates
        .iter()
        .map(|c| {
            let functional = match (runner, &c.candidate) {
                (None, _) => FunctionalResult::default(),
                (Some(_), None) => FunctionalResult { compilable: Some(false), ..Default::default() },
                (Some(r), Some(text)) => r.check(text, &c.check).unwrap_or_else(|e| {
                    log::warn!("{}: {e}", c.target);
                    FunctionalResult::default()
                }),
            };
            score_candidate(
                &c.target,
                &format!("{}#{}", c.target, c.variant_index),
                c.candidate.as_deref(),
                refs.get(&c.target).map(String::as_str),
                &c.check.exception_type,
                functional,
            )
        })
        .collect();
    build_report(records, targets)
}

/// No-match reasons by target.
pub fn unmatched(bundles: &[BundleLine]) -> BTreeMap<String, String> {
    bundles
        .iter()
        .filter_map(|l| match &l.outcome {
            SweepOutcome::NoMatch { reason } => Some((l.target.clone(), reason.as_str().to_string())),
            SweepOutcome::Bundle { .. } => None,
        })
        .collect()
}

/// Inputs, settings, produced artifacts and stage counters of one run.
/// Contains no timestamps so reruns produce identical manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub repo: String,
    pub seed: u64,
    pub template: String,
    pub rng: String,
    pub backend: String,
    pub runner: String,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
    pub counters: BTreeMap<String, u64>,
}

impl Manifest {
    pub fn new(command: &str, repo: &Path, cfg: &Config) -> Manifest {
        Manifest {
            tool: "exbt".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            repo: repo_name(repo),
            seed: cfg.seed,
            template: TEMPLATE_ID.into(),
            rng: RNG_NAME.into(),
            backend: serde_json::to_value(cfg.backend).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
            runner: serde_json::to_value(cfg.runner).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            counters: BTreeMap::new(),
        }
    }

    pub fn record_input(&mut self, name: &str, content: impl AsRef<[u8]>) {
        self.inputs.insert(name.into(), sha256_hex(content));
    }

    pub fn count(&mut self, name: &str, n: usize) {
        *self.counters.entry(name.into()).or_insert(0) += n as u64;
    }

    /// Writes an artifact under `out` and records its digest.
    pub fn write(&mut self, out: &Path, name: &str, content: &str) -> Result<(), PipelineError> {
        write_artifact(&out.join(name), content)?;
        self.artifacts.insert(name.into(), sha256_hex(content));
        Ok(())
    }

    pub fn finish(&self, out: &Path) -> Result<(), PipelineError> {
        write_artifact(&out.join("manifest.json"), &(serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"))
    }
}

/// Checks that every artifact listed in `out/manifest.json` exists with the
/// recorded digest. Returns the mismatching names.
pub fn verify_manifest(out: &Path) -> Result<Vec<String>, PipelineError> {
    let path = out.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
    Ok(manifest
        .artifacts
        .iter()
        .filter(|(name, digest)| fs::read(out.join(name)).map(|b| &sha256_hex(b) != *digest).unwrap_or(true))
        .map(|(name, _)| name.clone())
        .collect())
}

pub fn record_repo_inputs(m: &mut Manifest, inputs: &Inputs) {
    m.inputs.insert("main_sources".into(), inputs.ctx.main_source_digest());
    let mut tests = String::new();
    for u in inputs.ctx.units.iter().filter(|u| u.is_test) {
        tests.push_str(&u.path);
        tests.push('\0');
        tests.push_str(&sha256_hex(&u.source));
    }
    m.record_input("test_sources", tests);
    m.record_input("ebt_log", &inputs.ebt_log_text);
    m.record_input("nonebt_log", &inputs.nonebt_log_text);
}

/// Runs every stage on a repository and writes all artifacts to `out`.
pub fn run_sweep(repo: &Path, cfg: &Config, out: &Path) -> Result<Manifest, PipelineError> {
    let inputs = load_inputs(repo, cfg)?;
    let mut m = Manifest::new("sweep", repo, cfg);
    record_repo_inputs(&mut m, &inputs);
    m.count("ebts", inputs.ebts.len());
    m.count("nonebts", inputs.nonebts.len());
    m.count("malformed_log_blocks", inputs.ebt_log.malformed + inputs.nonebt_log.malformed);

    let corpus = build_corpus(&inputs, cfg);
    m.count("corpus_examples", corpus.examples.len());
    m.count("corpus_skipped", corpus.skipped.len());
    m.count("guards_computed", corpus.examples.len());
    m.write(out, "corpus.jsonl", &to_jsonl(&corpus.examples))?;

    let cache = cfg.cache_dir.clone().unwrap_or_else(|| out.join("cache"));
    let pool = build_pool(&inputs, Some(&cache))?;
    m.count("pool_entries", pool.entries.len());
    m.write(out, "pool.json", &(serde_json::to_string_pretty(&pool).expect("pool serializes") + "\n"))?;

    let coverage = coverage_index(&inputs, &pool, cfg)?;
    let bundles = sweep_bundles(&inputs, &pool, &coverage, cfg);
    let targets: Vec<String> = inputs.ctx.find_throw_sites(Scope::MainOnly).iter().map(|s| s.key()).collect();
    m.count("targets", targets.len());
    for line in bundles.iter().filter(|l| l.variant_index == 0) {
        match &line.outcome {
            SweepOutcome::Bundle { dest_rule, .. } => {
                m.count("guards_computed", 1);
                m.count(if *dest_rule == DestRule::ByName { "dest_by_name" } else { "dest_by_coverage" }, 1);
            }
            SweepOutcome::NoMatch { reason } => {
                m.count(if *reason == NoMatch::NoDestFile { "no_match_no_dest_file" } else { "no_match_no_matching_trace" }, 1)
            }
        }
    }
    for key in ["dest_by_name", "dest_by_coverage", "no_match_no_dest_file", "no_match_no_matching_trace"] {
        m.count(key, 0);
    }
    m.count("prompts_assembled", bundles.iter().filter(|l| matches!(l.outcome, SweepOutcome::Bundle { .. })).count());
    m.write(out, "bundles.jsonl", &jsonl(&bundles))?;

    let backend = make_backend(cfg, repo)?;
    if let Some(path) = cfg.canned.as_ref().filter(|p| p.is_file()) {
        m.record_input("canned", fs::read(path).map_err(|e| io_err(path, e))?);
    }
    let (candidates, requests) = generate_candidates(&bundles, backend.as_ref(), cfg);
    m.count("candidates", candidates.len());
    m.count("candidates_extracted", candidates.iter().filter(|c| c.candidate.is_some()).count());
    m.write(out, "candidates.jsonl", &jsonl(&candidates))?;
    m.write(out, "requests.jsonl", &jsonl(&requests))?;

    let runner = make_runner(cfg, repo)?;
    if cfg.runner == RunnerKind::Replay {
        let path = cfg.outcomes.clone().unwrap_or_else(|| default_artifact(repo, "outcomes.json"));
        m.record_input("outcomes", fs::read(&path).map_err(|e| io_err(&path, e))?);
    }
    let mut report = evaluate(&candidates, &references(&corpus.examples), runner.as_deref(), &targets);
    report.unmatched = unmatched(&bundles);
    m.count("targets_covered", report.aggregate.covered_targets.len());
    m.write(out, "report.json", &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
    m.write(out, "report.txt", &crate::metrics::render_table(&report))?;
    m.finish(out)?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::RunnerError;

    const ACCOUNT: &str = "package bank;\n\npublic class Account {\n    private int balance;\n\n    public void withdraw(int amount) {\n        if (amount > balance) {\n            throw new IllegalStateException(\"insufficient funds\");\n        }\n        balance -= amount;\n    }\n}\n";
    const TEST: &str = "package bank;\n\nimport org.junit.Test;\n\npublic class AccountTest {\n    @Test\n    public void withdrawsNothing() {\n        new Account().withdraw(0);\n    }\n}\n";
    const LOG: &str = "# test bank.AccountTest#withdrawsNothing\n\tat bank.Account.withdraw(Account.java:7)\n\tat bank.AccountTest.withdrawsNothing(AccountTest.java:8)\n---\n";

    fn repo() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        write_artifact(&p.join("src/main/java/bank/Account.java"), ACCOUNT).unwrap();
        write_artifact(&p.join("src/test/java/bank/AccountTest.java"), TEST).unwrap();
        write_artifact(&p.join(".exbt/nonebt-traces.log"), LOG).unwrap();
        dir
    }

    struct Fixed(FunctionalResult);

    impl BuildRunner for Fixed {
        fn kind(&self) -> &'static str {
            "fixed"
        }

        fn check(&self, _: &str, _: &CheckTarget) -> Result<FunctionalResult, RunnerError> {
            Ok(self.0)
        }
    }

    #[test]
    fn sweep_writes_verifiable_deterministic_artifacts() {
        let repo = repo();
        let cfg = Config::default();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = run_sweep(repo.path(), &cfg, a.path()).unwrap();
        let mb = run_sweep(repo.path(), &cfg, b.path()).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(ma.counters["prompts_assembled"], 1);
        assert_eq!(ma.counters["dest_by_name"], 1);
        assert_eq!(ma.counters["candidates_extracted"], 0);
        assert!(verify_manifest(a.path()).unwrap().is_empty());
        fs::write(a.path().join("bundles.jsonl"), "").unwrap();
        assert_eq!(verify_manifest(a.path()).unwrap(), vec!["bundles.jsonl".to_string()]);
    }

    #[test]
    fn evaluation_without_candidate_text() {
        let line = CandidateLine {
            target: "src/main/java/bank/Account.java:8".into(),
            variant_index: 0,
            check: CheckTarget {
                dest: "src/test/java/bank/AccountTest.java".into(),
                throw_file: "src/main/java/bank/Account.java".into(),
                throw_line: 8,
                exception_type: "IllegalStateException".into(),
            },
            instruction_digest: String::new(),
            completion_digest: None,
            candidate: None,
            error: Some("backend unavailable".into()),
        };
        let targets = vec![line.target.clone()];
        let report = evaluate(std::slice::from_ref(&line), &BTreeMap::new(), None, &targets);
        assert_eq!(report.candidates[0].compilable, None);
        assert!(report.aggregate.partial);
        let ok = Fixed(FunctionalResult { compilable: Some(true), runnable: Some(true), covers_target: Some(true) });
        let report = evaluate(&[line], &BTreeMap::new(), Some(&ok), &targets);
        assert_eq!(report.candidates[0].compilable, Some(false));
        assert_eq!(report.aggregate.throw_cov, 0.0);
    }

    #[test]
    fn unmatched_lists_reasons() {
        let lines = vec![
            BundleLine { target: "a:1".into(), variant_index: 0, outcome: SweepOutcome::NoMatch { reason: NoMatch::NoDestFile } },
            BundleLine { target: "b:2".into(), variant_index: 0, outcome: SweepOutcome::NoMatch { reason: NoMatch::NoMatchingTrace } },
        ];
        let m = unmatched(&lines);
        assert_eq!(m["a:1"], "no-dest-file");
        assert_eq!(m["b:2"], "no-matching-trace");
    }
}
