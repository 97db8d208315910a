//! `exbt` command-line entry point.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use exbt_core::classifier::{split_test_suite, TestKind};
use exbt_core::config::{Config, ConfigError};
use exbt_core::corpus::{to_jsonl, CorpusExample};
use exbt_core::guardexpr::compute_guard_expression;
use exbt_core::instrument::{instrument_print_trace, instrument_test_file, write_instrumented};
use exbt_core::jmodel::Scope;
use exbt_core::metrics::render_table;
use exbt_core::pipeline::{
    build_corpus, build_pool, coverage_index, evaluate, generate_candidates, load_context, load_inputs, make_backend, make_runner,
    read_jsonl, record_repo_inputs, references, run_sweep, unmatched, verify_manifest, write_artifact, BundleLine, CandidateLine, Manifest,
    PipelineError,
};
use exbt_core::prompting::{assemble_prompt, select_dest_test_file, PromptOptions, PromptRequest};
use exbt_core::stacktrace::{exclude_test_and_util_frames, parse_stack_trace};

#[derive(Parser)]
#[command(name = "exbt", version, about = "Context extraction, prompting and evaluation for exceptional-behavior tests")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Repository root.
    #[arg(long, global = true, default_value = ".")]
    repo: PathBuf,
    /// Config file; defaults to `<repo>/exbt.conf` when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Generation backend: stub, http or replay.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Override the main/test partition, e.g. `main=src,test=tst`.
    #[arg(long, global = true)]
    source_roots: Option<String>,
    /// Any config key, as `key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Label every test method as EBT or non-EBT.
    Classify,
    /// List throw statements.
    FindThrows {
        /// Include test sources.
        #[arg(long)]
        all: bool,
    },
    /// Write an instrumented copy of the repository.
    Instrument {
        #[arg(long)]
        out: PathBuf,
        /// Log file the instrumented code appends to at run time.
        #[arg(long, default_value = "exbt-traces.log")]
        log_path: String,
        #[arg(long, value_enum, default_value_t = Mode::Both)]
        mode: Mode,
    },
    /// Build the stack-trace pool from the recorded non-EBT log.
    Pool {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the guard expression of a stack trace.
    Guard {
        /// Stack trace in JVM order.
        #[arg(long)]
        trace: PathBuf,
        /// Destination test file whose frames are dropped.
        #[arg(long, default_value = "")]
        dest: String,
    },
    /// Assemble the prompt for one method and throw statement.
    Prompt {
        /// Method under test, `fqn#name` or `fqn#name/arity`.
        #[arg(long = "mut")]
        mut_method: String,
        /// Throw statement as `file:line`.
        #[arg(long)]
        throw: String,
        /// Destination test file; chosen by heuristics when omitted.
        #[arg(long)]
        dest: Option<String>,
        /// Name of the test method to generate.
        #[arg(long)]
        name: Option<String>,
    },
    /// Build the training corpus from the recorded EBT log.
    Corpus {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage and write all artifacts.
    Sweep {
        /// Repository root; overrides --repo.
        path: Option<PathBuf>,
        #[arg(long, default_value = "exbt-out")]
        out: PathBuf,
    },
    /// Query the backend for every bundle.
    Generate {
        #[arg(long)]
        bundles: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score candidates and print the report.
    Eval {
        #[arg(long)]
        candidates: PathBuf,
        /// Corpus examples whose gold tests serve as references.
        #[arg(long)]
        refs: Option<PathBuf>,
        /// Bundles file; its targets form the denominator of ThrowCov.
        #[arg(long)]
        bundles: Option<PathBuf>,
        /// Build runner: none, replay or command.
        #[arg(long)]
        runner: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that every artifact in a run directory matches its manifest.
    Verify { dir: PathBuf },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Stack dumps at entry of throw-bearing main methods.
    Trace,
    /// Exception printing in EBTs.
    Exception,
    Both,
}

struct Failure {
    kind: &'static str,
    message: String,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure { kind: e.kind(), message: e.to_string() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure { kind: "config", message: e.to_string() }
    }
}

impl From<exbt_core::jmodel::JModelError> for Failure {
    fn from(e: exbt_core::jmodel::JModelError) -> Self {
        Failure { kind: "model", message: e.to_string() }
    }
}

fn fail(kind: &'static str, message: impl Into<String>) -> Failure {
    Failure { kind, message: message.into() }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "error": f.kind, "message": f.message }));
            ExitCode::from(1)
        }
    }
}

fn load_config(g: &Global, repo: &Path, extra: &[(&str, Option<String>)]) -> Result<Config, Failure> {
    let mut flags = BTreeMap::new();
    for kv in &g.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| fail("usage", format!("--set expects KEY=VALUE, got `{kv}`")))?;
        flags.insert(k.trim().to_string(), v.trim().to_string());
    }
    let named = [("seed", g.seed.map(|s| s.to_string())), ("backend", g.backend.clone()), ("source_roots", g.source_roots.clone())];
    for (k, v) in named.into_iter().chain(extra.iter().map(|(k, v)| (*k, v.clone()))) {
        if let Some(v) = v {
            flags.insert(k.to_string(), v);
        }
    }
    let default_file = repo.join("exbt.conf");
    let file = g.config.clone().or_else(|| default_file.is_file().then_some(default_file));
    Ok(Config::resolve(file.as_deref(), std::env::vars(), &flags)?)
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::Classify => {
            let cfg = load_config(g, &g.repo, &[])?;
            let ctx = load_context(&g.repo, &cfg)?;
            let (ebts, nonebts) = split_test_suite(&ctx);
            let mut all: Vec<_> = ebts.iter().chain(&nonebts).collect();
            all.sort_by(|a, b| (&a.id.decl_file, a.id.decl_line).cmp(&(&b.id.decl_file, b.id.decl_line)));
            if g.json {
                print_json(&all);
            } else {
                for t in all {
                    let kind = if t.kind == TestKind::Ebt { "EBT" } else { "non-EBT" };
                    let exc = t.expected_exception.as_deref().unwrap_or("-");
                    println!("{kind:<8} {:<18} {:<32} {}", t.pattern.as_str(), exc, t.id);
                }
            }
        }
        Command::FindThrows { all } => {
            let cfg = load_config(g, &g.repo, &[])?;
            let ctx = load_context(&g.repo, &cfg)?;
            let sites = ctx.find_throw_sites(if *all { Scope::All } else { Scope::MainOnly });
            if g.json {
                print_json(&sites);
            } else {
                for s in sites {
                    println!("{:<40} {:<32} {}", s.key(), s.exception_type, s.method);
                }
            }
        }
        Command::Instrument { out, log_path, mode } => {
            let cfg = load_config(g, &g.repo, &[])?;
            let ctx = load_context(&g.repo, &cfg)?;
            let mut tree = instrument_print_trace(&ctx);
            if *mode == Mode::Exception {
                tree.files.clear();
            }
            let written = write_instrumented(&ctx, &tree, out, log_path).map_err(|e| fail("io", e.to_string()))?;
            let mut rewritten_tests = 0;
            if *mode != Mode::Trace {
                let (ebts, _) = split_test_suite(&ctx);
                for unit in ctx.units.iter().filter(|u| u.is_test) {
                    let mine: Vec<_> = ebts.iter().filter(|t| t.id.decl_file == unit.path).cloned().collect();
                    if mine.is_empty() {
                        continue;
                    }
                    let src = instrument_test_file(unit, &mine).map_err(|e| fail("instrument", e.to_string()))?;
                    write_artifact(&out.join(&unit.path), &src)?;
                    rewritten_tests += 1;
                }
            }
            for c in &tree.conflicts {
                log::warn!("not instrumented: {}: {}", c.method, c.reason);
            }
            let summary = json!({
                "main_files": tree.files.len(),
                "test_files": rewritten_tests,
                "conflicts": tree.conflicts,
                "written": written.len(),
            });
            if g.json {
                print_json(&summary);
            } else {
                println!(
                    "instrumented {} main file(s) and {} test file(s) into {}; {} conflict(s)",
                    tree.files.len(),
                    rewritten_tests,
                    out.display(),
                    tree.conflicts.len()
                );
            }
        }
        Command::Pool { out } => {
            let cfg = load_config(g, &g.repo, &[])?;
            let inputs = load_inputs(&g.repo, &cfg)?;
            let pool = build_pool(&inputs, cfg.cache_dir.as_deref())?;
            let text = serde_json::to_string_pretty(&pool).expect("pool serializes") + "\n";
            match out {
                Some(dir) => {
                    let mut m = Manifest::new("pool", &g.repo, &cfg);
                    record_repo_inputs(&mut m, &inputs);
                    m.count("pool_entries", pool.entries.len());
                    m.count("malformed_log_blocks", inputs.nonebt_log.malformed);
                    m.write(dir, "pool.json", &text)?;
                    m.finish(dir)?;
                    println!("{} pool entries written to {}", pool.entries.len(), dir.display());
                }
                None => print!("{text}"),
            }
        }
        Command::Guard { trace, dest } => {
            let cfg = load_config(g, &g.repo, &[])?;
            let ctx = load_context(&g.repo, &cfg)?;
            let text = fs::read_to_string(trace).map_err(|e| fail("io", format!("{}: {e}", trace.display())))?;
            let parsed = parse_stack_trace(&text).map_err(|e| fail("trace", e.to_string()))?;
            let trimmed = exclude_test_and_util_frames(&parsed, dest, &ctx).map_err(|e| fail("trace", e.to_string()))?;
            let guard = compute_guard_expression(&trimmed, &ctx).map_err(|e| fail("guard", e.to_string()))?;
            let record = guard.record();
            if g.json {
                print_json(&record);
            } else {
                println!("{}", record.rendered);
                println!("{}", serde_json::to_string(&record).expect("serializable"));
            }
        }
        Command::Prompt { mut_method, throw, dest, name } => {
            let cfg = load_config(g, &g.repo, &[])?;
            let inputs = load_inputs(&g.repo, &cfg)?;
            let mut_id = inputs.ctx.find_method(mut_method)?.clone();
            let site = inputs.ctx.throw_site_by_key(throw).ok_or_else(|| fail("usage", format!("no throw statement at {throw}")))?;
            let pool = build_pool(&inputs, cfg.cache_dir.as_deref())?;
            let dest = match dest {
                Some(d) => Some(d.clone()),
                None => {
                    let coverage = coverage_index(&inputs, &pool, &cfg)?;
                    select_dest_test_file(&mut_id, &inputs.ctx, Some(&coverage)).map(|(d, _)| d)
                }
            };
            let req = PromptRequest { mut_id, throw_site: site, dest, test_name: name.clone() };
            let opts = PromptOptions { seed: cfg.seed, nonebt_budget: cfg.nonebt_budget };
            let bundle = assemble_prompt(&req, &inputs.ctx, &pool, &inputs.nonebts, &opts).map_err(|e| fail("no-match", e.as_str()))?;
            if g.json {
                print_json(&bundle);
            } else {
                print!("{}", bundle.rendered_instruction);
            }
        }
        Command::Corpus { out } => {
            let cfg = load_config(g, &g.repo, &[])?;
            let inputs = load_inputs(&g.repo, &cfg)?;
            let build = build_corpus(&inputs, &cfg);
            let text = to_jsonl(&build.examples);
            for s in &build.skipped {
                log::info!("skipped {}: {}", s.test, s.reason);
            }
            match out {
                Some(dir) => {
                    let mut m = Manifest::new("corpus", &g.repo, &cfg);
                    record_repo_inputs(&mut m, &inputs);
                    m.count("corpus_examples", build.examples.len());
                    m.count("corpus_skipped", build.skipped.len());
                    m.write(dir, "corpus.jsonl", &text)?;
                    m.finish(dir)?;
                    println!("{} example(s), {} skipped, written to {}", build.examples.len(), build.skipped.len(), dir.display());
                }
                None => print!("{text}"),
            }
        }
        Command::Sweep { path, out } => {
            let repo = path.clone().unwrap_or_else(|| g.repo.clone());
            let cfg = load_config(g, &repo, &[])?;
            let m = run_sweep(&repo, &cfg, out)?;
            if g.json {
                print_json(&m);
            } else {
                let table = fs::read_to_string(out.join("report.txt")).map_err(|e| fail("io", e.to_string()))?;
                print!("{table}");
                println!("artifacts written to {}", out.display());
            }
        }
        Command::Generate { bundles, out } => {
            let cfg = load_config(g, &g.repo, &[])?;
            let lines: Vec<BundleLine> = read_jsonl(bundles)?;
            let backend = make_backend(&cfg, &g.repo)?;
            let mut m = Manifest::new("generate", &g.repo, &cfg);
            m.record_input("bundles", fs::read(bundles).map_err(|e| fail("io", e.to_string()))?);
            let (candidates, requests) = generate_candidates(&lines, backend.as_ref(), &cfg);
            m.count("candidates", candidates.len());
            m.count("candidates_extracted", candidates.iter().filter(|c| c.candidate.is_some()).count());
            m.write(out, "candidates.jsonl", &exbt_core::pipeline::jsonl(&candidates))?;
            m.write(out, "requests.jsonl", &exbt_core::pipeline::jsonl(&requests))?;
            m.finish(out)?;
            println!("{} candidate(s) written to {}", candidates.len(), out.display());
        }
        Command::Eval { candidates, refs, bundles, runner, out } => {
            let cfg = load_config(g, &g.repo, &[("runner", runner.clone())])?;
            let cands: Vec<CandidateLine> = read_jsonl(candidates)?;
            let refs = match refs {
                Some(p) => references(&read_jsonl::<CorpusExample>(p)?),
                None => BTreeMap::new(),
            };
            let lines: Vec<BundleLine> = match bundles {
                Some(p) => read_jsonl(p)?,
                None => Vec::new(),
            };
            let targets = if bundles.is_some() {
                dedup(lines.iter().map(|l| l.target.clone()))
            } else {
                dedup(cands.iter().map(|c| c.target.clone()))
            };
            let runner = make_runner(&cfg, &g.repo)?;
            let mut report = evaluate(&cands, &refs, runner.as_deref(), &targets);
            report.unmatched = unmatched(&lines);
            let table = render_table(&report);
            if let Some(dir) = out {
                let mut m = Manifest::new("eval", &g.repo, &cfg);
                m.record_input("candidates", fs::read(candidates).map_err(|e| fail("io", e.to_string()))?);
                m.count("targets_covered", report.aggregate.covered_targets.len());
                m.write(dir, "report.json", &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
                m.write(dir, "report.txt", &table)?;
                m.finish(dir)?;
            }
            if g.json {
                print_json(&report);
            } else {
                print!("{table}");
            }
        }
        Command::Verify { dir } => {
            let bad = verify_manifest(dir)?;
            if !bad.is_empty() {
                return Err(fail("manifest-mismatch", bad.join(", ")));
            }
            println!("all artifacts match {}", dir.join("manifest.json").display());
        }
    }
    Ok(())
}

fn dedup(items: impl Iterator<Item = String>) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    items.filter(|t| seen.insert(t.clone())).collect()
}
