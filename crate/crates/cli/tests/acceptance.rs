//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and
//! exits non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use exbt_core::classifier::{split_test_suite, Pattern};
use exbt_core::expr::{Expr, Value};
use exbt_core::guardexpr::{compute_guard_expression, evaluate_guard, merge};
use exbt_core::jmodel::{RepoContext, SourceRoots};
use exbt_core::metrics::{bleu, code_bleu, edit_similarity, BuildRunner, CheckTarget, CommandRunner};
use exbt_core::pipeline::{verify_manifest, Manifest};
use exbt_core::sha256_hex;
use exbt_core::stacktrace::{exclude_test_and_util_frames, is_synthetic_class, parse_stack_trace, render, Frame, StackTrace};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use serde_json::Value as Json;

type Outcome = Result<String, String>;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").canonicalize().expect("fixtures directory")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

/// `(method, pattern, expected exception)` from the `// label:` comments.
fn classifier_labels(src: &str) -> Vec<(String, String, Option<String>)> {
    let lines: Vec<&str> = src.lines().collect();
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let Some(rest) = line.trim().strip_prefix("// label:") else { continue };
        let mut parts = rest.split_whitespace();
        let pattern = parts.next().unwrap_or_default().to_string();
        let exc = parts.next().filter(|e| *e != "-").map(str::to_string);
        let Some(decl) = lines[i + 1..].iter().find(|l| l.contains("void ")) else { continue };
        let name = decl.split("void ").nth(1).and_then(|r| r.split('(').next()).unwrap_or_default().to_string();
        out.push((name, pattern, exc));
    }
    out
}

fn classifier_suite() -> Outcome {
    let src = read(&fixtures().join("classifier/LabeledTest.java"));
    let expected = classifier_labels(&src);
    let negatives = expected.iter().filter(|l| l.1 == "None").count();
    check(expected.len() >= 20, format!("only {} labeled methods", expected.len()))?;
    check(negatives >= 6, format!("only {negatives} negatives"))?;

    let started = Instant::now();
    let ctx = RepoContext::from_sources(
        Path::new("/fixture"),
        vec![("src/test/java/fixture/labels/LabeledTest.java".into(), src.clone())],
        &SourceRoots::default(),
    );
    let (ebts, non) = split_test_suite(&ctx);
    let elapsed = started.elapsed().as_secs_f64();

    let mut agree = 0;
    for (name, pattern, exc) in &expected {
        let hit = ebts.iter().chain(&non).find(|t| &t.id.name == name);
        if hit.is_some_and(|t| t.pattern.as_str() == pattern && &t.expected_exception == exc) {
            agree += 1;
        }
    }
    check(agree == expected.len(), format!("agreement {agree}/{}", expected.len()))?;
    for p in [Pattern::AnnotationExpected, Pattern::AssertThrows, Pattern::ExpectedExceptionRule, Pattern::TryFailCatch] {
        check(ebts.iter().any(|t| t.pattern == p), format!("pattern {} not covered", p.as_str()))?;
    }
    check(elapsed < 1.0, format!("took {elapsed:.3} s"))?;
    Ok(format!("{} methods, {negatives} negatives, 100% agreement, {elapsed:.3} s", expected.len()))
}

fn json_to_value(v: &Json) -> Result<Value, String> {
    match v {
        Json::Bool(b) => Ok(Value::Bool(*b)),
        Json::Number(n) => n.as_i64().map(Value::Int).ok_or_else(|| format!("non-integer {n}")),
        other => Err(format!("unsupported domain value {other}")),
    }
}

fn domain_points(domain: &[Json]) -> Vec<Vec<(String, Json)>> {
    let mut acc: Vec<Vec<(String, Json)>> = vec![vec![]];
    for var in domain {
        let name = var["name"].as_str().unwrap_or_default().to_string();
        let values = var["values"].as_array().cloned().unwrap_or_default();
        acc = acc
            .iter()
            .flat_map(|p| {
                values.iter().map(|v| {
                    let mut q = p.clone();
                    q.push((name.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    acc
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect()
}

fn guard_suite() -> Outcome {
    let root = fixtures().join("guards");
    let started = Instant::now();
    let ctx = RepoContext::load(&root).map_err(|e| e.to_string())?;
    let oracles: Json = serde_json::from_str(&read(&root.join("oracles.json"))).map_err(|e| e.to_string())?;
    let cases = oracles["cases"].as_array().cloned().unwrap_or_default();
    check(cases.len() >= 10, format!("only {} fixtures", cases.len()))?;
    let (mut evaluable, mut points) = (0, 0);
    for case in &cases {
        let name = case["name"].as_str().unwrap_or("?");
        let trace = parse_stack_trace(case["trace"].as_str().unwrap_or_default()).map_err(|e| format!("{name}: {e}"))?;
        let guard = compute_guard_expression(&trace, &ctx).map_err(|e| format!("{name}: {e}"))?;
        let oracle = case["rendered"].as_str().unwrap_or_default();
        check(squash(&guard.rendered) == squash(oracle), format!("{name}: `{}` != `{oracle}`", guard.rendered))?;
        let Some(domain) = case.get("domain").and_then(Json::as_array) else { continue };
        evaluable += 1;
        let reaches: Vec<Vec<Json>> = serde_json::from_value(case["reaches"].clone()).map_err(|e| format!("{name}: {e}"))?;
        let pts = domain_points(domain);
        check(pts.len() <= 100, format!("{name}: domain of {} points", pts.len()))?;
        for p in pts {
            let env = p.iter().map(|(k, v)| Ok((k.clone(), json_to_value(v)?))).collect::<Result<BTreeMap<_, _>, String>>()?;
            let values: Vec<Json> = p.iter().map(|(_, v)| v.clone()).collect();
            let got = evaluate_guard(&guard, &env).map_err(|e| format!("{name}: {e}"))?;
            check(got == reaches.contains(&values), format!("{name}: disagrees at {values:?}"))?;
            points += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    check(elapsed < 5.0, format!("took {elapsed:.3} s"))?;
    Ok(format!("{} fixtures, {evaluable} evaluated over {points} inputs, {elapsed:.3} s", cases.len()))
}

fn cases(n: u32) -> PropConfig {
    PropConfig { cases: n, failure_persistence: None, ..PropConfig::default() }
}

fn arb_condition() -> impl Strategy<Value = String> {
    let names = vec!["v", "vv", "value", "v1", "_v", "a", "k"];
    let leaf = prop_oneof![
        prop::sample::select(names.clone()).prop_map(str::to_string),
        (0i64..100).prop_map(|n| n.to_string()),
        prop::sample::select(names).prop_map(|n| format!("obj.{n}")),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        (inner.clone(), prop::sample::select(vec!["+", "*", "==", "<", "&&", "||"]), inner)
            .prop_map(|(l, op, r)| format!("({l}) {op} ({r})"))
    })
}

fn merge_suite() -> Outcome {
    let mut runner = TestRunner::new(cases(512));
    runner
        .run(&arb_condition(), |src| {
            let e = vec![Expr::parse(&src).expect("generated expressions parse")];
            prop_assert_eq!(merge(&e, &BTreeMap::new()), e.clone());
            let map = BTreeMap::from([("v".to_string(), Expr::parse("q + 1").expect("parses"))]);
            let before = e[0].free_names();
            let after = merge(&e, &map).remove(0).free_names();
            prop_assert!(!after.contains("v"));
            for n in before.iter().filter(|n| n.as_str() != "v") {
                prop_assert!(after.contains(n), "identifier {} was altered", n);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let cond = vec![Expr::parse("v==0").map_err(|e| e.to_string())?];
    let map = BTreeMap::from([("v".to_string(), Expr::parse("a+1").map_err(|e| e.to_string())?)]);
    let got = merge(&cond, &map)[0].to_string();
    check(got == "(a + 1) == 0", format!("fixture merged to `{got}`"))?;
    Ok("identity and identifier boundaries over 512 cases; `v==0` with {v -> a+1} gives `(a + 1) == 0`".into())
}

fn arb_frame() -> impl Strategy<Value = Frame> {
    (
        "[a-z]{1,5}(\\.[a-z]{1,5}){0,2}\\.[A-Z][a-zA-Z0-9]{0,6}(\\$[A-Z0-9][a-z0-9]{0,3})?",
        "[a-z][a-zA-Z0-9]{0,6}|<init>|<clinit>|lambda\\$[a-z]{1,4}\\$[0-9]",
        "[A-Z][a-z]{0,6}\\.java",
        1u32..100_000,
    )
        .prop_filter("synthetic classes are dropped by the parser", |(c, ..)| !is_synthetic_class(c))
        .prop_map(|(class_fqn, method, file, line)| Frame { class_fqn, method, file, line })
}

fn stacktrace_suite() -> Outcome {
    let mut runner = TestRunner::new(cases(1000));
    runner
        .run(&prop::collection::vec(arb_frame(), 1..12), |frames| {
            let t = StackTrace::new(frames);
            let text = format!("java.lang.IllegalStateException: boom\n{}", render(&t));
            prop_assert_eq!(parse_stack_trace(&text).expect("rendered traces parse"), t);
            Ok(())
        })
        .map_err(|e| format!("round trip: {e}"))?;

    let ctx = RepoContext::load(&fixtures().join("repoA")).map_err(|e| e.to_string())?;
    let pool = [
        ("bank.AccountTest", "withdrawRejectsZero", "AccountTest.java", 18),
        ("bank.AccountTest", "lambda$withdrawRejectsOverdraft$0", "AccountTest.java", 24),
        ("bank.Account", "withdraw", "Account.java", 11),
        ("bank.Account", "validate", "Account.java", 24),
        ("bank.BookkeepingSuite", "postsSmallEntries", "BookkeepingSuite.java", 11),
        ("bank.Ledger", "post", "Ledger.java", 12),
        ("org.junit.Assert", "assertThrows", "Assert.java", 1001),
    ]
    .map(|(c, m, f, l)| Frame { class_fqn: c.into(), method: m.into(), file: f.into(), line: l });
    let dests = ["src/test/java/bank/AccountTest.java", "src/main/java/bank/Account.java"];
    let mut runner = TestRunner::new(cases(256));
    runner
        .run(&(prop::collection::vec(0..pool.len(), 1..10), 0..dests.len()), |(picks, d)| {
            let t = StackTrace::new(picks.iter().map(|&i| pool[i].clone()).collect());
            if let Ok(once) = exclude_test_and_util_frames(&t, dests[d], &ctx) {
                prop_assert_eq!(exclude_test_and_util_frames(&once, dests[d], &ctx).expect("non-empty stays non-empty"), once);
            }
            Ok(())
        })
        .map_err(|e| format!("exclusion: {e}"))?;
    Ok("1000 generated traces round-trip; exclusion idempotent over 256 cases".into())
}

/// Source text of every method in the fixture repositories.
fn fixture_methods() -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for repo in ["repoA", "repoB", "guards"] {
        let ctx = RepoContext::load(&fixtures().join(repo)).map_err(|e| e.to_string())?;
        out.extend(ctx.methods().map(|(u, d)| u.text(d.byte_range.clone()).to_string()));
    }
    let labeled = read(&fixtures().join("classifier/LabeledTest.java"));
    let ctx =
        RepoContext::from_sources(Path::new("/fixture"), vec![("src/test/java/LabeledTest.java".into(), labeled)], &SourceRoots::default());
    out.extend(ctx.methods().map(|(u, d)| u.text(d.byte_range.clone()).to_string()));
    out.retain(|m| !m.trim().is_empty());
    Ok(out)
}

fn metric_suite() -> Outcome {
    let methods = fixture_methods()?;
    check(methods.len() >= 50, format!("only {} fixture methods", methods.len()))?;
    for m in &methods {
        let cb = code_bleu(m, m);
        check(bleu(m, m) == 1.0, format!("BLEU(x,x) != 1 for `{}`", m.lines().next().unwrap_or_default()))?;
        check(cb.score == 1.0 && !cb.degraded, format!("CodeBLEU(x,x) = {} for `{}`", cb.score, m.lines().next().unwrap_or_default()))?;
        check(edit_similarity(m, m) == 1.0, "EditSim(x,x) != 1")?;
    }
    let constants: Json = serde_json::from_str(&read(&fixtures().join("golden/metric-constants.json"))).map_err(|e| e.to_string())?;
    let es = &constants["edit_similarity"];
    let got_es = edit_similarity(es["candidate"].as_str().unwrap_or_default(), es["reference"].as_str().unwrap_or_default());
    check((got_es - 0.6667).abs() <= 1e-4, format!("edit_similarity(ab, abc) = {got_es}"))?;
    check((es["value"].as_f64().unwrap_or_default() - got_es).abs() <= 1e-4, "committed edit-similarity constant differs")?;

    let b = &constants["bleu"];
    let hand = (0.75f64 * 0.75 * (2.0 / 3.0) * 0.5).powf(0.25);
    let committed = b["value"].as_f64().unwrap_or_default();
    check((hand - committed).abs() <= 1e-6, format!("committed BLEU constant {committed} disagrees with its working {hand}"))?;
    let got_b = bleu(b["candidate"].as_str().unwrap_or_default(), b["reference"].as_str().unwrap_or_default());
    check((got_b - committed).abs() <= 1e-6, format!("BLEU = {got_b}, committed {committed}"))?;
    Ok(format!("s(x,x) = 1 on all {} methods; EditSim(ab, abc) = {got_es:.4}; BLEU = {got_b:.6}", methods.len()))
}

fn exbt() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_exbt"));
    for (k, _) in std::env::vars() {
        if k.starts_with("EXBT_") || k.starts_with("BACKEND_") {
            cmd.env_remove(k);
        }
    }
    cmd.env("RUST_LOG", "error");
    cmd
}

struct SweepRuns {
    dirs: Vec<tempfile::TempDir>,
}

fn run_sweeps(n: usize) -> Result<SweepRuns, String> {
    let repo = fixtures().join("repoA");
    let mut dirs = Vec::new();
    for _ in 0..n {
        let out = tempfile::tempdir().map_err(|e| e.to_string())?;
        let status = exbt()
            .args(["sweep"])
            .arg(&repo)
            .args(["--seed", "42", "--backend", "stub", "--out"])
            .arg(out.path())
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("sweep exited with {}: {}", status.status, String::from_utf8_lossy(&status.stderr)));
        }
        dirs.push(out);
    }
    Ok(SweepRuns { dirs })
}

fn hermetic_sweep(runs: &Result<SweepRuns, String>) -> Outcome {
    let runs = runs.as_ref().map_err(Clone::clone)?;
    let artifacts = ["bundles.jsonl", "candidates.jsonl", "report.json", "report.txt", "corpus.jsonl", "pool.json", "manifest.json"];
    let first = &runs.dirs[0];
    for other in &runs.dirs[1..] {
        for a in artifacts {
            let (x, y) = (std::fs::read(first.path().join(a)), std::fs::read(other.path().join(a)));
            check(x.is_ok() && x.ok() == y.ok(), format!("{a} differs between reruns"))?;
        }
    }
    for d in &runs.dirs {
        let bad = verify_manifest(d.path()).map_err(|e| e.to_string())?;
        check(bad.is_empty(), format!("manifest mismatch: {}", bad.join(", ")))?;
    }
    let golden: Json = serde_json::from_str(&read(&fixtures().join("golden/repoA-sweep.json"))).map_err(|e| e.to_string())?;
    for (name, digest) in golden["artifacts"].as_object().cloned().unwrap_or_default() {
        let got = sha256_hex(std::fs::read(first.path().join(&name)).map_err(|e| e.to_string())?);
        check(Some(got.as_str()) == digest.as_str(), format!("{name} digest differs from the golden run"))?;
    }
    let report: Json = serde_json::from_str(&read(&first.path().join("report.json"))).map_err(|e| e.to_string())?;
    let covered = report["aggregate"]["covered_targets"].as_array().map_or(0, Vec::len);
    let targets = report["aggregate"]["targets"].as_u64().unwrap_or_default() as usize;
    let want = (
        golden["throw_cov"]["covered"].as_u64().unwrap_or(u64::MAX) as usize,
        golden["throw_cov"]["targets"].as_u64().unwrap_or(0) as usize,
    );
    check((covered, targets) == want, format!("throw_cov = {covered}/{targets}, committed {}/{}", want.0, want.1))?;
    let throw_cov = report["aggregate"]["throw_cov"].as_f64().unwrap_or_default();
    check((throw_cov - 2.0 / 3.0).abs() < 1e-12, format!("throw_cov = {throw_cov}"))?;

    let golden_prompt = read(&fixtures().join("golden/repoA-validate-instruction.txt"));
    let bundles = read(&first.path().join("bundles.jsonl"));
    let found = bundles.lines().filter_map(|l| serde_json::from_str::<Json>(l).ok()).any(|b| {
        b["target"] == "src/main/java/bank/Account.java:24" && b["bundle"]["rendered_instruction"].as_str() == Some(golden_prompt.as_str())
    });
    check(found, "rendered instruction for Account.java:24 differs from the golden file")?;
    Ok(format!("3 reruns byte-identical, golden digests match, throw_cov = {covered}/{targets}"))
}

fn stage_counters(runs: &Result<SweepRuns, String>) -> Outcome {
    let runs = runs.as_ref().map_err(Clone::clone)?;
    let m: Manifest = serde_json::from_str(&read(&runs.dirs[0].path().join("manifest.json"))).map_err(|e| e.to_string())?;
    let required = ["corpus_examples", "guards_computed", "pool_entries", "prompts_assembled", "dest_by_name", "dest_by_coverage"];
    let mut shown = Vec::new();
    for key in required {
        let n = m.counters.get(key).copied().unwrap_or(0);
        check(n >= 1, format!("counter {key} = {n}"))?;
        shown.push(format!("{key}={n}"));
    }
    Ok(shown.join(" "))
}

fn on_path(tool: &str) -> bool {
    std::env::var_os("PATH").is_some_and(|p| std::env::split_paths(&p).any(|d| d.join(tool).is_file()))
}

fn functional_check() -> Verdict {
    let missing: Vec<&str> = ["java", "javac", "mvn"].into_iter().filter(|t| !on_path(t)).collect();
    if !missing.is_empty() {
        return Verdict::Skip(format!("no {} on PATH", missing.join(", ")));
    }
    let runner = CommandRunner {
        repo: fixtures().join("repoA"),
        compile_cmd: std::env::var("EXBT_IT_COMPILE").unwrap_or_else(|_| "mvn -q -o test-compile".into()),
        test_cmd: std::env::var("EXBT_IT_TEST")
            .unwrap_or_else(|_| "mvn -q -o surefire:test -Dtest='{test_class}#{test_method}' -DfailIfNoTests=false".into()),
    };
    let candidate = "@Test(expected = IllegalArgumentException.class)\npublic void withdrawRejectsNegativeAmount() {\n    Account account = new Account(100);\n    account.withdraw(-5);\n}";
    let target = CheckTarget {
        dest: "src/test/java/bank/AccountTest.java".into(),
        throw_file: "src/main/java/bank/Account.java".into(),
        throw_line: 24,
        exception_type: "IllegalArgumentException".into(),
    };
    match runner.check(candidate, &target) {
        Err(e) => Verdict::Skip(format!("runner unavailable: {e}")),
        Ok(r) if (r.compilable, r.runnable, r.covers_target) == (Some(true), Some(true), Some(true)) => {
            Verdict::Pass("(compilable, runnable, covers_target) = (true, true, true)".into())
        }
        Ok(r) => Verdict::Fail(format!("got {r:?}")),
    }
}

fn verdict(o: Outcome) -> Verdict {
    match o {
        Ok(m) => Verdict::Pass(m),
        Err(m) => Verdict::Fail(m),
    }
}

fn main() {
    let runs = run_sweeps(3);
    let results = [
        ("classifier fixture suite", verdict(classifier_suite())),
        ("guard oracle suite", verdict(guard_suite())),
        ("merge substitution", verdict(merge_suite())),
        ("stack-trace round-trip and exclusion idempotence", verdict(stacktrace_suite())),
        ("metric identities and constants", verdict(metric_suite())),
        ("end-to-end hermetic sweep", verdict(hermetic_sweep(&runs))),
        ("stage counters in the manifest", verdict(stage_counters(&runs))),
        ("functional check with a local JVM (optional)", functional_check()),
    ];
    let mut failed = 0;
    for (name, v) in &results {
        match v {
            Verdict::Pass(m) => println!("PASS  {name}: {m}"),
            Verdict::Fail(m) => {
                failed += 1;
                println!("FAIL  {name}: {m}");
            }
            Verdict::Skip(m) => println!("SKIP  {name}: {m}"),
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed, {} skipped",
        results.iter().filter(|r| matches!(r.1, Verdict::Pass(_))).count(),
        results.iter().filter(|r| matches!(r.1, Verdict::Skip(_))).count()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
