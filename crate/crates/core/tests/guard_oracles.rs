use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use exbt_core::expr::Value;
use exbt_core::guardexpr::{compute_guard_expression, evaluate_guard};
use exbt_core::jmodel::RepoContext;
use exbt_core::stacktrace::parse_stack_trace;
use serde_json::Value as Json;

fn fixture_root() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/guards")
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect()
}

fn to_value(v: &Json) -> Value {
    match v {
        Json::Bool(b) => Value::Bool(*b),
        Json::Number(n) => Value::Int(n.as_i64().unwrap()),
        other => panic!("unsupported domain value {other}"),
    }
}

/// Cartesian product of the domain, in declaration order.
fn points(domain: &[Json]) -> Vec<Vec<(String, Json)>> {
    let mut acc: Vec<Vec<(String, Json)>> = vec![vec![]];
    for var in domain {
        let name = var["name"].as_str().unwrap().to_string();
        let values = var["values"].as_array().unwrap();
        let mut next = Vec::new();
        for p in &acc {
            for v in values {
                let mut q = p.clone();
                q.push((name.clone(), v.clone()));
                next.push(q);
            }
        }
        acc = next;
    }
    acc
}

#[test]
fn guard_oracles_hold() {
    let started = Instant::now();
    let ctx = RepoContext::load(&fixture_root()).unwrap();
    let oracles: Json = serde_json::from_str(&std::fs::read_to_string(fixture_root().join("oracles.json")).unwrap()).unwrap();
    let cases = oracles["cases"].as_array().unwrap();
    assert!(cases.len() >= 10);
    let mut evaluable = 0;
    for case in cases {
        let name = case["name"].as_str().unwrap();
        let trace = parse_stack_trace(case["trace"].as_str().unwrap()).unwrap();
        let guard = compute_guard_expression(&trace, &ctx).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(squash(&guard.rendered), squash(case["rendered"].as_str().unwrap()), "{name}");

        let Some(domain) = case.get("domain").and_then(Json::as_array) else { continue };
        evaluable += 1;
        let reaches: Vec<Vec<Json>> = serde_json::from_value(case["reaches"].clone()).unwrap();
        let pts = points(domain);
        assert!(pts.len() <= 100, "{name}");
        for p in pts {
            let env: BTreeMap<String, Value> = p.iter().map(|(k, v)| (k.clone(), to_value(v))).collect();
            let values: Vec<Json> = p.iter().map(|(_, v)| v.clone()).collect();
            let expected = reaches.contains(&values);
            assert_eq!(evaluate_guard(&guard, &env).unwrap(), expected, "{name} at {values:?}");
        }
    }
    assert!(evaluable >= 10);
    assert!(started.elapsed().as_secs_f64() < 5.0);
}
