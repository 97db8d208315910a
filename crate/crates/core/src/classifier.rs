//! Splits test methods into exceptional-behavior tests (EBTs) and the rest.
//!
//! Detection is purely syntactic. Patterns are tried in a fixed order and
//! the first hit wins:
//!
//! 1. `@Test(expected = X.class)`
//! 2. `assertThrows(X.class, ...)`, qualified or not
//! 3. `rule.expect(X.class)` on an `ExpectedException` rule
//! 4. `try { ...; fail(); } catch (X e) { ... }`

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tree_sitter::Node;

use crate::jmodel::{is_test_annotation, syntax, CompilationUnit, MethodDecl, MethodId, RepoContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "EBT")]
    Ebt,
    #[serde(rename = "NonEBT")]
    NonEbt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pattern {
    AnnotationExpected,
    AssertThrows,
    ExpectedExceptionRule,
    TryFailCatch,
    None,
}

impl Pattern {
    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::AnnotationExpected => "AnnotationExpected",
            Pattern::AssertThrows => "AssertThrows",
            Pattern::ExpectedExceptionRule => "ExpectedExceptionRule",
            Pattern::TryFailCatch => "TryFailCatch",
            Pattern::None => "None",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestMethod {
    pub id: MethodId,
    pub body_text: String,
    pub kind: TestKind,
    pub pattern: Pattern,
    pub expected_exception: Option<String>,
}

impl TestMethod {
    pub fn is_ebt(&self) -> bool {
        self.kind == TestKind::Ebt
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("method has no test annotation")]
    NotATest,
    #[error("source is not a single method declaration")]
    NotAMethod,
    #[error("{0} is not an exceptional behavior test")]
    NotEbt(String),
}

/// Classifies a standalone method source. The returned id carries the
/// method name and arity but no owning class or file.
pub fn classify_test(method_src: &str) -> Result<TestMethod, ClassifyError> {
    let wrapped = format!("class __ExbtProbe {{\n{method_src}\n}}");
    let tree = syntax::parse(&wrapped);
    let method = syntax::descendants_of_kind(tree.root_node(), "method_declaration").into_iter().next().ok_or(ClassifyError::NotAMethod)?;
    let annotations = syntax::annotation_names(syntax::modifiers_of(method), &wrapped);
    if !annotations.iter().any(|a| is_test_annotation(a)) {
        return Err(ClassifyError::NotATest);
    }
    let name = method.child_by_field_name("name").map(|n| syntax::text(n, &wrapped)).unwrap_or_default();
    let arity = method
        .child_by_field_name("parameters")
        .map_or(0, |p| syntax::named_children(p).into_iter().filter(|c| c.kind().ends_with("parameter")).count());
    let id = MethodId { fqn: String::new(), name: name.to_string(), param_arity: arity, decl_file: String::new(), decl_line: 1 };
    Ok(build(id, method_src.trim().to_string(), classify_node(method, &wrapped)))
}

fn build(id: MethodId, body_text: String, (pattern, expected): (Pattern, Option<String>)) -> TestMethod {
    let kind = if pattern == Pattern::None { TestKind::NonEbt } else { TestKind::Ebt };
    TestMethod { id, body_text, kind, pattern, expected_exception: expected }
}

/// Classifies a test method declared in a loaded compilation unit.
pub fn classify_decl(unit: &CompilationUnit, decl: &MethodDecl) -> Result<TestMethod, ClassifyError> {
    if !decl.is_test() {
        return Err(ClassifyError::NotATest);
    }
    let node = unit.node_of(decl).ok_or(ClassifyError::NotAMethod)?;
    let body = unit.text(decl.byte_range.clone()).to_string();
    Ok(build(decl.id.clone(), body, classify_node(node, &unit.source)))
}

/// Classifies every test-annotated method in the test files, in file and
/// declaration order. Unannotated helpers are not tests and are skipped.
pub fn split_test_suite(ctx: &RepoContext) -> (Vec<TestMethod>, Vec<TestMethod>) {
    let mut ebts = Vec::new();
    let mut non_ebts = Vec::new();
    for unit in ctx.units.iter().filter(|u| u.is_test) {
        for decl in unit.methods.iter().filter(|m| m.is_test()) {
            let Ok(t) = classify_decl(unit, decl) else { continue };
            if t.is_ebt() {
                ebts.push(t);
            } else {
                non_ebts.push(t);
            }
        }
    }
    log::info!("classified {} EBTs and {} non-EBTs", ebts.len(), non_ebts.len());
    (ebts, non_ebts)
}

pub fn extract_expected_exception(t: &TestMethod) -> Result<String, ClassifyError> {
    match (&t.kind, &t.expected_exception) {
        (TestKind::Ebt, Some(e)) => Ok(e.clone()),
        _ => Err(ClassifyError::NotEbt(t.id.to_string())),
    }
}

fn classify_node(method: Node<'_>, src: &str) -> (Pattern, Option<String>) {
    if let Some(e) = annotation_expected(method, src) {
        return (Pattern::AnnotationExpected, Some(e));
    }
    let Some(body) = method.child_by_field_name("body") else {
        return (Pattern::None, None);
    };
    let invocations = syntax::descendants_of_kind(body, "method_invocation");
    let class_arg = |inv: &Node<'_>, name: &str, argc: Option<usize>| -> Option<String> {
        let n = inv.child_by_field_name("name")?;
        if syntax::text(n, src) != name {
            return None;
        }
        let args = syntax::named_children(inv.child_by_field_name("arguments")?);
        if argc.is_some_and(|c| c != args.len()) {
            return None;
        }
        class_literal_type(*args.first()?, src)
    };
    if let Some(e) = invocations.iter().find_map(|inv| assert_throws_type(*inv, src)) {
        return (Pattern::AssertThrows, Some(e));
    }
    if let Some(e) =
        invocations.iter().filter(|inv| inv.child_by_field_name("object").is_some()).find_map(|inv| class_arg(inv, "expect", Some(1)))
    {
        return (Pattern::ExpectedExceptionRule, Some(e));
    }
    if let Some(e) = try_fail_catch(body, src) {
        return (Pattern::TryFailCatch, Some(e));
    }
    (Pattern::None, None)
}

/// Expected type of an `assertThrows(X.class, ...)` invocation.
pub(crate) fn assert_throws_type(inv: Node<'_>, src: &str) -> Option<String> {
    if inv.kind() != "method_invocation" || syntax::text(inv.child_by_field_name("name")?, src) != "assertThrows" {
        return None;
    }
    let args = syntax::named_children(inv.child_by_field_name("arguments")?);
    class_literal_type(*args.first()?, src)
}

fn class_literal_type(node: Node<'_>, src: &str) -> Option<String> {
    if node.kind() != "class_literal" {
        return None;
    }
    let text = syntax::text(node, src);
    Some(text.strip_suffix(".class").unwrap_or(text).split_whitespace().collect())
}

fn annotation_expected(method: Node<'_>, src: &str) -> Option<String> {
    let modifiers = syntax::modifiers_of(method)?;
    for ann in syntax::named_children(modifiers).into_iter().filter(|c| c.kind() == "annotation") {
        let name = ann.child_by_field_name("name").map(|n| syntax::text(n, src))?;
        if syntax::simple_name(name) != "Test" {
            continue;
        }
        let Some(args) = ann.child_by_field_name("arguments") else { continue };
        for pair in syntax::named_children(args).into_iter().filter(|p| p.kind() == "element_value_pair") {
            let key = pair.child_by_field_name("key").map(|k| syntax::text(k, src));
            if key == Some("expected") {
                if let Some(e) = pair.child_by_field_name("value").and_then(|v| class_literal_type(v, src)) {
                    return Some(e);
                }
            }
        }
    }
    None
}

fn is_fail_call(node: Node<'_>, src: &str) -> bool {
    node.kind() == "method_invocation" && node.child_by_field_name("name").is_some_and(|n| syntax::text(n, src) == "fail")
}

/// First catch clause of the first `try` whose body calls `fail`.
pub(crate) fn try_fail_catch_clause<'t>(body: Node<'t>, src: &str) -> Option<Node<'t>> {
    let mut tries = syntax::descendants_of_kind(body, "try_statement");
    tries.extend(syntax::descendants_of_kind(body, "try_with_resources_statement"));
    tries.sort_by_key(|t| t.start_byte());
    for t in tries {
        let Some(try_body) = t.child_by_field_name("body") else { continue };
        let mut calls_fail = false;
        syntax::walk(try_body, &mut |n| {
            if is_fail_call(n, src) {
                calls_fail = true;
            }
            // a nested try owns its own fail
            !calls_fail && !(n != try_body && n.kind().starts_with("try_"))
        });
        if calls_fail {
            return syntax::named_children(t).into_iter().find(|c| c.kind() == "catch_clause");
        }
    }
    None
}

/// Caught type of the try/fail/catch pattern. For a multi-catch the first
/// alternative is returned.
fn try_fail_catch(body: Node<'_>, src: &str) -> Option<String> {
    let catch = try_fail_catch_clause(body, src)?;
    let param = syntax::named_children(catch).into_iter().find(|c| c.kind() == "catch_formal_parameter")?;
    let ty = syntax::named_children(param).into_iter().find(|c| c.kind() == "catch_type")?;
    let first = syntax::named_children(ty).into_iter().next()?;
    Some(syntax::text(first, src).split_whitespace().collect())
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;
    use crate::jmodel::SourceRoots;

    fn cls(src: &str) -> (TestKind, Pattern, Option<String>) {
        let t = classify_test(src).unwrap();
        (t.kind, t.pattern, t.expected_exception)
    }

    #[test]
    fn annotation_expected() {
        assert_eq!(
            cls("@Test(expected = IllegalStateException.class) public void t() { foo.bar(); }"),
            (TestKind::Ebt, Pattern::AnnotationExpected, Some("IllegalStateException".into()))
        );
        assert_eq!(
            cls("@org.junit.Test(timeout = 10, expected = java.text.ParseException.class) void t() {}").2,
            Some("java.text.ParseException".into())
        );
    }

    #[test]
    fn assert_throws_qualified_and_not() {
        assert_eq!(
            cls("@Test void t() { assertThrows(IOException.class, () -> f()); }"),
            (TestKind::Ebt, Pattern::AssertThrows, Some("IOException".into()))
        );
        assert_eq!(cls("@Test void t() { Assertions.assertThrows(E.class, this::f, \"m\"); }").1, Pattern::AssertThrows);
    }

    #[test]
    fn expected_rule() {
        let src = "@Test public void t() { thrown.expect(NullPointerException.class); thrown.expectMessage(\"x\"); f(null); }";
        assert_eq!(cls(src), (TestKind::Ebt, Pattern::ExpectedExceptionRule, Some("NullPointerException".into())));
    }

    #[test]
    fn try_fail_catch() {
        let src = "@Test public void t() { try { f(-1); fail(\"no\"); } catch (IllegalArgumentException e) { assertEquals(\"m\", e.getMessage()); } }";
        assert_eq!(cls(src), (TestKind::Ebt, Pattern::TryFailCatch, Some("IllegalArgumentException".into())));
        let multi = "@Test void t() { try { f(); Assert.fail(); } catch (final IOException | RuntimeException e) { } }";
        assert_eq!(cls(multi).2, Some("IOException".into()));
    }

    #[test]
    fn try_without_fail_is_not_ebt() {
        let src = "@Test void t() { try { f(); } catch (IOException e) { } fail(); }";
        assert_eq!(cls(src), (TestKind::NonEbt, Pattern::None, None));
    }

    #[test]
    fn outermost_pattern_wins() {
        let src = "@Test(expected = A.class) void t() { assertThrows(B.class, () -> f()); }";
        assert_eq!(cls(src).1, Pattern::AnnotationExpected);
        assert_eq!(cls(src).2, Some("A".into()));
    }

    #[test]
    fn plain_and_non_tests() {
        assert_eq!(cls("@Test void t() { assertEquals(1, f()); }"), (TestKind::NonEbt, Pattern::None, None));
        assert_eq!(classify_test("void helper() { }"), Err(ClassifyError::NotATest));
        assert_eq!(cls("@ParameterizedTest void t(int x) { g(x); }").0, TestKind::NonEbt);
    }

    #[test]
    fn extraction_requires_ebt() {
        let plain = classify_test("@Test void t() { }").unwrap();
        assert!(matches!(extract_expected_exception(&plain), Err(ClassifyError::NotEbt(_))));
        let ebt = classify_test("@Test(expected = ParseException.class) void t() { }").unwrap();
        assert_eq!(extract_expected_exception(&ebt).unwrap(), "ParseException");
    }

    #[test]
    fn suite_split() {
        let test_src = r#"package p;
class FooTest {
    @Rule public ExpectedException thrown = ExpectedException.none();
    @Test(expected = IllegalStateException.class) public void a() { new Foo().f(0); }
    @Test public void b() { assertThrows(IOException.class, () -> new Foo().g()); }
    @Test public void c() { thrown.expect(NullPointerException.class); new Foo().h(null); }
    @Test public void d() { try { new Foo().f(-1); fail(); } catch (IllegalArgumentException e) { } }
    @Test public void e() { assertEquals(1, new Foo().f(1)); }
    @Test public void f() { new Foo().f(2); }
    void helper() { }
}
"#;
        let ctx = RepoContext::from_sources(
            Path::new("/r"),
            vec![
                ("src/test/java/p/FooTest.java".into(), test_src.into()),
                ("src/main/java/p/Foo.java".into(), "package p; class Foo { int f(int x) { return x; } }".into()),
            ],
            &SourceRoots::default(),
        );
        let (ebts, non) = split_test_suite(&ctx);
        assert_eq!((ebts.len(), non.len()), (4, 2));
        let patterns: std::collections::BTreeSet<_> = ebts.iter().map(|t| t.pattern).collect();
        assert_eq!(patterns.len(), 4);
        assert!(ebts.iter().all(|t| extract_expected_exception(t).is_ok()));
        assert_eq!(ebts[0].id.fqn, "p.FooTest");

        let empty = RepoContext::from_sources(
            Path::new("/r"),
            vec![("src/main/java/p/Foo.java".into(), "package p; class Foo {}".into())],
            &SourceRoots::default(),
        );
        assert_eq!(split_test_suite(&empty), (vec![], vec![]));
    }
}
