//! Guard expressions for target throw statements.
//!
//! [`collect_nodes`] walks every frame of a trace, innermost first, from the
//! statement on the frame's line up to the enclosing method, recording the
//! branch conditions that must hold and the assignments that feed them.
//! [`compute_guard_expression`] then folds those nodes into a conjunction,
//! rewriting locals and callee parameters into terms the method under test
//! can see.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tree_sitter::Node;

use crate::expr::{EvalError, Expr, Value};
use crate::jmodel::{syntax, CompilationUnit, MethodDecl, MethodId, MethodKind, RepoContext};
use crate::stacktrace::{Frame, StackTrace};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    StartStatement,
    Condition(Expr),
    /// Holds the already negated condition.
    NegatedCondition(Expr),
    Assignment {
        name: String,
        value: Expr,
    },
    MethodDecl {
        params: Vec<String>,
        varargs: bool,
    },
    MethodCall {
        args: Vec<Expr>,
    },
}

impl NodeKind {
    pub fn tag(&self) -> &'static str {
        match self {
            NodeKind::StartStatement => "StartStatement",
            NodeKind::Condition(_) => "Condition",
            NodeKind::NegatedCondition(_) => "NegatedCondition",
            NodeKind::Assignment { .. } => "Assignment",
            NodeKind::MethodDecl { .. } => "MethodDecl",
            NodeKind::MethodCall { .. } => "MethodCall",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardNode {
    pub kind: NodeKind,
    pub method: MethodId,
    pub line: u32,
    /// Source text the node was built from.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeList {
    pub nodes: Vec<GuardNode>,
    /// Variables local to the traversed methods, including parameters of
    /// every method except the method under test.
    pub locals: BTreeSet<String>,
}

impl NodeList {
    pub fn tags(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|n| n.kind.tag()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardCondition {
    pub expr: Expr,
    /// The condition as written in the source, before substitution.
    pub original: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardExpression {
    pub conditions: Vec<GuardCondition>,
    pub rendered: String,
    /// Locals that survived substitution and are not visible to a caller of
    /// the method under test.
    pub unresolved_names: Vec<String>,
}

/// JSON form of a guard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardRecord {
    pub conditions: Vec<String>,
    pub original_conditions: Vec<String>,
    pub rendered: String,
    pub unresolved_names: Vec<String>,
}

impl GuardExpression {
    pub fn record(&self) -> GuardRecord {
        GuardRecord {
            conditions: self.conditions.iter().map(|c| c.expr.to_string()).collect(),
            original_conditions: self.conditions.iter().map(|c| c.original.clone()).collect(),
            rendered: self.rendered.clone(),
            unresolved_names: self.unresolved_names.clone(),
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.conditions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GuardError {
    #[error("empty stack trace")]
    EmptyTrace,
    #[error("frame {0} does not resolve to a method in the repository")]
    UnresolvedFrame(Frame),
    #[error("line of frame {0} lies outside every method of its class")]
    FrameOutOfSpan(Frame),
}

fn resolve<'c>(ctx: &'c RepoContext, f: &Frame) -> Result<(&'c CompilationUnit, &'c MethodDecl), GuardError> {
    if let Some(hit) = ctx.resolve_frame(&f.class_fqn, &f.method, f.line) {
        return Ok(hit);
    }
    let mut owner = f.class_fqn.as_str();
    loop {
        if ctx.declares_class(owner) {
            return Err(GuardError::FrameOutOfSpan(f.clone()));
        }
        match owner.rfind('$') {
            Some(i) => owner = &owner[..i],
            None => return Err(GuardError::UnresolvedFrame(f.clone())),
        }
    }
}

fn contains_line(n: Node<'_>, line: u32) -> bool {
    syntax::line(n) <= line && line <= syntax::end_line(n)
}

fn smallest<'t>(nodes: impl Iterator<Item = Node<'t>>) -> Option<Node<'t>> {
    nodes.min_by_key(|n| (n.end_byte() - n.start_byte(), n.start_byte()))
}

/// Innermost statement on `line`, preferring a throw that starts there.
fn statement_at<'t>(method: Node<'t>, line: u32, want_throw: bool) -> Option<Node<'t>> {
    let mut candidates = Vec::new();
    syntax::walk(method, &mut |n| {
        if !contains_line(n, line) {
            return false;
        }
        if syntax::is_statement(n.kind()) {
            candidates.push(n);
        }
        true
    });
    if want_throw {
        if let Some(t) = smallest(candidates.iter().copied().filter(|n| n.kind() == "throw_statement" && syntax::line(*n) == line)) {
            return Some(t);
        }
    }
    smallest(candidates.into_iter())
}

fn enclosing_statement<'t>(mut n: Node<'t>, method: Node<'t>) -> Node<'t> {
    while n.id() != method.id() && !syntax::is_statement(n.kind()) {
        match n.parent() {
            Some(p) => n = p,
            None => break,
        }
    }
    n
}

/// The call on `line` that invokes `callee`.
fn call_to<'t>(method: Node<'t>, line: u32, callee: &MethodDecl, src: &str) -> Option<Node<'t>> {
    let class_simple = callee.id.class_simple_name().to_string();
    let mut hits = Vec::new();
    syntax::walk(method, &mut |n| {
        if !contains_line(n, line) {
            return false;
        }
        let matches = match (n.kind(), callee.kind) {
            ("method_invocation", MethodKind::Method) => {
                n.child_by_field_name("name").is_some_and(|m| syntax::text(m, src) == callee.id.name)
            }
            ("object_creation_expression", MethodKind::Constructor) => {
                n.child_by_field_name("type").is_some_and(|t| syntax::simple_name(syntax::text(t, src)) == class_simple)
            }
            ("explicit_constructor_invocation", MethodKind::Constructor) => true,
            _ => false,
        };
        if matches {
            let args = n.child_by_field_name("arguments");
            let arity = args.map_or(0, |a| syntax::named_children(a).len());
            if callee.accepts_arity(arity) {
                hits.push(n);
            }
        }
        true
    });
    let on_line: Vec<_> =
        hits.iter().copied().filter(|n| n.child_by_field_name("name").map_or(syntax::line(*n), syntax::line) == line).collect();
    if on_line.is_empty() {
        smallest(hits.into_iter())
    } else {
        smallest(on_line.into_iter())
    }
}

fn parse_node(n: Node<'_>, src: &str) -> Expr {
    Expr::parse_or_opaque(syntax::text(unparen(n), src))
}

fn unparen(n: Node<'_>) -> Node<'_> {
    if n.kind() == "parenthesized_expression" {
        if let Some(inner) = syntax::named_children(n).into_iter().next() {
            return unparen(inner);
        }
    }
    n
}

/// Assignments performed by a statement, last one first.
fn assignments_of(stmt: Node<'_>, src: &str) -> Vec<(String, Expr, String)> {
    let mut out = Vec::new();
    match stmt.kind() {
        "expression_statement" => {
            let Some(e) = syntax::named_children(stmt).into_iter().next() else { return out };
            out.extend(assignment_of_expr(e, src));
        }
        "local_variable_declaration" => {
            for d in syntax::named_children(stmt).into_iter().filter(|c| c.kind() == "variable_declarator").rev() {
                let (Some(name), Some(value)) = (d.child_by_field_name("name"), d.child_by_field_name("value")) else {
                    continue;
                };
                out.push((syntax::text(name, src).to_string(), parse_node(value, src), syntax::text(d, src).to_string()));
            }
        }
        _ => {}
    }
    out
}

fn assignment_of_expr(e: Node<'_>, src: &str) -> Option<(String, Expr, String)> {
    let text = syntax::text(e, src).to_string();
    match e.kind() {
        "assignment_expression" => {
            let left = e.child_by_field_name("left")?;
            let right = e.child_by_field_name("right")?;
            if left.kind() != "identifier" {
                return None;
            }
            let name = syntax::text(left, src).to_string();
            let op = src[left.end_byte()..right.start_byte()].trim();
            let value = if op == "=" {
                parse_node(right, src)
            } else {
                let bop = op.strip_suffix('=')?;
                Expr::parse_or_opaque(&format!("{name} {bop} ({})", syntax::text(right, src)))
            };
            Some((name, value, text))
        }
        "update_expression" => {
            let target = syntax::named_children(e).into_iter().next()?;
            if target.kind() != "identifier" {
                return None;
            }
            let name = syntax::text(target, src).to_string();
            let op = if text.contains("++") { "+" } else { "-" };
            Some((name.clone(), Expr::binary(op, Expr::name(name), Expr::Literal("1".into())), text))
        }
        _ => None,
    }
}

fn is_comment(n: Node<'_>) -> bool {
    n.kind().ends_with("comment")
}

/// Condition selected by the switch case containing `group`.
fn switch_condition<'t>(group: Node<'t>, src: &str) -> Option<(Expr, String)> {
    let block = group.parent()?;
    let switch = block.parent()?;
    let selector = parse_node(switch.child_by_field_name("condition")?, src);
    let groups: Vec<Node<'t>> = syntax::named_children(block).into_iter().filter(|c| !is_comment(*c)).collect();
    let pos = groups.iter().position(|g| g.id() == group.id())?;
    let labels_of =
        |g: Node<'t>| -> Vec<Node<'t>> { syntax::named_children(g).into_iter().filter(|c| c.kind() == "switch_label").collect() };
    let has_body = |g: Node<'_>| syntax::named_children(g).into_iter().any(|c| c.kind() != "switch_label" && !is_comment(c));

    // empty groups directly before this one fall through into it
    let mut first = pos;
    while group.kind() == "switch_block_statement_group" && first > 0 && !has_body(groups[first - 1]) {
        first -= 1;
    }
    let mine: Vec<Node<'t>> = groups[first..=pos].iter().flat_map(|g| labels_of(*g)).collect();
    let own: BTreeSet<usize> = (first..=pos).collect();

    let values = |label: Node<'t>| -> Vec<Node<'t>> {
        syntax::named_children(label).into_iter().filter(|c| !is_comment(*c) && c.kind() != "guard").collect()
    };
    let test = |v: Node<'_>, positive: bool| -> Expr {
        if v.kind().contains("pattern") {
            let e = Expr::InstanceOf { operand: Box::new(selector.clone()), ty: syntax::text(v, src).to_string() };
            return if positive { e } else { e.negate() };
        }
        let value = Expr::parse_or_opaque(syntax::text(v, src));
        Expr::binary(if positive { "==" } else { "!=" }, selector.clone(), value)
    };
    let fold = |op: &str, parts: Vec<Expr>| parts.into_iter().reduce(|a, b| Expr::binary(op, a, b));

    let text = mine.iter().map(|l| syntax::text(*l, src).trim()).collect::<Vec<_>>().join(" ");
    let is_default = mine.iter().any(|l| values(*l).is_empty());
    let cond = if is_default {
        let others: Vec<Expr> = groups
            .iter()
            .enumerate()
            .filter(|(i, _)| !own.contains(i))
            .flat_map(|(_, g)| labels_of(*g))
            .flat_map(values)
            .map(|v| test(v, false))
            .collect();
        fold("&&", others)?
    } else {
        fold("||", mine.iter().flat_map(|l| values(*l)).map(|v| test(v, true)).collect())?
    };
    Some((cond, text))
}

fn declared_locals(method: Node<'_>, src: &str, include_params: bool, out: &mut BTreeSet<String>) {
    syntax::walk(method, &mut |n| {
        let name = match n.kind() {
            "variable_declarator" | "catch_formal_parameter" | "enhanced_for_statement" => n.child_by_field_name("name"),
            "formal_parameter" | "spread_parameter" if include_params => n.child_by_field_name("name"),
            "lambda_expression" => {
                if let Some(p) = n.child_by_field_name("parameters") {
                    if p.kind() == "identifier" {
                        out.insert(syntax::text(p, src).to_string());
                    } else {
                        for c in syntax::descendants_of_kind(p, "identifier") {
                            out.insert(syntax::text(c, src).to_string());
                        }
                    }
                }
                None
            }
            _ => None,
        };
        if let Some(name) = name {
            out.insert(syntax::text(name, src).to_string());
        }
        true
    });
    if !include_params {
        // formal parameters of lambdas inside the method are locals too
        for lambda in syntax::descendants_of_kind(method, "lambda_expression") {
            for p in syntax::descendants_of_kind(lambda, "formal_parameter") {
                if let Some(n) = p.child_by_field_name("name") {
                    out.insert(syntax::text(n, src).to_string());
                }
            }
        }
    }
}

/// Collects condition, assignment and call nodes along the trace,
/// starting at the throw and ending in the method under test.
pub fn collect_nodes(r: &StackTrace, ctx: &RepoContext) -> Result<NodeList, GuardError> {
    if r.is_empty() {
        return Err(GuardError::EmptyTrace);
    }
    let resolved: Vec<(&CompilationUnit, &MethodDecl)> = r.frames.iter().map(|f| resolve(ctx, f)).collect::<Result<_, _>>()?;
    let mut list = NodeList::default();
    let innermost = r.len() - 1;

    for idx in (0..r.len()).rev() {
        let frame = &r.frames[idx];
        let (unit, decl) = resolved[idx];
        let src = unit.source.as_str();
        let method = unit.node_of(decl).ok_or_else(|| GuardError::UnresolvedFrame(frame.clone()))?;
        let push = |list: &mut NodeList, kind: NodeKind, n: Node<'_>| {
            list.nodes.push(GuardNode { kind, method: decl.id.clone(), line: syntax::line(n), text: syntax::text(n, src).to_string() });
        };

        let start = if idx == innermost {
            statement_at(method, frame.line, true)
        } else {
            let (_, callee) = resolved[idx + 1];
            match call_to(method, frame.line, callee, src) {
                Some(call) => {
                    let args: Vec<Expr> = call
                        .child_by_field_name("arguments")
                        .map(|a| syntax::named_children(a).into_iter().filter(|c| !is_comment(*c)).map(|c| parse_node(c, src)).collect())
                        .unwrap_or_default();
                    let (callee_unit, _) = resolved[idx + 1];
                    let callee_node = callee_unit.node_of(callee);
                    list.nodes.push(GuardNode {
                        kind: NodeKind::MethodDecl { params: callee.params.clone(), varargs: callee.varargs },
                        method: callee.id.clone(),
                        line: callee.start_line,
                        text: callee_node.map(|n| declaration_header(n, &callee_unit.source)).unwrap_or_default(),
                    });
                    push(&mut list, NodeKind::MethodCall { args }, call);
                    Some(enclosing_statement(call, method))
                }
                None => {
                    log::warn!("no call to {} on line {} of {}; its parameters stay symbolic", callee.id, frame.line, decl.id);
                    statement_at(method, frame.line, false)
                }
            }
        };
        let start = start.ok_or_else(|| GuardError::FrameOutOfSpan(frame.clone()))?;
        push(&mut list, NodeKind::StartStatement, start);
        declared_locals(method, src, idx != 0, &mut list.locals);

        let mut current = start;
        while let Some(parent) = current.parent() {
            if parent.id() == method.id() {
                break;
            }
            let is = |field: &str| parent.child_by_field_name(field).is_some_and(|c| c.id() == current.id());
            match parent.kind() {
                "if_statement" => {
                    if let Some(cond) = parent.child_by_field_name("condition") {
                        let e = parse_node(cond, src);
                        if is("consequence") {
                            push(&mut list, NodeKind::Condition(e), unparen(cond));
                        } else if is("alternative") {
                            push(&mut list, NodeKind::NegatedCondition(e.negate()), unparen(cond));
                        }
                    }
                }
                "while_statement" => {
                    if let (true, Some(cond)) = (is("body"), parent.child_by_field_name("condition")) {
                        push(&mut list, NodeKind::Condition(parse_node(cond, src)), unparen(cond));
                    }
                }
                "for_statement" if is("body") => {
                    if let Some(cond) = parent.child_by_field_name("condition") {
                        push(&mut list, NodeKind::Condition(parse_node(cond, src)), cond);
                    }
                    // loop conditions describe entry into the first iteration
                    let mut cursor = parent.walk();
                    let inits: Vec<Node<'_>> = parent.children_by_field_name("init", &mut cursor).collect();
                    for init in inits.into_iter().rev() {
                        let found = if init.kind() == "local_variable_declaration" {
                            assignments_of(init, src)
                        } else {
                            assignment_of_expr(init, src).into_iter().collect()
                        };
                        for (name, value, _) in found {
                            push(&mut list, NodeKind::Assignment { name, value }, init);
                        }
                    }
                }
                "block" | "constructor_body" | "switch_block_statement_group" => {
                    for sib in syntax::named_children(parent).into_iter().rev().filter(|s| s.end_byte() <= current.start_byte()) {
                        for (name, value, _) in assignments_of(sib, src) {
                            push(&mut list, NodeKind::Assignment { name, value }, sib);
                        }
                    }
                    if parent.kind() == "switch_block_statement_group" {
                        if let Some((cond, _)) = switch_condition(parent, src) {
                            push(&mut list, NodeKind::Condition(cond), parent);
                        }
                    }
                }
                "switch_rule" => {
                    if let Some((cond, _)) = switch_condition(parent, src) {
                        push(&mut list, NodeKind::Condition(cond), parent);
                    }
                }
                _ => {}
            }
            current = parent;
        }
    }
    // a name that is also a parameter of the method under test stays visible
    list.locals.retain(|n| !resolved[0].1.params.contains(n) || declares_local(resolved[0], n));
    Ok(list)
}

fn declares_local((unit, decl): (&CompilationUnit, &MethodDecl), name: &str) -> bool {
    let Some(method) = unit.node_of(decl) else { return false };
    let mut locals = BTreeSet::new();
    declared_locals(method, &unit.source, false, &mut locals);
    locals.contains(name)
}

fn declaration_header(n: Node<'_>, src: &str) -> String {
    let end = n.child_by_field_name("body").map_or(n.end_byte(), |b| b.start_byte());
    src[n.start_byte()..end].trim().to_string()
}

/// Substitutes every mapped name in every condition. Names are matched as
/// whole identifiers; conditions without mapped names are unchanged.
pub fn merge(conditions: &[Expr], map: &BTreeMap<String, Expr>) -> Vec<Expr> {
    conditions.iter().map(|e| e.substitute(map)).collect()
}

fn merge_in_place(conds: &mut [GuardCondition], map: &BTreeMap<String, Expr>) {
    for c in conds.iter_mut() {
        c.expr = c.expr.substitute(map);
    }
}

/// Folds the collected nodes into a guard expression.
pub fn guard_from_nodes(list: &NodeList) -> GuardExpression {
    let mut conds: Vec<GuardCondition> = Vec::new();
    let mut decl: Option<(&Vec<String>, bool)> = None;
    for node in &list.nodes {
        match &node.kind {
            NodeKind::StartStatement => {}
            NodeKind::Condition(e) | NodeKind::NegatedCondition(e) => {
                conds.push(GuardCondition { expr: e.clone(), original: e.to_string() });
            }
            NodeKind::Assignment { name, value } => {
                merge_in_place(&mut conds, &BTreeMap::from([(name.clone(), value.clone())]));
            }
            NodeKind::MethodDecl { params, varargs } => decl = Some((params, *varargs)),
            NodeKind::MethodCall { args } => {
                let Some((params, varargs)) = decl.take() else { continue };
                // a varargs parameter has no single argument to bind
                let fixed = if varargs { params.len().saturating_sub(1) } else { params.len() };
                if !varargs && args.len() != params.len() {
                    log::warn!("arity mismatch at `{}`; parameters stay symbolic", node.text);
                    continue;
                }
                let argmap: BTreeMap<String, Expr> = params.iter().take(fixed).cloned().zip(args.iter().cloned()).collect();
                merge_in_place(&mut conds, &argmap);
            }
        }
    }

    let mut seen = BTreeSet::new();
    conds.retain(|c| seen.insert(c.expr.to_string()));
    let rendered = render_conjunction(conds.iter().map(|c| &c.expr));
    let mut unresolved = BTreeSet::new();
    for c in &conds {
        unresolved.extend(c.expr.free_names().into_iter().filter(|n| list.locals.contains(n)));
    }
    GuardExpression { conditions: conds, rendered, unresolved_names: unresolved.into_iter().collect() }
}

/// Joins conditions with `&&`, parenthesizing conjuncts that bind looser.
pub fn render_conjunction<'a>(conds: impl Iterator<Item = &'a Expr>) -> String {
    let conds: Vec<&Expr> = conds.collect();
    match conds.as_slice() {
        [] => "true".to_string(),
        [only] => only.to_string(),
        many => {
            many.iter().map(|e| if e.binds_looser_than_and() { format!("({e})") } else { e.to_string() }).collect::<Vec<_>>().join(" && ")
        }
    }
}

pub fn compute_guard_expression(r: &StackTrace, ctx: &RepoContext) -> Result<GuardExpression, GuardError> {
    Ok(guard_from_nodes(&collect_nodes(r, ctx)?))
}

/// Evaluates the conjunction left to right, stopping at the first false
/// conjunct.
pub fn evaluate_guard(g: &GuardExpression, env: &BTreeMap<String, Value>) -> Result<bool, EvalError> {
    for c in &g.conditions {
        match c.expr.evaluate(env)? {
            Value::Bool(true) => {}
            Value::Bool(false) => return Ok(false),
            Value::Int(_) => return Err(EvalError::TypeMismatch(c.expr.to_string())),
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;
    use crate::jmodel::SourceRoots;

    fn ctx(src: &str) -> RepoContext {
        RepoContext::from_sources(Path::new("/r"), vec![("src/main/java/p/A.java".into(), src.into())], &SourceRoots::default())
    }

    fn frame(m: &str, line: u32) -> Frame {
        Frame { class_fqn: "p.A".into(), method: m.into(), file: "A.java".into(), line }
    }

    fn guard(src: &str, frames: &[(&str, u32)]) -> GuardExpression {
        let c = ctx(src);
        let t = StackTrace::new(frames.iter().map(|(m, l)| frame(m, *l)).collect());
        compute_guard_expression(&t, &c).unwrap()
    }

    #[test]
    fn single_if() {
        let src = "package p;\nclass A {\n  void f(int x) {\n    if (x > 0) throw new IllegalStateException();\n  }\n}\n";
        let c = ctx(src);
        let t = StackTrace::new(vec![frame("f", 4)]);
        let nodes = collect_nodes(&t, &c).unwrap();
        assert_eq!(nodes.tags(), vec!["StartStatement", "Condition"]);
        assert_eq!(guard(src, &[("f", 4)]).rendered, "x > 0");
    }

    #[test]
    fn else_branch_is_negated() {
        let src = "package p;\nclass A {\n  void g(int x) {\n    if (x > 0) return;\n    else throw new E();\n  }\n}\n";
        let c = ctx(src);
        let nodes = collect_nodes(&StackTrace::new(vec![frame("g", 5)]), &c).unwrap();
        assert_eq!(nodes.tags(), vec!["StartStatement", "NegatedCondition"]);
        assert_eq!(guard(src, &[("g", 5)]).rendered, "!(x > 0)");
        let neg = "package p;\nclass A {\n  void g(boolean ok) {\n    if (!ok) return;\n    else throw new E();\n  }\n}\n";
        assert_eq!(guard(neg, &[("g", 5)]).rendered, "ok");
    }

    #[test]
    fn two_frames_substitute_arguments() {
        let src = "package p;\nclass A {\n  void h(int a) {\n    check(a + 1);\n  }\n  void check(int v) {\n    if (v == 0) throw new E();\n  }\n}\n";
        let c = ctx(src);
        let t = StackTrace::new(vec![frame("h", 4), frame("check", 7)]);
        let nodes = collect_nodes(&t, &c).unwrap();
        assert_eq!(nodes.tags(), vec!["StartStatement", "Condition", "MethodDecl", "MethodCall", "StartStatement"]);
        let g = guard_from_nodes(&nodes);
        assert_eq!(g.rendered, "(a + 1) == 0");
        assert_eq!(g.conditions[0].original, "v == 0");
        assert!(g.unresolved_names.is_empty());
    }

    #[test]
    fn local_assignment_is_merged() {
        let src = "package p;\nclass A {\n  void d(int a) {\n    int t = a * 2;\n    if (t > 10) throw new E();\n  }\n}\n";
        assert_eq!(guard(src, &[("d", 5)]).rendered, "(a * 2) > 10");
    }

    #[test]
    fn unassigned_local_is_unresolved() {
        let src = "package p;\nclass A {\n  void d(int a) {\n    int t = read();\n    t = t + a;\n    for (int i = 0; i < a; i++) {\n      if (t == i) throw new E();\n    }\n  }\n  int read() { return 1; }\n}\n";
        let g = guard(src, &[("d", 7)]);
        assert_eq!(g.rendered, "(read() + a) == 0 && 0 < a");
        assert!(g.unresolved_names.is_empty());
        let src = "package p;\nclass A {\n  void d(int a) {\n    int t;\n    t = f();\n    while (k > 0) { if (u == a) throw new E(); }\n  }\n}\n";
        let g = guard(src, &[("d", 6)]);
        assert_eq!(g.unresolved_names, Vec::<String>::new());
        let src = "package p;\nclass A {\n  void d(int a) {\n    int t;\n    if (t == a) throw new E();\n  }\n}\n";
        assert_eq!(guard(src, &[("d", 5)]).unresolved_names, vec!["t".to_string()]);
    }

    #[test]
    fn switch_cases() {
        let src = "package p;\nclass A {\n  void s(int x) {\n    switch (x) {\n      case 1:\n      case 2:\n        throw new E();\n      case 3:\n        break;\n      default:\n        throw new F();\n    }\n  }\n}\n";
        assert_eq!(guard(src, &[("s", 7)]).rendered, "x == 1 || x == 2");
        assert_eq!(guard(src, &[("s", 11)]).rendered, "x != 1 && x != 2 && x != 3");
        let rules = "package p;\nclass A {\n  void s(String k) {\n    switch (k) {\n      case \"a\", \"b\" -> throw new E();\n      default -> { }\n    }\n  }\n}\n";
        assert_eq!(guard(rules, &[("s", 5)]).rendered, "k == \"a\" || k == \"b\"");
    }

    #[test]
    fn compound_and_update_assignments() {
        let src =
            "package p;\nclass A {\n  void c(int a) {\n    int t = a;\n    t += 3;\n    t++;\n    if (t > 5) throw new E();\n  }\n}\n";
        let g = guard(src, &[("c", 7)]);
        assert_eq!(g.rendered, "((a + 3) + 1) > 5");
        let env = BTreeMap::from([("a".to_string(), Value::Int(2))]);
        assert!(evaluate_guard(&g, &env).unwrap());
    }

    #[test]
    fn merge_properties() {
        let e = vec![Expr::parse("v == 0").unwrap()];
        let m = BTreeMap::from([("v".to_string(), Expr::parse("a+1").unwrap())]);
        assert_eq!(merge(&e, &m)[0].to_string(), "(a + 1) == 0");
        assert_eq!(merge(&e, &BTreeMap::new()), e);
        let e = vec![Expr::parse("val > value").unwrap()];
        let m = BTreeMap::from([("val".to_string(), Expr::name("k"))]);
        assert_eq!(merge(&e, &m)[0].to_string(), "k > value");
    }

    #[test]
    fn evaluation() {
        let g = guard("package p;\nclass A {\n  void f(int x) {\n    if (x > 0) throw new E();\n  }\n}\n", &[("f", 4)]);
        assert!(!evaluate_guard(&g, &BTreeMap::from([("x".to_string(), Value::Int(0))])).unwrap());
        assert!(matches!(evaluate_guard(&g, &BTreeMap::new()), Err(EvalError::UnboundName(_))));
    }

    #[test]
    fn errors() {
        let c = ctx("package p;\nclass A {\n  void f(int x) {\n    if (x > 0) throw new E();\n  }\n}\n");
        assert_eq!(collect_nodes(&StackTrace::new(vec![]), &c), Err(GuardError::EmptyTrace));
        assert!(matches!(collect_nodes(&StackTrace::new(vec![frame("f", 40)]), &c), Err(GuardError::FrameOutOfSpan(_))));
        let ghost = Frame { class_fqn: "q.Z".into(), method: "f".into(), file: "Z.java".into(), line: 1 };
        assert!(matches!(collect_nodes(&StackTrace::new(vec![ghost]), &c), Err(GuardError::UnresolvedFrame(_))));
    }

    mod props {
        use proptest::prelude::*;

        use super::*;

        const NAMES: &[&str] = &["v", "vv", "value", "v1", "_v", "a", "k"];

        fn arb_expr() -> impl Strategy<Value = String> {
            let leaf = prop_oneof![
                prop::sample::select(NAMES).prop_map(str::to_string),
                (0i64..100).prop_map(|n| n.to_string()),
                prop::sample::select(NAMES).prop_map(|n| format!("obj.{n}")),
                prop::sample::select(NAMES).prop_map(|n| format!("{n}(v)")),
            ];
            leaf.prop_recursive(4, 24, 2, |inner| {
                (inner.clone(), prop::sample::select(vec!["+", "-", "*", "==", "<", "&&", "||"]), inner)
                    .prop_map(|(l, op, r)| format!("({l}) {op} ({r})"))
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(512))]

            #[test]
            fn empty_map_is_identity(src in arb_expr()) {
                let e = vec![Expr::parse(&src).unwrap()];
                prop_assert_eq!(merge(&e, &BTreeMap::new()), e);
            }

            #[test]
            fn only_whole_identifiers_are_replaced(src in arb_expr()) {
                let e = Expr::parse(&src).unwrap();
                let before = e.free_names();
                let map = BTreeMap::from([("v".to_string(), Expr::parse("q + 1").unwrap())]);
                let out = merge(&[e], &map).remove(0);
                let after = out.free_names();
                prop_assert!(!after.contains("v"));
                for n in before.iter().filter(|n| n.as_str() != "v") {
                    prop_assert!(after.contains(n), "lost {} in {}", n, out);
                }
                prop_assert_eq!(after.contains("q"), before.contains("v"));
                // the rendering is a valid expression with a stable rendering
                let reparsed = Expr::parse(&out.to_string()).unwrap().to_string();
                prop_assert_eq!(Expr::parse(&reparsed).unwrap().to_string(), reparsed);
            }

            #[test]
            fn absent_names_leave_conditions_unchanged(src in arb_expr()) {
                let e = vec![Expr::parse(&src).unwrap()];
                let map = BTreeMap::from([("zz".to_string(), Expr::parse("a * 2").unwrap())]);
                prop_assert_eq!(merge(&e, &map), e);
            }
        }
    }
}
