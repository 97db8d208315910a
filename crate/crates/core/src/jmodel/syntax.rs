//! Thin helpers over the tree-sitter Java grammar.

use tree_sitter::{Node, Parser, Tree};

pub fn parse(source: &str) -> Tree {
    let mut parser = Parser::new();
    parser.set_language(&tree_sitter_java::LANGUAGE.into()).expect("bundled Java grammar is compatible");
    parser.parse(source, None).expect("parser has a language and no timeout")
}

pub fn text<'s>(node: Node<'_>, source: &'s str) -> &'s str {
    &source[node.byte_range()]
}

/// 1-based start line.
pub fn line(node: Node<'_>) -> u32 {
    node.start_position().row as u32 + 1
}

pub fn end_line(node: Node<'_>) -> u32 {
    node.end_position().row as u32 + 1
}

pub fn named_children(node: Node<'_>) -> Vec<Node<'_>> {
    let mut cursor = node.walk();
    node.named_children(&mut cursor).collect()
}

/// Pre-order walk over named descendants (including `node`). The visitor
/// returns `false` to skip a subtree.
pub fn walk<'t>(node: Node<'t>, visit: &mut impl FnMut(Node<'t>) -> bool) {
    if !visit(node) {
        return;
    }
    for child in named_children(node) {
        walk(child, visit);
    }
}

pub fn descendants_of_kind<'t>(node: Node<'t>, kind: &str) -> Vec<Node<'t>> {
    let mut out = Vec::new();
    walk(node, &mut |n| {
        if n.kind() == kind {
            out.push(n);
        }
        true
    });
    out
}

pub fn is_type_declaration(kind: &str) -> bool {
    matches!(
        kind,
        "class_declaration" | "interface_declaration" | "enum_declaration" | "record_declaration" | "annotation_type_declaration"
    )
}

/// Statement-like nodes that a stack-trace line can point at.
pub fn is_statement(kind: &str) -> bool {
    kind.ends_with("_statement")
        || matches!(kind, "local_variable_declaration" | "explicit_constructor_invocation")
        || (kind == "switch_expression")
}

/// Simple names of annotations in a `modifiers` node.
pub fn annotation_names(modifiers: Option<Node<'_>>, source: &str) -> Vec<String> {
    let Some(m) = modifiers else { return Vec::new() };
    named_children(m)
        .into_iter()
        .filter(|c| matches!(c.kind(), "marker_annotation" | "annotation"))
        .filter_map(|c| c.child_by_field_name("name"))
        .map(|n| simple_name(text(n, source)).to_string())
        .collect()
}

pub fn modifiers_of(node: Node<'_>) -> Option<Node<'_>> {
    named_children(node).into_iter().find(|c| c.kind() == "modifiers")
}

/// Last dotted segment with generic arguments removed.
pub fn simple_name(name: &str) -> &str {
    let base = name.split('<').next().unwrap_or(name).trim();
    base.rsplit('.').next().unwrap_or(base).trim()
}

/// Returns `true` if the source parses as a single Java method.
pub fn parses_as_method(method_src: &str) -> bool {
    single_member_kind(method_src) == Some("method_declaration")
}

/// Kind of the only class member in `member_src`, if it parses cleanly as
/// exactly one member.
pub fn single_member_kind(member_src: &str) -> Option<&'static str> {
    let wrapped = format!("class __ExbtProbe {{\n{member_src}\n}}");
    let tree = parse(&wrapped);
    let root = tree.root_node();
    if root.has_error() {
        return None;
    }
    let class = named_children(root).into_iter().find(|n| n.kind() == "class_declaration")?;
    let body = class.child_by_field_name("body")?;
    let members: Vec<_> = named_children(body).into_iter().filter(|n| !matches!(n.kind(), "line_comment" | "block_comment")).collect();
    match members.as_slice() {
        [only] => Some(only.kind()),
        _ => None,
    }
}
