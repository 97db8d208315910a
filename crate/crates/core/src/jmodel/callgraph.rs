//! Name+arity call graph and reachable-throw search.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use tree_sitter::Node;

use super::{syntax, throw_sites_in_unit, CompilationUnit, JModelError, MethodDecl, MethodId, MethodKind, RepoContext, ThrowSite};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Callee {
    Resolved(MethodId),
    /// No declaration in the repository matches the call's name and arity.
    External {
        name: String,
        arity: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallEdge {
    pub caller: MethodId,
    pub callee: Callee,
    /// Line of the call site in the caller's file.
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReachableThrow {
    pub site: ThrowSite,
    /// Shortest call chain from the start method to the throwing method,
    /// both inclusive.
    pub path: Vec<MethodId>,
}

fn arg_count(args: Option<Node<'_>>) -> usize {
    args.map_or(0, |a| syntax::named_children(a).into_iter().filter(|c| !c.kind().ends_with("comment")).count())
}

pub(super) fn build_edges(units: &[CompilationUnit]) -> Vec<CallEdge> {
    // name -> candidate declarations
    let mut by_name: BTreeMap<&str, Vec<&MethodDecl>> = BTreeMap::new();
    let mut ctors_by_class: BTreeMap<&str, Vec<&MethodDecl>> = BTreeMap::new();
    for unit in units {
        for m in &unit.methods {
            match m.kind {
                MethodKind::Method => by_name.entry(m.id.name.as_str()).or_default().push(m),
                MethodKind::Constructor => {
                    let simple = m.id.fqn.rsplit(['.', '$']).next().unwrap_or(&m.id.fqn);
                    ctors_by_class.entry(simple).or_default().push(m);
                }
                _ => {}
            }
        }
    }

    let mut edges = BTreeSet::new();
    for unit in units {
        for caller in &unit.methods {
            let Some(node) = unit.node_of(caller) else { continue };
            syntax::walk(node, &mut |n| {
                let (name, arity, candidates) = match n.kind() {
                    "method_invocation" => {
                        let Some(name) = n.child_by_field_name("name") else { return true };
                        let name = syntax::text(name, &unit.source);
                        let arity = arg_count(n.child_by_field_name("arguments"));
                        (name.to_string(), arity, by_name.get(name))
                    }
                    "object_creation_expression" => {
                        let Some(ty) = n.child_by_field_name("type") else { return true };
                        let simple = syntax::simple_name(syntax::text(ty, &unit.source));
                        let arity = arg_count(n.child_by_field_name("arguments"));
                        (format!("{simple}.<init>"), arity, ctors_by_class.get(simple))
                    }
                    _ => return true,
                };
                let line = syntax::line(n);
                let mut resolved = false;
                for cand in candidates.into_iter().flatten().filter(|c| c.accepts_arity(arity)) {
                    resolved = true;
                    edges.insert(CallEdge { caller: caller.id.clone(), callee: Callee::Resolved(cand.id.clone()), line });
                }
                if !resolved {
                    edges.insert(CallEdge { caller: caller.id.clone(), callee: Callee::External { name, arity }, line });
                }
                true
            });
        }
    }
    edges.into_iter().collect()
}

pub(super) fn reachable_throws(ctx: &RepoContext, start: &MethodId, max_depth: usize) -> Result<Vec<ReachableThrow>, JModelError> {
    if max_depth == 0 {
        return Err(JModelError::ZeroDepth);
    }
    if ctx.method(start).is_none() {
        return Err(JModelError::UnknownMethod(start.to_string()));
    }
    let mut adjacency: BTreeMap<&MethodId, BTreeSet<&MethodId>> = BTreeMap::new();
    for edge in &ctx.call_edges {
        if let Callee::Resolved(callee) = &edge.callee {
            adjacency.entry(&edge.caller).or_default().insert(callee);
        }
    }

    let mut paths: BTreeMap<&MethodId, Vec<MethodId>> = BTreeMap::new();
    let mut queue = VecDeque::new();
    paths.insert(start, vec![start.clone()]);
    queue.push_back(start);
    while let Some(current) = queue.pop_front() {
        let path_len = paths[current].len();
        if path_len >= max_depth {
            continue;
        }
        for &next in adjacency.get(current).into_iter().flatten() {
            if paths.contains_key(next) {
                continue;
            }
            let mut path = paths[current].clone();
            path.push(next.clone());
            paths.insert(next, path);
            queue.push_back(next);
        }
    }

    let mut out = Vec::new();
    for (id, path) in &paths {
        let Some(unit) = ctx.unit(&id.decl_file) else { continue };
        for site in throw_sites_in_unit(unit).into_iter().filter(|s| &s.method == *id) {
            out.push(ReachableThrow { site, path: path.clone() });
        }
    }
    out.sort_by(|a, b| (a.path.len(), a.site.file(), a.site.line).cmp(&(b.path.len(), b.site.file(), b.site.line)));
    Ok(out)
}
