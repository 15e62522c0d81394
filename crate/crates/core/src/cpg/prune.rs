use super::{CodeGraph, EdgeType};
use std::collections::{BTreeMap, BTreeSet};

/// Collapses every maximal operator-rooted expression subtree (`BinaryOp`,
/// `UnaryOp`, `Index`) into its statement-level ancestor.
///
/// The ancestor keeps its own tokens and then receives the collapsed
/// subtree's tokens in pre-order. CFG and DDG edges are untouched; AST edges
/// touching removed nodes are dropped. Applying it twice is the same as once.
pub fn prune_operator_nodes(g: &CodeGraph) -> CodeGraph {
    let mut out = g.clone();
    out.meta.pruned = true;
    if g.meta.pruned {
        return out;
    }

    let index: BTreeMap<usize, usize> = g.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    let kind_of = |id: usize| g.nodes[index[&id]].kind;
    let parent_of = |id: usize| g.nodes[index[&id]].parent;

    // Map each removed node to the statement that absorbs it.
    let mut absorbed_by: BTreeMap<usize, usize> = BTreeMap::new();
    for n in &g.nodes {
        // Nodes are in pre-order, so a parent is classified before its children.
        if let Some(&owner) = n.parent.and_then(|p| absorbed_by.get(&p)) {
            absorbed_by.insert(n.id, owner);
            continue;
        }
        let is_root = n.kind.is_operator() && n.parent.is_none_or(|p| !kind_of(p).is_operator());
        if !is_root {
            continue;
        }
        let mut anc = n.parent;
        while let Some(a) = anc {
            if g.is_statement_level(a) {
                break;
            }
            anc = parent_of(a);
        }
        if let Some(stmt) = anc {
            absorbed_by.insert(n.id, stmt);
        }
    }
    if absorbed_by.is_empty() {
        return out;
    }

    let mut extra: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (&id, &owner) in &absorbed_by {
        extra
            .entry(owner)
            .or_default()
            .extend(g.nodes[index[&id]].tokens.iter().cloned());
    }
    let removed: BTreeSet<usize> = absorbed_by.keys().copied().collect();
    out.nodes.retain(|n| !removed.contains(&n.id));
    for n in &mut out.nodes {
        if let Some(toks) = extra.remove(&n.id) {
            n.tokens.extend(toks);
        }
    }
    out.edges.retain(|e| {
        e.etype != EdgeType::Ast || !(removed.contains(&e.src) || removed.contains(&e.dst))
    });
    out
}
