//! Data dependence edges from reaching definitions.

use super::cfg::{entry_id, exit_id, graph_id};
use crate::minilang::{Ast, NodeKind};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// Variables defined and used by one CFG node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DefUse {
    pub defs: BTreeSet<String>,
    pub uses: BTreeSet<String>,
}

fn vars_in(ast: &Ast, root: usize, out: &mut BTreeSet<String>) {
    for id in ast.subtree(root) {
        let n = ast.node(id);
        if n.kind == NodeKind::Var {
            out.insert(n.tokens[0].text.clone());
        }
    }
}

/// Def/use sets per graph node id. `Entry` defines every parameter. An
/// indexed store `a[i] = e` counts as a (killing) definition of `a` that
/// also uses `a`, `i` and `e`.
pub fn def_use_table(ast: &Ast) -> BTreeMap<usize, DefUse> {
    let mut table = BTreeMap::new();
    table.insert(
        entry_id(),
        DefUse {
            defs: ast.params().into_iter().map(String::from).collect(),
            uses: BTreeSet::new(),
        },
    );
    for id in 0..ast.len() {
        if !ast.is_statement_level(id) {
            continue;
        }
        let n = ast.node(id);
        let mut du = DefUse::default();
        match n.kind {
            NodeKind::Decl => {
                du.defs.insert(n.tokens[1].text.clone());
                vars_in(ast, n.children[0], &mut du.uses);
            }
            NodeKind::Assign => {
                let target = ast.node(n.children[0]);
                if target.kind == NodeKind::Index && n.children.len() == 2 {
                    let base = ast.node(target.children[0]);
                    du.defs.insert(base.tokens[0].text.clone());
                    for &c in &n.children {
                        vars_in(ast, c, &mut du.uses);
                    }
                } else {
                    du.defs.insert(n.tokens[0].text.clone());
                    vars_in(ast, n.children[0], &mut du.uses);
                }
            }
            NodeKind::If | NodeKind::While => vars_in(ast, n.children[0], &mut du.uses),
            NodeKind::Return | NodeKind::Call => {
                for &c in &n.children {
                    vars_in(ast, c, &mut du.uses);
                }
            }
            _ => {}
        }
        table.insert(graph_id(id), du);
    }
    table
}

/// Worklist reaching definitions over the CFG, then one edge `d -> u` for
/// every definition at `d` of a variable used at `u` that reaches `u`.
pub fn build_ddg(cfg: &[(usize, usize)], ast: &Ast) -> Vec<(usize, usize)> {
    let table = def_use_table(ast);
    let n = exit_id(ast) + 1;
    let mut preds = vec![Vec::new(); n];
    let mut succs = vec![Vec::new(); n];
    for &(s, d) in cfg {
        preds[d].push(s);
        succs[s].push(d);
    }

    // A definition is (defining node, variable).
    type Def = (usize, String);
    let empty = DefUse::default();
    let du = |v: usize| table.get(&v).unwrap_or(&empty);

    let mut out: Vec<BTreeSet<Def>> = vec![BTreeSet::new(); n];
    let mut reach_in: Vec<BTreeSet<Def>> = vec![BTreeSet::new(); n];
    let mut queue: VecDeque<usize> = table.keys().copied().collect();
    let mut queued = vec![false; n];
    for &v in &queue {
        queued[v] = true;
    }
    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let mut inn = BTreeSet::new();
        for &p in &preds[v] {
            inn.extend(out[p].iter().cloned());
        }
        let d = du(v);
        let mut new_out: BTreeSet<Def> = inn
            .iter()
            .filter(|(_, var)| !d.defs.contains(var))
            .cloned()
            .collect();
        new_out.extend(d.defs.iter().map(|var| (v, var.clone())));
        reach_in[v] = inn;
        if new_out != out[v] {
            out[v] = new_out;
            for &s in &succs[v] {
                if !queued[s] {
                    queued[s] = true;
                    queue.push_back(s);
                }
            }
        }
    }

    let mut edges = BTreeSet::new();
    for (&u, d) in &table {
        for (def_node, var) in &reach_in[u] {
            if d.uses.contains(var) {
                edges.insert((*def_node, u));
            }
        }
    }
    edges.into_iter().collect()
}
