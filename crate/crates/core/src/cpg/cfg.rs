//! Statement-level control flow.
//!
//! Node numbering follows the graph convention: `Entry` is 0, AST node `a`
//! is `a + 1`, and `Exit` is `ast.len() + 1`.

use crate::minilang::{Ast, NodeKind};
use std::collections::BTreeSet;

pub fn entry_id() -> usize {
    0
}

pub fn exit_id(ast: &Ast) -> usize {
    ast.len() + 1
}

pub fn graph_id(ast_id: usize) -> usize {
    ast_id + 1
}

/// CFG edges over statement nodes plus `Entry`/`Exit`, sorted and deduplicated.
///
/// An `if` branches to its then-block and to its else-block (or straight to
/// the join when there is none); a `while` has a body edge, a back edge from
/// each body exit, and an exit edge; `return` jumps to `Exit`.
pub fn build_cfg(ast: &Ast) -> Vec<(usize, usize)> {
    let mut b = CfgBuilder {
        ast,
        exit: exit_id(ast),
        edges: BTreeSet::new(),
    };
    let tails = b.block(ast.body(), vec![entry_id()]);
    for t in tails {
        b.edges.insert((t, b.exit));
    }
    b.edges.into_iter().collect()
}

struct CfgBuilder<'a> {
    ast: &'a Ast,
    exit: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl CfgBuilder<'_> {
    /// Threads `preds` through the statements of `block`; returns the
    /// dangling predecessors that fall out of the block.
    fn block(&mut self, block: usize, mut preds: Vec<usize>) -> Vec<usize> {
        for &stmt in &self.ast.node(block).children {
            preds = self.statement(stmt, preds);
        }
        preds
    }

    fn statement(&mut self, stmt: usize, preds: Vec<usize>) -> Vec<usize> {
        let node = self.ast.node(stmt);
        let me = graph_id(stmt);
        for p in preds {
            self.edges.insert((p, me));
        }
        match node.kind {
            NodeKind::If => {
                let mut tails = self.block(node.children[1], vec![me]);
                match node.children.get(2) {
                    Some(&else_block) => tails.extend(self.block(else_block, vec![me])),
                    None => tails.push(me),
                }
                tails.sort_unstable();
                tails.dedup();
                tails
            }
            NodeKind::While => {
                for t in self.block(node.children[1], vec![me]) {
                    self.edges.insert((t, me));
                }
                vec![me]
            }
            NodeKind::Return => {
                self.edges.insert((me, self.exit));
                Vec::new()
            }
            _ => vec![me],
        }
    }
}

/// Statement nodes (graph ids) that no CFG path from `Entry` reaches.
pub fn unreachable_statements(ast: &Ast, cfg: &[(usize, usize)]) -> Vec<usize> {
    let n = exit_id(ast) + 1;
    let mut succ = vec![Vec::new(); n];
    for &(s, d) in cfg {
        succ[s].push(d);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![entry_id()];
    seen[entry_id()] = true;
    while let Some(v) = stack.pop() {
        for &w in &succ[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    (0..ast.len())
        .filter(|&a| ast.is_statement_level(a) && !seen[graph_id(a)])
        .map(graph_id)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::parse_source;

    /// CFG with statement nodes renamed by their kind and source order.
    fn labelled(src: &str) -> Vec<(String, String)> {
        let ast = parse_source(src).unwrap();
        let name = |g: usize| -> String {
            if g == 0 {
                return "Entry".into();
            }
            if g == exit_id(&ast) {
                return "Exit".into();
            }
            let n = ast.node(g - 1);
            format!("{}@{}", n.kind, n.tokens[0].span.col)
        };
        build_cfg(&ast)
            .into_iter()
            .map(|(s, d)| (name(s), name(d)))
            .collect()
    }

    fn has(edges: &[(String, String)], s: &str, d: &str) -> bool {
        edges.iter().any(|(a, b)| a == s && b == d)
    }

    #[test]
    fn return_zero() {
        let e = labelled("fn f() { return 0; }");
        assert_eq!(e, vec![("Entry".into(), "Return@10".into()), ("Return@10".into(), "Exit".into())]);
    }

    #[test]
    fn empty_body() {
        assert_eq!(labelled("fn f() { }"), vec![("Entry".into(), "Exit".into())]);
    }

    #[test]
    fn straight_line_chain() {
        let ast = parse_source("fn f() { a = 1; b = 2; c = 3; }").unwrap();
        assert_eq!(build_cfg(&ast).len(), 4);
    }

    #[test]
    fn if_else_join() {
        let e = labelled("fn f() { if (c) { a = 1; } else { a = 2; } r = a; }");
        assert!(has(&e, "If@10", "Assign@19"));
        assert!(has(&e, "If@10", "Assign@35"));
        assert!(has(&e, "Assign@19", "Assign@44"));
        assert!(has(&e, "Assign@35", "Assign@44"));
        assert_eq!(e.len(), 6);
    }

    #[test]
    fn while_loop() {
        let e = labelled("fn f() { while (c) { x = x + 1; } return x; }");
        assert!(has(&e, "While@10", "Assign@22"));
        assert!(has(&e, "Assign@22", "While@10"));
        assert!(has(&e, "While@10", "Return@35"));
        assert_eq!(e.len(), 5);
    }

    #[test]
    fn if_without_else_falls_through() {
        let e = labelled("fn f() { if (c) { a = 1; } r = a; }");
        assert!(has(&e, "If@10", "Assign@28"));
        assert!(has(&e, "Assign@19", "Assign@28"));
    }

    #[test]
    fn code_after_return_is_dead() {
        let ast = parse_source("fn f() { return 1; x = 2; }").unwrap();
        let cfg = build_cfg(&ast);
        let dead = unreachable_statements(&ast, &cfg);
        assert_eq!(dead.len(), 1);
        assert_eq!(ast.node(dead[0] - 1).kind, NodeKind::Assign);
    }
}
