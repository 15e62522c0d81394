//! Code property graphs: AST, CFG and DDG edges over the nodes of one function.

pub mod cfg;
pub mod ddg;
mod prune;
mod serial;

use crate::minilang::{Ast, NodeKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

pub use cfg::build_cfg;
pub use ddg::build_ddg;
pub use prune::prune_operator_nodes;
pub use serial::{deserialize, serialize, GraphFormatError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeType {
    #[serde(rename = "AST")]
    Ast,
    #[serde(rename = "CFG")]
    Cfg,
    #[serde(rename = "DDG")]
    Ddg,
}

impl EdgeType {
    pub const ALL: [EdgeType; 3] = [EdgeType::Ast, EdgeType::Cfg, EdgeType::Ddg];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeType::Ast => "AST",
            EdgeType::Cfg => "CFG",
            EdgeType::Ddg => "DDG",
        }
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub kind: NodeKind,
    pub tokens: Vec<String>,
    /// AST parent, kept even when AST edges are excluded so that the tree
    /// shape survives for pruning.
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub etype: EdgeType,
}

impl Edge {
    fn sort_key(&self) -> (EdgeType, usize, usize) {
        (self.etype, self.src, self.dst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GraphMeta {
    pub function_id: String,
    pub part: Option<String>,
    pub pruned: bool,
    pub ast_included: bool,
    /// Statement nodes unreachable from `Entry`.
    pub dead: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<Edge>,
    pub label: u8,
    pub meta: GraphMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GraphOptions {
    pub include_ast_edges: bool,
    pub prune_operators: bool,
}

impl GraphOptions {
    pub fn full() -> Self {
        GraphOptions {
            include_ast_edges: true,
            prune_operators: false,
        }
    }
}

/// Builds the code property graph of one parsed function. Node 0 is the
/// synthetic `Entry`, AST node `a` becomes node `a + 1`, and the synthetic
/// `Exit` comes last, so ids follow AST pre-order.
pub fn build_graph(ast: &Ast, options: GraphOptions) -> CodeGraph {
    let exit = cfg::exit_id(ast);
    let mut nodes = Vec::with_capacity(ast.len() + 2);
    nodes.push(GraphNode {
        id: cfg::entry_id(),
        kind: NodeKind::Entry,
        tokens: Vec::new(),
        parent: None,
    });
    for n in &ast.nodes {
        nodes.push(GraphNode {
            id: cfg::graph_id(n.id),
            kind: n.kind,
            tokens: n.tokens.iter().map(|t| t.text.clone()).collect(),
            parent: n.parent.map(cfg::graph_id),
        });
    }
    nodes.push(GraphNode {
        id: exit,
        kind: NodeKind::Exit,
        tokens: Vec::new(),
        parent: None,
    });

    let mut edges = BTreeSet::new();
    if options.include_ast_edges {
        for n in &ast.nodes {
            for &c in &n.children {
                edges.insert(Edge {
                    src: cfg::graph_id(n.id),
                    dst: cfg::graph_id(c),
                    etype: EdgeType::Ast,
                });
            }
        }
    }
    let cfg_edges = build_cfg(ast);
    let ddg_edges = build_ddg(&cfg_edges, ast);
    let dead = cfg::unreachable_statements(ast, &cfg_edges);
    for (src, dst) in cfg_edges {
        edges.insert(Edge { src, dst, etype: EdgeType::Cfg });
    }
    for (src, dst) in ddg_edges {
        edges.insert(Edge { src, dst, etype: EdgeType::Ddg });
    }

    let mut g = CodeGraph {
        nodes,
        edges: edges.into_iter().collect(),
        label: 0,
        meta: GraphMeta {
            function_id: ast.function_name().to_string(),
            part: None,
            pruned: false,
            ast_included: options.include_ast_edges,
            dead,
        },
    };
    g.sort_edges();
    if options.prune_operators {
        g = prune_operator_nodes(&g);
    }
    g
}

impl CodeGraph {
    pub fn sort_edges(&mut self) {
        self.edges.sort_by_key(Edge::sort_key);
        self.edges.dedup();
    }

    pub fn edges_of(&self, etype: EdgeType) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.etype == etype)
    }

    pub fn node(&self, id: usize) -> Option<&GraphNode> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .ok()
            .map(|i| &self.nodes[i])
    }

    /// Drops every edge of the given type; clears `ast_included` for AST.
    pub fn without_edge_type(&self, etype: EdgeType) -> CodeGraph {
        let mut g = self.clone();
        g.edges.retain(|e| e.etype != etype);
        if etype == EdgeType::Ast {
            g.meta.ast_included = false;
        }
        g
    }

    /// Statement-level nodes: statement kinds whose parent is a block.
    pub fn is_statement_level(&self, id: usize) -> bool {
        let Some(n) = self.node(id) else { return false };
        n.kind.is_statement()
            && n.parent
                .and_then(|p| self.node(p))
                .is_some_and(|p| p.kind == NodeKind::Block)
    }

    /// Multiset of all lexemes carried by the nodes, sorted.
    pub fn token_multiset(&self) -> Vec<&str> {
        let mut t: Vec<&str> = self
            .nodes
            .iter()
            .flat_map(|n| n.tokens.iter().map(String::as_str))
            .collect();
        t.sort_unstable();
        t
    }
}
