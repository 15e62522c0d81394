use super::lexer::Token;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Syntactic category of a node. `Entry` and `Exit` never occur in a parsed
/// tree; they are the synthetic CFG endpoints added by the graph builder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Function,
    Param,
    Block,
    Decl,
    Assign,
    If,
    While,
    Return,
    Call,
    BinaryOp,
    UnaryOp,
    Index,
    Literal,
    Var,
    Entry,
    Exit,
}

impl NodeKind {
    pub const ALL: [NodeKind; 16] = [
        NodeKind::Function,
        NodeKind::Param,
        NodeKind::Block,
        NodeKind::Decl,
        NodeKind::Assign,
        NodeKind::If,
        NodeKind::While,
        NodeKind::Return,
        NodeKind::Call,
        NodeKind::BinaryOp,
        NodeKind::UnaryOp,
        NodeKind::Index,
        NodeKind::Literal,
        NodeKind::Var,
        NodeKind::Entry,
        NodeKind::Exit,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Function => "Function",
            NodeKind::Param => "Param",
            NodeKind::Block => "Block",
            NodeKind::Decl => "Decl",
            NodeKind::Assign => "Assign",
            NodeKind::If => "If",
            NodeKind::While => "While",
            NodeKind::Return => "Return",
            NodeKind::Call => "Call",
            NodeKind::BinaryOp => "BinaryOp",
            NodeKind::UnaryOp => "UnaryOp",
            NodeKind::Index => "Index",
            NodeKind::Literal => "Literal",
            NodeKind::Var => "Var",
            NodeKind::Entry => "Entry",
            NodeKind::Exit => "Exit",
        }
    }

    /// Kinds that can appear as a statement directly inside a block.
    pub fn is_statement(self) -> bool {
        matches!(
            self,
            NodeKind::Decl
                | NodeKind::Assign
                | NodeKind::If
                | NodeKind::While
                | NodeKind::Return
                | NodeKind::Call
        )
    }

    pub fn is_operator(self) -> bool {
        matches!(self, NodeKind::BinaryOp | NodeKind::UnaryOp | NodeKind::Index)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown node kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    /// Pre-order position, unique within the function.
    pub id: usize,
    pub kind: NodeKind,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Lexemes owned by this node, in source order.
    pub tokens: Vec<Token>,
}

/// A parsed function as a pre-order arena. Node 0 is the `Function` root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ast {
    pub nodes: Vec<AstNode>,
}

impl Ast {
    pub fn root(&self) -> &AstNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &AstNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Name of the function (second token of the root).
    pub fn function_name(&self) -> &str {
        &self.root().tokens[1].text
    }

    /// Parameter names in declaration order.
    pub fn params(&self) -> Vec<&str> {
        self.root()
            .children
            .iter()
            .map(|&c| &self.nodes[c])
            .filter(|n| n.kind == NodeKind::Param)
            .map(|n| n.tokens[0].text.as_str())
            .collect()
    }

    /// The function body block.
    pub fn body(&self) -> usize {
        *self.root().children.last().expect("function has a body")
    }

    /// Statement-level nodes are statements whose parent is a block.
    pub fn is_statement_level(&self, id: usize) -> bool {
        let n = &self.nodes[id];
        n.kind.is_statement()
            && n.parent
                .is_some_and(|p| self.nodes[p].kind == NodeKind::Block)
    }

    /// Ids of the subtree rooted at `id`, in pre-order.
    pub fn subtree(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n].children.iter().rev());
        }
        out
    }

    /// All lexemes of the tree, in source order.
    pub fn lexemes(&self) -> Vec<&str> {
        let mut toks: Vec<&Token> = self.nodes.iter().flat_map(|n| n.tokens.iter()).collect();
        toks.sort_by_key(|t| t.offset);
        toks.into_iter().map(|t| t.text.as_str()).collect()
    }
}

/// Owned tree produced by the parser before pre-order numbering.
#[derive(Debug, Clone)]
pub(crate) struct Tree {
    pub kind: NodeKind,
    pub tokens: Vec<Token>,
    pub children: Vec<Tree>,
}

impl Tree {
    pub fn new(kind: NodeKind) -> Self {
        Tree {
            kind,
            tokens: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn into_ast(self) -> Ast {
        let mut nodes = Vec::new();
        flatten(self, None, &mut nodes);
        Ast { nodes }
    }
}

fn flatten(tree: Tree, parent: Option<usize>, out: &mut Vec<AstNode>) -> usize {
    let id = out.len();
    let mut tokens = tree.tokens;
    tokens.sort_by_key(|t| t.offset);
    out.push(AstNode {
        id,
        kind: tree.kind,
        parent,
        children: Vec::new(),
        tokens,
    });
    let children: Vec<usize> = tree
        .children
        .into_iter()
        .map(|c| flatten(c, Some(id), out))
        .collect();
    out[id].children = children;
    id
}
