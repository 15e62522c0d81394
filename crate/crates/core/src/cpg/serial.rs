//! JSON graph files.
//!
//! One compact JSON object per file: `nodes`, `edges`, `label`, `meta` in
//! that order; nodes in id order; edges sorted by `(etype, src, dst)`.

use super::{CodeGraph, EdgeType};
use std::collections::BTreeSet;

#[derive(Debug, thiserror::Error)]
pub enum GraphFormatError {
    #[error("{path}: {message}")]
    Malformed { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl GraphFormatError {
    pub fn path(&self) -> &str {
        match self {
            GraphFormatError::Malformed { path, .. } | GraphFormatError::Invalid { path, .. } => path,
        }
    }

    fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        GraphFormatError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub fn serialize(g: &CodeGraph) -> Vec<u8> {
    let mut canonical = g.clone();
    canonical.nodes.sort_by_key(|n| n.id);
    canonical.sort_edges();
    let mut bytes = serde_json::to_vec(&canonical).expect("graph serializes");
    bytes.push(b'\n');
    bytes
}

pub fn deserialize(bytes: &[u8]) -> Result<CodeGraph, GraphFormatError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let mut g: CodeGraph = serde_path_to_error::deserialize(de).map_err(|e| {
        GraphFormatError::Malformed {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        }
    })?;
    validate(&g)?;
    g.sort_edges();
    Ok(g)
}

fn validate(g: &CodeGraph) -> Result<(), GraphFormatError> {
    let mut ids = BTreeSet::new();
    for (i, n) in g.nodes.iter().enumerate() {
        if !ids.insert(n.id) {
            return Err(GraphFormatError::invalid(format!("nodes[{i}].id"), "duplicate node id"));
        }
        if i > 0 && n.id < g.nodes[i - 1].id {
            return Err(GraphFormatError::invalid(format!("nodes[{i}].id"), "node ids out of order"));
        }
    }
    for (i, n) in g.nodes.iter().enumerate() {
        if let Some(p) = n.parent {
            if !ids.contains(&p) {
                return Err(GraphFormatError::invalid(format!("nodes[{i}].parent"), "unknown node"));
            }
        }
    }
    let mut seen = BTreeSet::new();
    for (i, e) in g.edges.iter().enumerate() {
        if !ids.contains(&e.src) {
            return Err(GraphFormatError::invalid(format!("edges[{i}].src"), "unknown node"));
        }
        if !ids.contains(&e.dst) {
            return Err(GraphFormatError::invalid(format!("edges[{i}].dst"), "unknown node"));
        }
        if !seen.insert((e.etype, e.src, e.dst)) {
            return Err(GraphFormatError::invalid(format!("edges[{i}]"), "duplicate edge"));
        }
        if e.etype == EdgeType::Ast && !g.meta.ast_included {
            return Err(GraphFormatError::invalid(
                format!("edges[{i}].etype"),
                "AST edge in a graph built without AST edges",
            ));
        }
    }
    if g.label > 1 {
        return Err(GraphFormatError::invalid("label", "label must be 0 or 1"));
    }
    Ok(())
}
