use super::{ModelConfig, ModelError};
use crate::cpg::{CodeGraph, EdgeType};
use crate::minilang::NodeKind;
use std::collections::{BTreeMap, HashMap};

pub const UNKNOWN: &str = "<unk>";

/// Token → index map frozen at training time. Index 0 is reserved for
/// tokens never seen in training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps the `max_size - 1` most frequent tokens, ties broken by text.
    pub fn build<'a>(graphs: impl IntoIterator<Item = &'a CodeGraph>, max_size: usize) -> Vocabulary {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for g in graphs {
            for n in &g.nodes {
                for t in &n.tokens {
                    *counts.entry(t.as_str()).or_insert(0) += 1;
                }
            }
        }
        let mut by_freq: Vec<(&str, usize)> = counts.into_iter().collect();
        by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = std::iter::once(UNKNOWN.to_string())
            .chain(
                by_freq
                    .into_iter()
                    .filter(|(t, _)| *t != UNKNOWN)
                    .take(max_size.saturating_sub(1))
                    .map(|(t, _)| t.to_string()),
            )
            .collect();
        Vocabulary::from_tokens(tokens).expect("distinct tokens")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocabulary, String> {
        if tokens.first().map(String::as_str) != Some(UNKNOWN) {
            return Err(format!("vocabulary must start with {UNKNOWN}"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(format!("duplicate vocabulary token {t:?}"));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }
}

/// A graph reduced to index form: node kinds, token ids, and edges by type
/// over positions `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedGraph {
    pub kinds: Vec<usize>,
    pub tokens: Vec<Vec<usize>>,
    pub edges: [Vec<(usize, usize)>; 3],
    pub label: u8,
}

impl EncodedGraph {
    pub fn new(g: &CodeGraph, vocab: &Vocabulary) -> Result<EncodedGraph, ModelError> {
        if g.nodes.is_empty() {
            return Err(ModelError::EmptyGraph);
        }
        let pos: HashMap<usize, usize> = g.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let mut edges: [Vec<(usize, usize)>; 3] = Default::default();
        for e in &g.edges {
            let (Some(&s), Some(&d)) = (pos.get(&e.src), pos.get(&e.dst)) else {
                return Err(ModelError::Config(format!("edge {}->{} references a missing node", e.src, e.dst)));
            };
            edges[e.etype.index()].push((s, d));
        }
        Ok(EncodedGraph {
            kinds: g.nodes.iter().map(|n| n.kind.index()).collect(),
            tokens: g
                .nodes
                .iter()
                .map(|n| n.tokens.iter().map(|t| vocab.lookup(t)).collect())
                .collect(),
            edges,
            label: g.label,
        })
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }
}

pub const NUM_KINDS: usize = NodeKind::ALL.len();

/// Several graphs flattened into one disjoint union.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub n_nodes: usize,
    pub n_graphs: usize,
    pub kinds: Vec<usize>,
    /// Flattened token ids and the node each occurrence belongs to.
    pub tok_ids: Vec<usize>,
    pub tok_node: Vec<usize>,
    /// `1 / token count` per node, 0 for token-less nodes.
    pub inv_count: Vec<f64>,
    /// `(src, dst)` index lists, one per edge type in `edge_types_used`.
    pub edges: Vec<(Vec<usize>, Vec<usize>)>,
    pub graph_of: Vec<usize>,
    pub labels: Vec<u8>,
}

impl GraphBatch {
    pub fn new(graphs: &[&EncodedGraph], config: &ModelConfig) -> GraphBatch {
        let used: Vec<EdgeType> = config.edge_types_used.iter().copied().collect();
        let mut b = GraphBatch {
            n_nodes: 0,
            n_graphs: graphs.len(),
            kinds: Vec::new(),
            tok_ids: Vec::new(),
            tok_node: Vec::new(),
            inv_count: Vec::new(),
            edges: vec![(Vec::new(), Vec::new()); used.len()],
            graph_of: Vec::new(),
            labels: graphs.iter().map(|g| g.label).collect(),
        };
        for (gi, g) in graphs.iter().enumerate() {
            let off = b.n_nodes;
            b.kinds.extend(&g.kinds);
            for (i, toks) in g.tokens.iter().enumerate() {
                b.tok_ids.extend(toks);
                b.tok_node.extend(std::iter::repeat_n(off + i, toks.len()));
                b.inv_count.push(if toks.is_empty() { 0.0 } else { 1.0 / toks.len() as f64 });
            }
            for (slot, et) in used.iter().enumerate() {
                for &(s, d) in &g.edges[et.index()] {
                    b.edges[slot].0.push(off + s);
                    b.edges[slot].1.push(off + d);
                }
            }
            b.graph_of.extend(std::iter::repeat_n(gi, g.len()));
            b.n_nodes += g.len();
        }
        b
    }
}
