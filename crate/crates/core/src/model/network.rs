use super::features::{EncodedGraph, GraphBatch, Vocabulary, NUM_KINDS};
use super::{Head, ModelConfig, ModelError};
use crate::autodiff::{count_triplets, Tape, Tensor, Var};
use crate::cpg::CodeGraph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub type Params = BTreeMap<String, Tensor>;

pub const ENCODER: &[&str] = &[
    "tok_emb", "kind_emb", "feat_w", "feat_b", "msg_w", "gru_w", "gru_u", "gru_b", "gate_w", "gate_b", "out_w",
    "out_b",
];
pub const CLASSIFIER: &[&str] = &["cls_w", "cls_b"];
pub const RESAMPLED: &[&str] = &["res_w", "res_b"];
pub const REPRESENTATION: &[&str] = &["rep_w", "rep_b", "rep_cls_w", "rep_cls_b"];

pub fn head_names(head: Head) -> &'static [&'static str] {
    match head {
        Head::Classifier => CLASSIFIER,
        Head::Resampled => RESAMPLED,
        Head::Representation => REPRESENTATION,
    }
}

/// Seeded initial parameters. Classifier weights start at zero.
pub fn init_params(cfg: &ModelConfig, vocab_len: usize) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (e, h, g, r) = (
        cfg.token_embedding_size,
        cfg.node_hidden_size,
        cfg.graph_embedding_size,
        cfg.representation_size,
    );
    let m = cfg.edge_types_used.len();
    let mut p = Params::new();
    let mut put = |name: &str, t: Tensor| {
        p.insert(name.to_string(), t);
    };
    put("tok_emb", Tensor::uniform(vocab_len, e, 0.1, &mut rng));
    put("kind_emb", Tensor::uniform(NUM_KINDS, e, 0.1, &mut rng));
    put("feat_w", Tensor::glorot(e, h, &mut rng));
    put("feat_b", Tensor::zeros(1, h));
    put("msg_w", Tensor::glorot(m * h, h, &mut rng));
    put("gru_w", Tensor::glorot(h, 3 * h, &mut rng));
    put("gru_u", Tensor::glorot(h, 3 * h, &mut rng));
    put("gru_b", Tensor::zeros(1, 3 * h));
    put("gate_w", Tensor::glorot(2 * h, g, &mut rng));
    put("gate_b", Tensor::zeros(1, g));
    put("out_w", Tensor::glorot(h, g, &mut rng));
    put("out_b", Tensor::zeros(1, g));
    put("cls_w", Tensor::zeros(g, 1));
    put("cls_b", Tensor::zeros(1, 1));
    put("res_w", Tensor::zeros(g, 1));
    put("res_b", Tensor::zeros(1, 1));
    put("rep_w", Tensor::glorot(g, r, &mut rng));
    put("rep_b", Tensor::zeros(1, r));
    put("rep_cls_w", Tensor::zeros(r, 1));
    put("rep_cls_b", Tensor::zeros(1, 1));
    p
}

/// Parameters placed on a tape, by name.
pub struct Bound {
    vars: BTreeMap<&'static str, Var>,
}

impl Bound {
    pub fn new(tape: &mut Tape, params: &Params, names: &[&'static str], trainable: bool) -> Bound {
        let vars = names
            .iter()
            .map(|&n| {
                let t = params[n].clone();
                (n, if trainable { tape.param(t) } else { tape.constant(t) })
            })
            .collect();
        Bound { vars }
    }

    pub fn get(&self, name: &str) -> Var {
        self.vars[name]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, Var)> + '_ {
        self.vars.iter().map(|(&n, &v)| (n, v))
    }
}

/// Graph embeddings (`n_graphs x graph_embedding_size`) for one batch.
pub fn encode(tape: &mut Tape, p: &Bound, b: &GraphBatch, cfg: &ModelConfig) -> Result<Var, ModelError> {
    let n = b.n_nodes;
    let h_dim = cfg.node_hidden_size;
    let e_dim = cfg.token_embedding_size;

    let kind = tape.gather_rows(p.get("kind_emb"), &b.kinds)?;
    let toks = tape.gather_rows(p.get("tok_emb"), &b.tok_ids)?;
    let tok_sum = tape.scatter_add_rows(toks, &b.tok_node, n)?;
    let inv = Tensor::from_vec(n, e_dim, b.inv_count.iter().flat_map(|&c| std::iter::repeat_n(c, e_dim)).collect())?;
    let inv = tape.constant(inv);
    let tok_mean = tape.hadamard(tok_sum, inv)?;
    let feat = tape.add(kind, tok_mean)?;
    let x = tape.matmul(feat, p.get("feat_w"))?;
    let x = tape.add_row(x, p.get("feat_b"))?;

    let mut h = x;
    for _ in 0..cfg.propagation_steps {
        let mut agg: Option<Var> = None;
        for (src, dst) in &b.edges {
            let m = tape.gather_rows(h, src)?;
            let m = tape.scatter_add_rows(m, dst, n)?;
            agg = Some(match agg {
                None => m,
                Some(a) => tape.concat(a, m)?,
            });
        }
        let agg = agg.expect("edge_types_used is non-empty");
        let msg = tape.matmul(agg, p.get("msg_w"))?;
        let aw = tape.matmul(msg, p.get("gru_w"))?;
        let aw = tape.add_row(aw, p.get("gru_b"))?;
        let hu = tape.matmul(h, p.get("gru_u"))?;
        let gate = |tape: &mut Tape, i: usize| -> Result<(Var, Var), ModelError> {
            Ok((
                tape.slice_cols(aw, i * h_dim, (i + 1) * h_dim)?,
                tape.slice_cols(hu, i * h_dim, (i + 1) * h_dim)?,
            ))
        };
        let (az, hz) = gate(tape, 0)?;
        let (ar, hr) = gate(tape, 1)?;
        let (an, hn) = gate(tape, 2)?;
        let z = tape.add(az, hz)?;
        let z = tape.sigmoid(z);
        let r = tape.add(ar, hr)?;
        let r = tape.sigmoid(r);
        let rh = tape.hadamard(r, hn)?;
        let cand = tape.add(an, rh)?;
        let cand = tape.tanh(cand);
        // h' = (1 - z) * cand + z * h
        let diff = tape.sub(h, cand)?;
        let zd = tape.hadamard(z, diff)?;
        h = tape.add(cand, zd)?;
    }

    let hx = tape.concat(h, x)?;
    let gate = tape.matmul(hx, p.get("gate_w"))?;
    let gate = tape.add_row(gate, p.get("gate_b"))?;
    let gate = tape.sigmoid(gate);
    let val = tape.matmul(h, p.get("out_w"))?;
    let val = tape.add_row(val, p.get("out_b"))?;
    let val = tape.tanh(val);
    let per_node = tape.hadamard(gate, val)?;
    Ok(tape.scatter_add_rows(per_node, &b.graph_of, b.n_graphs)?)
}

/// `n x 1` logits of a linear head named by `w` and `b`.
pub fn linear_logits(tape: &mut Tape, p: &Bound, x: Var, w: &str, b: &str) -> Result<Var, ModelError> {
    let z = tape.matmul(x, p.get(w))?;
    Ok(tape.add_row(z, p.get(b))?)
}

/// Projection and logits of the representation head.
pub fn representation_head(tape: &mut Tape, p: &Bound, emb: Var) -> Result<(Var, Var), ModelError> {
    let proj = tape.matmul(emb, p.get("rep_w"))?;
    let proj = tape.add_row(proj, p.get("rep_b"))?;
    let proj = tape.relu(proj);
    let logits = linear_logits(tape, p, proj, "rep_cls_w", "rep_cls_b")?;
    Ok((proj, logits))
}

/// `BCE(logits, labels) + alpha * triplet(projected) + l2 * mean ||projected||^2`.
/// The flag is set when the batch holds no valid triplet, in which case the
/// triplet term is zero.
pub fn representation_loss(
    tape: &mut Tape,
    projected: Var,
    logits: Var,
    labels: &[u8],
    margin: f64,
    alpha: f64,
    l2: f64,
) -> Result<(Var, bool), ModelError> {
    let targets: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let ce = tape.bce_with_logits(logits, &targets)?;
    let trip = tape.triplet_margin(projected, labels, margin)?;
    let trip = tape.scale(trip, alpha);
    let sq = tape.hadamard(projected, projected)?;
    let sq = tape.sum(sq);
    let sq = tape.scale(sq, l2 / labels.len() as f64);
    let loss = tape.add(ce, trip)?;
    let loss = tape.add(loss, sq)?;
    Ok((loss, count_triplets(labels) == 0))
}

/// Logits of `head` applied to embeddings.
pub fn head_logits(tape: &mut Tape, p: &Bound, emb: Var, head: Head) -> Result<Var, ModelError> {
    match head {
        Head::Classifier => linear_logits(tape, p, emb, "cls_w", "cls_b"),
        Head::Resampled => linear_logits(tape, p, emb, "res_w", "res_b"),
        Head::Representation => Ok(representation_head(tape, p, emb)?.1),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn embed_encoded(params: &Params, graphs: &[&EncodedGraph], cfg: &ModelConfig) -> Result<Tensor, ModelError> {
    let g = cfg.graph_embedding_size;
    let mut data = Vec::with_capacity(graphs.len() * g);
    for chunk in graphs.chunks(cfg.batch_size) {
        let mut tape = Tape::new();
        let p = Bound::new(&mut tape, params, ENCODER, false);
        let emb = encode(&mut tape, &p, &GraphBatch::new(chunk, cfg), cfg)?;
        data.extend_from_slice(tape.value(emb).data());
    }
    Ok(Tensor::from_vec(graphs.len(), g, data)?)
}

/// Graph embeddings, one row per graph.
pub fn encode_graphs(
    params: &Params,
    graphs: &[CodeGraph],
    vocab: &Vocabulary,
    cfg: &ModelConfig,
) -> Result<Tensor, ModelError> {
    let enc = graphs
        .iter()
        .map(|g| EncodedGraph::new(g, vocab))
        .collect::<Result<Vec<_>, _>>()?;
    embed_encoded(params, &enc.iter().collect::<Vec<_>>(), cfg)
}

/// Scores of `head` applied to precomputed embeddings.
pub fn score_embeddings(params: &Params, emb: &Tensor, head: Head) -> Result<Vec<f64>, ModelError> {
    let mut tape = Tape::new();
    let p = Bound::new(&mut tape, params, head_names(head), false);
    let x = tape.constant(emb.clone());
    let logits = head_logits(&mut tape, &p, x, head)?;
    Ok(tape.value(logits).data().iter().map(|&z| sigmoid(z)).collect())
}

pub fn score(params: &Params, graphs: &[&EncodedGraph], cfg: &ModelConfig, head: Head) -> Result<Vec<f64>, ModelError> {
    if graphs.is_empty() {
        return Ok(Vec::new());
    }
    let emb = embed_encoded(params, graphs, cfg)?;
    score_embeddings(params, &emb, head)
}
