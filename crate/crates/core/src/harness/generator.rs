//! Seeded synthetic commit corpus.
//!
//! Every commit of strictness k holds one true fix pair and k - 1 noise
//! pairs. A fix pair is an instance of a vulnerability template and its
//! repaired version. A noise pair takes an already safe function from the
//! same area (array reads, sinks, loops) and applies one behaviour-preserving
//! refactoring. Unchanged functions come from unrelated safe families.
//!
//! All functions share a pool of padding statements (bounds checks, `len`
//! and `sanitize` calls, logging) so that the presence of a guard or a
//! sanitiser alone says little about a function.

use crate::corpus::{CommitRecord, PairRecord, PairTag};
use crate::cpg::{build_graph, prune_operator_nodes, EdgeType, GraphOptions};
use crate::minilang::{parse_source, NodeKind, ParseError};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VulnTemplate {
    /// Array read without a bounds check; the fix adds a guard.
    UncheckedIndex,
    /// Input concatenated into a `sink` call; the fix inserts `sanitize`.
    UnsanitizedSink,
    /// Loop bound `<=` over an array; the fix tightens it to `<`.
    OffByOneLoop,
}

impl VulnTemplate {
    pub const ALL: [VulnTemplate; 3] = [
        VulnTemplate::UncheckedIndex,
        VulnTemplate::UnsanitizedSink,
        VulnTemplate::OffByOneLoop,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Rename,
    Reorder,
    ConstantRefactor,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::Rename, NoiseKind::Reorder, NoiseKind::ConstantRefactor];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n_commits: usize,
    /// `(k, weight)` pairs; commit strictness is drawn proportionally.
    pub strictness_distribution: Vec<(usize, u32)>,
    pub vulnerability_templates: Vec<VulnTemplate>,
    pub noise_pair_templates: Vec<NoiseKind>,
    /// Inclusive range of unchanged functions per commit.
    pub functions_per_commit_unchanged: (usize, usize),
    pub seed: u64,
}

/// Commit counts per strictness 1..=14 of the reference Java corpus.
pub const DEFAULT_STRICTNESS: [(usize, u32); 14] = [
    (1, 272),
    (2, 116),
    (3, 77),
    (4, 48),
    (5, 29),
    (6, 26),
    (7, 20),
    (8, 16),
    (9, 14),
    (10, 7),
    (11, 15),
    (12, 7),
    (13, 7),
    (14, 7),
];

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            n_commits: 100,
            strictness_distribution: DEFAULT_STRICTNESS.to_vec(),
            vulnerability_templates: VulnTemplate::ALL.to_vec(),
            noise_pair_templates: NoiseKind::ALL.to_vec(),
            functions_per_commit_unchanged: (8, 20),
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GeneratorError {
    #[error("invalid generator spec: {0}")]
    Spec(String),
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |m: &str| Err(GeneratorError::Spec(m.to_string()));
        if self.strictness_distribution.is_empty() {
            return bad("strictness_distribution is empty");
        }
        if self.strictness_distribution.iter().any(|&(k, w)| k == 0 || w == 0) {
            return bad("strictness levels and weights must be positive");
        }
        if self.vulnerability_templates.is_empty() {
            return bad("no vulnerability templates");
        }
        if self.noise_pair_templates.is_empty() {
            return bad("no noise pair templates");
        }
        let (lo, hi) = self.functions_per_commit_unchanged;
        if lo > hi {
            return bad("functions_per_commit_unchanged range is empty");
        }
        Ok(())
    }
}

/// A function under construction: a header and a list of statement lines.
#[derive(Debug, Clone, PartialEq)]
struct Func {
    name: String,
    params: Vec<(String, &'static str)>,
    body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
struct Stmt {
    text: String,
    /// Independent padding: defines one fresh local and reads only params.
    movable: bool,
}

impl Stmt {
    fn fixed(text: impl Into<String>) -> Stmt {
        Stmt {
            text: text.into(),
            movable: false,
        }
    }
}

impl Func {
    fn render(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|(n, t)| format!("{n}: {t}")).collect();
        let mut s = format!("fn {}({}) {{\n", self.name, params.join(", "));
        for st in &self.body {
            s.push_str("    ");
            s.push_str(&st.text);
            s.push('\n');
        }
        s.push_str("}\n");
        s
    }
}

const WORDS: &[&str] = &[
    "alpha", "bravo", "cache", "delta", "entry", "frame", "group", "header", "index", "journal", "kernel", "limit",
    "member", "node", "offset", "packet", "queue", "record", "socket", "token", "user", "value", "window",
];
const ARRAYS: &[&str] = &["buf", "data", "items", "vals", "table", "slots", "arr", "cells"];
const INTS: &[&str] = &["idx", "pos", "i", "k", "n", "off", "slot", "at"];
const STRS: &[&str] = &["input", "name", "path", "query", "arg", "text", "msg", "field"];
const LOCALS: &[&str] = &["v", "res", "out", "acc", "tmp", "cur", "hold", "got"];

struct Gen {
    rng: ChaCha8Rng,
    fresh: usize,
}

impl Gen {
    fn pick<'a>(&mut self, pool: &'a [&'a str]) -> &'a str {
        pool[self.rng.gen_range(0..pool.len())]
    }

    fn ident(&mut self, pool: &[&str]) -> String {
        let base = self.pick(pool).to_string();
        if self.rng.gen_bool(0.5) {
            format!("{base}{}", self.rng.gen_range(0..10))
        } else {
            base
        }
    }

    /// A name not used before in this function.
    fn local(&mut self, prefix: &str) -> String {
        self.fresh += 1;
        format!("{prefix}{}", self.fresh)
    }

    fn word(&mut self) -> String {
        self.pick(WORDS).to_string()
    }

    fn func_name(&mut self, verbs: &[&str]) -> String {
        let verb = self.pick(verbs);
        let noun = self.pick(WORDS);
        format!("{verb}_{noun}{}", self.rng.gen_range(0..100))
    }

    /// Independent padding statement reading only `params`.
    fn pad_let(&mut self, params: &[(String, &'static str)]) -> Stmt {
        let t = self.local("t");
        let arr = params.iter().find(|p| p.1 == "int[]" || p.1 == "str").map(|p| p.0.clone());
        let text = match (self.rng.gen_range(0..4), arr) {
            (0, Some(a)) => format!("let {t} = len({a});"),
            (1, _) => format!("let {t} = sanitize(\"{}\");", self.word()),
            (2, _) => format!("let {t} = {};", self.rng.gen_range(1..50)),
            _ => format!("let {t} = len(\"{}\");", self.word()),
        };
        Stmt { text, movable: true }
    }

    /// Padding that may touch control flow or side effects.
    fn pad_any(&mut self, params: &[(String, &'static str)]) -> Stmt {
        let int = params.iter().find(|p| p.1 == "int").map(|p| p.0.clone());
        match (self.rng.gen_range(0..4), int) {
            (0, Some(i)) => Stmt::fixed(format!("if ({i} < 0) {{ return 0; }}")),
            (1, _) => Stmt::fixed(format!("log(\"{}\");", self.word())),
            (2, _) => Stmt::fixed(format!("audit(\"{}\");", self.word())),
            _ => self.pad_let(params),
        }
    }

    fn padding(&mut self, params: &[(String, &'static str)], min: usize, max: usize) -> Vec<Stmt> {
        let n = self.rng.gen_range(min..=max);
        (0..n).map(|_| self.pad_any(params)).collect()
    }

    /// Vulnerable function and its fix, sharing every other statement.
    fn vulnerable_pair(&mut self, t: VulnTemplate) -> (Func, Func) {
        self.fresh = 0;
        match t {
            VulnTemplate::UncheckedIndex => {
                let (arr, idx, v) = (self.ident(ARRAYS), self.ident(INTS), self.ident(LOCALS));
                let params = vec![(arr.clone(), "int[]"), (idx.clone(), "int")];
                let name = self.func_name(&["read", "fetch", "load", "get", "peek"]);
                let pre = self.padding(&params, 1, 3);
                let post = self.padding(&params, 0, 2);
                let c = self.rng.gen_range(1..9);
                let read = Stmt::fixed(format!("let {v} = {arr}[{idx}];"));
                let tail = vec![Stmt::fixed(format!("{v} = {v} + {c};")), Stmt::fixed(format!("return {v};"))];
                let before_body: Vec<Stmt> = pre.iter().cloned().chain([read.clone()]).chain(post.clone()).chain(tail.clone()).collect();
                let fix: Vec<Stmt> = if self.rng.gen_bool(0.5) {
                    vec![Stmt::fixed(format!("if ({idx} >= len({arr})) {{ return 0; }}")), read]
                } else {
                    vec![
                        Stmt::fixed(format!("let {v} = 0;")),
                        Stmt::fixed(format!("if ({idx} < len({arr})) {{ {v} = {arr}[{idx}]; }}")),
                    ]
                };
                let after_body = pre.into_iter().chain(fix).chain(post).chain(tail).collect();
                (
                    Func { name: name.clone(), params: params.clone(), body: before_body },
                    Func { name, params, body: after_body },
                )
            }
            VulnTemplate::UnsanitizedSink => {
                let (inp, q) = (self.ident(STRS), self.ident(LOCALS));
                let params = vec![(inp.clone(), "str")];
                let name = self.func_name(&["send", "emit", "write", "store", "exec"]);
                let pre = self.padding(&params, 1, 3);
                let post = self.padding(&params, 0, 2);
                let prefix = self.word();
                let concat = Stmt::fixed(format!("let {q} = \"{prefix}:\" + {inp};"));
                let tail = vec![Stmt::fixed(format!("sink({q});")), Stmt::fixed("return 0;")];
                let before_body: Vec<Stmt> = pre.iter().cloned().chain([concat]).chain(post.clone()).chain(tail.clone()).collect();
                let fix: Vec<Stmt> = if self.rng.gen_bool(0.5) {
                    vec![
                        Stmt::fixed(format!("{inp} = sanitize({inp});")),
                        Stmt::fixed(format!("let {q} = \"{prefix}:\" + {inp};")),
                    ]
                } else {
                    vec![Stmt::fixed(format!("let {q} = \"{prefix}:\" + sanitize({inp});"))]
                };
                let after_body = pre.into_iter().chain(fix).chain(post).chain(tail).collect();
                (
                    Func { name: name.clone(), params: params.clone(), body: before_body },
                    Func { name, params, body: after_body },
                )
            }
            VulnTemplate::OffByOneLoop => {
                let (buf, i, tot) = (self.ident(ARRAYS), self.local("i"), self.ident(LOCALS));
                let params = vec![(buf.clone(), "int[]")];
                let name = self.func_name(&["sum", "scan", "copy", "count", "fold"]);
                let pre = self.padding(&params, 1, 3);
                let post = self.padding(&params, 0, 2);
                let init = vec![Stmt::fixed(format!("let {i} = 0;")), Stmt::fixed(format!("let {tot} = 0;"))];
                let body = format!("{{ {tot} = {tot} + {buf}[{i}]; {i} = {i} + 1; }}");
                let lp = |op: &str| Stmt::fixed(format!("while ({i} {op} len({buf})) {body}"));
                let ret = Stmt::fixed(format!("return {tot};"));
                let mk = |l: Stmt| -> Vec<Stmt> {
                    pre.iter().cloned().chain(init.clone()).chain([l]).chain(post.clone()).chain([ret.clone()]).collect()
                };
                (
                    Func { name: name.clone(), params: params.clone(), body: mk(lp("<=")) },
                    Func { name, params, body: mk(lp("<")) },
                )
            }
        }
    }

    /// An already safe function from the changed area with at least two
    /// adjacent movable statements and one integer literal.
    fn safe_area_function(&mut self, t: VulnTemplate) -> Func {
        let (_, mut f) = self.vulnerable_pair(t);
        let a = self.pad_let(&f.params);
        let b = Stmt {
            text: format!("let {} = {};", self.local("c"), self.rng.gen_range(2..60)),
            movable: true,
        };
        f.body.insert(0, b);
        f.body.insert(0, a);
        f
    }

    fn noise_pair(&mut self, t: VulnTemplate, kind: NoiseKind) -> (Func, Func) {
        let before = self.safe_area_function(t);
        let mut after = before.clone();
        match kind {
            NoiseKind::Rename => {
                // rename the function and one parameter
                let (old, _) = after.params[self.rng.gen_range(0..after.params.len())].clone();
                let new = format!("{old}_r{}", self.rng.gen_range(0..10));
                for p in &mut after.params {
                    if p.0 == old {
                        p.0 = new.clone();
                    }
                }
                for s in &mut after.body {
                    s.text = rename_ident(&s.text, &old, &new);
                }
                after.name = format!("{}_v2", after.name);
            }
            NoiseKind::Reorder => {
                let spots: Vec<usize> = (0..after.body.len() - 1)
                    .filter(|&i| after.body[i].movable && after.body[i + 1].movable)
                    .filter(|&i| after.body[i].text != after.body[i + 1].text)
                    .collect();
                let i = spots[self.rng.gen_range(0..spots.len())];
                after.body.swap(i, i + 1);
            }
            NoiseKind::ConstantRefactor => {
                let spots: Vec<usize> = (0..after.body.len()).filter(|&i| literal_let(&after.body[i].text).is_some()).collect();
                let i = spots[self.rng.gen_range(0..spots.len())];
                let (lhs, c) = literal_let(&after.body[i].text).expect("literal let");
                let d = self.rng.gen_range(1..10);
                after.body[i].text = format!("{lhs} = ({} - {d}) + {d};", c + d);
            }
        }
        (before, after)
    }

    fn unchanged_function(&mut self) -> Func {
        self.fresh = 0;
        let w = self.word();
        match self.rng.gen_range(0..5) {
            0 => {
                let (n, c, s, i) = (self.ident(INTS), format!("c{}", self.rng.gen_range(0..10)), self.local("s"), self.local("j"));
                let params = vec![(n.clone(), "int"), (c.clone(), "int")];
                let mut body = vec![Stmt::fixed(format!("let {s} = 0;")), Stmt::fixed(format!("let {i} = 0;"))];
                body.extend(self.padding(&params, 0, 2));
                body.push(Stmt::fixed(format!("while ({i} < {n}) {{ {s} = {s} + {i} * {c}; {i} = {i} + 1; }}")));
                body.push(Stmt::fixed(format!("return {s};")));
                Func { name: self.func_name(&["total", "accumulate", "series"]), params, body }
            }
            1 => {
                let (a, b, m) = (self.ident(STRS), format!("{}_b", self.ident(STRS)), self.local("m"));
                let params = vec![(a.clone(), "str"), (b.clone(), "str")];
                let mut body = vec![Stmt::fixed(format!("let {m} = {a} + \": \" + {b};"))];
                body.extend(self.padding(&params, 0, 2));
                body.push(Stmt::fixed(format!("log({m});")));
                body.push(Stmt::fixed(format!("return {m};")));
                Func { name: self.func_name(&["format", "describe", "label"]), params, body }
            }
            2 => {
                let (x, y) = (format!("x{}", self.rng.gen_range(0..10)), format!("y{}", self.rng.gen_range(0..10)));
                let params = vec![(x.clone(), "int"), (y.clone(), "int")];
                let mut body = self.padding(&params, 0, 2);
                body.push(Stmt::fixed(format!(
                    "if ({x} > {y}) {{ return {x} - {y}; }} else {{ return {y} - {x}; }}"
                )));
                Func { name: self.func_name(&["diff", "distance", "gap"]), params, body }
            }
            3 => {
                let (p, q, r) = (format!("p{}", self.rng.gen_range(0..10)), format!("q{}", self.rng.gen_range(0..10)), self.local("r"));
                let params = vec![(p.clone(), "bool"), (q.clone(), "bool")];
                let mut body = vec![Stmt::fixed(format!("let {r} = {p} && !{q};"))];
                body.extend(self.padding(&params, 0, 2));
                body.push(Stmt::fixed(format!("if ({r}) {{ notify(\"{w}\"); }}")));
                body.push(Stmt::fixed(format!("return {r};")));
                Func { name: self.func_name(&["check", "should", "allow"]), params, body }
            }
            _ => {
                let (key, v) = (self.ident(STRS), self.local("cfg"));
                let params = vec![(key.clone(), "str")];
                let mut body = vec![Stmt::fixed(format!("let {v} = lookup({key});"))];
                body.extend(self.padding(&params, 0, 2));
                body.push(Stmt::fixed(format!("if ({v} == \"\") {{ {v} = \"{w}\"; }}")));
                body.push(Stmt::fixed(format!("return {v};")));
                Func { name: self.func_name(&["setting", "option", "config"]), params, body }
            }
        }
    }
}

/// `let NAME = INT;` split into (`let NAME`, INT).
fn literal_let(text: &str) -> Option<(String, i64)> {
    let rest = text.strip_prefix("let ")?.strip_suffix(';')?;
    let (name, value) = rest.split_once(" = ")?;
    let c: i64 = value.trim().parse().ok()?;
    Some((format!("let {}", name.trim()), c))
}

/// Replaces whole identifiers `old` outside string literals.
fn rename_ident(text: &str, old: &str, new: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.char_indices().peekable();
    let mut in_str = false;
    while let Some((i, c)) = chars.next() {
        if in_str {
            out.push(c);
            if c == '\\' {
                if let Some((_, e)) = chars.next() {
                    out.push(e);
                }
            } else if c == '"' {
                in_str = false;
            }
        } else if c == '"' {
            in_str = true;
            out.push(c);
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = chars.peek() {
                if d.is_ascii_alphanumeric() || d == '_' {
                    end = j + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let word = &text[i..end];
            out.push_str(if word == old { new } else { word });
        } else {
            out.push(c);
        }
    }
    out
}

/// Multiset of `(source kind, target kind, edge type)` over the CFG and DDG
/// edges of the pruned graph. Equal shapes for a noise pair mean the
/// refactoring left control and data flow intact.
pub fn flow_shape(source: &str) -> Result<Vec<(NodeKind, NodeKind, EdgeType)>, ParseError> {
    let g = prune_operator_nodes(&build_graph(&parse_source(source)?, GraphOptions::full()));
    let mut shape: Vec<(NodeKind, NodeKind, EdgeType)> = g
        .edges
        .iter()
        .filter(|e| e.etype != EdgeType::Ast)
        .map(|e| {
            let kind = |id| g.node(id).expect("edge endpoint").kind;
            (kind(e.src), kind(e.dst), e.etype)
        })
        .collect();
    shape.sort();
    Ok(shape)
}

/// Generates the corpus described by `spec`, one record per commit.
pub fn generate_corpus(spec: &GeneratorSpec) -> Result<Vec<CommitRecord>, GeneratorError> {
    spec.validate()?;
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        fresh: 0,
    };
    let dist = WeightedIndex::new(spec.strictness_distribution.iter().map(|&(_, w)| w))
        .map_err(|e| GeneratorError::Spec(e.to_string()))?;
    let (lo, hi) = spec.functions_per_commit_unchanged;
    let mut out = Vec::with_capacity(spec.n_commits);
    for c in 0..spec.n_commits {
        let k = spec.strictness_distribution[dist.sample(&mut g.rng)].0;
        let fix_at = g.rng.gen_range(0..k);
        let mut changed = Vec::with_capacity(k);
        for slot in 0..k {
            let t = *spec.vulnerability_templates.choose(&mut g.rng).expect("non-empty");
            let (before, after, tag) = if slot == fix_at {
                let (b, a) = g.vulnerable_pair(t);
                (b, a, PairTag::Fix)
            } else {
                let kind = *spec.noise_pair_templates.choose(&mut g.rng).expect("non-empty");
                let (b, a) = g.noise_pair(t, kind);
                (b, a, PairTag::Noise)
            };
            changed.push(PairRecord {
                before: before.render(),
                after: after.render(),
                tag: Some(tag),
            });
        }
        let n_unchanged = g.rng.gen_range(lo..=hi);
        let unchanged = (0..n_unchanged).map(|_| g.unchanged_function().render()).collect();
        out.push(CommitRecord {
            commit_id: format!("c{c:05}"),
            changed,
            unchanged,
        });
    }
    Ok(out)
}

pub fn corpus_to_jsonl(records: &[CommitRecord]) -> String {
    records.iter().map(CommitRecord::to_line).collect()
}

/// Small functions (at most `max_statements` statement nodes) built from
/// the generator's statement forms, for exhaustive dataflow checks.
pub fn small_programs(seed: u64, count: usize, max_statements: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut budget = rng.gen_range(1..=max_statements.max(1));
            let body = small_block(&mut rng, &mut budget, 0);
            format!("fn f(a: int, b: int[]) {{ {} }}", body.join(" "))
        })
        .collect()
}

fn small_block(rng: &mut ChaCha8Rng, budget: &mut usize, depth: usize) -> Vec<String> {
    const VARS: [&str; 3] = ["a", "x", "y"];
    let mut out = Vec::new();
    let n = rng.gen_range(1..=3);
    for _ in 0..n {
        if *budget == 0 {
            break;
        }
        *budget -= 1;
        let v = VARS[rng.gen_range(0..3)];
        let w = VARS[rng.gen_range(0..3)];
        let choice = if depth >= 2 || *budget == 0 { rng.gen_range(0..5) } else { rng.gen_range(0..8) };
        let s = match choice {
            0 => format!("let {v} = {w} + 1;"),
            1 => format!("{v} = {w} * 2;"),
            2 => format!("b[{w}] = {v};"),
            3 => format!("log({v}, b[{w}]);"),
            4 => format!("{v} = len(b) - {w};"),
            5 | 6 => {
                let then = small_block(rng, budget, depth + 1).join(" ");
                if rng.gen_bool(0.5) && *budget > 0 {
                    let els = small_block(rng, budget, depth + 1).join(" ");
                    format!("if ({v} < {w}) {{ {then} }} else {{ {els} }}")
                } else {
                    format!("if ({v} < {w}) {{ {then} }}")
                }
            }
            _ => {
                let body = small_block(rng, budget, depth + 1).join(" ");
                format!("while ({v} < 10) {{ {body} }}")
            }
        };
        out.push(s);
    }
    if depth == 0 && *budget > 0 && rng.gen_bool(0.5) {
        *budget -= 1;
        out.push(format!("return {};", VARS[rng.gen_range(0..3)]));
    }
    out
}
