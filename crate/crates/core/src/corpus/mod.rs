//! Commit corpora, the P1/P2/P3 partition at strictness level k, and
//! labelled train/validation/test splits.
//!
//! A commit of strictness k changes exactly k functions. P1 holds both sides
//! of every pair from 1-strict commits, P2 both sides of every pair from
//! j-strict commits with `2 <= j <= k`, and P3 a seeded sample of the
//! unchanged functions of 1-strict commits, sized to match `|P1| + |P2|`.
//!
//! Input is line-delimited JSON, one commit per line:
//!
//! ```text
//! {"commit_id": "c1", "changed": [{"before": "...", "after": "..."}], "unchanged": ["..."]}
//! ```
//!
//! A changed pair may carry an optional `"tag": "fix" | "noise"` recording
//! how it was produced. Tags never influence labels.

mod partition;
mod split;

pub use partition::{build_partition, clean_partition, CleanReport, Partition};
pub use split::{relabel_for_task, split_dataset, split_records, write_manifest, SplitSpec, Splits, TaskKind};

use crate::minilang;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty partition: no 1-strict commits")]
    EmptyPartition,
    #[error("part {part} too small to split ({size} records with label {label})")]
    PartTooSmall { part: Part, label: u8, size: usize },
    #[error("task T2 needs P3 records but none are present")]
    EmptyP3,
    #[error("task T0 is a reporting label and cannot be used for training or relabelling")]
    ComposedTask,
    #[error("invalid split spec: {0}")]
    InvalidSplit(String),
    #[error("level_k must be at least 1")]
    InvalidLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub id: String,
    pub source: String,
    pub normalized_hash: String,
}

impl FunctionRecord {
    /// Parses `source` and hashes its lexemes; fails if it does not parse.
    pub fn new(id: impl Into<String>, source: impl Into<String>) -> Result<Self, minilang::ParseError> {
        let source = source.into();
        minilang::parse_source(&source)?;
        let normalized_hash = normalized_hash(&minilang::normalize(&source)?);
        Ok(FunctionRecord {
            id: id.into(),
            source,
            normalized_hash,
        })
    }
}

/// Lowercase hex SHA-256 of an already normalised source string.
pub fn normalized_hash(normalized: &str) -> String {
    Sha256::digest(normalized.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairTag {
    Fix,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangedPair {
    pub before: FunctionRecord,
    pub after: FunctionRecord,
    pub tag: Option<PairTag>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commit {
    pub commit_id: String,
    pub changed: Vec<ChangedPair>,
    pub unchanged: Vec<FunctionRecord>,
}

/// Number of changed pairs in a commit.
pub fn classify_strictness(commit: &Commit) -> usize {
    commit.changed.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Part {
    P1,
    P2,
    P3,
}

impl Part {
    pub const ALL: [Part; 3] = [Part::P1, Part::P2, Part::P3];

    pub fn as_str(self) -> &'static str {
        match self {
            Part::P1 => "P1",
            Part::P2 => "P2",
            Part::P3 => "P3",
        }
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Part {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "P1" | "p1" => Ok(Part::P1),
            "P2" | "p2" => Ok(Part::P2),
            "P3" | "p3" => Ok(Part::P3),
            other => Err(format!("unknown part {other:?}")),
        }
    }
}

/// A non-empty subset of {P1, P2, P3}, written `P1+P3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartSet(u8);

impl PartSet {
    pub fn new(parts: &[Part]) -> PartSet {
        PartSet(parts.iter().fold(0, |m, &p| m | 1 << p as u8))
    }

    pub fn contains(self, p: Part) -> bool {
        self.0 & (1 << p as u8) != 0
    }

    pub fn parts(self) -> Vec<Part> {
        Part::ALL.into_iter().filter(|&p| self.contains(p)).collect()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// All seven non-empty subsets, singletons first.
    pub fn all_nonempty() -> Vec<PartSet> {
        let mut v: Vec<PartSet> = (1u8..8).map(PartSet).collect();
        v.sort_by_key(|s| (s.0.count_ones(), s.0));
        v
    }
}

impl fmt::Display for PartSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.parts().into_iter().map(Part::as_str).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for PartSet {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts = s
            .split(['+', '∪', ','])
            .map(str::parse)
            .collect::<Result<Vec<Part>, _>>()?;
        let set = PartSet::new(&parts);
        if set.is_empty() {
            return Err("empty part set".into());
        }
        Ok(set)
    }
}

impl Serialize for PartSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PartSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Before,
    After,
    Unchanged,
}

/// A function placed in a part, with its binary label (1 = vulnerable).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledFunction {
    pub record: FunctionRecord,
    pub label: u8,
    pub part: Part,
    pub commit_id: String,
    pub role: Role,
    pub tag: Option<PairTag>,
}

/// Counts of commits rejected during ingestion, by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestDiagnostics {
    pub lines: usize,
    pub accepted: usize,
    pub unparseable: usize,
    pub identical_pair: usize,
    pub no_changes: usize,
    pub duplicate_id: usize,
}

impl IngestDiagnostics {
    pub fn rejected(&self) -> usize {
        self.unparseable + self.identical_pair + self.no_changes + self.duplicate_id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub before: String,
    pub after: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<PairTag>,
}

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitRecord {
    pub commit_id: String,
    pub changed: Vec<PairRecord>,
    #[serde(default)]
    pub unchanged: Vec<String>,
}

impl CommitRecord {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("commit record serialises");
        s.push('\n');
        s
    }
}

enum Rejection {
    Unparseable,
    Identical,
    NoChanges,
}

fn validate_record(rec: &CommitRecord) -> Result<Commit, Rejection> {
    if rec.changed.is_empty() {
        return Err(Rejection::NoChanges);
    }
    let id = &rec.commit_id;
    let func = |suffix: String, src: &str| {
        FunctionRecord::new(format!("{id}:{suffix}"), src).map_err(|_| Rejection::Unparseable)
    };
    let mut changed = Vec::with_capacity(rec.changed.len());
    for (i, p) in rec.changed.iter().enumerate() {
        let before = func(format!("b{i}"), &p.before)?;
        let after = func(format!("a{i}"), &p.after)?;
        if before.normalized_hash == after.normalized_hash {
            return Err(Rejection::Identical);
        }
        changed.push(ChangedPair {
            before,
            after,
            tag: p.tag,
        });
    }
    let unchanged = rec
        .unchanged
        .iter()
        .enumerate()
        .map(|(i, s)| func(format!("u{i}"), s))
        .collect::<Result<_, _>>()?;
    Ok(Commit {
        commit_id: id.clone(),
        changed,
        unchanged,
    })
}

/// Parses corpus text. Malformed lines are fatal; commits that violate the
/// commit invariants are dropped and counted.
pub fn parse_commits(text: &str) -> Result<(Vec<Commit>, IngestDiagnostics), CorpusError> {
    let mut diag = IngestDiagnostics::default();
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        diag.lines += 1;
        let mut de = serde_json::Deserializer::from_str(line);
        let rec: CommitRecord = serde_path_to_error::deserialize(&mut de).map_err(|e| CorpusError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.commit_id.clone()) {
            diag.duplicate_id += 1;
            continue;
        }
        match validate_record(&rec) {
            Ok(c) => {
                diag.accepted += 1;
                out.push(c);
            }
            Err(Rejection::Unparseable) => diag.unparseable += 1,
            Err(Rejection::Identical) => diag.identical_pair += 1,
            Err(Rejection::NoChanges) => diag.no_changes += 1,
        }
    }
    if diag.lines == 0 {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok((out, diag))
}

pub fn ingest_commits(path: &Path) -> Result<(Vec<Commit>, IngestDiagnostics), CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_commits(&text)
}

/// Strictness histogram, k → number of commits.
pub fn strictness_histogram(commits: &[Commit]) -> std::collections::BTreeMap<usize, usize> {
    let mut h = std::collections::BTreeMap::new();
    for c in commits {
        *h.entry(classify_strictness(c)).or_insert(0) += 1;
    }
    h
}
