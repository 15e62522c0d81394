use super::{CorpusError, LabeledFunction, Part, PartSet, Partition};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub stratify_by_label: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.75,
            validation_fraction: 0.10,
            test_fraction: 0.15,
            seed: 0,
            stratify_by_label: true,
        }
    }
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        SplitSpec { seed, ..Self::default() }
    }

    /// Train and test fractions must be positive; validation may be zero.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let f = [self.train_fraction, self.validation_fraction, self.test_fraction];
        if f.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(CorpusError::InvalidSplit(format!("fractions must be non-negative, got {f:?}")));
        }
        if self.train_fraction == 0.0 || self.test_fraction == 0.0 {
            return Err(CorpusError::InvalidSplit("train and test fractions must be positive".into()));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidSplit(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Splits {
    pub train: Vec<LabeledFunction>,
    pub validation: Vec<LabeledFunction>,
    pub test: Vec<LabeledFunction>,
    /// Test records dropped because their hash occurs in train or validation.
    pub test_leakage_removed: usize,
    /// Validation records dropped because their hash occurs in train.
    pub validation_leakage_removed: usize,
}

impl Splits {
    pub fn manifest(&self) -> String {
        let rows = [("train", &self.train), ("validation", &self.validation), ("test", &self.test)]
            .into_iter()
            .flat_map(|(name, v)| v.iter().map(move |r| (r, name)));
        write_manifest(rows)
    }
}

fn hashes(v: &[LabeledFunction]) -> HashSet<&str> {
    v.iter().map(|r| r.record.normalized_hash.as_str()).collect()
}

/// Stratified split of an arbitrary record list. Each (part, label) group is
/// shuffled and cut into `round(n * f_test)` test and `round(n * f_val)`
/// validation records (at least one of each when the fraction is positive);
/// the rest train. Groups are visited in (part, label) order from one seeded
/// stream, so a group's split does not depend on groups after it.
pub fn split_records(records: &[LabeledFunction], spec: &SplitSpec) -> Result<Splits, CorpusError> {
    spec.validate()?;
    let mut groups: BTreeMap<(Part, u8), Vec<&LabeledFunction>> = BTreeMap::new();
    for r in records {
        let label = if spec.stratify_by_label { r.label } else { 0 };
        groups.entry((r.part, label)).or_default().push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Splits::default();
    for ((part, label), mut g) in groups {
        let n = g.len();
        g.shuffle(&mut rng);
        let cut = |f: f64| if f > 0.0 { ((n as f64 * f).round() as usize).max(1) } else { 0 };
        let (n_test, n_val) = (cut(spec.test_fraction), cut(spec.validation_fraction));
        if n_test + n_val >= n {
            return Err(CorpusError::PartTooSmall { part, label, size: n });
        }
        out.test.extend(g[..n_test].iter().map(|&r| r.clone()));
        out.validation.extend(g[n_test..n_test + n_val].iter().map(|&r| r.clone()));
        out.train.extend(g[n_test + n_val..].iter().map(|&r| r.clone()));
    }
    for v in [&mut out.train, &mut out.validation, &mut out.test] {
        v.sort_by(|a, b| (a.part, &a.record.id).cmp(&(b.part, &b.record.id)));
    }

    let train_h: HashSet<String> = hashes(&out.train).into_iter().map(str::to_string).collect();
    let n_val = out.validation.len();
    out.validation.retain(|r| !train_h.contains(&r.record.normalized_hash));
    out.validation_leakage_removed = n_val - out.validation.len();
    let val_h: HashSet<String> = hashes(&out.validation).into_iter().map(str::to_string).collect();
    let n_test = out.test.len();
    out.test
        .retain(|r| !train_h.contains(&r.record.normalized_hash) && !val_h.contains(&r.record.normalized_hash));
    out.test_leakage_removed = n_test - out.test.len();
    Ok(out)
}

/// Splits every part of a cleaned partition; see [`split_records`].
pub fn split_dataset(p: &Partition, spec: &SplitSpec) -> Result<Splits, CorpusError> {
    let all: Vec<LabeledFunction> = p.records().cloned().collect();
    split_records(&all, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    /// Vulnerable functions against their own fixed versions.
    T1,
    /// Functions touched by fixing commits against random safe code.
    T2,
    /// Composition of T1 and T2; reporting only.
    T0,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "T0" => Ok(TaskKind::T0),
            "T1" => Ok(TaskKind::T1),
            "T2" => Ok(TaskKind::T2),
            _ => Err(format!("unknown task {s:?}")),
        }
    }
}

/// Restricts `records` to the parts in `combo`, then relabels. T1 keeps
/// before/after labels and drops P3; T2 marks all of P1 and P2 positive and
/// P3 negative.
pub fn relabel_for_task(
    records: &[LabeledFunction],
    task: TaskKind,
    combo: PartSet,
) -> Result<Vec<LabeledFunction>, CorpusError> {
    let kept = records.iter().filter(|r| combo.contains(r.part));
    match task {
        TaskKind::T0 => Err(CorpusError::ComposedTask),
        TaskKind::T1 => Ok(kept.filter(|r| r.part != Part::P3).cloned().collect()),
        TaskKind::T2 => {
            let out: Vec<LabeledFunction> = kept
                .map(|r| LabeledFunction {
                    label: u8::from(r.part != Part::P3),
                    ..r.clone()
                })
                .collect();
            if !out.iter().any(|r| r.part == Part::P3) {
                return Err(CorpusError::EmptyP3);
            }
            Ok(out)
        }
    }
}

/// CSV with header `function_id,part,label,split,normalized_hash`.
pub fn write_manifest<'a>(rows: impl IntoIterator<Item = (&'a LabeledFunction, &'a str)>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["function_id", "part", "label", "split", "normalized_hash"])
        .expect("in-memory write");
    for (r, split) in rows {
        let label = r.label.to_string();
        w.write_record([r.record.id.as_str(), r.part.as_str(), &label, split, &r.record.normalized_hash])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}
