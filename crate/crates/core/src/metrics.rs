//! Evaluation primitives: F1, ROC AUC, and medians over trials.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// (k, train combo, test combo) -> (F1s, AUCs)
type Groups = BTreeMap<(usize, String, String), (Vec<f64>, Vec<f64>)>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("empty input")]
    Empty,
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    Length { scores: usize, labels: usize },
    #[error("label {0} is not 0 or 1")]
    Label(u8),
    #[error("AUC undefined: labels contain a single class")]
    SingleClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Harmonic mean of precision and recall. Zero when there are no true
    /// positives, including the degenerate case with no positives at all.
    pub fn f1(&self) -> f64 {
        if self.tp == 0 {
            return 0.0;
        }
        2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64
    }
}

fn validate(scores: &[f64], labels: &[u8]) -> Result<(), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::Length {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(&l) = labels.iter().find(|&&l| l > 1) {
        return Err(MetricsError::Label(l));
    }
    Ok(())
}

/// Counts with `score >= threshold` predicted positive.
pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Confusion, MetricsError> {
    validate(scores, labels)?;
    let mut c = Confusion::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn f1_score(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64, MetricsError> {
    Ok(confusion(scores, labels, threshold)?.f1())
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from integer pair counts after one sort, so
/// the result is exactly `(2 * wins + ties) / (2 * n_pos * n_neg)`.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    validate(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    // twice the Mann-Whitney U of the positives
    let mut twice_u: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Median; the mean of the middle two for even counts. `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Identifies one evaluated cell of an experiment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntryKey {
    pub k: usize,
    pub train_combo: String,
    pub test_combo: String,
    pub trial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub f1: f64,
    pub roc_auc: f64,
    pub counts: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub key: EntryKey,
    pub n_pos: usize,
    pub n_neg: usize,
    /// `None` when the cell could not be evaluated; see `flag`.
    pub scores: Option<Scores>,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub k: usize,
    pub train_combo: String,
    pub test_combo: String,
    pub n_trials: usize,
    pub median_f1: f64,
    pub median_roc_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub entries: Vec<Entry>,
}

pub const REPORT_HEADER: &str = "k,train_combo,test_combo,trial,f1,roc_auc,n_pos,n_neg";
pub const MEDIANS_HEADER: &str = "k,train_combo,test_combo,n_trials,median_f1,median_roc_auc";

/// Fixed-precision float formatting shared by every CSV writer.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.6}")
    }
}

impl EvalReport {
    pub fn push(&mut self, entry: Entry) {
        self.entries.push(entry);
    }

    pub fn sort(&mut self) {
        self.entries.sort_by(|a, b| a.key.cmp(&b.key));
    }

    /// Medians of F1 and AUC over trials, one row per (k, train, test).
    /// Flagged entries are skipped; keys with no evaluated trial are omitted.
    pub fn medians(&self) -> Vec<Aggregate> {
        let mut groups: Groups = BTreeMap::new();
        for e in &self.entries {
            if let Some(s) = &e.scores {
                let g = groups
                    .entry((e.key.k, e.key.train_combo.clone(), e.key.test_combo.clone()))
                    .or_default();
                g.0.push(s.f1);
                g.1.push(s.roc_auc);
            }
        }
        groups
            .into_iter()
            .map(|((k, train_combo, test_combo), (f1s, aucs))| Aggregate {
                k,
                train_combo,
                test_combo,
                n_trials: f1s.len(),
                median_f1: median(&f1s).expect("non-empty group"),
                median_roc_auc: median(&aucs).expect("non-empty group"),
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for e in &self.entries {
            let (f1, auc) = e
                .scores
                .as_ref()
                .map_or((f64::NAN, f64::NAN), |s| (s.f1, s.roc_auc));
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                e.key.k,
                e.key.train_combo,
                e.key.test_combo,
                e.key.trial,
                fmt_f64(f1),
                fmt_f64(auc),
                e.n_pos,
                e.n_neg
            )
            .expect("string write");
        }
        out
    }

    pub fn medians_csv(&self) -> String {
        let mut out = String::from(MEDIANS_HEADER);
        out.push('\n');
        for a in self.medians() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                a.k,
                a.train_combo,
                a.test_combo,
                a.n_trials,
                fmt_f64(a.median_f1),
                fmt_f64(a.median_roc_auc)
            )
            .expect("string write");
        }
        out
    }

    /// Parses the per-trial CSV written by [`EvalReport::to_csv`].
    pub fn from_csv(text: &str) -> Result<EvalReport, String> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == REPORT_HEADER => {}
            other => return Err(format!("expected header {REPORT_HEADER:?}, found {other:?}")),
        }
        let mut report = EvalReport::default();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 2;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(format!("line {lineno}: expected 8 fields, found {}", f.len()));
            }
            let num = |s: &str| -> Result<usize, String> {
                s.parse().map_err(|_| format!("line {lineno}: bad integer {s:?}"))
            };
            let real = |s: &str| -> Result<f64, String> {
                s.parse().map_err(|_| format!("line {lineno}: bad number {s:?}"))
            };
            let (f1, auc) = (real(f[4])?, real(f[5])?);
            let scores = (!f1.is_nan() && !auc.is_nan()).then_some(Scores {
                f1,
                roc_auc: auc,
                counts: Confusion::default(),
            });
            let flag = scores.is_none().then(|| "not evaluated".to_string());
            report.push(Entry {
                key: EntryKey {
                    k: num(f[0])?,
                    train_combo: f[1].to_string(),
                    test_combo: f[2].to_string(),
                    trial: num(f[3])?,
                },
                n_pos: num(f[6])?,
                n_neg: num(f[7])?,
                scores,
                flag,
            });
        }
        Ok(report)
    }
}
