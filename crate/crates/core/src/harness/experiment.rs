//! Experiment protocols. A run is a grid of independent cells, one per
//! (k, trial, train variant). Every cell rebuilds its partition and split
//! from a seed derived from (spec seed, k, trial), so cells sharing k and
//! trial see the same data whatever their train combo, and cells can run in
//! any order or in parallel.

use crate::corpus::{
    build_partition, relabel_for_task, split_records, Commit, CorpusError, LabeledFunction, Part, PartSet, Role,
    SplitSpec, Splits, TaskKind,
};
use crate::cpg::{build_graph, CodeGraph, EdgeType, GraphOptions};
use crate::metrics::{confusion, roc_auc, Entry, EntryKey, EvalReport, Scores};
use crate::minilang::parse_source;
use crate::model::{train, ModelConfig, ModelError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("empty report")]
    EmptyReport,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rq {
    Rq1,
    Rq2,
    Rq3,
    Rq4,
    Rq5,
    Rq6,
}

impl Rq {
    pub fn as_str(self) -> &'static str {
        match self {
            Rq::Rq1 => "rq1",
            Rq::Rq2 => "rq2",
            Rq::Rq3 => "rq3",
            Rq::Rq4 => "rq4",
            Rq::Rq5 => "rq5",
            Rq::Rq6 => "rq6",
        }
    }
}

impl fmt::Display for Rq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Rq {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rq1" => Ok(Rq::Rq1),
            "rq2" => Ok(Rq::Rq2),
            "rq3" => Ok(Rq::Rq3),
            "rq4" => Ok(Rq::Rq4),
            "rq5" => Ok(Rq::Rq5),
            "rq6" => Ok(Rq::Rq6),
            _ => Err(format!("unknown research question {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub rq: Rq,
    /// Inclusive strictness levels; ignored by RQ1.
    pub k_range: (usize, usize),
    pub train_combos: Vec<PartSet>,
    /// Every trained model is scored on each of these.
    pub test_combos: Vec<PartSet>,
    pub trials: usize,
    /// RQ6 only: fractions of the P3 training records kept.
    pub p3_train_fractions: Vec<f64>,
    pub prune_operators: bool,
    pub split: SplitSpec,
    pub base_config: ModelConfig,
    pub seed: u64,
}

fn sets(names: &[&str]) -> Vec<PartSet> {
    names.iter().map(|s| s.parse().expect("literal part set")).collect()
}

impl ExperimentSpec {
    /// Protocol defaults for one research question, on the desk model.
    pub fn for_rq(rq: Rq) -> ExperimentSpec {
        let all = PartSet::all_nonempty();
        let (k_range, train_combos, test_combos, trials) = match rq {
            Rq::Rq1 => ((0, 0), Vec::new(), Vec::new(), 10),
            Rq::Rq2 => ((1, 8), all, sets(&["P1+P2+P3", "P1+P3"]), 3),
            Rq::Rq3 => ((1, 8), all, sets(&["P1"]), 3),
            Rq::Rq4 => ((1, 8), sets(&["P1+P3", "P2+P3", "P1+P2+P3"]), sets(&["P1+P3"]), 3),
            Rq::Rq5 => (
                (1, 8),
                all.into_iter().filter(|c| c.contains(Part::P2)).collect(),
                sets(&["P1+P2"]),
                3,
            ),
            Rq::Rq6 => ((4, 4), sets(&["P1+P2+P3"]), sets(&["P1+P3"]), 3),
        };
        ExperimentSpec {
            rq,
            k_range,
            train_combos,
            test_combos,
            trials,
            p3_train_fractions: if rq == Rq::Rq6 { vec![0.1, 0.25, 0.5, 0.75, 1.0] } else { Vec::new() },
            prune_operators: false,
            split: SplitSpec::default(),
            base_config: ModelConfig::desk(),
            seed: 0,
        }
    }

    /// Reads a TOML spec. `rq` is required; other keys override the
    /// protocol defaults, and a `[model]` table overrides the desk model.
    pub fn from_toml(text: &str) -> Result<ExperimentSpec, ExperimentError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            rq: Rq,
            k_range: Option<(usize, usize)>,
            train_combos: Option<Vec<PartSet>>,
            test_combos: Option<Vec<PartSet>>,
            trials: Option<usize>,
            p3_train_fractions: Option<Vec<f64>>,
            prune_operators: Option<bool>,
            split: Option<SplitSpec>,
            model: Option<toml::Table>,
            seed: Option<u64>,
        }
        let de = toml::Deserializer::parse(text).map_err(|e| ExperimentError::Spec(e.to_string()))?;
        let raw: Raw = serde_path_to_error::deserialize(de).map_err(|e| ExperimentError::Spec(e.to_string()))?;
        let mut spec = ExperimentSpec::for_rq(raw.rq);
        if let Some(v) = raw.k_range {
            spec.k_range = v;
        }
        if let Some(v) = raw.train_combos {
            spec.train_combos = v;
        }
        if let Some(v) = raw.test_combos {
            spec.test_combos = v;
        }
        if let Some(v) = raw.trials {
            spec.trials = v;
        }
        if let Some(v) = raw.p3_train_fractions {
            spec.p3_train_fractions = v;
        }
        if let Some(v) = raw.prune_operators {
            spec.prune_operators = v;
        }
        if let Some(v) = raw.split {
            spec.split = v;
        }
        if let Some(v) = raw.seed {
            spec.seed = v;
        }
        if let Some(overrides) = raw.model {
            spec.base_config = merge_model(&spec.base_config, overrides)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Spec(m));
        self.base_config.validate()?;
        self.split.validate()?;
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if self.rq == Rq::Rq1 {
            return Ok(());
        }
        let (lo, hi) = self.k_range;
        if lo == 0 || lo > hi {
            return bad(format!("k_range {lo}..{hi} is empty or starts at 0"));
        }
        if self.train_combos.is_empty() || self.test_combos.is_empty() {
            return bad("train and test combos must be non-empty".into());
        }
        if self.rq == Rq::Rq4 {
            if let Some(c) = self.train_combos.iter().chain(&self.test_combos).find(|c| !c.contains(Part::P3)) {
                return bad(format!("{c}: the relabelled task needs P3 in every combo"));
            }
        }
        if self.rq == Rq::Rq6 {
            if lo != hi {
                return bad("rq6 sweeps P3 at a single k".into());
            }
            if self.p3_train_fractions.is_empty()
                || self.p3_train_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0))
            {
                return bad("p3_train_fractions must be non-empty and lie in (0, 1]".into());
            }
        }
        Ok(())
    }

    pub fn task(&self) -> TaskKind {
        if self.rq == Rq::Rq4 {
            TaskKind::T2
        } else {
            TaskKind::T1
        }
    }
}

/// Overlays `overrides` on `base` key by key.
pub fn merge_model(base: &ModelConfig, overrides: toml::Table) -> Result<ModelConfig, ExperimentError> {
    let spec_err = |e: String| ExperimentError::Spec(format!("model: {e}"));
    let mut table = toml::Table::try_from(base).map_err(|e| spec_err(e.to_string()))?;
    table.extend(overrides);
    let cfg: ModelConfig = serde_path_to_error::deserialize(toml::Value::Table(table))
        .map_err(|e| spec_err(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Seed of one (k, trial) cell.
pub fn cell_seed(seed: u64, k: usize, trial: usize) -> u64 {
    // splitmix64 finaliser over the packed triple
    let mut z = seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (trial as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Graphs of every distinct function in the corpus, keyed by normalised
/// hash. Labels are filled in per use.
pub struct GraphCache {
    graphs: HashMap<String, CodeGraph>,
}

impl GraphCache {
    pub fn build(commits: &[Commit], prune_operators: bool) -> GraphCache {
        let mut sources: HashMap<&str, &str> = HashMap::new();
        for c in commits {
            let records = c.changed.iter().flat_map(|p| [&p.before, &p.after]).chain(&c.unchanged);
            for r in records {
                sources.entry(&r.normalized_hash).or_insert(&r.source);
            }
        }
        let options = GraphOptions {
            include_ast_edges: true,
            prune_operators,
        };
        let graphs = sources
            .into_par_iter()
            .map(|(h, src)| {
                let ast = parse_source(src).expect("ingested sources parse");
                (h.to_string(), build_graph(&ast, options))
            })
            .collect();
        GraphCache { graphs }
    }

    pub fn labelled(&self, records: &[LabeledFunction]) -> Vec<CodeGraph> {
        records
            .iter()
            .map(|r| {
                let mut g = self.graphs[&r.record.normalized_hash].clone();
                g.label = r.label;
                g
            })
            .collect()
    }
}

fn flagged(key: EntryKey, records: &[LabeledFunction], flag: impl Into<String>) -> Entry {
    let n_pos = records.iter().filter(|r| r.label == 1).count();
    Entry {
        key,
        n_pos,
        n_neg: records.len() - n_pos,
        scores: None,
        flag: Some(flag.into()),
    }
}

fn key(k: usize, train: &str, test: &str, trial: usize) -> EntryKey {
    EntryKey {
        k,
        train_combo: train.to_string(),
        test_combo: test.to_string(),
        trial,
    }
}

/// One train set, one model, scored on every test set.
struct Cell<'a> {
    k: usize,
    trial: usize,
    train_label: String,
    train: Vec<LabeledFunction>,
    validation: Vec<LabeledFunction>,
    tests: Vec<(String, Vec<LabeledFunction>)>,
    config: ModelConfig,
    cache: &'a GraphCache,
}

impl Cell<'_> {
    fn run(self) -> Result<Vec<Entry>, ExperimentError> {
        let flag_all = |why: &str| -> Vec<Entry> {
            self.tests
                .iter()
                .map(|(name, t)| flagged(key(self.k, &self.train_label, name, self.trial), t, why))
                .collect()
        };
        if self.train.is_empty() {
            return Ok(flag_all("empty train set"));
        }
        let model = match train(&self.cache.labelled(&self.train), &self.cache.labelled(&self.validation), &self.config) {
            Ok(m) => m,
            Err(ModelError::SingleClass) => return Ok(flag_all("single-class train set")),
            Err(e) => return Err(e.into()),
        };
        let mut out = Vec::with_capacity(self.tests.len());
        for (name, test) in &self.tests {
            let key = key(self.k, &self.train_label, name, self.trial);
            let labels: Vec<u8> = test.iter().map(|r| r.label).collect();
            if !labels.contains(&0) || !labels.contains(&1) {
                out.push(flagged(key, test, "single-class test set"));
                continue;
            }
            let scores = model.predict_batch(&self.cache.labelled(test))?;
            let counts = confusion(&scores, &labels, self.config.threshold).expect("validated input");
            let auc = roc_auc(&scores, &labels).expect("both classes present");
            let n_pos = labels.iter().filter(|&&l| l == 1).count();
            out.push(Entry {
                key,
                n_pos,
                n_neg: labels.len() - n_pos,
                scores: Some(Scores {
                    f1: counts.f1(),
                    roc_auc: auc,
                    counts,
                }),
                flag: None,
            });
        }
        Ok(out)
    }
}

fn run_cells(cells: Vec<Cell<'_>>, mut report: EvalReport) -> Result<EvalReport, ExperimentError> {
    let results: Vec<Result<Vec<Entry>, ExperimentError>> = cells.into_par_iter().map(Cell::run).collect();
    for r in results {
        report.entries.extend(r?);
    }
    report.sort();
    Ok(report)
}

/// Records of the parts in `combo`, labelled for `task`. Under T1 the raw
/// labels are kept, including safe P3 records.
pub fn select_records(
    records: &[LabeledFunction],
    task: TaskKind,
    combo: PartSet,
) -> Result<Vec<LabeledFunction>, CorpusError> {
    match task {
        TaskKind::T1 => Ok(records.iter().filter(|r| combo.contains(r.part)).cloned().collect()),
        _ => relabel_for_task(records, task, combo),
    }
}

/// Partition at `k` and its split, both seeded by `seed`.
pub fn partition_splits(commits: &[Commit], k: usize, seed: u64, split: &SplitSpec) -> Result<Splits, CorpusError> {
    let partition = build_partition(commits, k, seed)?;
    let records: Vec<LabeledFunction> = partition.records().cloned().collect();
    split_records(&records, &SplitSpec { seed, ..*split })
}

/// Partition and split at one (k, trial), or a flag explaining why not.
fn cell_data(commits: &[Commit], spec: &ExperimentSpec, k: usize, seed: u64) -> Result<Result<Splits, String>, ExperimentError> {
    match partition_splits(commits, k, seed, &spec.split) {
        Ok(s) => Ok(Ok(s)),
        Err(e @ (CorpusError::EmptyPartition | CorpusError::PartTooSmall { .. })) => Ok(Err(e.to_string())),
        Err(e) => Err(e.into()),
    }
}

fn sweep(
    commits: &[Commit],
    spec: &ExperimentSpec,
    cache: &GraphCache,
    // train combos expanded into (label, combo, P3 fraction)
    variants: &[(String, PartSet, Option<f64>)],
) -> Result<EvalReport, ExperimentError> {
    if commits.is_empty() {
        return Err(CorpusError::EmptyCorpus.into());
    }
    let task = spec.task();
    let mut report = EvalReport::default();
    let mut cells = Vec::new();
    for k in spec.k_range.0..=spec.k_range.1 {
        for trial in 0..spec.trials {
            let seed = cell_seed(spec.seed, k, trial);
            let splits = match cell_data(commits, spec, k, seed)? {
                Ok(s) => s,
                Err(why) => {
                    for (label, _, _) in variants {
                        for t in &spec.test_combos {
                            report.push(flagged(key(k, label, &t.to_string(), trial), &[], why.clone()));
                        }
                    }
                    continue;
                }
            };
            let mut tests = Vec::new();
            for t in &spec.test_combos {
                match select_records(&splits.test, task, *t) {
                    Ok(v) => tests.push((t.to_string(), v)),
                    Err(e) => {
                        for (label, _, _) in variants {
                            report.push(flagged(key(k, label, &t.to_string(), trial), &[], e.to_string()));
                        }
                    }
                }
            }
            for (label, combo, fraction) in variants {
                let train_set = select_records(&splits.train, task, *combo).and_then(|mut tr| {
                    if let Some(f) = fraction {
                        tr = subsample_p3(tr, *f, seed);
                    }
                    Ok((tr, select_records(&splits.validation, task, *combo)?))
                });
                let (train_set, validation) = match train_set {
                    Ok(v) => v,
                    Err(e) => {
                        for (name, t) in &tests {
                            report.push(flagged(key(k, label, name, trial), t, e.to_string()));
                        }
                        continue;
                    }
                };
                if fraction.is_some() && !train_set.iter().any(|r| r.part == Part::P3) {
                    for (name, t) in &tests {
                        report.push(flagged(key(k, label, name, trial), t, "empty P3 train subsample"));
                    }
                    continue;
                }
                cells.push(Cell {
                    k,
                    trial,
                    train_label: label.clone(),
                    train: train_set,
                    validation,
                    tests: tests.clone(),
                    config: ModelConfig { seed, ..spec.base_config.clone() },
                    cache,
                });
            }
        }
    }
    run_cells(cells, report)
}

/// Keeps a seeded prefix of the P3 records. Prefixes are nested across
/// fractions, and the kept records stay in their original order, so
/// fraction 1.0 reproduces the unsampled train set exactly.
pub fn subsample_p3(records: Vec<LabeledFunction>, fraction: f64, seed: u64) -> Vec<LabeledFunction> {
    let mut p3: Vec<usize> = (0..records.len()).filter(|&i| records[i].part == Part::P3).collect();
    p3.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5033));
    let keep_n = (fraction * p3.len() as f64).ceil() as usize;
    let dropped: HashSet<usize> = p3[keep_n.min(p3.len())..].iter().copied().collect();
    records
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !dropped.contains(i))
        .map(|(_, r)| r)
        .collect()
}

fn plain_variants(spec: &ExperimentSpec) -> Vec<(String, PartSet, Option<f64>)> {
    spec.train_combos.iter().map(|c| (c.to_string(), *c, None)).collect()
}

/// RQ2, RQ3 and RQ5: AUC against k for each train combo.
pub fn run_partition_sweep(commits: &[Commit], spec: &ExperimentSpec) -> Result<EvalReport, ExperimentError> {
    if !matches!(spec.rq, Rq::Rq2 | Rq::Rq3 | Rq::Rq5) {
        return Err(ExperimentError::Spec(format!("{} is not a partition sweep", spec.rq)));
    }
    spec.validate()?;
    let cache = GraphCache::build(commits, spec.prune_operators);
    sweep(commits, spec, &cache, &plain_variants(spec))
}

/// Potentially-vulnerable against random safe code: P1 and P2 positive, P3
/// negative, on both sides.
pub fn run_rq4(commits: &[Commit], spec: &ExperimentSpec) -> Result<EvalReport, ExperimentError> {
    if spec.rq != Rq::Rq4 {
        return Err(ExperimentError::Spec("run_rq4 needs an rq4 spec".into()));
    }
    spec.validate()?;
    let cache = GraphCache::build(commits, spec.prune_operators);
    sweep(commits, spec, &cache, &plain_variants(spec))
}

/// Label of an RQ6 train set: combo and P3 fraction.
pub fn fraction_label(combo: PartSet, fraction: f64) -> String {
    format!("{combo}@{fraction:.2}")
}

/// Splits an RQ6 label back into combo and fraction.
pub fn parse_fraction_label(label: &str) -> Option<(&str, f64)> {
    let (combo, f) = label.split_once('@')?;
    Some((combo, f.parse().ok()?))
}

/// Sweeps the fraction of P3 training records at one k with the test set
/// held fixed.
pub fn run_rq6(commits: &[Commit], spec: &ExperimentSpec) -> Result<EvalReport, ExperimentError> {
    if spec.rq != Rq::Rq6 {
        return Err(ExperimentError::Spec("run_rq6 needs an rq6 spec".into()));
    }
    spec.validate()?;
    let cache = GraphCache::build(commits, spec.prune_operators);
    let variants: Vec<(String, PartSet, Option<f64>)> = spec
        .train_combos
        .iter()
        .flat_map(|c| spec.p3_train_fractions.iter().map(move |&f| (fraction_label(*c, f), *c, Some(f))))
        .collect();
    sweep(commits, spec, &cache, &variants)
}

/// One of the five model variants compared on the unpartitioned corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rq1Config {
    Baseline,
    WithoutSmoteRl,
    WithoutAstEdges,
    WithPruning,
    MajorityDownsampling,
}

impl Rq1Config {
    pub const ALL: [Rq1Config; 5] = [
        Rq1Config::Baseline,
        Rq1Config::WithoutSmoteRl,
        Rq1Config::WithoutAstEdges,
        Rq1Config::WithPruning,
        Rq1Config::MajorityDownsampling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rq1Config::Baseline => "baseline",
            Rq1Config::WithoutSmoteRl => "without_smote_rl",
            Rq1Config::WithoutAstEdges => "without_ast_edges",
            Rq1Config::WithPruning => "with_pruning",
            Rq1Config::MajorityDownsampling => "majority_downsampling",
        }
    }

    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone();
        match self {
            Rq1Config::Baseline | Rq1Config::WithPruning => {}
            Rq1Config::WithoutSmoteRl => {
                c.use_smote = false;
                c.use_representation_learning = false;
            }
            Rq1Config::WithoutAstEdges => {
                c.edge_types_used = [EdgeType::Cfg, EdgeType::Ddg].into_iter().collect();
            }
            Rq1Config::MajorityDownsampling => {
                c.use_smote = false;
                c.downsample_majority = true;
            }
        }
        c
    }
}

/// Every distinct function of the corpus with commit-level labels: the
/// pre-change version of any changed pair is vulnerable, everything else
/// is clean. The first occurrence of a hash wins.
pub fn unpartitioned_records(commits: &[Commit]) -> Vec<LabeledFunction> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for c in commits {
        let part = if c.changed.len() == 1 { Part::P1 } else { Part::P2 };
        let changed = c
            .changed
            .iter()
            .flat_map(|p| [(&p.before, 1u8, Role::Before, p.tag), (&p.after, 0, Role::After, p.tag)]);
        let unchanged = c.unchanged.iter().map(|u| (u, 0u8, Role::Unchanged, None));
        for (rec, label, role, tag) in changed.chain(unchanged) {
            if seen.insert(rec.normalized_hash.clone()) {
                out.push(LabeledFunction {
                    record: rec.clone(),
                    label,
                    part: if role == Role::Unchanged { Part::P3 } else { part },
                    commit_id: c.commit_id.clone(),
                    role,
                    tag,
                });
            }
        }
    }
    out
}

/// Five model variants on fresh splits of the unpartitioned corpus.
pub fn run_rq1(commits: &[Commit], spec: &ExperimentSpec) -> Result<EvalReport, ExperimentError> {
    if spec.rq != Rq::Rq1 {
        return Err(ExperimentError::Spec("run_rq1 needs an rq1 spec".into()));
    }
    spec.validate()?;
    let records = unpartitioned_records(commits);
    if records.is_empty() {
        return Err(CorpusError::EmptyCorpus.into());
    }
    let full = GraphCache::build(commits, false);
    let pruned = GraphCache::build(commits, true);
    let mut cells = Vec::new();
    for trial in 0..spec.trials {
        let seed = cell_seed(spec.seed, 0, trial);
        let splits = split_records(&records, &SplitSpec { seed, ..spec.split })?;
        for cfg in Rq1Config::ALL {
            cells.push(Cell {
                k: 0,
                trial,
                train_label: cfg.name().to_string(),
                train: splits.train.clone(),
                validation: splits.validation.clone(),
                tests: vec![("all".to_string(), splits.test.clone())],
                config: ModelConfig { seed, ..cfg.apply(&spec.base_config) },
                cache: if cfg == Rq1Config::WithPruning { &pruned } else { &full },
            });
        }
    }
    run_cells(cells, EvalReport::default())
}

/// Dispatches on `spec.rq`.
pub fn run_experiment(commits: &[Commit], spec: &ExperimentSpec) -> Result<EvalReport, ExperimentError> {
    match spec.rq {
        Rq::Rq1 => run_rq1(commits, spec),
        Rq::Rq2 | Rq::Rq3 | Rq::Rq5 => run_partition_sweep(commits, spec),
        Rq::Rq4 => run_rq4(commits, spec),
        Rq::Rq6 => run_rq6(commits, spec),
    }
}
