use super::{classify_strictness, Commit, CorpusError, LabeledFunction, Part, PairTag, Role};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::HashSet;

/// Records removed by one cleaning pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CleanReport {
    /// Duplicate hashes dropped inside P1, P2 and the P3 pool.
    pub within_part: [usize; 3],
    pub p2_in_p1: usize,
    pub p3_in_p1_p2: usize,
}

impl CleanReport {
    pub fn cross_part(&self) -> usize {
        self.p2_in_p1 + self.p3_in_p1_p2
    }

    pub fn total(&self) -> usize {
        self.within_part.iter().sum::<usize>() + self.cross_part()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    pub level_k: usize,
    pub p1: Vec<LabeledFunction>,
    pub p2: Vec<LabeledFunction>,
    pub p3: Vec<LabeledFunction>,
    /// Shuffled unchanged functions not drawn into `p3`, used to refill it
    /// after removals.
    pub p3_reserve: Vec<LabeledFunction>,
    /// Set when fewer than `|p1| + |p2|` unchanged functions were available.
    pub p3_short: bool,
    pub cleaning: CleanReport,
}

impl Partition {
    pub fn part(&self, p: Part) -> &[LabeledFunction] {
        match p {
            Part::P1 => &self.p1,
            Part::P2 => &self.p2,
            Part::P3 => &self.p3,
        }
    }

    pub fn records(&self) -> impl Iterator<Item = &LabeledFunction> {
        self.p1.iter().chain(&self.p2).chain(&self.p3)
    }

    pub fn hashes(&self, p: Part) -> HashSet<&str> {
        self.part(p).iter().map(|r| r.record.normalized_hash.as_str()).collect()
    }

    /// Fraction of tagged P2 records that come from noise pairs; `None` if
    /// no P2 record carries a tag.
    pub fn p2_noise_fraction(&self) -> Option<f64> {
        let tagged: Vec<PairTag> = self.p2.iter().filter_map(|r| r.tag).collect();
        if tagged.is_empty() {
            return None;
        }
        let noise = tagged.iter().filter(|&&t| t == PairTag::Noise).count();
        Some(noise as f64 / tagged.len() as f64)
    }
}

fn pair_records(c: &Commit, part: Part, out: &mut Vec<LabeledFunction>) {
    for pair in &c.changed {
        for (rec, label, role) in [(&pair.before, 1, Role::Before), (&pair.after, 0, Role::After)] {
            out.push(LabeledFunction {
                record: rec.clone(),
                label,
                part,
                commit_id: c.commit_id.clone(),
                role,
                tag: pair.tag,
            });
        }
    }
}

/// Builds and cleans the partition at `level_k`.
pub fn build_partition(commits: &[Commit], level_k: usize, seed: u64) -> Result<Partition, CorpusError> {
    if level_k == 0 {
        return Err(CorpusError::InvalidLevel);
    }
    let (mut p1, mut p2, mut pool) = (Vec::new(), Vec::new(), Vec::new());
    for c in commits {
        match classify_strictness(c) {
            1 => {
                pair_records(c, Part::P1, &mut p1);
                pool.extend(c.unchanged.iter().map(|u| LabeledFunction {
                    record: u.clone(),
                    label: 0,
                    part: Part::P3,
                    commit_id: c.commit_id.clone(),
                    role: Role::Unchanged,
                    tag: None,
                }));
            }
            j if j <= level_k => pair_records(c, Part::P2, &mut p2),
            _ => {}
        }
    }
    if p1.is_empty() && (level_k == 1 || p2.is_empty()) {
        return Err(CorpusError::EmptyPartition);
    }
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(clean_partition(Partition {
        level_k,
        p1,
        p2,
        p3: Vec::new(),
        p3_reserve: pool,
        p3_short: false,
        cleaning: CleanReport::default(),
    }))
}

fn dedup(v: &mut Vec<LabeledFunction>, seen: &mut HashSet<String>) -> usize {
    let before = v.len();
    v.retain(|r| seen.insert(r.record.normalized_hash.clone()));
    before - v.len()
}

/// Deduplicates each part by hash, removes P2 records already in P1 and P3
/// records already in P1 or P2, then redraws P3 to `|p1| + |p2|` from the
/// pool. `cleaning` reports this pass only, so a second pass reports zero.
pub fn clean_partition(mut p: Partition) -> Partition {
    let mut report = CleanReport::default();

    let mut seen1 = HashSet::new();
    report.within_part[0] = dedup(&mut p.p1, &mut seen1);

    let mut seen2 = HashSet::new();
    report.within_part[1] = dedup(&mut p.p2, &mut seen2);
    let n2 = p.p2.len();
    p.p2.retain(|r| !seen1.contains(&r.record.normalized_hash));
    report.p2_in_p1 = n2 - p.p2.len();

    let mut pool: Vec<LabeledFunction> = p.p3.drain(..).chain(p.p3_reserve.drain(..)).collect();
    report.within_part[2] = dedup(&mut pool, &mut HashSet::new());
    let n3 = pool.len();
    pool.retain(|r| {
        let h = &r.record.normalized_hash;
        !seen1.contains(h) && !seen2.contains(h)
    });
    report.p3_in_p1_p2 = n3 - pool.len();

    let target = p.p1.len() + p.p2.len();
    p.p3_short = pool.len() < target;
    p.p3_reserve = pool.split_off(target.min(pool.len()));
    p.p3 = pool;
    p.cleaning = report;
    p
}
