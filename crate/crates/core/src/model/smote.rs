use super::ModelError;
use crate::autodiff::Tensor;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Provenance of one synthetic row: `x[base] + u * (x[neighbor] - x[base])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticPoint {
    pub base: usize,
    pub neighbor: usize,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Smote {
    /// Input rows followed by the synthetic rows.
    pub embeddings: Tensor,
    pub labels: Vec<u8>,
    pub synthetic: Vec<SyntheticPoint>,
    pub k_used: usize,
    /// Set when fewer than `k + 1` minority points forced a smaller k.
    pub reduced_k: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` rows of `candidates` nearest to row `of` (excluding `of`),
/// by squared Euclidean distance with ties broken by row index.
pub fn k_nearest(x: &Tensor, candidates: &[usize], of: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = candidates
        .iter()
        .filter(|&&c| c != of)
        .map(|&c| (sq_dist(x.row(of), x.row(c)), c))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, c)| c).collect()
}

fn class_counts(labels: &[u8]) -> Result<(usize, usize), ModelError> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(ModelError::SingleClass);
    }
    Ok((pos, neg))
}

/// Oversamples the minority class with interpolated points until both
/// classes are equally large. Minority rows are visited round-robin; each
/// synthetic point pairs its base with a uniformly chosen one of the base's
/// `k` nearest minority neighbours and a uniform `u` in `[0, 1)`.
pub fn smote_resample(x: &Tensor, labels: &[u8], k: usize, seed: u64) -> Result<Smote, ModelError> {
    if x.rows() != labels.len() {
        return Err(ModelError::Config(format!("{} rows but {} labels", x.rows(), labels.len())));
    }
    let (pos, neg) = class_counts(labels)?;
    let minority_label = u8::from(pos < neg);
    let minority: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == minority_label).collect();
    let needed = pos.max(neg) - pos.min(neg);
    let k_used = k.min(minority.len() - 1);
    let mut out = Smote {
        embeddings: x.clone(),
        labels: labels.to_vec(),
        synthetic: Vec::with_capacity(needed),
        k_used,
        reduced_k: k_used < k,
    };
    if needed == 0 {
        return Ok(out);
    }
    let neighbours: Vec<Vec<usize>> = minority.iter().map(|&m| k_nearest(x, &minority, m, k_used)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = out.embeddings.into_data();
    for s in 0..needed {
        let slot = s % minority.len();
        let base = minority[slot];
        let neighbor = if k_used == 0 {
            base
        } else {
            neighbours[slot][rng.gen_range(0..k_used)]
        };
        let u: f64 = rng.gen();
        data.extend(x.row(base).iter().zip(x.row(neighbor)).map(|(a, b)| a + u * (b - a)));
        out.labels.push(minority_label);
        out.synthetic.push(SyntheticPoint { base, neighbor, u });
    }
    out.embeddings = Tensor::from_vec(out.labels.len(), x.cols(), data)?;
    Ok(out)
}

/// Indices (ascending) that keep every minority example and a seeded
/// uniform sample of the majority of the same size.
pub fn downsample_majority(labels: &[u8], seed: u64) -> Result<Vec<usize>, ModelError> {
    let (pos, neg) = class_counts(labels)?;
    if pos == neg {
        return Ok((0..labels.len()).collect());
    }
    let majority_label = u8::from(pos > neg);
    let majority: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == majority_label).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = sample(&mut rng, majority.len(), pos.min(neg))
        .into_iter()
        .map(|i| majority[i])
        .chain((0..labels.len()).filter(|&i| labels[i] != majority_label))
        .collect();
    keep.sort_unstable();
    Ok(keep)
}
