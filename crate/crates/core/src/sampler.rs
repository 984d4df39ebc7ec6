//! Annotation-pair sampling: pairs stratified by cosine with a Gaussian
//! quota over similarity bins, plus uniformly random pairs.

use std::io::{self, Write};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_with_norms, embed_batch, norm, EmbedInput, EmbeddingProvider, EmbeddingVector, ProviderError};
use crate::corpus::Message;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampling plan: {0}")]
    InvalidPlan(String),
    #[error("need at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("requested {requested} pairs but only {available} exist")]
    QuotaExceeded { requested: usize, available: usize },
    #[error("item `{0}` has a zero embedding")]
    ZeroVector(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub mean: f64,
    pub std: f64,
    pub pairs_per_model: usize,
    pub random_pairs: usize,
    pub bin_width: f64,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan { mean: 0.825, std: 0.1, pairs_per_model: 100, random_pairs: 100, bin_width: 0.05, seed: 42 }
    }
}

impl SamplingPlan {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if !(self.std > 0.0 && self.std.is_finite()) {
            return Err(SamplerError::InvalidPlan(format!("std {} must be positive", self.std)));
        }
        if !self.mean.is_finite() {
            return Err(SamplerError::InvalidPlan("mean must be finite".into()));
        }
        let n = (2.0 / self.bin_width).round();
        if self.bin_width.is_nan() || self.bin_width <= 0.0 || n < 1.0 || (n * self.bin_width - 2.0).abs() > 1e-9 {
            return Err(SamplerError::InvalidPlan(format!("bin width {} does not divide [-1, 1]", self.bin_width)));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        (2.0 / self.bin_width).round() as usize
    }

    /// Bin of a cosine; 1.0 falls in the last bin.
    pub fn bin_of(&self, cosine: f64) -> usize {
        let b = ((cosine + 1.0) / self.bin_width).floor();
        (b.max(0.0) as usize).min(self.bin_count() - 1)
    }

    pub fn bin_bounds(&self, bin: usize) -> (f64, f64) {
        let lo = -1.0 + bin as f64 * self.bin_width;
        (lo, lo + self.bin_width)
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        -1.0 + (bin as f64 + 0.5) * self.bin_width
    }
}

/// Per-bin quotas for `quota` pairs, given how many pairs each bin holds.
///
/// Populated bins share the quota in proportion to the Gaussian density at
/// their centers, rounded by largest remainder (lower bin wins ties). A bin
/// asked for more than it holds passes the excess to the nearest bin that
/// still has room (lower bin on ties).
pub fn allocate(plan: &SamplingPlan, available: &[usize], quota: usize) -> Result<Vec<usize>, SamplerError> {
    let total: usize = available.iter().sum();
    if quota > total {
        return Err(SamplerError::QuotaExceeded { requested: quota, available: total });
    }
    let populated: Vec<usize> = (0..available.len()).filter(|&b| available[b] > 0).collect();
    let mut out = vec![0usize; available.len()];
    if quota == 0 {
        return Ok(out);
    }
    // log-densities keep far-tail bins from underflowing to an all-zero weight vector
    let logs: Vec<f64> = populated
        .iter()
        .map(|&b| -(plan.bin_center(b) - plan.mean).powi(2) / (2.0 * plan.std * plan.std))
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| quota as f64 * w / sum).collect();
    let mut floors: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = quota - floors.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..populated.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in &order {
        if left == 0 {
            break;
        }
        floors[i] += 1;
        left -= 1;
    }
    for (i, &b) in populated.iter().enumerate() {
        out[b] = floors[i];
    }

    for &b in &populated {
        if out[b] > available[b] {
            let over = out[b] - available[b];
            out[b] = available[b];
            spill(&mut out, available, b, over);
        }
    }
    Ok(out)
}

fn spill(out: &mut [usize], available: &[usize], from: usize, mut amount: usize) {
    let n = out.len();
    let mut dist = 1;
    while amount > 0 && dist < n {
        for b in [from.checked_sub(dist), Some(from + dist).filter(|&b| b < n)].into_iter().flatten() {
            let room = available[b] - out[b].min(available[b]);
            let take = room.min(amount);
            out[b] += take;
            amount -= take;
        }
        dist += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPair {
    pub id_a: String,
    pub id_b: String,
    pub cosine: f64,
    pub stratum: usize,
    pub provider: String,
}

/// Stratified sample of `plan.pairs_per_model` pairs among `items`.
pub fn sample_pairs(
    items: &[(String, EmbeddingVector)],
    provider: &str,
    plan: &SamplingPlan,
) -> Result<Vec<SampledPair>, SamplerError> {
    plan.validate()?;
    if items.len() < 2 {
        return Err(SamplerError::TooFewItems(items.len()));
    }
    if let Some((id, _)) = items.iter().find(|(_, v)| v.is_zero()) {
        return Err(SamplerError::ZeroVector(id.clone()));
    }
    let norms: Vec<f32> = items.iter().map(|(_, v)| norm(v.as_slice())).collect();
    let mut bins: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); plan.bin_count()];
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            let c = cosine_with_norms(items[i].1.as_slice(), items[j].1.as_slice(), norms[i], norms[j]) as f64;
            bins[plan.bin_of(c)].push((i, j, c));
        }
    }
    let available: Vec<usize> = bins.iter().map(Vec::len).collect();
    let quotas = allocate(plan, &available, plan.pairs_per_model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut out = Vec::with_capacity(plan.pairs_per_model);
    for (b, pairs) in bins.iter().enumerate() {
        if quotas[b] == 0 {
            continue;
        }
        let mut picked = index::sample(&mut rng, pairs.len(), quotas[b]).into_vec();
        picked.sort_unstable();
        for k in picked {
            let (i, j, c) = pairs[k];
            out.push(SampledPair {
                id_a: items[i].0.clone(),
                id_b: items[j].0.clone(),
                cosine: c,
                stratum: b,
                provider: provider.to_string(),
            });
        }
    }
    Ok(out)
}

/// Embeds `messages` with `provider` and samples from them.
pub fn sample_messages<P: EmbeddingProvider + ?Sized>(
    messages: &[Message],
    provider: &P,
    plan: &SamplingPlan,
) -> Result<Vec<SampledPair>, SamplerError> {
    let inputs: Vec<EmbedInput<'_>> = messages.iter().map(|m| EmbedInput::new(&m.id, &m.text)).collect();
    let vectors = embed_batch(provider, &inputs)?;
    let items: Vec<(String, EmbeddingVector)> = messages.iter().map(|m| m.id.clone()).zip(vectors).collect();
    sample_pairs(&items, provider.name(), plan)
}

/// The `k`-th unordered pair `(i, j)`, `i < j`, of `n` items in row order.
pub fn unrank_pair(n: usize, mut k: usize) -> (usize, usize) {
    for i in 0..n {
        let row = n - i - 1;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
    }
    panic!("pair index out of range");
}

/// `n` distinct unordered pairs drawn uniformly.
pub fn sample_random_pairs<S: AsRef<str>>(items: &[S], n: usize, seed: u64) -> Result<Vec<(String, String)>, SamplerError> {
    let m = items.len();
    let total = m * m.saturating_sub(1) / 2;
    if n > total {
        return Err(SamplerError::QuotaExceeded { requested: n, available: total });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, total, n)
        .into_iter()
        .map(|k| {
            let (i, j) = unrank_pair(m, k);
            (items[i].as_ref().to_string(), items[j].as_ref().to_string())
        })
        .collect())
}

/// One pair per line: `id_a id_b cosine stratum provider`, tab-separated.
/// The stratum is written as its cosine range.
pub fn write_sample<W: Write>(pairs: &[SampledPair], plan: &SamplingPlan, mut w: W) -> io::Result<()> {
    for p in pairs {
        let (lo, hi) = plan.bin_bounds(p.stratum);
        writeln!(w, "{}\t{}\t{:.6}\t[{lo:.2},{hi:.2})\t{}", p.id_a, p.id_b, p.cosine, p.provider)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::collections::HashSet;

    fn unit(theta: f64) -> EmbeddingVector {
        EmbeddingVector::new(vec![theta.cos() as f32, theta.sin() as f32]).unwrap()
    }

    fn spread_items(n: usize, seed: u64) -> Vec<(String, EmbeddingVector)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|i| (format!("m{i:03}"), unit(rng.random_range(0.0..std::f64::consts::PI)))).collect()
    }

    #[test]
    fn plan_validation() {
        assert!(SamplingPlan::default().validate().is_ok());
        assert!(SamplingPlan { std: 0.0, ..Default::default() }.validate().is_err());
        assert!(SamplingPlan { bin_width: 0.3, ..Default::default() }.validate().is_err());
        let p = SamplingPlan::default();
        assert_eq!(p.bin_count(), 40);
        assert_eq!(p.bin_of(1.0), 39);
        assert_eq!(p.bin_of(-1.0), 0);
        assert_eq!(p.bin_of(0.82), 36);
    }

    #[test]
    fn single_bin_takes_everything() {
        let plan = SamplingPlan::default();
        let mut avail = vec![0; 40];
        avail[37] = 500;
        let q = allocate(&plan, &avail, 100).unwrap();
        assert_eq!(q[37], 100);
        assert_eq!(q.iter().sum::<usize>(), 100);
    }

    #[test]
    fn wide_gaussian_is_nearly_flat() {
        let plan = SamplingPlan { std: 1e6, ..Default::default() };
        let avail = vec![1000; 40];
        let q = allocate(&plan, &avail, 400).unwrap();
        assert!(q.iter().all(|&x| x == 10), "{q:?}");
        let q = allocate(&plan, &avail, 100).unwrap();
        assert!(q.iter().all(|&x| x == 2 || x == 3));
    }

    #[test]
    fn shortfall_spills_to_neighbours() {
        let plan = SamplingPlan::default();
        let mut avail = vec![0; 40];
        avail[36] = 3;
        avail[35] = 1000;
        avail[20] = 1000;
        let q = allocate(&plan, &avail, 100).unwrap();
        assert_eq!(q[36], 3);
        assert_eq!(q.iter().sum::<usize>(), 100);
        assert!(q[35] > q[20]);
        assert!(matches!(allocate(&plan, &avail, 5000), Err(SamplerError::QuotaExceeded { .. })));
    }

    #[test]
    fn stratified_sample_properties() {
        let items = spread_items(60, 1);
        let plan = SamplingPlan::default();
        let s = sample_pairs(&items, "toy", &plan).unwrap();
        assert_eq!(s.len(), 100);
        let distinct: HashSet<(String, String)> = s.iter().map(|p| (p.id_a.clone(), p.id_b.clone())).collect();
        assert_eq!(distinct.len(), 100);
        for p in &s {
            assert_ne!(p.id_a, p.id_b);
            let (lo, hi) = plan.bin_bounds(p.stratum);
            assert!(p.cosine >= lo - 1e-12 && (p.cosine < hi || p.stratum == 39));
        }
        assert_eq!(s, sample_pairs(&items, "toy", &plan).unwrap());
        assert_ne!(s, sample_pairs(&items, "toy", &SamplingPlan { seed: 9, ..plan }).unwrap());
    }

    #[test]
    fn unranking_covers_all_pairs() {
        let n = 7;
        let all: Vec<_> = (0..n * (n - 1) / 2).map(|k| unrank_pair(n, k)).collect();
        let set: HashSet<_> = all.iter().cloned().collect();
        assert_eq!(set.len(), 21);
        assert!(all.iter().all(|&(i, j)| i < j && j < n));
    }

    #[test]
    fn random_pairs_bounds() {
        let ids = ["a", "b", "c", "d"];
        assert_eq!(sample_random_pairs(&ids, 6, 0).unwrap().len(), 6);
        assert!(sample_random_pairs(&ids, 0, 0).unwrap().is_empty());
        assert!(sample_random_pairs(&ids, 7, 0).is_err());
    }

    #[test]
    fn random_pairs_are_uniform() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let ids = ["a", "b", "c", "d", "e", "f"];
        let mut counts = std::collections::BTreeMap::new();
        let draws = 10_000;
        for seed in 0..draws {
            let p = sample_random_pairs(&ids, 1, seed).unwrap().remove(0);
            *counts.entry(p).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 15);
        let expected = draws as f64 / 15.0;
        let stat: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new(14.0).unwrap().cdf(stat);
        assert!(p > 0.01, "chi2 {stat}, p {p}");
    }
}
