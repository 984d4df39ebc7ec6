//! Teacher-student distillation of the hashed n-gram encoder on bitext.
//!
//! For a batch `B` of pairs `(s, t)` the loss is
//! `1/|B| * sum(msd(T(s), S(s)) + msd(T(s), S(t)))`, where `msd` is the mean
//! squared difference over components and `S` is the student's raw
//! projection. Normalization is applied only at inference.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ParallelPair;
use crate::embedding::{embed_batch, EmbedInput, EmbeddingProvider, HashedNGramEncoder, ProviderError, SparseFeatures};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("teacher dim {teacher} differs from student dim {student}")]
    DimensionMismatch { teacher: usize, student: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("loss became non-finite in epoch {epoch}")]
    Diverged { epoch: usize, trace: TrainingTrace },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig { batch_size: 32, learning_rate: 0.05, epochs: 10, seed: 7 }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<(), DistillError> {
        if self.batch_size == 0 {
            return Err(DistillError::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(DistillError::InvalidConfig(format!("learning rate {} must be finite and >= 0", self.learning_rate)));
        }
        Ok(())
    }
}

/// Loss over the whole training set before training and after each epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
}

impl TrainingTrace {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(self.initial_loss)
    }
}

/// One training pair with its fixed teacher target and student features.
#[derive(Debug, Clone)]
pub struct Example<T> {
    pub target: Vec<T>,
    pub source: SparseFeatures<T>,
    pub translation: SparseFeatures<T>,
}

/// Embeds every source side with the frozen teacher.
pub fn prepare_examples<T: Scalar, P: EmbeddingProvider + ?Sized>(
    teacher: &P,
    student: &HashedNGramEncoder<T>,
    pairs: &[ParallelPair],
) -> Result<Vec<Example<T>>, DistillError> {
    if teacher.dim() != student.dim() {
        return Err(DistillError::DimensionMismatch { teacher: teacher.dim(), student: student.dim() });
    }
    let inputs: Vec<EmbedInput<'_>> = pairs.iter().map(|p| EmbedInput::key(&p.source)).collect();
    let targets = embed_batch(teacher, &inputs)?;
    Ok(pairs
        .iter()
        .zip(targets)
        .map(|(p, y)| Example {
            target: y.as_slice().iter().map(|&v| T::of(v as f64)).collect(),
            source: student.features(&p.source),
            translation: student.features(&p.target),
        })
        .collect())
}

fn mean_sq_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>() / T::of(a.len() as f64)
}

pub fn batch_loss<T: Scalar>(student: &HashedNGramEncoder<T>, batch: &[&Example<T>]) -> T {
    let total: T = batch
        .iter()
        .map(|e| {
            mean_sq_diff(&e.target, &student.project(&e.source)) + mean_sq_diff(&e.target, &student.project(&e.translation))
        })
        .sum();
    total / T::of(batch.len() as f64)
}

/// Loss of `student` against `teacher` on `batch`.
pub fn distill_loss<T: Scalar, P: EmbeddingProvider + ?Sized>(
    teacher: &P,
    student: &HashedNGramEncoder<T>,
    batch: &[ParallelPair],
) -> Result<T, DistillError> {
    if batch.is_empty() {
        return Err(DistillError::EmptyBatch);
    }
    let examples = prepare_examples(teacher, student, batch)?;
    Ok(batch_loss(student, &examples.iter().collect::<Vec<_>>()))
}

/// Gradient of [`batch_loss`] with respect to the projection, as rows keyed
/// by bucket. Buckets not in the batch have zero gradient and are omitted.
pub fn gradient<T: Scalar>(student: &HashedNGramEncoder<T>, batch: &[&Example<T>]) -> BTreeMap<usize, Vec<T>> {
    let d = student.dim();
    let scale = T::of(2.0 / (d as f64 * batch.len() as f64));
    let mut grad: BTreeMap<usize, Vec<T>> = BTreeMap::new();
    for e in batch {
        for feats in [&e.source, &e.translation] {
            let residual: Vec<T> = student.project(feats).iter().zip(&e.target).map(|(&s, &y)| (s - y) * scale).collect();
            for &(b, x) in &feats.entries {
                let row = grad.entry(b).or_insert_with(|| vec![T::zero(); d]);
                for (g, &r) in row.iter_mut().zip(&residual) {
                    *g += r * x;
                }
            }
        }
    }
    grad
}

fn full_loss<T: Scalar>(student: &HashedNGramEncoder<T>, examples: &[Example<T>]) -> f64 {
    batch_loss(student, &examples.iter().collect::<Vec<_>>()).as_f64()
}

/// Mini-batch gradient descent on the student's projection. The loss over
/// all pairs is recorded before training and after every epoch.
pub fn distill_train<T: Scalar, P: EmbeddingProvider + ?Sized>(
    teacher: &P,
    student: &mut HashedNGramEncoder<T>,
    pairs: &[ParallelPair],
    config: &DistillConfig,
) -> Result<TrainingTrace, DistillError> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(DistillError::EmptyBatch);
    }
    let examples = prepare_examples(teacher, student, pairs)?;
    train_examples(student, &examples, config)
}

pub fn train_examples<T: Scalar>(
    student: &mut HashedNGramEncoder<T>,
    examples: &[Example<T>],
    config: &DistillConfig,
) -> Result<TrainingTrace, DistillError> {
    config.validate()?;
    let mut trace = TrainingTrace { initial_loss: full_loss(student, examples), epoch_losses: Vec::new() };
    let lr = T::of(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example<T>> = chunk.iter().map(|&i| &examples[i]).collect();
            for (b, g) in gradient(student, &batch) {
                for (p, &gk) in student.row_mut(b).iter_mut().zip(&g) {
                    *p -= lr * gk;
                }
            }
        }
        let loss = full_loss(student, examples);
        if !loss.is_finite() {
            return Err(DistillError::Diverged { epoch, trace });
        }
        tracing::debug!(epoch, loss, "distill epoch");
        trace.epoch_losses.push(loss);
    }
    Ok(trace)
}

/// Largest relative error between the analytic gradient and central finite
/// differences, over at least `samples` projection entries drawn from the
/// rows the batch touches. Relative error is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn gradient_check<T: Scalar, P: EmbeddingProvider + ?Sized>(
    student: &HashedNGramEncoder<T>,
    teacher: &P,
    batch: &[ParallelPair],
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<f64, DistillError> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(DistillError::InvalidConfig(format!("epsilon {epsilon} outside (0, 1e-2]")));
    }
    if batch.is_empty() {
        return Err(DistillError::EmptyBatch);
    }
    let examples = prepare_examples(teacher, student, batch)?;
    let refs: Vec<&Example<T>> = examples.iter().collect();
    let grad = gradient(student, &refs);
    let rows: Vec<usize> = grad.keys().copied().collect();
    let d = student.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = student.clone();
    let eps = T::of(epsilon);
    let mut worst = 0.0f64;
    for _ in 0..samples.max(100) {
        let &b = rows.choose(&mut rng).expect("batch has features");
        let k = rand::Rng::random_range(&mut rng, 0..d);
        let original = probe.row(b)[k];
        probe.row_mut(b)[k] = original + eps;
        let up = batch_loss(&probe, &refs);
        probe.row_mut(b)[k] = original - eps;
        let down = batch_loss(&probe, &refs);
        probe.row_mut(b)[k] = original;
        let numeric = ((up - down) / (eps + eps)).as_f64();
        let analytic = grad[&b][k].as_f64();
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
