//! Trainable linear encoder over hashed character n-grams.
//!
//! A text is turned into an L2-normalized bag of hashed character n-grams,
//! multiplied by a `buckets x dim` projection, and L2-normalized again.
//! The projection is what the distillation trainer fits.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::provider::{EmbedInput, EmbeddingProvider, ProviderError};
use super::EmbeddingVector;
use crate::scalar::Scalar;

pub const DEFAULT_NGRAMS: [usize; 3] = [3, 4, 5];
pub const DEFAULT_BUCKETS: usize = 16384;
pub const DEFAULT_HASH_SEED: u64 = 0x5eed_c1a1_0000_0001;

/// FNV-1a with the seed folded into the offset basis.
pub fn fnv1a_seeded(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Sparse, L2-normalized hashed n-gram counts, sorted by bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatures<T> {
    pub entries: Vec<(usize, T)>,
}

impl<T: Scalar> SparseFeatures<T> {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashedNGramEncoder<T = f32> {
    ngram_sizes: Vec<usize>,
    buckets: usize,
    dim: usize,
    hash_seed: u64,
    // row-major, one row of `dim` per bucket
    projection: Vec<T>,
}

impl<T: Scalar> HashedNGramEncoder<T> {
    /// An encoder with an all-zero projection.
    pub fn new(ngram_sizes: &[usize], buckets: usize, dim: usize, hash_seed: u64) -> Self {
        assert!(buckets > 0 && dim > 0, "buckets and dim must be positive");
        assert!(!ngram_sizes.is_empty() && ngram_sizes.iter().all(|&n| n > 0));
        let mut sizes = ngram_sizes.to_vec();
        sizes.sort_unstable();
        sizes.dedup();
        HashedNGramEncoder {
            ngram_sizes: sizes,
            buckets,
            dim,
            hash_seed,
            projection: vec![T::zero(); buckets * dim],
        }
    }

    pub fn with_defaults(dim: usize) -> Self {
        Self::new(&DEFAULT_NGRAMS, DEFAULT_BUCKETS, dim, DEFAULT_HASH_SEED)
    }

    /// Fills the projection with uniform values in `[-scale, scale]`.
    pub fn randomize(mut self, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut self.projection {
            *p = T::of(rng.random_range(-scale..=scale));
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn ngram_sizes(&self) -> &[usize] {
        &self.ngram_sizes
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    pub fn projection(&self) -> &[T] {
        &self.projection
    }

    pub fn projection_mut(&mut self) -> &mut [T] {
        &mut self.projection
    }

    pub fn row(&self, bucket: usize) -> &[T] {
        &self.projection[bucket * self.dim..(bucket + 1) * self.dim]
    }

    pub fn row_mut(&mut self, bucket: usize) -> &mut [T] {
        let d = self.dim;
        &mut self.projection[bucket * d..(bucket + 1) * d]
    }

    pub fn features(&self, text: &str) -> SparseFeatures<T> {
        let chars: Vec<char> = std::iter::once(' ')
            .chain(text.chars().flat_map(char::to_lowercase))
            .chain(std::iter::once(' '))
            .collect();
        let mut buckets: Vec<usize> = Vec::new();
        let mut gram = String::new();
        for &n in &self.ngram_sizes {
            for w in chars.windows(n) {
                gram.clear();
                gram.extend(w);
                buckets.push((fnv1a_seeded(gram.as_bytes(), self.hash_seed) % self.buckets as u64) as usize);
            }
        }
        buckets.sort_unstable();
        let mut entries: Vec<(usize, T)> = Vec::new();
        for b in buckets {
            match entries.last_mut() {
                Some((last, c)) if *last == b => *c += T::one(),
                _ => entries.push((b, T::one())),
            }
        }
        let norm = entries.iter().map(|&(_, c)| c * c).sum::<T>().sqrt();
        if !norm.is_zero() {
            for (_, c) in &mut entries {
                *c /= norm;
            }
        }
        SparseFeatures { entries }
    }

    /// Projection of precomputed features, without output normalization.
    pub fn project(&self, features: &SparseFeatures<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for &(b, x) in &features.entries {
            for (o, &p) in out.iter_mut().zip(self.row(b)) {
                *o += x * p;
            }
        }
        out
    }

    pub fn encode_raw(&self, text: &str) -> EmbeddingVector<T> {
        EmbeddingVector::new(self.project(&self.features(text)))
            .unwrap_or_else(|_| EmbeddingVector::zeros(self.dim))
    }

    /// The inference-time embedding: unit length, or zero when the text has
    /// no n-grams that the projection maps anywhere.
    pub fn encode(&self, text: &str) -> EmbeddingVector<T> {
        self.encode_raw(text).normalized()
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        self.write_snapshot(File::create(path)?)
    }

    /// Header line with the hashing metadata, then one row per bucket in the
    /// embedding-file float format.
    pub fn write_snapshot<W: Write>(&self, w: W) -> io::Result<()> {
        let mut w = BufWriter::new(w);
        let sizes: Vec<String> = self.ngram_sizes.iter().map(ToString::to_string).collect();
        writeln!(
            w,
            "dim={} buckets={} ngrams={} seed={}",
            self.dim,
            self.buckets,
            sizes.join(","),
            self.hash_seed
        )?;
        for b in 0..self.buckets {
            write!(w, "{b}")?;
            for x in self.row(b) {
                write!(w, " {x}")?;
            }
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Self::read_snapshot(BufReader::new(File::open(path)?))
    }

    pub fn read_snapshot<R: BufRead>(reader: R) -> io::Result<Self> {
        let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| bad("empty snapshot".into()))??;
        let (mut dim, mut buckets, mut sizes, mut seed) = (None, None, None, None);
        for field in header.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| bad(format!("bad header field `{field}`")))?;
            match k {
                "dim" => dim = v.parse::<usize>().ok(),
                "buckets" => buckets = v.parse::<usize>().ok(),
                "ngrams" => sizes = v.split(',').map(|s| s.parse::<usize>().ok()).collect::<Option<Vec<_>>>(),
                "seed" => seed = v.parse::<u64>().ok(),
                _ => return Err(bad(format!("unknown header field `{k}`"))),
            }
        }
        let (dim, buckets, sizes, seed) = match (dim, buckets, sizes, seed) {
            (Some(d), Some(b), Some(s), Some(h)) if d > 0 && b > 0 && !s.is_empty() => (d, b, s, h),
            _ => return Err(bad(format!("incomplete snapshot header `{header}`"))),
        };
        let mut enc = HashedNGramEncoder::new(&sizes, buckets, dim, seed);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let b: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .filter(|&b| b < buckets)
                .ok_or_else(|| bad(format!("line {}: bad bucket index", i + 2)))?;
            let row = parts
                .map(|p| p.parse::<T>().map_err(|_| bad(format!("line {}: bad float `{p}`", i + 2))))
                .collect::<io::Result<Vec<T>>>()?;
            if row.len() != dim {
                return Err(bad(format!("line {}: expected {dim} values", i + 2)));
            }
            enc.row_mut(b).copy_from_slice(&row);
        }
        Ok(enc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    /// Unit-length output, as used at inference time.
    Normalized,
    /// The bare linear projection.
    Raw,
}

/// Exposes a [`HashedNGramEncoder`] through the provider contract.
#[derive(Debug, Clone)]
pub struct ToyProvider {
    name: String,
    encoder: Arc<HashedNGramEncoder<f32>>,
    mode: OutputMode,
}

impl ToyProvider {
    pub fn new(name: impl Into<String>, encoder: HashedNGramEncoder<f32>, mode: OutputMode) -> Self {
        ToyProvider { name: name.into(), encoder: Arc::new(encoder), mode }
    }

    pub fn encoder(&self) -> &HashedNGramEncoder<f32> {
        &self.encoder
    }
}

impl EmbeddingProvider for ToyProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.encoder.dim()
    }

    fn embed(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        Ok(inputs
            .iter()
            .map(|i| match self.mode {
                OutputMode::Normalized => self.encoder.encode(i.text),
                OutputMode::Raw => self.encoder.encode_raw(i.text),
            })
            .collect())
    }
}
