//! A provider whose cosines are set by the text, so tests can aim at each
//! policy band.
//!
//! `claim<k> v<j>` embeds to `c * e_k + sqrt(1 - c^2) * e_noise(k, j)` where
//! `c` depends on `j % 4`: 1.0, 0.97, 0.925, 0.6. Texts containing
//! `offline` fail as if the provider were down, as does everything
//! while [`BandProvider::set_down`] is on.

#![allow(dead_code)]

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use claim_match::corpus::Timestamp;
use claim_match::embedding::{EmbedInput, EmbeddingProvider, EmbeddingVector, ProviderError};

pub const CLAIMS: usize = 96;
const NOISE: usize = 1024;
pub const DIM: usize = CLAIMS + NOISE;
pub const VARIANT_COS: [f32; 4] = [1.0, 0.97, 0.925, 0.6];

#[derive(Debug, Default, Clone)]
pub struct BandProvider {
    down: Arc<AtomicBool>,
}

impl BandProvider {
    /// Simulates an outage until switched back.
    pub fn set_down(&self, down: bool) {
        self.down.store(down, Ordering::SeqCst);
    }
}

fn parse(text: &str) -> Option<(usize, usize)> {
    let mut claim = None;
    let mut variant = 0;
    for w in text.split_whitespace() {
        if let Some(k) = w.strip_prefix("claim") {
            claim = k.parse().ok();
        } else if let Some(j) = w.strip_prefix('v') {
            variant = j.parse().unwrap_or(0);
        }
    }
    claim.map(|k: usize| (k % CLAIMS, variant))
}

pub fn band_vector(k: usize, j: usize) -> Vec<f32> {
    let c = VARIANT_COS[j % 4];
    let mut v = vec![0.0; DIM];
    v[k] = c;
    if c < 1.0 {
        v[CLAIMS + (k * 131 + j * 17) % NOISE] = (1.0 - c * c).sqrt();
    }
    v
}

impl EmbeddingProvider for BandProvider {
    fn name(&self) -> &str {
        "band"
    }

    fn dim(&self) -> usize {
        DIM
    }

    fn embed(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        inputs
            .iter()
            .enumerate()
            .map(|(index, i)| {
                if i.text.contains("offline") || self.down.load(Ordering::SeqCst) {
                    return Err(ProviderError::Unreachable("simulated outage".into()));
                }
                let (k, j) = parse(i.text).ok_or_else(|| ProviderError::Missing { index, id: i.text.to_string() })?;
                Ok(EmbeddingVector::new(band_vector(k, j)).unwrap())
            })
            .collect()
    }
}

/// A clock the test advances by hand, so replays see identical timestamps.
#[derive(Debug, Clone, Default)]
pub struct TestClock(Arc<AtomicU64>);

impl TestClock {
    pub fn set(&self, tick: u64) {
        self.0.store(tick, Ordering::SeqCst);
    }

    pub fn clock(&self) -> claim_match_service::engine::Clock {
        let t = self.0.clone();
        Arc::new(move || {
            let s = t.load(Ordering::SeqCst);
            Timestamp::parse(&format!("2024-01-01T{:02}:{:02}:{:02}Z", s / 3600 % 24, s / 60 % 60, s % 60)).unwrap()
        })
    }
}
