use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::EmbeddingProvider;
use crate::corpus::normalize_text;
use crate::error::{Error, Result};

/// Number of hash buckets for character trigrams.
pub const FALLBACK_BUCKETS: usize = 1 << 16;

// Boundary markers. Normalization strips control characters, so these can
// never occur inside a text.
const START: char = '\u{2}';
const END: char = '\u{3}';

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn trigram_counts(text: &str) -> BTreeMap<u32, u32> {
    let chars: Vec<char> = std::iter::once(START)
        .chain(text.chars())
        .chain(std::iter::once(END))
        .collect();
    let mut counts = BTreeMap::new();
    let mut buf = [0u8; 12];
    for w in chars.windows(3) {
        let mut len = 0;
        for c in w {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        let bucket = (fnv1a(&buf[..len]) % FALLBACK_BUCKETS as u64) as u32;
        *counts.entry(bucket).or_insert(0) += 1;
    }
    counts
}

/// Deterministic trigram embedding.
///
/// Character trigrams of the normalized text (with start/end markers) are
/// hashed with 64-bit FNV-1a into 2^16 buckets. Each bucket owns a row of a
/// fixed Gaussian random projection: row `b` is `dim` standard normals drawn
/// from ChaCha8 seeded with `seed` on stream `b`. The count-weighted sum of
/// rows is L2-normalized. An empty text maps to the zero vector.
///
/// # Panics
///
/// If `dim < 2`.
pub fn fallback_embed(text: &str, seed: u64, dim: usize) -> Vec<f64> {
    assert!(dim >= 2, "fallback embedding needs at least 2 dimensions");
    let text = normalize_text(text);
    let mut out = vec![0.0f64; dim];
    if text.is_empty() {
        return out;
    }
    for (bucket, count) in trigram_counts(&text) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(bucket));
        let w = f64::from(count);
        for o in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *o += w * z;
        }
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for o in out.iter_mut() {
            *o /= norm;
        }
    }
    out
}

/// Built-in provider wrapping [`fallback_embed`].
#[derive(Debug, Clone)]
pub struct FallbackProvider {
    id: String,
    seed: u64,
    dim: usize,
}

impl FallbackProvider {
    pub fn new(seed: u64, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("fallback embedding dimension must be at least 2"));
        }
        Ok(Self {
            id: format!("fallback-trigram-v1-d{dim}-s{seed}"),
            seed,
            dim,
        })
    }
}

impl Default for FallbackProvider {
    fn default() -> Self {
        Self::new(0, super::DEFAULT_DIMENSION).expect("default dimension is valid")
    }
}

impl EmbeddingProvider for FallbackProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        Ok(fallback_embed(text, self.seed, self.dim))
    }
}
