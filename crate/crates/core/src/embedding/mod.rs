//! Text embeddings: the provider contract, batch embedding with caching, and
//! centroids.

mod cache;
mod fallback;
mod static_model;
mod table;

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub use cache::EmbeddingCache;
pub use fallback::{fallback_embed, FallbackProvider, FALLBACK_BUCKETS};
pub use static_model::StaticModelProvider;
pub use table::TableProvider;

/// Default embedding width, matching common sentence encoders.
pub const DEFAULT_DIMENSION: usize = 768;

/// Maps text to a fixed-width real vector.
///
/// Implementations must be deterministic: the same text always yields the
/// same vector, bit for bit, across calls and processes.
pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<P> {
    fn provider_id(&self) -> &str {
        (**self).provider_id()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        (**self).embed(text)
    }
}

/// SHA-256 of a normalized text.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TextHash(pub [u8; 32]);

impl TextHash {
    pub fn of(text: &str) -> Self {
        TextHash(Sha256::digest(text.as_bytes()).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for TextHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TextHash({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for TextHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for TextHash {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for TextHash {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("text hash must be 32 bytes"))?;
        Ok(TextHash(arr))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector<T = f64> {
    pub values: Vec<T>,
    pub provider_id: String,
    pub text_hash: TextHash,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

fn check_output(provider: &dyn EmbeddingProvider, v: &[f64]) -> Result<()> {
    if v.len() != provider.dimension() {
        return Err(Error::Provider {
            provider: provider.provider_id().to_string(),
            message: format!(
                "declared dimension {} but produced {}",
                provider.dimension(),
                v.len()
            ),
        });
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::Provider {
            provider: provider.provider_id().to_string(),
            message: "produced non-finite values".into(),
        });
    }
    Ok(())
}

/// The static model at `model_path` when given, otherwise the default
/// trigram fallback encoder.
pub fn select_provider(model_path: Option<&std::path::Path>) -> Result<std::sync::Arc<dyn EmbeddingProvider>> {
    Ok(match model_path {
        Some(p) => std::sync::Arc::new(StaticModelProvider::load(p)?),
        None => std::sync::Arc::new(FallbackProvider::default()),
    })
}

/// Embeds `texts` into a `len × D` matrix, row `i` for `texts[i]`.
///
/// Each distinct text is computed once; with a cache, previously seen
/// texts are served from it and new results are written back.
pub fn embed_batch<S: AsRef<str> + Sync>(
    texts: &[S],
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
) -> Result<Matrix<f64>> {
    let dim = provider.dimension();
    let mut distinct: Vec<&str> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let row_slots: Vec<usize> = texts
        .iter()
        .map(|t| {
            let t = t.as_ref();
            *slot.entry(t).or_insert_with(|| {
                distinct.push(t);
                distinct.len() - 1
            })
        })
        .collect();

    let mut resolved: Vec<Option<std::sync::Arc<[f64]>>> = distinct
        .iter()
        .map(|t| cache.and_then(|c| c.get(provider.provider_id(), &TextHash::of(t))))
        .collect();

    let missing: Vec<usize> = (0..distinct.len()).filter(|&i| resolved[i].is_none()).collect();
    let computed: Vec<Result<Vec<f64>>> = missing
        .par_iter()
        .map(|&i| {
            let v = provider.embed(distinct[i])?;
            check_output(provider, &v)?;
            Ok(v)
        })
        .collect();

    let mut fresh = Vec::with_capacity(missing.len());
    for (&i, v) in missing.iter().zip(computed) {
        let v: std::sync::Arc<[f64]> = v?.into();
        fresh.push((TextHash::of(distinct[i]), v.clone()));
        resolved[i] = Some(v);
    }
    if let Some(c) = cache {
        c.insert_many(provider.provider_id(), dim, fresh)?;
    }

    let mut out = Matrix::zeros(texts.len(), dim);
    for (row, &s) in row_slots.iter().enumerate() {
        let v = resolved[s].as_ref().expect("every slot resolved");
        out.row_mut(row).copy_from_slice(v);
    }
    Ok(out)
}

/// Like [`embed_batch`] but wraps each row with its provenance.
pub fn embed_vectors<S: AsRef<str> + Sync>(
    texts: &[S],
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
) -> Result<Vec<EmbeddingVector<f64>>> {
    let m = embed_batch(texts, provider, cache)?;
    Ok(texts
        .iter()
        .zip(m.iter_rows())
        .map(|(t, row)| EmbeddingVector {
            values: row.to_vec(),
            provider_id: provider.provider_id().to_string(),
            text_hash: TextHash::of(t.as_ref()),
        })
        .collect())
}

/// Coordinate-wise mean of the vectors.
///
/// Inputs are summed in ascending `text_hash` order so the result does not
/// depend on the order they were supplied in.
pub fn centroid<T: Scalar>(vectors: &[EmbeddingVector<T>]) -> Result<Vec<T>> {
    let first = vectors.first().ok_or(Error::EmptyInput("centroid of no vectors"))?;
    let dim = first.dimension();
    if let Some(bad) = vectors.iter().find(|v| v.dimension() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.dimension(),
        });
    }
    let mut order: Vec<&EmbeddingVector<T>> = vectors.iter().collect();
    order.sort_by_key(|v| v.text_hash);

    let mut sum = vec![T::zero(); dim];
    for v in order {
        for (s, &x) in sum.iter_mut().zip(&v.values) {
            *s += x;
        }
    }
    let n = T::of_usize(vectors.len());
    Ok(sum.into_iter().map(|s| s / n).collect())
}
