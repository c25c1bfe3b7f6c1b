//! Non-earnestness indicators per unique response and the rule-based
//! annotation sampler built on them.

mod levenshtein;
mod sampler;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::embedding::{centroid, embed_vectors, EmbeddingCache, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::matrix::euclidean;

pub use levenshtein::levenshtein;
pub use sampler::{
    ceil_fraction, equal_mass_weights, rule_based_sample, rule_based_sample_rows, weighted_sample_without_replacement,
    Sample, SampledResponse, SamplerConfig,
};

/// Indicators for one unique response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub normalized_text: String,
    /// Euclidean distance from the centroid of the question's unique-response embeddings.
    pub centroid_distance: f64,
    /// Number of responses with this exact normalized text.
    pub frequency: usize,
    /// Levenshtein distance to the most frequent response.
    pub edit_distance_to_mode: usize,
    /// Length in Unicode scalar values.
    pub char_length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    CentroidDistance,
    Frequency,
    EditDistanceToMode,
    CharLength,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::CentroidDistance,
        Metric::Frequency,
        Metric::EditDistanceToMode,
        Metric::CharLength,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::CentroidDistance => "centroid_distance",
            Metric::Frequency => "frequency",
            Metric::EditDistanceToMode => "edit_distance_to_mode",
            Metric::CharLength => "char_length",
        }
    }

    /// Compares two rows so that the more non-earnest one sorts first.
    fn cmp_non_earnest(self, a: &FeatureRow, b: &FeatureRow) -> Ordering {
        match self {
            // far from the center: non-earnest
            Metric::CentroidDistance => b.centroid_distance.total_cmp(&a.centroid_distance),
            // rare: non-earnest
            Metric::Frequency => a.frequency.cmp(&b.frequency),
            // far from the modal answer: non-earnest
            Metric::EditDistanceToMode => b.edit_distance_to_mode.cmp(&a.edit_distance_to_mode),
            // short: non-earnest
            Metric::CharLength => a.char_length.cmp(&b.char_length),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown metric `{s}`")))
    }
}

/// Computes one [`FeatureRow`] per unique response, in
/// [`Corpus::unique_responses`] order.
pub fn compute_features(
    corpus: &Corpus,
    question_id: &str,
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
) -> Result<Vec<FeatureRow>> {
    corpus.word_cloud_question(question_id)?;
    let uniques = corpus.unique_responses(question_id)?;
    if uniques.is_empty() {
        return Err(Error::EmptyInput("question has no responses"));
    }
    let texts: Vec<&str> = uniques.iter().map(|u| u.normalized_text.as_str()).collect();
    let vectors = embed_vectors(&texts, provider, cache)?;
    let center = centroid(&vectors)?;
    // unique_responses is sorted by (count desc, text asc): the first entry
    // is the mode with the lexicographic tie-break.
    let mode = texts[0];

    Ok(uniques
        .iter()
        .zip(&vectors)
        .map(|(u, v)| FeatureRow {
            normalized_text: u.normalized_text.clone(),
            centroid_distance: euclidean(&v.values, &center),
            frequency: u.count,
            edit_distance_to_mode: levenshtein(&u.normalized_text, mode),
            char_length: u.normalized_text.chars().count(),
        })
        .collect())
}

/// Returns `rows` ordered most non-earnest first under `metric`, ties by text.
pub fn non_earnest_rank(metric: Metric, rows: &[FeatureRow]) -> Vec<FeatureRow> {
    let mut out = rows.to_vec();
    out.sort_by(|a, b| {
        metric
            .cmp_non_earnest(a, b)
            .then_with(|| a.normalized_text.cmp(&b.normalized_text))
    });
    out
}
