use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{compute_features, non_earnest_rank, FeatureRow, Metric};
use crate::corpus::Corpus;
use crate::embedding::{EmbeddingCache, EmbeddingProvider};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Share of unique responses, from the non-earnest end of each metric,
    /// that receives half of the sampling mass.
    pub tail_fraction: f64,
    /// Share of unique responses drawn per metric.
    pub per_metric_fraction: f64,
    /// Upper bound on the final sample size.
    pub target_n: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            tail_fraction: 0.20,
            per_metric_fraction: 0.20,
            target_n: 200,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tail_fraction", self.tail_fraction),
            ("per_metric_fraction", self.per_metric_fraction),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        if self.target_n < 1 {
            return Err(Error::invalid("target_n must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledResponse {
    pub normalized_text: String,
    /// Metrics whose per-metric draw picked this response.
    pub metrics: Vec<Metric>,
    pub features: FeatureRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub question_id: String,
    pub config: SamplerConfig,
    pub unique_responses: usize,
    /// Sorted by normalized text.
    pub items: Vec<SampledResponse>,
}

/// `⌈fraction · n⌉` clamped to `n`.
///
/// A slack of 1e-9 absorbs representation error so that, e.g., `0.2 · 15`
/// (which evaluates to 3.0000000000000004) rounds to 3.
pub fn ceil_fraction(fraction: f64, n: usize) -> usize {
    let raw = (fraction * n as f64 - 1e-9).ceil();
    (raw.max(0.0) as usize).min(n)
}

/// Integer weights `(tail_item, rest_item)` giving the tail and the rest
/// equal total mass: each tail item weighs `|rest|` and each remaining item
/// weighs `|tail|`.
pub fn equal_mass_weights(unique: usize, tail: usize) -> (u64, u64) {
    let rest = unique - tail;
    (rest as u64, tail as u64)
}

/// Successive weighted draws without replacement; returns indices in draw
/// order.
///
/// Each draw picks index `i` with probability `w_i / Σ w` over the items not
/// yet drawn. If every remaining weight is zero the remaining items are
/// drawn uniformly.
pub fn weighted_sample_without_replacement<R: Rng + ?Sized>(weights: &[u64], m: usize, rng: &mut R) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut out = Vec::with_capacity(m.min(weights.len()));
    while out.len() < m && !remaining.is_empty() {
        let total: u64 = remaining.iter().map(|&i| weights[i]).sum();
        let pos = if total == 0 {
            rng.random_range(0..remaining.len())
        } else {
            let mut ticket = rng.random_range(0..total);
            remaining
                .iter()
                .position(|&i| {
                    if ticket < weights[i] {
                        true
                    } else {
                        ticket -= weights[i];
                        false
                    }
                })
                .expect("ticket falls inside the total weight")
        };
        out.push(remaining.remove(pos));
    }
    out
}

/// Rule-based sampler over precomputed features.
///
/// For each metric in [`Metric::ALL`] order: rank rows most non-earnest
/// first, take the top `⌈tail_fraction·U⌉` as the tail, weight tail and
/// rest to equal total mass, and draw `⌈per_metric_fraction·U⌉` rows
/// without replacement. The union of the four draws is returned, subsampled
/// uniformly to `target_n` if larger. One ChaCha8 stream seeded with
/// `config.seed` drives every draw.
pub fn rule_based_sample_rows(rows: &[FeatureRow], config: &SamplerConfig) -> Result<Vec<SampledResponse>> {
    config.validate()?;
    if rows.is_empty() {
        return Err(Error::EmptyInput("no unique responses to sample"));
    }
    let u = rows.len();
    let tail = ceil_fraction(config.tail_fraction, u);
    let per_metric = ceil_fraction(config.per_metric_fraction, u);
    let (tail_w, rest_w) = equal_mass_weights(u, tail);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut picked: BTreeMap<String, (Vec<Metric>, FeatureRow)> = BTreeMap::new();
    for metric in Metric::ALL {
        let ranked = non_earnest_rank(metric, rows);
        let weights: Vec<u64> = (0..u).map(|i| if i < tail { tail_w } else { rest_w }).collect();
        for i in weighted_sample_without_replacement(&weights, per_metric, &mut rng) {
            let r = &ranked[i];
            picked
                .entry(r.normalized_text.clone())
                .or_insert_with(|| (Vec::new(), r.clone()))
                .0
                .push(metric);
        }
    }

    let mut items: Vec<SampledResponse> = picked
        .into_iter()
        .map(|(text, (metrics, features))| SampledResponse {
            normalized_text: text,
            metrics,
            features,
        })
        .collect();
    if items.len() > config.target_n {
        items.shuffle(&mut rng);
        items.truncate(config.target_n);
        items.sort_by(|a, b| a.normalized_text.cmp(&b.normalized_text));
    }
    Ok(items)
}

/// Computes features for a question and draws the annotation sample.
pub fn rule_based_sample(
    corpus: &Corpus,
    question_id: &str,
    config: &SamplerConfig,
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
) -> Result<Sample> {
    config.validate()?;
    let rows = compute_features(corpus, question_id, provider, cache)?;
    let items = rule_based_sample_rows(&rows, config)?;
    Ok(Sample {
        question_id: question_id.to_string(),
        config: config.clone(),
        unique_responses: rows.len(),
        items,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn rows(n: usize) -> Vec<FeatureRow> {
        (0..n)
            .map(|i| FeatureRow {
                normalized_text: format!("resp{i:04}"),
                centroid_distance: (i * 7 % 13) as f64,
                frequency: 1 + i % 5,
                edit_distance_to_mode: i % 9,
                char_length: 3 + i % 11,
            })
            .collect()
    }

    #[test]
    fn ceil_fraction_absorbs_float_noise() {
        assert_eq!(ceil_fraction(0.2, 10), 2);
        assert_eq!(ceil_fraction(0.2, 15), 3);
        assert_eq!(ceil_fraction(0.2, 11), 3);
        assert_eq!(ceil_fraction(1.0, 7), 7);
        assert_eq!(ceil_fraction(0.2, 0), 0);
        assert_eq!(ceil_fraction(0.01, 3), 1);
    }

    #[test]
    fn equal_mass_is_exact() {
        for u in 1..200 {
            let t = ceil_fraction(0.2, u);
            let (wt, wr) = equal_mass_weights(u, t);
            assert_eq!(wt * t as u64, wr * (u - t) as u64);
        }
    }

    #[test]
    fn takes_everything_when_small_and_full_fraction() {
        let r = rows(37);
        let cfg = SamplerConfig { per_metric_fraction: 1.0, ..Default::default() };
        let got = rule_based_sample_rows(&r, &cfg).unwrap();
        assert_eq!(got.len(), 37);
    }

    #[test]
    fn deterministic_for_seed() {
        let r = rows(500);
        let cfg = SamplerConfig { seed: 99, ..Default::default() };
        let a = rule_based_sample_rows(&r, &cfg).unwrap();
        let b = rule_based_sample_rows(&r, &cfg).unwrap();
        assert_eq!(a, b);
        let c = rule_based_sample_rows(&r, &SamplerConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn union_capped_at_target() {
        let r = rows(2000);
        let cfg = SamplerConfig::default();
        let got = rule_based_sample_rows(&r, &cfg).unwrap();
        assert_eq!(got.len(), 200);
        let all: BTreeSet<&str> = r.iter().map(|r| r.normalized_text.as_str()).collect();
        assert!(got.iter().all(|s| all.contains(s.normalized_text.as_str())));
        assert!(got.windows(2).all(|w| w[0].normalized_text < w[1].normalized_text));
    }

    #[test]
    fn first_draw_hits_tail_half_the_time() {
        // U = 10, tail = 2: weights 8 (tail) and 2 (rest) give P(tail) = 16/32.
        let (wt, wr) = equal_mass_weights(10, 2);
        let weights: Vec<u64> = (0..10).map(|i| if i < 2 { wt } else { wr }).collect();
        let trials = 10_000;
        let hits = (0..trials)
            .filter(|&s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                weighted_sample_without_replacement(&weights, 2, &mut rng)[0] < 2
            })
            .count();
        let p = hits as f64 / trials as f64;
        assert!((p - 0.5).abs() <= 0.02, "p = {p}");
    }

    #[test]
    fn without_replacement_never_repeats() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let idx = weighted_sample_without_replacement(&[5, 0, 0, 1, 9], 5, &mut rng);
        let set: BTreeSet<usize> = idx.iter().copied().collect();
        assert_eq!(set.len(), 5);
        // positive weights are always drawn before zero weights
        assert!(idx[..3].iter().all(|&i| i == 0 || i == 3 || i == 4));
    }

    #[test]
    fn rejects_bad_config() {
        let r = rows(5);
        assert!(rule_based_sample_rows(&r, &SamplerConfig { target_n: 0, ..Default::default() }).is_err());
        assert!(rule_based_sample_rows(&r, &SamplerConfig { tail_fraction: 0.0, ..Default::default() }).is_err());
        assert!(rule_based_sample_rows(&[], &SamplerConfig::default()).is_err());
    }

    proptest::proptest! {
        #[test]
        fn subset_and_bounded(n in 1usize..300, target in 1usize..250, seed in 0u64..1000) {
            let r = rows(n);
            let cfg = SamplerConfig { target_n: target, seed, ..Default::default() };
            let got = rule_based_sample_rows(&r, &cfg).unwrap();
            proptest::prop_assert!(got.len() <= target);
            proptest::prop_assert!(!got.is_empty());
            let all: BTreeSet<&str> = r.iter().map(|r| r.normalized_text.as_str()).collect();
            proptest::prop_assert!(got.iter().all(|s| all.contains(s.normalized_text.as_str())));
        }
    }
}
