use std::collections::{BTreeSet, HashSet};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{knn_predict, BinaryClass, Distance, EvalMetrics, LabeledPoint};
use crate::annotation::{EarnestnessClass, LabelStore};
use crate::corpus::Corpus;
use crate::embedding::{embed_batch, EmbeddingCache, EmbeddingProvider, TextHash};
use crate::error::{Error, Result};
use crate::features::ceil_fraction;
use crate::projection::{tsne, TsneConfig};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PoolEntry {
    pub source_question_id: String,
    pub normalized_text: String,
}

/// Responses judged non-earnest by their annotators, from any question.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NonEarnestPool {
    entries: BTreeSet<PoolEntry>,
}

impl NonEarnestPool {
    pub fn new(entries: impl IntoIterator<Item = PoolEntry>) -> Self {
        Self {
            entries: entries.into_iter().collect(),
        }
    }

    /// Every aggregated label whose class is non-earnest, optionally only
    /// from the listed questions.
    pub fn from_labels(labels: &LabelStore, questions: Option<&[String]>) -> Self {
        Self::new(
            labels
                .aggregate_all(None)
                .into_iter()
                .filter(|a| a.class == EarnestnessClass::NonEarnest)
                .filter(|a| questions.is_none_or(|qs| qs.contains(&a.question_id)))
                .map(|a| PoolEntry {
                    source_question_id: a.question_id,
                    normalized_text: a.normalized_text,
                }),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in (question, text) order.
    pub fn iter(&self) -> impl Iterator<Item = &PoolEntry> {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    #[default]
    Embedding,
    #[serde(rename = "projected_2d")]
    Projected2d,
}

impl std::str::FromStr for Space {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "embedding" => Ok(Space::Embedding),
            "projected_2d" | "2d" => Ok(Space::Projected2d),
            other => Err(Error::invalid(format!("unknown space `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSetConfig {
    pub non_earnest_fraction: f64,
    pub earnest_seed_count: usize,
    pub target_question_id: String,
    pub seed: u64,
    #[serde(default)]
    pub space: Space,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub distance: Distance,
    /// Used only for [`Space::Projected2d`]; its seed is replaced by `seed`.
    #[serde(default)]
    pub projection: TsneConfig,
}

fn default_k() -> usize {
    5
}

impl TrainingSetConfig {
    pub fn new(target_question_id: impl Into<String>, non_earnest_fraction: f64, earnest_seed_count: usize, seed: u64) -> Self {
        Self {
            non_earnest_fraction,
            earnest_seed_count,
            target_question_id: target_question_id.into(),
            seed,
            space: Space::Embedding,
            k: default_k(),
            distance: Distance::Euclidean,
            projection: TsneConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.non_earnest_fraction > 0.0 && self.non_earnest_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "non_earnest_fraction must be in (0, 1], got {}",
                self.non_earnest_fraction
            )));
        }
        if self.earnest_seed_count < 1 {
            return Err(Error::invalid("earnest_seed_count must be at least 1"));
        }
        if self.k < 1 {
            return Err(Error::invalid("k must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub source_question_id: String,
    pub normalized_text: String,
    pub class: BinaryClass,
}

/// Chooses the training texts: a seeded uniform sample of
/// `⌈fraction · |pool|⌉` pool entries (kept in pool order) followed by the target question's
/// most frequent unique responses.
pub fn select_training_examples(config: &TrainingSetConfig, pool: &NonEarnestPool, corpus: &Corpus) -> Result<Vec<TrainingExample>> {
    config.validate()?;
    if pool.is_empty() {
        return Err(Error::EmptyInput("non-earnest pool"));
    }
    let uniques = corpus.unique_responses(&config.target_question_id)?;
    if uniques.is_empty() {
        return Err(Error::EmptyInput("target question responses"));
    }
    if config.earnest_seed_count > uniques.len() {
        return Err(Error::invalid(format!(
            "earnest_seed_count {} exceeds the {} unique responses of {}",
            config.earnest_seed_count,
            uniques.len(),
            config.target_question_id
        )));
    }
    let take = ceil_fraction(config.non_earnest_fraction, pool.len()).min(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // a prefix of one seeded shuffle: uniform for each size, and nested
    // across sizes so larger fractions only ever add negatives
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng);
    let mut chosen = order[..take].to_vec();
    chosen.sort_unstable();
    let entries: Vec<&PoolEntry> = pool.iter().collect();
    let mut out: Vec<TrainingExample> = chosen
        .into_iter()
        .map(|i| TrainingExample {
            source_question_id: entries[i].source_question_id.clone(),
            normalized_text: entries[i].normalized_text.clone(),
            class: BinaryClass::NonEarnest,
        })
        .collect();
    out.extend(uniques.into_iter().take(config.earnest_seed_count).map(|u| TrainingExample {
        source_question_id: config.target_question_id.clone(),
        normalized_text: u.normalized_text,
        class: BinaryClass::Earnest,
    }));
    Ok(out)
}

/// Training examples with their embeddings.
pub fn build_training_set(
    config: &TrainingSetConfig,
    pool: &NonEarnestPool,
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
) -> Result<Vec<LabeledPoint<f64>>> {
    let examples = select_training_examples(config, pool, corpus)?;
    let texts: Vec<&str> = examples.iter().map(|e| e.normalized_text.as_str()).collect();
    let m = embed_batch(&texts, provider, cache)?;
    Ok(examples
        .into_iter()
        .zip(m.iter_rows())
        .map(|(e, row)| LabeledPoint::new(e.normalized_text, row.to_vec(), e.class))
        .collect())
}

/// Labeled, embedded evaluation items from aggregated labels; neutral items
/// are left out.
pub fn eval_set_from_labels(
    labels: &LabelStore,
    question_id: Option<&str>,
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
) -> Result<Vec<LabeledPoint<f64>>> {
    let items: Vec<(String, BinaryClass)> = labels
        .aggregate_all(question_id)
        .into_iter()
        .filter_map(|a| BinaryClass::from_class(a.class).map(|c| (a.normalized_text, c)))
        .collect();
    let texts: Vec<&str> = items.iter().map(|(t, _)| t.as_str()).collect();
    let m = embed_batch(&texts, provider, cache)?;
    Ok(items
        .iter()
        .zip(m.iter_rows())
        .map(|((t, c), row)| LabeledPoint::new(t.clone(), row.to_vec(), *c))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub non_earnest_fractions: Vec<f64>,
    pub earnest_seed_counts: Vec<usize>,
}

impl Default for AblationGrid {
    fn default() -> Self {
        Self {
            non_earnest_fractions: vec![0.10, 0.25, 0.50],
            earnest_seed_counts: vec![5, 10, 20],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub non_earnest_fraction: f64,
    pub earnest_seed_count: usize,
    pub train_non_earnest: usize,
    pub train_earnest: usize,
    /// Evaluation items left after removing training texts.
    pub eval_size: usize,
    pub metrics: EvalMetrics,
}

/// Trains one classifier per grid cell and evaluates each on `eval_set`
/// minus that cell's training texts. Rows sorted by (fraction, count).
pub fn ablation_grid(
    grid: &AblationGrid,
    eval_set: &[LabeledPoint<f64>],
    pool: &NonEarnestPool,
    base: &TrainingSetConfig,
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
) -> Result<Vec<AblationRow>> {
    if grid.non_earnest_fractions.is_empty() || grid.earnest_seed_counts.is_empty() {
        return Err(Error::EmptyInput("ablation grid"));
    }
    if base.space != Space::Embedding {
        return Err(Error::invalid("ablation runs in the embedding space only"));
    }
    let mut cells: Vec<(f64, usize)> = grid
        .non_earnest_fractions
        .iter()
        .flat_map(|&f| grid.earnest_seed_counts.iter().map(move |&c| (f, c)))
        .collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cells.dedup();
    let eval_hashes: Vec<TextHash> = eval_set.iter().map(|p| TextHash::of(&p.text)).collect();

    cells
        .into_par_iter()
        .map(|(fraction, count)| {
            let config = TrainingSetConfig {
                non_earnest_fraction: fraction,
                earnest_seed_count: count,
                ..base.clone()
            };
            let train = build_training_set(&config, pool, corpus, provider, cache)?;
            let seen: HashSet<TextHash> = train.iter().map(|p| TextHash::of(&p.text)).collect();
            let mut pairs = Vec::new();
            for (p, h) in eval_set.iter().zip(&eval_hashes) {
                if seen.contains(h) {
                    continue;
                }
                let predicted = knn_predict(&train, &p.values, config.k, config.distance)?.class;
                pairs.push((p.class, predicted));
            }
            let train_non_earnest = train.iter().filter(|p| p.class == BinaryClass::NonEarnest).count();
            Ok(AblationRow {
                non_earnest_fraction: fraction,
                earnest_seed_count: count,
                train_non_earnest,
                train_earnest: train.len() - train_non_earnest,
                eval_size: pairs.len(),
                metrics: EvalMetrics::from_predictions(pairs),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborEvidence {
    pub normalized_text: String,
    pub class: BinaryClass,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseClass {
    pub normalized_text: String,
    pub class: BinaryClass,
    pub count: usize,
    /// Responses inheriting this class.
    pub member_response_ids: Vec<String>,
    pub neighbors: Vec<NeighborEvidence>,
}

/// A persisted classification of one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRun {
    /// Assigned when the run is stored.
    pub run_id: String,
    pub question_id: String,
    pub config: TrainingSetConfig,
    pub provider_id: String,
    /// Digest of provider, configuration and training set.
    pub fingerprint: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub training: Vec<TrainingExample>,
    /// One entry per unique response, most frequent first.
    pub classes: Vec<ResponseClass>,
}

impl ClassificationRun {
    pub fn class_of(&self, normalized_text: &str) -> Option<BinaryClass> {
        self.classes
            .iter()
            .find(|c| c.normalized_text == normalized_text)
            .map(|c| c.class)
    }

    /// Class for each member response id.
    pub fn response_classes(&self) -> impl Iterator<Item = (&str, BinaryClass)> {
        self.classes
            .iter()
            .flat_map(|c| c.member_response_ids.iter().map(move |id| (id.as_str(), c.class)))
    }
}

fn fingerprint(provider_id: &str, config: &TrainingSetConfig, training: &[TrainingExample]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(provider_id.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(config).map_err(|e| Error::invalid(e.to_string()))?);
    for e in training {
        h.update([0]);
        h.update(e.class.as_str().as_bytes());
        h.update([0]);
        h.update(e.normalized_text.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

/// Classifies every unique response of the configured question.
///
/// In the projected space, training texts and the question's responses
/// are embedded together with t-SNE before neighbours are found.
pub fn classify_question(
    corpus: &Corpus,
    config: &TrainingSetConfig,
    pool: &NonEarnestPool,
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
) -> Result<ClassificationRun> {
    let started_at = Utc::now();
    let training = select_training_examples(config, pool, corpus)?;
    let uniques = corpus.unique_responses(&config.target_question_id)?;

    let mut texts: Vec<&str> = training.iter().map(|e| e.normalized_text.as_str()).collect();
    texts.extend(uniques.iter().map(|u| u.normalized_text.as_str()));
    let mut space = embed_batch(&texts, provider, cache)?;
    if config.space == Space::Projected2d {
        let tsne_config = TsneConfig {
            seed: config.seed,
            ..config.projection.clone()
        };
        space = tsne(&space, &tsne_config)?.coords;
    }

    let train: Vec<LabeledPoint<f64>> = training
        .iter()
        .enumerate()
        .map(|(i, e)| LabeledPoint::new(e.normalized_text.clone(), space.row(i).to_vec(), e.class))
        .collect();
    let offset = training.len();
    let classes = uniques
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let p = knn_predict(&train, space.row(offset + i), config.k, config.distance)?;
            Ok(ResponseClass {
                normalized_text: u.normalized_text.clone(),
                class: p.class,
                count: u.count,
                member_response_ids: u.member_response_ids.iter().cloned().collect(),
                neighbors: p
                    .neighbors
                    .into_iter()
                    .map(|n| NeighborEvidence {
                        normalized_text: train[n.index].text.clone(),
                        class: n.class,
                        distance: n.distance,
                    })
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ClassificationRun {
        run_id: String::new(),
        question_id: config.target_question_id.clone(),
        provider_id: provider.provider_id().to_string(),
        fingerprint: fingerprint(provider.provider_id(), config, &training)?,
        config: config.clone(),
        started_at,
        finished_at: Utc::now(),
        training,
        classes,
    })
}
