//! Request-level entry points shared by the command line and the HTTP
//! service, so both produce identical results for identical requests.

use serde::{Deserialize, Serialize};

use crate::annotation::{EarnestnessClass, LabelStore};
use crate::classifier::{
    ablation_grid, classify_question, eval_set_from_labels, AblationGrid, AblationRow, BinaryClass, ClassificationRun,
    Distance, NonEarnestPool, Space, TrainingSetConfig,
};
use crate::corpus::Corpus;
use crate::embedding::{embed_batch, EmbeddingCache, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::projection::{tsne, ProjectedPoint, TsneConfig};

pub const DEFAULT_SEED: u64 = 42;

fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_fraction() -> f64 {
    0.5
}
fn default_seeds() -> usize {
    20
}
fn default_k() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub question_id: String,
    #[serde(default = "default_fraction")]
    pub non_earnest_fraction: f64,
    #[serde(default = "default_seeds")]
    pub earnest_seed_count: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub distance: Distance,
    #[serde(default)]
    pub space: Space,
    /// Questions whose non-earnest labels form the pool; all when absent.
    #[serde(default)]
    pub pool_questions: Option<Vec<String>>,
}

impl ClassifyRequest {
    pub fn new(question_id: impl Into<String>) -> Self {
        Self {
            question_id: question_id.into(),
            non_earnest_fraction: default_fraction(),
            earnest_seed_count: default_seeds(),
            seed: DEFAULT_SEED,
            k: default_k(),
            distance: Distance::Euclidean,
            space: Space::Embedding,
            pool_questions: None,
        }
    }

    pub fn training_config(&self) -> TrainingSetConfig {
        TrainingSetConfig {
            non_earnest_fraction: self.non_earnest_fraction,
            earnest_seed_count: self.earnest_seed_count,
            target_question_id: self.question_id.clone(),
            seed: self.seed,
            space: self.space,
            k: self.k,
            distance: self.distance,
            projection: TsneConfig::default(),
        }
    }
}

pub fn classify(
    corpus: &Corpus,
    labels: &LabelStore,
    request: &ClassifyRequest,
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
) -> Result<ClassificationRun> {
    corpus.word_cloud_question(&request.question_id)?;
    let pool = NonEarnestPool::from_labels(labels, request.pool_questions.as_deref());
    classify_question(corpus, &request.training_config(), &pool, provider, cache)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblateRequest {
    /// Question supplying the earnest seeds; defaults to the question with
    /// the most labeled items.
    #[serde(default)]
    pub question_id: Option<String>,
    #[serde(default)]
    pub grid: AblationGrid,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub distance: Distance,
    /// Restricts the evaluation set to one question; all labels otherwise.
    #[serde(default)]
    pub eval_question: Option<String>,
    #[serde(default)]
    pub pool_questions: Option<Vec<String>>,
}

impl Default for AblateRequest {
    fn default() -> Self {
        Self {
            question_id: None,
            grid: AblationGrid::default(),
            seed: DEFAULT_SEED,
            k: default_k(),
            distance: Distance::Euclidean,
            eval_question: None,
            pool_questions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub question_id: String,
    pub seed: u64,
    pub pool_size: usize,
    pub eval_items: usize,
    pub rows: Vec<AblationRow>,
}

/// Question with the most aggregated labels, ties to the smaller id.
pub fn most_labeled_question(labels: &LabelStore) -> Option<String> {
    let mut counts: std::collections::BTreeMap<String, usize> = Default::default();
    for a in labels.aggregate_all(None) {
        *counts.entry(a.question_id).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    counts.into_iter().find(|(_, n)| *n == best).map(|(q, _)| q)
}

pub fn ablate(
    corpus: &Corpus,
    labels: &LabelStore,
    request: &AblateRequest,
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
) -> Result<AblationReport> {
    ablate_with_eval(corpus, labels, labels, request, provider, cache)
}

/// Like [`ablate`], with evaluation items taken from `eval_labels` while the
/// pool still comes from `labels`.
pub fn ablate_with_eval(
    corpus: &Corpus,
    labels: &LabelStore,
    eval_labels: &LabelStore,
    request: &AblateRequest,
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
) -> Result<AblationReport> {
    let question_id = match &request.question_id {
        Some(q) => q.clone(),
        None => most_labeled_question(labels).ok_or(Error::EmptyInput("labels"))?,
    };
    corpus.word_cloud_question(&question_id)?;
    let pool = NonEarnestPool::from_labels(labels, request.pool_questions.as_deref());
    let eval = eval_set_from_labels(eval_labels, request.eval_question.as_deref(), provider, cache)?;
    let mut base = TrainingSetConfig::new(&question_id, 1.0, 1, request.seed);
    base.k = request.k;
    base.distance = request.distance;
    let rows = ablation_grid(&request.grid, &eval, &pool, &base, corpus, provider, cache)?;
    Ok(AblationReport {
        question_id,
        seed: request.seed,
        pool_size: pool.len(),
        eval_items: eval.len(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectRequest {
    pub question_id: String,
    #[serde(default)]
    pub tsne: TsneConfig,
}

/// t-SNE of a question's unique responses, most frequent first.
///
/// Points carry the aggregated label class where one exists, otherwise the
/// class from `run` if given.
pub fn project(
    corpus: &Corpus,
    labels: &LabelStore,
    request: &ProjectRequest,
    run: Option<&ClassificationRun>,
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
) -> Result<Vec<ProjectedPoint>> {
    corpus.word_cloud_question(&request.question_id)?;
    let uniques = corpus.unique_responses(&request.question_id)?;
    let texts: Vec<&str> = uniques.iter().map(|u| u.normalized_text.as_str()).collect();
    let m = embed_batch(&texts, provider, cache)?;
    let coords = tsne(&m, &request.tsne)?.coords;
    let aggregated: std::collections::HashMap<String, EarnestnessClass> = labels
        .aggregate_all(Some(&request.question_id))
        .into_iter()
        .map(|a| (a.normalized_text, a.class))
        .collect();
    Ok(texts
        .iter()
        .enumerate()
        .map(|(i, t)| ProjectedPoint {
            normalized_text: t.to_string(),
            x: coords.get(i, 0),
            y: coords.get(i, 1),
            class_hint: aggregated
                .get(*t)
                .copied()
                .or_else(|| run.and_then(|r| r.class_of(t)).map(|c: BinaryClass| c.into())),
        })
        .collect())
}
