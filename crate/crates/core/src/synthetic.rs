//! Synthetic corpora with known geometry, for trend checks and demos.
//!
//! Earnest and non-earnest responses are drawn from two isotropic Gaussian
//! clusters; a few source questions supply a labeled non-earnest pool, and
//! a target question carries an imbalanced mix of both classes. Labels are
//! flipped at a fixed rate to mimic annotator noise.

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::annotation::{EarnestnessLabel, LabelStore, RubricScore};
use crate::corpus::{Corpus, ParticipationMode, PollKind, Question, QuestionCategory, Response};
use crate::embedding::TableProvider;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub dimension: usize,
    /// Earnest unique responses of the target question.
    pub earnest_uniques: usize,
    /// Earnest-to-non-earnest ratio on the target question.
    pub imbalance: usize,
    pub pool_size: usize,
    pub pool_questions: usize,
    /// Distance between cluster means, in standard deviations.
    pub separation: f64,
    /// Probability that a label is flipped.
    pub label_noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dimension: 8,
            earnest_uniques: 200,
            imbalance: 10,
            pool_size: 60,
            pool_questions: 4,
            separation: 2.0,
            label_noise: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub labels: LabelStore,
    pub provider: TableProvider,
    pub target_question_id: String,
    pub pool_question_ids: Vec<String>,
}

pub const SYNTHETIC_ANNOTATOR: &str = "synthetic";

pub fn synthetic_corpus(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.dimension;
    let mut direction: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v *= config.separation / norm);

    let mut provider = TableProvider::new(format!("synthetic-s{}", config.seed), d);
    let mut corpus = Corpus::new();
    let mut labels = LabelStore::new();
    let t0 = Utc.with_ymd_and_hms(2024, 1, 8, 10, 0, 0).single().expect("valid date");

    let target = "syn-target".to_string();
    let pool_ids: Vec<String> = (1..=config.pool_questions).map(|i| format!("syn-pool-{i}")).collect();
    for (i, id) in pool_ids.iter().chain(std::iter::once(&target)).enumerate() {
        corpus.upsert_question(Question {
            question_id: id.clone(),
            text: format!("synthetic question {id}"),
            category: QuestionCategory::Conceptual,
            lecture_number: i as u32 + 1,
            poll_kind: PollKind::WordCloud,
        })?;
    }

    let mut next_response = 0usize;
    let mut add = |corpus: &mut Corpus, rng: &mut ChaCha8Rng, question: &str, text: &str, count: usize| -> Result<()> {
        for _ in 0..count {
            next_response += 1;
            corpus.add_response(Response {
                response_id: format!("syn-r{next_response:06}"),
                question_id: question.to_string(),
                student_id: format!("syn-s{:03}", rng.random_range(0..120)),
                raw_text: text.to_string(),
                normalized_text: String::new(),
                mode: ParticipationMode::Synchronous,
                submitted_at: t0 + chrono::Duration::seconds(next_response as i64),
            })?;
        }
        Ok(())
    };

    let sample = |rng: &mut ChaCha8Rng, earnest: bool| -> Vec<f64> {
        (0..d)
            .map(|j| {
                let z: f64 = StandardNormal.sample(rng);
                if earnest { z + direction[j] } else { z }
            })
            .collect()
    };

    let label = |labels: &mut LabelStore, rng: &mut ChaCha8Rng, question: &str, text: &str, earnest: bool| {
        let flipped = rng.random_bool(config.label_noise);
        let score = if earnest != flipped { 5 } else { 1 };
        labels.upsert(EarnestnessLabel {
            annotator_id: SYNTHETIC_ANNOTATOR.into(),
            question_id: question.into(),
            normalized_text: text.into(),
            score: RubricScore::new(score).expect("in range"),
            labeled_at: t0,
        });
    };

    for j in 0..config.pool_size {
        let q = &pool_ids[j % pool_ids.len()];
        let text = format!("pool {j:04}");
        provider.insert(text.clone(), sample(&mut rng, false))?;
        add(&mut corpus, &mut rng, q, &text, 1)?;
        label(&mut labels, &mut rng, q, &text, false);
    }

    // earnest answers are the popular ones: counts fall from 2 + n/10 to 2
    let n_e = config.earnest_uniques;
    for i in 0..n_e {
        let text = format!("earnest {i:04}");
        provider.insert(text.clone(), sample(&mut rng, true))?;
        add(&mut corpus, &mut rng, &target, &text, 2 + (n_e - i) / 10)?;
        label(&mut labels, &mut rng, &target, &text, true);
    }
    for i in 0..n_e.div_ceil(config.imbalance.max(1)) {
        let text = format!("offtrack {i:04}");
        provider.insert(text.clone(), sample(&mut rng, false))?;
        add(&mut corpus, &mut rng, &target, &text, 1)?;
        label(&mut labels, &mut rng, &target, &text, false);
    }

    Ok(SyntheticCorpus {
        corpus,
        labels,
        provider,
        target_question_id: target,
        pool_question_ids: pool_ids,
    })
}
