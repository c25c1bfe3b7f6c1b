use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{knn_predict, BinaryClass, Distance, LabeledPoint};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Accuracy and recall with their confusion matrix.
///
/// `confusion` is `[[TP, FN], [FP, TN]]`: rows are the true class
/// (non-earnest, earnest), columns the predicted class in the same order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    /// `TP / (TP + FN)`; zero when there are no non-earnest items.
    pub recall: f64,
    pub confusion: [[u64; 2]; 2],
    pub n: u64,
}

impl EvalMetrics {
    pub fn from_confusion(confusion: [[u64; 2]; 2]) -> Self {
        let [[tp, fn_], [fp, tn]] = confusion;
        let n = tp + fn_ + fp + tn;
        let accuracy = if n == 0 { 0.0 } else { (tp + tn) as f64 / n as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        Self {
            accuracy,
            recall,
            confusion,
            n,
        }
    }

    pub fn from_predictions(pairs: impl IntoIterator<Item = (BinaryClass, BinaryClass)>) -> Self {
        let mut c = [[0u64; 2]; 2];
        for (truth, predicted) in pairs {
            let row = (truth == BinaryClass::Earnest) as usize;
            let col = (predicted == BinaryClass::Earnest) as usize;
            c[row][col] += 1;
        }
        Self::from_confusion(c)
    }

    pub fn true_positives(&self) -> u64 {
        self.confusion[0][0]
    }
    pub fn false_negatives(&self) -> u64 {
        self.confusion[0][1]
    }
    pub fn false_positives(&self) -> u64 {
        self.confusion[1][0]
    }
    pub fn true_negatives(&self) -> u64 {
        self.confusion[1][1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<EvalMetrics>,
    /// Unweighted means of the per-fold values.
    pub mean_accuracy: f64,
    pub mean_recall: f64,
    /// All held-out predictions in one confusion matrix.
    pub pooled: EvalMetrics,
}

/// Stratified fold index for each point: each class is shuffled with the
/// seed and dealt round-robin, the deal continuing across classes.
pub fn assign_folds(classes: &[BinaryClass], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0; classes.len()];
    let mut next = 0;
    for class in [BinaryClass::NonEarnest, BinaryClass::Earnest] {
        let mut members: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == class).collect();
        if members.len() < folds {
            return Err(Error::TooFewForFolds {
                class: class.as_str().to_string(),
                found: members.len(),
                folds,
            });
        }
        members.shuffle(&mut rng);
        for i in members {
            out[i] = next % folds;
            next += 1;
        }
    }
    Ok(out)
}

pub fn cross_validate<T: Scalar>(
    labeled: &[LabeledPoint<T>],
    k: usize,
    folds: usize,
    seed: u64,
    distance: Distance,
) -> Result<CrossValidation> {
    let classes: Vec<BinaryClass> = labeled.iter().map(|p| p.class).collect();
    let assignment = assign_folds(&classes, folds, seed)?;
    let mut per_fold = Vec::with_capacity(folds);
    let mut pooled = Vec::with_capacity(labeled.len());
    for f in 0..folds {
        let train: Vec<LabeledPoint<T>> = labeled
            .iter()
            .zip(&assignment)
            .filter(|(_, &a)| a != f)
            .map(|(p, _)| p.clone())
            .collect();
        let mut pairs = Vec::new();
        for (p, _) in labeled.iter().zip(&assignment).filter(|(_, &a)| a == f) {
            let predicted = knn_predict(&train, &p.values, k, distance)?.class;
            pairs.push((p.class, predicted));
        }
        pooled.extend(pairs.iter().copied());
        per_fold.push(EvalMetrics::from_predictions(pairs));
    }
    let mean_accuracy = per_fold.iter().map(|m| m.accuracy).sum::<f64>() / folds as f64;
    let mean_recall = per_fold.iter().map(|m| m.recall).sum::<f64>() / folds as f64;
    Ok(CrossValidation {
        folds: per_fold,
        mean_accuracy,
        mean_recall,
        pooled: EvalMetrics::from_predictions(pooled),
    })
}
