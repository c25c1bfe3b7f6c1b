//! Nearest-neighbour earnestness classification.
//!
//! Non-earnest is the positive class throughout: recall measures how many
//! non-earnest responses were caught.

mod knn;
mod metrics;
mod training;

use serde::{Deserialize, Serialize};

use crate::annotation::EarnestnessClass;
use crate::error::{Error, Result};

pub use knn::{knn_predict, Neighbor, Prediction};
pub use metrics::{assign_folds, cross_validate, CrossValidation, EvalMetrics};
pub use training::{
    ablation_grid, build_training_set, classify_question, eval_set_from_labels, select_training_examples,
    AblationGrid, AblationRow, ClassificationRun, NeighborEvidence, NonEarnestPool, PoolEntry, ResponseClass,
    Space, TrainingExample, TrainingSetConfig,
};

/// Two-class target; neutral items never enter training or evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryClass {
    NonEarnest,
    Earnest,
}

impl BinaryClass {
    pub fn as_str(self) -> &'static str {
        match self {
            BinaryClass::NonEarnest => "non_earnest",
            BinaryClass::Earnest => "earnest",
        }
    }

    /// `None` for neutral.
    pub fn from_class(class: EarnestnessClass) -> Option<Self> {
        match class {
            EarnestnessClass::NonEarnest => Some(BinaryClass::NonEarnest),
            EarnestnessClass::Earnest => Some(BinaryClass::Earnest),
            EarnestnessClass::Neutral => None,
        }
    }
}

impl From<BinaryClass> for EarnestnessClass {
    fn from(c: BinaryClass) -> Self {
        match c {
            BinaryClass::NonEarnest => EarnestnessClass::NonEarnest,
            BinaryClass::Earnest => EarnestnessClass::Earnest,
        }
    }
}

impl std::str::FromStr for BinaryClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "non_earnest" => Ok(BinaryClass::NonEarnest),
            "earnest" => Ok(BinaryClass::Earnest),
            other => Err(Error::invalid(format!("unknown class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Euclidean,
    Cosine,
}

impl std::str::FromStr for Distance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Distance::Euclidean),
            "cosine" => Ok(Distance::Cosine),
            other => Err(Error::invalid(format!("unknown distance `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint<T = f64> {
    pub text: String,
    pub values: Vec<T>,
    pub class: BinaryClass,
}

impl<T> LabeledPoint<T> {
    pub fn new(text: impl Into<String>, values: Vec<T>, class: BinaryClass) -> Self {
        Self {
            text: text.into(),
            values,
            class,
        }
    }
}
