//! Rubric labels from several annotators, their aggregation into
//! earnestness classes, and inter-rater agreement.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// A 1–5 rubric score. 1–2 are non-earnest, 3 neutral, 4–5 earnest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct RubricScore(u8);

impl RubricScore {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 5;

    pub fn new(score: i64) -> Result<Self> {
        if (i64::from(Self::MIN)..=i64::from(Self::MAX)).contains(&score) {
            Ok(RubricScore(score as u8))
        } else {
            Err(Error::ScoreOutOfRange(score.to_string()))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn class(self) -> EarnestnessClass {
        match self.0 {
            1 | 2 => EarnestnessClass::NonEarnest,
            3 => EarnestnessClass::Neutral,
            _ => EarnestnessClass::Earnest,
        }
    }
}

impl TryFrom<i64> for RubricScore {
    type Error = Error;
    fn try_from(v: i64) -> Result<Self> {
        RubricScore::new(v)
    }
}

impl From<RubricScore> for u8 {
    fn from(s: RubricScore) -> u8 {
        s.0
    }
}

impl std::str::FromStr for RubricScore {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let v: i64 = s.trim().parse().map_err(|_| Error::ScoreOutOfRange(s.to_string()))?;
        RubricScore::new(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarnestnessClass {
    NonEarnest,
    Neutral,
    Earnest,
}

impl EarnestnessClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EarnestnessClass::NonEarnest => "non_earnest",
            EarnestnessClass::Neutral => "neutral",
            EarnestnessClass::Earnest => "earnest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarnestnessLabel {
    pub annotator_id: String,
    pub question_id: String,
    pub normalized_text: String,
    pub score: RubricScore,
    pub labeled_at: DateTime<Utc>,
}

impl EarnestnessLabel {
    fn key(&self) -> LabelKey {
        LabelKey {
            question_id: self.question_id.clone(),
            normalized_text: self.normalized_text.clone(),
            annotator_id: self.annotator_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct LabelKey {
    question_id: String,
    normalized_text: String,
    annotator_id: String,
}

/// One overwrite of an existing label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAudit {
    pub annotator_id: String,
    pub question_id: String,
    pub normalized_text: String,
    pub previous: RubricScore,
    pub score: RubricScore,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedLabel {
    pub question_id: String,
    pub normalized_text: String,
    /// Exact mean as `score_sum / n_annotators`.
    pub mean: Ratio<u32>,
    pub mean_score: f64,
    pub n_annotators: u32,
    pub class: EarnestnessClass,
}

/// Class of a mean rubric score, decided with integers: compares
/// `score_sum` against `3 · n` so an exact 3 is never lost to rounding.
pub fn class_of_mean(score_sum: u32, n: u32) -> EarnestnessClass {
    match score_sum.cmp(&(3 * n)) {
        std::cmp::Ordering::Less => EarnestnessClass::NonEarnest,
        std::cmp::Ordering::Equal => EarnestnessClass::Neutral,
        std::cmp::Ordering::Greater => EarnestnessClass::Earnest,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    /// Mean over annotator pairs of the share of co-labeled items placed in
    /// the same 3-way class.
    pub pairwise_percent: f64,
    /// Fleiss' kappa over items with at least two ratings; `None` when
    /// chance agreement is 1 (every rating in one class).
    pub fleiss_kappa: Option<f64>,
    pub annotators: usize,
    pub items: usize,
    pub pairs: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportReport {
    pub imported: usize,
    pub rejected: Vec<(u64, String)>,
}

/// Label store keyed by `(question, text, annotator)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "LabelFile", into = "LabelFile")]
pub struct LabelStore {
    labels: BTreeMap<LabelKey, EarnestnessLabel>,
    audit: Vec<LabelAudit>,
}

#[derive(Serialize, Deserialize)]
struct LabelFile {
    labels: Vec<EarnestnessLabel>,
    #[serde(default)]
    audit: Vec<LabelAudit>,
}

impl From<LabelFile> for LabelStore {
    fn from(f: LabelFile) -> Self {
        Self {
            labels: f.labels.into_iter().map(|l| (l.key(), l)).collect(),
            audit: f.audit,
        }
    }
}

impl From<LabelStore> for LabelFile {
    fn from(s: LabelStore) -> Self {
        Self {
            labels: s.labels.into_values().collect(),
            audit: s.audit,
        }
    }
}

pub const LABEL_FILE_HEADER: [&str; 5] = ["annotator_id", "question_id", "normalized_text", "score", "labeled_at"];

impl LabelStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// All labels ordered by question, text, annotator.
    pub fn labels(&self) -> impl Iterator<Item = &EarnestnessLabel> {
        self.labels.values()
    }

    pub fn audit(&self) -> &[LabelAudit] {
        &self.audit
    }

    /// Inserts or overwrites a label without corpus validation. Returns the
    /// previous score if one existed.
    pub fn upsert(&mut self, label: EarnestnessLabel) -> Option<RubricScore> {
        let key = label.key();
        let previous = self.labels.get(&key).map(|l| l.score);
        if let Some(prev) = previous {
            self.audit.push(LabelAudit {
                annotator_id: label.annotator_id.clone(),
                question_id: label.question_id.clone(),
                normalized_text: label.normalized_text.clone(),
                previous: prev,
                score: label.score,
                at: label.labeled_at,
            });
        }
        self.labels.insert(key, label);
        previous
    }

    /// Validates the label against the corpus and upserts it.
    pub fn record_label(&mut self, corpus: &Corpus, label: EarnestnessLabel) -> Result<&EarnestnessLabel> {
        corpus.question(&label.question_id)?;
        if !corpus.has_text(&label.question_id, &label.normalized_text) {
            return Err(Error::UnknownText {
                question_id: label.question_id,
                text: label.normalized_text,
            });
        }
        let key = label.key();
        self.upsert(label);
        Ok(&self.labels[&key])
    }

    pub fn get(&self, annotator_id: &str, question_id: &str, text: &str) -> Option<&EarnestnessLabel> {
        self.labels.get(&LabelKey {
            question_id: question_id.into(),
            normalized_text: text.into(),
            annotator_id: annotator_id.into(),
        })
    }

    fn scores_for<'a>(&'a self, question_id: &'a str, text: &'a str) -> impl Iterator<Item = &'a EarnestnessLabel> + 'a {
        self.labels
            .values()
            .filter(move |l| l.question_id == question_id && l.normalized_text == text)
    }

    /// Mean score across annotators and the resulting class.
    pub fn aggregate(&self, question_id: &str, text: &str) -> Result<AggregatedLabel> {
        let (sum, n) = self
            .scores_for(question_id, text)
            .fold((0u32, 0u32), |(s, n), l| (s + u32::from(l.score.value()), n + 1));
        if n == 0 {
            return Err(Error::NoLabels {
                question_id: question_id.into(),
                text: text.into(),
            });
        }
        Ok(AggregatedLabel {
            question_id: question_id.into(),
            normalized_text: text.into(),
            mean: Ratio::new(sum, n),
            mean_score: f64::from(sum) / f64::from(n),
            n_annotators: n,
            class: class_of_mean(sum, n),
        })
    }

    /// Aggregates every labeled item, optionally restricted to one question,
    /// ordered by (question, text).
    pub fn aggregate_all(&self, question_id: Option<&str>) -> Vec<AggregatedLabel> {
        let mut acc: BTreeMap<(&str, &str), (u32, u32)> = BTreeMap::new();
        for l in self.labels.values() {
            if question_id.is_some_and(|q| q != l.question_id) {
                continue;
            }
            let e = acc.entry((&l.question_id, &l.normalized_text)).or_default();
            e.0 += u32::from(l.score.value());
            e.1 += 1;
        }
        acc.into_iter()
            .map(|((q, t), (sum, n))| AggregatedLabel {
                question_id: q.into(),
                normalized_text: t.into(),
                mean: Ratio::new(sum, n),
                mean_score: f64::from(sum) / f64::from(n),
                n_annotators: n,
                class: class_of_mean(sum, n),
            })
            .collect()
    }

    /// Inter-rater agreement on the 3-way classes, pooled over all questions
    /// or restricted to one.
    pub fn agreement(&self, question_id: Option<&str>) -> Result<Agreement> {
        let mut by_annotator: BTreeMap<&str, BTreeMap<(&str, &str), EarnestnessClass>> = BTreeMap::new();
        let mut by_item: BTreeMap<(&str, &str), [u32; 3]> = BTreeMap::new();
        for l in self.labels.values() {
            if question_id.is_some_and(|q| q != l.question_id) {
                continue;
            }
            let item = (l.question_id.as_str(), l.normalized_text.as_str());
            let class = l.score.class();
            by_annotator
                .entry(&l.annotator_id)
                .or_default()
                .insert(item, class);
            by_item.entry(item).or_default()[class as usize] += 1;
        }
        if by_annotator.len() < 2 {
            return Err(Error::NotEnoughAnnotators(format!(
                "{} annotator(s) found, need at least 2",
                by_annotator.len()
            )));
        }

        let annotators: Vec<_> = by_annotator.values().collect();
        let mut fractions = Vec::new();
        for (i, a) in annotators.iter().enumerate() {
            for b in &annotators[i + 1..] {
                let (mut shared, mut same) = (0u32, 0u32);
                for (item, ca) in a.iter() {
                    if let Some(cb) = b.get(item) {
                        shared += 1;
                        same += u32::from(ca == cb);
                    }
                }
                if shared > 0 {
                    fractions.push(f64::from(same) / f64::from(shared));
                }
            }
        }
        if fractions.is_empty() {
            return Err(Error::NotEnoughAnnotators("no item is labeled by two annotators".into()));
        }
        let pairwise_percent = fractions.iter().sum::<f64>() / fractions.len() as f64;

        Ok(Agreement {
            pairwise_percent,
            fleiss_kappa: fleiss_kappa(by_item.values().filter(|c| c.iter().sum::<u32>() >= 2)),
            annotators: by_annotator.len(),
            items: by_item.len(),
            pairs: fractions.len(),
        })
    }

    /// Writes all labels as delimited text with a header row.
    pub fn export_labels<W: Write>(&self, writer: W) -> Result<usize> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(LABEL_FILE_HEADER)?;
        for l in self.labels.values() {
            w.write_record([
                l.annotator_id.as_str(),
                l.question_id.as_str(),
                l.normalized_text.as_str(),
                &l.score.value().to_string(),
                &l.labeled_at.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<label export>", e))?;
        Ok(self.labels.len())
    }

    /// Reads a label file. Malformed rows are reported with their line
    /// number and skipped; with a corpus, rows must reference a known
    /// question and one of its response texts.
    pub fn import_labels<R: Read>(&mut self, reader: R, corpus: Option<&Corpus>) -> Result<ImportReport> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let idx: Vec<usize> = LABEL_FILE_HEADER
            .iter()
            .map(|h| {
                headers
                    .iter()
                    .position(|c| c.trim() == *h)
                    .ok_or_else(|| Error::invalid(format!("label file is missing column `{h}`")))
            })
            .collect::<Result<_>>()?;

        let mut report = ImportReport::default();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let get = |i: usize| rec.get(idx[i]);
            let parsed = (|| -> Result<EarnestnessLabel> {
                let (Some(annotator), Some(question), Some(text), Some(score), Some(at)) =
                    (get(0), get(1), get(2), get(3), get(4))
                else {
                    return Err(Error::invalid("missing fields"));
                };
                let labeled_at = DateTime::parse_from_rfc3339(at.trim())
                    .map_err(|_| Error::invalid(format!("unparseable labeled_at `{at}`")))?
                    .with_timezone(&Utc);
                Ok(EarnestnessLabel {
                    annotator_id: annotator.to_string(),
                    question_id: question.to_string(),
                    normalized_text: text.to_string(),
                    score: score.parse()?,
                    labeled_at,
                })
            })();
            let result = parsed.and_then(|label| match corpus {
                Some(c) => self.record_label(c, label).map(|_| ()),
                None => {
                    self.upsert(label);
                    Ok(())
                }
            });
            match result {
                Ok(()) => report.imported += 1,
                Err(e) => report.rejected.push((line, e.to_string())),
            }
        }
        Ok(report)
    }
}

fn fleiss_kappa<'a>(items: impl Iterator<Item = &'a [u32; 3]>) -> Option<f64> {
    let mut p_items = 0.0;
    let mut n_items = 0usize;
    let mut class_totals = [0f64; 3];
    let mut total = 0f64;
    for counts in items {
        let n: u32 = counts.iter().sum();
        let agree: u32 = counts.iter().map(|&c| c * c.saturating_sub(1)).sum();
        p_items += f64::from(agree) / f64::from(n * (n - 1));
        n_items += 1;
        for (t, &c) in class_totals.iter_mut().zip(counts) {
            *t += f64::from(c);
        }
        total += f64::from(n);
    }
    if n_items == 0 {
        return None;
    }
    let p_bar = p_items / n_items as f64;
    let p_e: f64 = class_totals.iter().map(|t| (t / total).powi(2)).sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return None;
    }
    Some((p_bar - p_e) / (1.0 - p_e))
}
