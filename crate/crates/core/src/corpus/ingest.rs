use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{normalize_text, Corpus, ParticipationMode, PollKind, Question, QuestionCategory, Response};
use crate::error::{Error, Result};

const REQUIRED_FIELDS: [&str; 5] = ["question_id", "student_id", "raw_text", "mode", "submitted_at"];
const OPTIONAL_FIELDS: [&str; 1] = ["response_id"];

/// How a vendor export maps onto response fields.
///
/// Loaded from TOML:
///
/// ```toml
/// delimiter = ","
/// timestamp_format = "rfc3339"   # or a chrono pattern such as "%Y-%m-%d %H:%M:%S" (read as UTC)
///
/// [columns]
/// question_id = "Poll ID"
/// student_id = "Participant"
/// raw_text = "Answer"
/// mode = "Session"
/// submitted_at = "Time"
/// response_id = "Row ID"        # optional
///
/// [mode_values]
/// live = "synchronous"
/// recording = "asynchronous"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default)]
    pub timestamp_format: TimestampFormat,
    pub columns: BTreeMap<String, String>,
    pub mode_values: BTreeMap<String, ParticipationMode>,
}

fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TimestampFormat {
    #[default]
    Rfc3339,
    Pattern(String),
}

impl Serialize for TimestampFormat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TimestampFormat::Rfc3339 => s.serialize_str("rfc3339"),
            TimestampFormat::Pattern(p) => s.serialize_str(p),
        }
    }
}

impl<'de> Deserialize<'de> for TimestampFormat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s.eq_ignore_ascii_case("rfc3339") {
            TimestampFormat::Rfc3339
        } else {
            TimestampFormat::Pattern(s)
        })
    }
}

impl TimestampFormat {
    pub fn parse(&self, value: &str) -> Option<DateTime<Utc>> {
        let value = value.trim();
        match self {
            TimestampFormat::Rfc3339 => DateTime::parse_from_rfc3339(value)
                .ok()
                .map(|t| t.with_timezone(&Utc)),
            TimestampFormat::Pattern(p) if p.contains("%z") || p.contains("%:z") || p.contains("%#z") => {
                DateTime::parse_from_str(value, p)
                    .ok()
                    .map(|t| t.with_timezone(&Utc))
            }
            TimestampFormat::Pattern(p) => NaiveDateTime::parse_from_str(value, p)
                .ok()
                .map(|t| t.and_utc()),
        }
    }
}

impl ColumnMapping {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mapping: ColumnMapping = toml::from_str(text).map_err(|e| Error::Mapping(e.to_string()))?;
        mapping.validate()?;
        Ok(mapping)
    }

    /// Identity mapping: every canonical field read from a column of the same name.
    pub fn canonical() -> Self {
        Self {
            delimiter: ',',
            timestamp_format: TimestampFormat::Rfc3339,
            columns: REQUIRED_FIELDS
                .iter()
                .map(|f| (f.to_string(), f.to_string()))
                .collect(),
            mode_values: [
                ("synchronous".to_string(), ParticipationMode::Synchronous),
                ("asynchronous".to_string(), ParticipationMode::Asynchronous),
            ]
            .into_iter()
            .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for field in REQUIRED_FIELDS {
            match self.columns.get(field) {
                Some(col) if !col.trim().is_empty() => {}
                _ => return Err(Error::Mapping(format!("required field `{field}` is not mapped"))),
            }
        }
        if let Some(extra) = self
            .columns
            .keys()
            .find(|k| !REQUIRED_FIELDS.contains(&k.as_str()) && !OPTIONAL_FIELDS.contains(&k.as_str()))
        {
            return Err(Error::Mapping(format!("unknown canonical field `{extra}`")));
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::Mapping("delimiter must be a single ASCII character".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum RejectReason {
    UnknownMode(String),
    BadTimestamp(String),
    UnknownQuestion(String),
    Duplicate,
    DuplicateResponseId(String),
    Malformed(String),
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::UnknownMode(v) => write!(f, "unknown mode `{v}`"),
            RejectReason::BadTimestamp(v) => write!(f, "unparseable timestamp `{v}`"),
            RejectReason::UnknownQuestion(v) => write!(f, "unknown question `{v}`"),
            RejectReason::Duplicate => f.write_str("duplicate row"),
            RejectReason::DuplicateResponseId(v) => write!(f, "duplicate response_id `{v}`"),
            RejectReason::Malformed(v) => write!(f, "malformed row: {v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based line number in the source file.
    pub line: u64,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<RejectedRow>,
}

type DedupKey = (String, String, String, DateTime<Utc>);

fn derived_response_id(question_id: &str, student_id: &str, raw: &str, at: &DateTime<Utc>) -> String {
    let mut h = Sha256::new();
    for part in [question_id, student_id, raw, &at.to_rfc3339()] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    format!("r{}", &hex::encode(h.finalize())[..16])
}

impl Corpus {
    /// Reads a delimited export and appends every valid row as a response.
    ///
    /// Unmapped or missing required columns abort the whole ingest; bad
    /// rows are reported and skipped.
    pub fn ingest_reader<R: Read>(&mut self, reader: R, mapping: &ColumnMapping) -> Result<IngestReport> {
        mapping.validate()?;
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(mapping.delimiter as u8)
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut col_index: BTreeMap<&str, usize> = BTreeMap::new();
        for (field, column) in &mapping.columns {
            match headers.iter().position(|h| h.trim() == column.trim()) {
                Some(i) => {
                    col_index.insert(field.as_str(), i);
                }
                None => {
                    return Err(Error::MissingColumn {
                        field: field.clone(),
                        column: column.clone(),
                    })
                }
            }
        }

        let mut seen: HashSet<DedupKey> = self
            .responses
            .iter()
            .map(|r| {
                (
                    r.student_id.clone(),
                    r.question_id.clone(),
                    r.raw_text.clone(),
                    r.submitted_at,
                )
            })
            .collect();

        let mut report = IngestReport::default();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let field = |name: &str| col_index.get(name).and_then(|&i| record.get(i));
            let reject = |reason| RejectedRow { line, reason };

            let (Some(question_id), Some(student_id), Some(raw_text), Some(mode), Some(ts)) = (
                field("question_id"),
                field("student_id"),
                field("raw_text"),
                field("mode"),
                field("submitted_at"),
            ) else {
                report
                    .rejected
                    .push(reject(RejectReason::Malformed("missing fields".into())));
                continue;
            };
            let question_id = question_id.trim().to_string();
            let student_id = student_id.trim().to_string();

            let Some(&mode) = mapping.mode_values.get(mode.trim()) else {
                report
                    .rejected
                    .push(reject(RejectReason::UnknownMode(mode.to_string())));
                continue;
            };
            let Some(submitted_at) = mapping.timestamp_format.parse(ts) else {
                report
                    .rejected
                    .push(reject(RejectReason::BadTimestamp(ts.to_string())));
                continue;
            };
            if !self.questions.contains_key(&question_id) {
                report
                    .rejected
                    .push(reject(RejectReason::UnknownQuestion(question_id)));
                continue;
            }
            let key = (
                student_id.clone(),
                question_id.clone(),
                raw_text.to_string(),
                submitted_at,
            );
            if seen.contains(&key) {
                report.rejected.push(reject(RejectReason::Duplicate));
                continue;
            }
            let response_id = match field("response_id").map(str::trim) {
                Some(id) if !id.is_empty() => id.to_string(),
                _ => derived_response_id(&question_id, &student_id, raw_text, &submitted_at),
            };
            if self.response_index.contains_key(&response_id) {
                report
                    .rejected
                    .push(reject(RejectReason::DuplicateResponseId(response_id)));
                continue;
            }
            seen.insert(key);
            self.add_response(Response {
                response_id,
                question_id,
                student_id,
                raw_text: raw_text.to_string(),
                normalized_text: normalize_text(raw_text),
                mode,
                submitted_at,
            })?;
            report.accepted += 1;
        }
        Ok(report)
    }

    /// Loads question definitions from a comma-separated file with header
    /// `question_id,text,category,lecture_number,poll_kind`.
    pub fn ingest_questions<R: Read>(&mut self, reader: R) -> Result<usize> {
        #[derive(Deserialize)]
        struct Row {
            question_id: String,
            text: String,
            category: String,
            lecture_number: u32,
            poll_kind: String,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::Fields).from_reader(reader);
        let mut n = 0;
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            let category: QuestionCategory = row.category.parse()?;
            let poll_kind: PollKind = row.poll_kind.parse()?;
            self.upsert_question(Question {
                question_id: row.question_id,
                text: row.text,
                category,
                lecture_number: row.lecture_number,
                poll_kind,
            })?;
            n += 1;
        }
        Ok(n)
    }
}
