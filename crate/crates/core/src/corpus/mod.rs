//! Poll questions, student responses and the corpus that holds them.

mod ingest;
mod normalize;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ingest::{ColumnMapping, IngestReport, RejectReason, RejectedRow, TimestampFormat};
pub use normalize::normalize_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionCategory {
    Reflection,
    Conceptual,
    Coding,
    Numerical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PollKind {
    WordCloud,
    MultipleChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipationMode {
    Synchronous,
    Asynchronous,
}

impl std::str::FromStr for QuestionCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reflection" => Ok(Self::Reflection),
            "conceptual" => Ok(Self::Conceptual),
            "coding" => Ok(Self::Coding),
            "numerical" => Ok(Self::Numerical),
            other => Err(Error::invalid(format!("unknown question category `{other}`"))),
        }
    }
}

impl std::str::FromStr for PollKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "word_cloud" | "wordcloud" => Ok(Self::WordCloud),
            "multiple_choice" | "multiplechoice" => Ok(Self::MultipleChoice),
            other => Err(Error::invalid(format!("unknown poll kind `{other}`"))),
        }
    }
}

impl std::str::FromStr for ParticipationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "synchronous" | "sync" => Ok(Self::Synchronous),
            "asynchronous" | "async" => Ok(Self::Asynchronous),
            other => Err(Error::invalid(format!("unknown participation mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub text: String,
    pub category: QuestionCategory,
    pub lecture_number: u32,
    pub poll_kind: PollKind,
}

impl Question {
    pub fn is_word_cloud(&self) -> bool {
        self.poll_kind == PollKind::WordCloud
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub response_id: String,
    pub question_id: String,
    pub student_id: String,
    pub raw_text: String,
    pub normalized_text: String,
    /// Kept for reporting; analyses pool both modes.
    pub mode: ParticipationMode,
    pub submitted_at: DateTime<Utc>,
}

/// All responses to one question sharing a normalized text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniqueResponse {
    pub normalized_text: String,
    pub count: usize,
    pub member_response_ids: BTreeSet<String>,
}

/// In-memory corpus for one course. Persistence lives in [`crate::store`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Corpus {
    questions: BTreeMap<String, Question>,
    responses: Vec<Response>,
    #[serde(skip)]
    response_index: HashMap<String, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.questions == other.questions && self.responses == other.responses
    }
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds lookup tables after deserialization.
    pub(crate) fn reindex(&mut self) {
        self.response_index = self
            .responses
            .iter()
            .enumerate()
            .map(|(i, r)| (r.response_id.clone(), i))
            .collect();
    }

    /// Inserts or replaces a question definition.
    pub fn upsert_question(&mut self, question: Question) -> Result<()> {
        if question.question_id.trim().is_empty() {
            return Err(Error::invalid("question_id must not be empty"));
        }
        if question.lecture_number == 0 {
            return Err(Error::invalid(format!(
                "question `{}`: lecture_number must be positive",
                question.question_id
            )));
        }
        self.questions.insert(question.question_id.clone(), question);
        Ok(())
    }

    /// Adds a response, computing its normalized text.
    pub fn add_response(&mut self, mut response: Response) -> Result<()> {
        if !self.questions.contains_key(&response.question_id) {
            return Err(Error::UnknownQuestion(response.question_id));
        }
        if self.response_index.contains_key(&response.response_id) {
            return Err(Error::invalid(format!(
                "duplicate response_id `{}`",
                response.response_id
            )));
        }
        response.normalized_text = normalize_text(&response.raw_text);
        self.response_index
            .insert(response.response_id.clone(), self.responses.len());
        self.responses.push(response);
        Ok(())
    }

    pub fn question(&self, question_id: &str) -> Result<&Question> {
        self.questions
            .get(question_id)
            .ok_or_else(|| Error::UnknownQuestion(question_id.to_string()))
    }

    /// Like [`Corpus::question`] but also requires a word-cloud poll.
    pub fn word_cloud_question(&self, question_id: &str) -> Result<&Question> {
        let q = self.question(question_id)?;
        if !q.is_word_cloud() {
            return Err(Error::NotWordCloud(question_id.to_string()));
        }
        Ok(q)
    }

    pub fn questions(&self) -> impl Iterator<Item = &Question> {
        self.questions.values()
    }

    pub fn responses(&self) -> &[Response] {
        &self.responses
    }

    pub fn response(&self, response_id: &str) -> Option<&Response> {
        self.response_index
            .get(response_id)
            .map(|&i| &self.responses[i])
    }

    pub fn responses_for<'a>(&'a self, question_id: &'a str) -> impl Iterator<Item = &'a Response> + 'a {
        self.responses
            .iter()
            .filter(move |r| r.question_id == question_id)
    }

    /// Groups a question's responses by normalized text, most frequent first
    /// (ties by text).
    pub fn unique_responses(&self, question_id: &str) -> Result<Vec<UniqueResponse>> {
        self.question(question_id)?;
        let mut groups: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
        for r in self.responses_for(question_id) {
            groups
                .entry(r.normalized_text.as_str())
                .or_default()
                .insert(r.response_id.clone());
        }
        let mut out: Vec<UniqueResponse> = groups
            .into_iter()
            .map(|(text, ids)| UniqueResponse {
                normalized_text: text.to_string(),
                count: ids.len(),
                member_response_ids: ids,
            })
            .collect();
        out.sort_by(|a, b| {
            b.count
                .cmp(&a.count)
                .then_with(|| a.normalized_text.cmp(&b.normalized_text))
        });
        Ok(out)
    }

    /// Whether `text` (already normalized) occurs among a question's responses.
    pub fn has_text(&self, question_id: &str, text: &str) -> bool {
        self.responses_for(question_id)
            .any(|r| r.normalized_text == text)
    }

    /// Distinct lecture numbers that have at least one question, ascending.
    pub fn lecture_roster(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.questions.values().map(|q| q.lecture_number).collect();
        set.into_iter().collect()
    }

    pub fn student_ids(&self) -> BTreeSet<&str> {
        self.responses.iter().map(|r| r.student_id.as_str()).collect()
    }
}
