//! Background jobs: submitted work runs on the blocking pool while clients
//! poll its record.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Classify,
    Ablate,
    Project,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub kind: JobKind,
    pub question_id: String,
    pub status: JobStatus,
    /// Run id for classification jobs.
    pub result_ref: Option<String>,
    /// Inline result for ablation and projection jobs.
    pub result: Option<serde_json::Value>,
    pub error: Option<String>,
}

#[derive(Debug, Default)]
pub struct JobTable {
    next: u64,
    jobs: BTreeMap<String, JobRecord>,
    busy: BTreeSet<String>,
}

impl JobTable {
    /// Queues a job unless one is already active on the question.
    pub fn submit(&mut self, kind: JobKind, question_id: &str) -> Option<JobRecord> {
        if !self.busy.insert(question_id.to_string()) {
            return None;
        }
        self.next += 1;
        let record = JobRecord {
            job_id: format!("job-{:05}", self.next),
            kind,
            question_id: question_id.to_string(),
            status: JobStatus::Queued,
            result_ref: None,
            result: None,
            error: None,
        };
        self.jobs.insert(record.job_id.clone(), record.clone());
        Some(record)
    }

    pub fn get(&self, job_id: &str) -> Option<&JobRecord> {
        self.jobs.get(job_id)
    }

    pub fn start(&mut self, job_id: &str) {
        if let Some(j) = self.jobs.get_mut(job_id) {
            if j.status == JobStatus::Queued {
                j.status = JobStatus::Running;
            }
        }
    }

    /// Records the outcome; terminal records are never changed again.
    pub fn finish(&mut self, job_id: &str, outcome: Result<(Option<String>, Option<serde_json::Value>), String>) {
        let Some(j) = self.jobs.get_mut(job_id) else { return };
        if j.status.is_terminal() {
            return;
        }
        match outcome {
            Ok((result_ref, result)) => {
                j.status = JobStatus::Done;
                j.result_ref = result_ref;
                j.result = result;
            }
            Err(e) => {
                j.status = JobStatus::Failed;
                j.error = Some(e);
            }
        }
        self.busy.remove(&j.question_id);
    }
}
