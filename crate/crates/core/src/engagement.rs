//! Attendance credit, earnestness timelines and at-risk flagging.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::classifier::{BinaryClass, ClassificationRun};
use crate::corpus::{Corpus, ParticipationMode};
use crate::error::{Error, Result};

/// Lectures a student may miss without losing attendance.
pub const MISSED_LECTURE_ALLOWANCE: usize = 3;
/// Share of the final grade carried by attendance; reported, never applied.
pub const ATTENDANCE_GRADE_WEIGHT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Credit {
    Full,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LectureParticipation {
    pub student_id: String,
    pub lecture_number: u32,
    /// Distinct questions answered in class.
    pub answered_sync: usize,
    /// Distinct questions answered afterwards.
    pub answered_async: usize,
    pub questions_in_lecture: usize,
}

/// One in-class answer earns the lecture; otherwise every question must
/// have been answered asynchronously.
pub fn attendance_credit(p: &LectureParticipation) -> Credit {
    if p.answered_sync >= 1 || (p.questions_in_lecture > 0 && p.answered_async >= p.questions_in_lecture) {
        Credit::Full
    } else {
        Credit::None
    }
}

/// Participation of one student in every lecture of the roster.
pub fn lecture_participation(corpus: &Corpus, student_id: &str) -> Vec<LectureParticipation> {
    let mut questions: BTreeMap<u32, usize> = BTreeMap::new();
    let mut lecture_of: HashMap<&str, u32> = HashMap::new();
    for q in corpus.questions() {
        *questions.entry(q.lecture_number).or_default() += 1;
        lecture_of.insert(q.question_id.as_str(), q.lecture_number);
    }
    let mut sync: BTreeMap<u32, BTreeSet<&str>> = BTreeMap::new();
    let mut asynchronous: BTreeMap<u32, BTreeSet<&str>> = BTreeMap::new();
    for r in corpus.responses().iter().filter(|r| r.student_id == student_id) {
        let Some(&lecture) = lecture_of.get(r.question_id.as_str()) else { continue };
        let bucket = match r.mode {
            ParticipationMode::Synchronous => &mut sync,
            ParticipationMode::Asynchronous => &mut asynchronous,
        };
        bucket.entry(lecture).or_default().insert(r.question_id.as_str());
    }
    questions
        .into_iter()
        .map(|(lecture, n)| LectureParticipation {
            student_id: student_id.to_string(),
            lecture_number: lecture,
            answered_sync: sync.get(&lecture).map_or(0, BTreeSet::len),
            answered_async: asynchronous.get(&lecture).map_or(0, BTreeSet::len),
            questions_in_lecture: n,
        })
        .collect()
}

/// `min(1, credited / (total − 3))`; a course of three lectures or fewer
/// always scores 1.
pub fn attendance_score(credited: usize, total: usize) -> f64 {
    let required = total.saturating_sub(MISSED_LECTURE_ALLOWANCE);
    if required == 0 {
        1.0
    } else {
        (credited as f64 / required as f64).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemesterAttendance {
    pub student_id: String,
    pub credited_lectures: usize,
    pub total_lectures: usize,
    pub score: f64,
    pub grade_weight: f64,
}

pub fn semester_attendance(corpus: &Corpus, student_id: &str) -> Result<SemesterAttendance> {
    let lectures = lecture_participation(corpus, student_id);
    if lectures.is_empty() {
        return Err(Error::EmptyInput("lecture roster"));
    }
    let credited = lectures.iter().filter(|p| attendance_credit(p) == Credit::Full).count();
    Ok(SemesterAttendance {
        student_id: student_id.to_string(),
        credited_lectures: credited,
        total_lectures: lectures.len(),
        score: attendance_score(credited, lectures.len()),
        grade_weight: ATTENDANCE_GRADE_WEIGHT,
    })
}

/// Most recent run for each question, by start time then run id.
pub fn latest_runs(runs: &[ClassificationRun]) -> BTreeMap<&str, &ClassificationRun> {
    let mut out: BTreeMap<&str, &ClassificationRun> = BTreeMap::new();
    for run in runs {
        let entry = out.entry(run.question_id.as_str()).or_insert(run);
        if (run.started_at, &run.run_id) > (entry.started_at, &entry.run_id) {
            *entry = run;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub lecture_number: u32,
    /// Classified responses.
    pub responses: usize,
    pub non_earnest: usize,
    /// `non_earnest / responses`; absent when nothing was classified.
    pub fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedResponse {
    pub response_id: String,
    pub question_id: String,
    pub lecture_number: u32,
    pub normalized_text: String,
    pub class: BinaryClass,
}

/// Index of response classes from the latest run of each question.
struct ClassIndex<'a> {
    by_question: BTreeMap<&'a str, (&'a ClassificationRun, HashMap<&'a str, BinaryClass>)>,
}

impl<'a> ClassIndex<'a> {
    fn new(runs: &'a [ClassificationRun]) -> Self {
        let by_question = latest_runs(runs)
            .into_iter()
            .map(|(q, run)| (q, (run, run.response_classes().collect())))
            .collect();
        Self { by_question }
    }

    fn class(&self, question_id: &str, response_id: &str, text: &str) -> Option<BinaryClass> {
        let (run, ids) = self.by_question.get(question_id)?;
        ids.get(response_id).copied().or_else(|| run.class_of(text))
    }

    fn lectures(&self, corpus: &Corpus) -> BTreeSet<u32> {
        self.by_question
            .keys()
            .filter_map(|q| corpus.question(q).ok())
            .map(|q| q.lecture_number)
            .collect()
    }
}

fn classified_responses(corpus: &Corpus, index: &ClassIndex<'_>, student_id: &str) -> Vec<ClassifiedResponse> {
    corpus
        .responses()
        .iter()
        .filter(|r| r.student_id == student_id)
        .filter_map(|r| {
            let lecture = corpus.question(&r.question_id).ok()?.lecture_number;
            let class = index.class(&r.question_id, &r.response_id, &r.normalized_text)?;
            Some(ClassifiedResponse {
                response_id: r.response_id.clone(),
                question_id: r.question_id.clone(),
                lecture_number: lecture,
                normalized_text: r.normalized_text.clone(),
                class,
            })
        })
        .collect()
}

fn timeline_of(corpus: &Corpus, classified: &[ClassifiedResponse]) -> Vec<TimelineEntry> {
    corpus
        .lecture_roster()
        .into_iter()
        .map(|lecture| {
            let here = classified.iter().filter(|c| c.lecture_number == lecture);
            let (responses, non_earnest) = here.fold((0, 0), |(n, ne), c| (n + 1, ne + (c.class == BinaryClass::NonEarnest) as usize));
            TimelineEntry {
                lecture_number: lecture,
                responses,
                non_earnest,
                fraction: (responses > 0).then(|| non_earnest as f64 / responses as f64),
            }
        })
        .collect()
}

/// Per-lecture non-earnest share of a student's classified responses.
pub fn earnestness_timeline(corpus: &Corpus, student_id: &str, runs: &[ClassificationRun]) -> Result<Vec<TimelineEntry>> {
    if runs.is_empty() {
        return Err(Error::EmptyInput("classification runs"));
    }
    let index = ClassIndex::new(runs);
    Ok(timeline_of(corpus, &classified_responses(corpus, &index, student_id)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtRiskConfig {
    pub non_earnest_threshold: f64,
    pub window_lectures: usize,
    pub min_responses: usize,
}

impl Default for AtRiskConfig {
    fn default() -> Self {
        Self {
            non_earnest_threshold: 0.5,
            window_lectures: 3,
            min_responses: 3,
        }
    }
}

impl AtRiskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.non_earnest_threshold) {
            return Err(Error::invalid("threshold must be in [0, 1]"));
        }
        if self.window_lectures < 1 {
            return Err(Error::invalid("window must cover at least one lecture"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtRiskStudent {
    pub student_id: String,
    pub window_fraction: f64,
    pub window_responses: usize,
    pub window_lectures: Vec<u32>,
    /// Non-earnest responses inside the window.
    pub evidence: Vec<ClassifiedResponse>,
    pub timeline: Vec<TimelineEntry>,
}

/// Students whose non-earnest share over the trailing window reaches the
/// threshold with enough classified responses to count.
///
/// The window is the last `window_lectures` lectures that have a
/// classified question. Sorted by share descending, then student id.
pub fn flag_at_risk(corpus: &Corpus, runs: &[ClassificationRun], config: &AtRiskConfig) -> Result<Vec<AtRiskStudent>> {
    config.validate()?;
    let index = ClassIndex::new(runs);
    let window: Vec<u32> = {
        let lectures: Vec<u32> = index.lectures(corpus).into_iter().collect();
        lectures[lectures.len().saturating_sub(config.window_lectures)..].to_vec()
    };
    let mut out = Vec::new();
    for student in corpus.student_ids() {
        let classified = classified_responses(corpus, &index, student);
        let in_window: Vec<&ClassifiedResponse> = classified.iter().filter(|c| window.contains(&c.lecture_number)).collect();
        if in_window.is_empty() || in_window.len() < config.min_responses {
            continue;
        }
        let non_earnest: Vec<ClassifiedResponse> = in_window
            .iter()
            .filter(|c| c.class == BinaryClass::NonEarnest)
            .map(|c| (*c).clone())
            .collect();
        let fraction = non_earnest.len() as f64 / in_window.len() as f64;
        if fraction >= config.non_earnest_threshold {
            out.push(AtRiskStudent {
                student_id: student.to_string(),
                window_fraction: fraction,
                window_responses: in_window.len(),
                window_lectures: window.clone(),
                evidence: non_earnest,
                timeline: timeline_of(corpus, &classified),
            });
        }
    }
    out.sort_by(|a, b| b.window_fraction.total_cmp(&a.window_fraction).then_with(|| a.student_id.cmp(&b.student_id)));
    Ok(out)
}
