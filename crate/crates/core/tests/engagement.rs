use chrono::{DateTime, TimeZone, Utc};
use eit_core::classifier::{BinaryClass, ClassificationRun, ResponseClass, TrainingSetConfig};
use eit_core::corpus::{ParticipationMode, PollKind, QuestionCategory};
use eit_core::engagement::*;
use eit_core::{Corpus, Question, Response};

fn at(secs: i64) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap() + chrono::Duration::seconds(secs)
}

fn corpus(lectures: u32, per_lecture: u32) -> Corpus {
    let mut c = Corpus::new();
    for l in 1..=lectures {
        for k in 0..per_lecture {
            c.upsert_question(Question {
                question_id: format!("L{l}Q{k}"),
                text: String::new(),
                category: QuestionCategory::Reflection,
                lecture_number: l,
                poll_kind: PollKind::WordCloud,
            })
            .unwrap();
        }
    }
    c
}

fn respond(c: &mut Corpus, q: &str, student: &str, text: &str, mode: ParticipationMode) {
    let n = c.responses().len();
    c.add_response(Response {
        response_id: format!("r{n:04}"),
        question_id: q.into(),
        student_id: student.into(),
        raw_text: text.into(),
        normalized_text: String::new(),
        mode,
        submitted_at: at(n as i64),
    })
    .unwrap();
}

/// A run classifying each listed text of `question` as given.
fn run(c: &Corpus, question: &str, id: &str, started: i64, classes: &[(&str, BinaryClass)]) -> ClassificationRun {
    let uniques = c.unique_responses(question).unwrap();
    ClassificationRun {
        run_id: id.into(),
        question_id: question.into(),
        config: TrainingSetConfig::new(question, 0.5, 1, 0),
        provider_id: "test".into(),
        fingerprint: String::new(),
        started_at: at(started),
        finished_at: at(started),
        training: vec![],
        classes: classes
            .iter()
            .map(|(t, cl)| ResponseClass {
                normalized_text: t.to_string(),
                class: *cl,
                count: 0,
                member_response_ids: uniques
                    .iter()
                    .find(|u| u.normalized_text == *t)
                    .map(|u| u.member_response_ids.iter().cloned().collect())
                    .unwrap_or_default(),
                neighbors: vec![],
            })
            .collect(),
    }
}

use BinaryClass::{Earnest as E, NonEarnest as NE};
use ParticipationMode::{Asynchronous as Async, Synchronous as Sync};

#[test]
fn semester_on_28_lectures() {
    let mut c = corpus(28, 1);
    for l in 1..=25 {
        respond(&mut c, &format!("L{l}Q0"), "ana", "x", Sync);
    }
    for l in 1..=20 {
        respond(&mut c, &format!("L{l}Q0"), "ben", "x", Async);
    }
    let ana = semester_attendance(&c, "ana").unwrap();
    assert_eq!((ana.credited_lectures, ana.total_lectures, ana.score), (25, 28, 1.0));
    assert_eq!(semester_attendance(&c, "ben").unwrap().score, 0.8);
    assert_eq!(semester_attendance(&c, "nobody").unwrap().score, 0.0);
    assert!(semester_attendance(&Corpus::new(), "ana").is_err());
}

#[test]
fn participation_counts_distinct_questions() {
    let mut c = corpus(1, 3);
    respond(&mut c, "L1Q0", "s", "a", Async);
    respond(&mut c, "L1Q0", "s", "b", Async);
    respond(&mut c, "L1Q1", "s", "a", Async);
    let p = &lecture_participation(&c, "s")[0];
    assert_eq!((p.answered_sync, p.answered_async, p.questions_in_lecture), (0, 2, 3));
    assert_eq!(attendance_credit(p), Credit::None);
    respond(&mut c, "L1Q2", "s", "a", Async);
    assert_eq!(attendance_credit(&lecture_participation(&c, "s")[0]), Credit::Full);
}

#[test]
fn timeline_fraction_and_latest_run() {
    let mut c = corpus(2, 3);
    respond(&mut c, "L1Q0", "s", "idk", Sync);
    respond(&mut c, "L1Q1", "s", "stack", Sync);
    respond(&mut c, "L1Q2", "s", "queue", Sync);
    let runs = vec![
        run(&c, "L1Q0", "run-00001", 0, &[("idk", NE)]),
        run(&c, "L1Q1", "run-00002", 0, &[("stack", E)]),
        run(&c, "L1Q2", "run-00003", 0, &[("queue", E)]),
    ];
    let t = earnestness_timeline(&c, "s", &runs).unwrap();
    assert_eq!(t.len(), 2);
    assert_eq!((t[0].responses, t[0].non_earnest), (3, 1));
    assert_eq!(t[0].fraction, Some(1.0 / 3.0));
    assert_eq!(t[1].fraction, None);

    let mut later = runs.clone();
    later.push(run(&c, "L1Q1", "run-00004", 10, &[("stack", NE)]));
    assert_eq!(earnestness_timeline(&c, "s", &later).unwrap()[0].non_earnest, 2);
    // order of the run list is irrelevant
    later.reverse();
    assert_eq!(earnestness_timeline(&c, "s", &later).unwrap()[0].non_earnest, 2);

    let silent = earnestness_timeline(&c, "quiet", &runs).unwrap();
    assert!(silent.iter().all(|e| e.fraction.is_none()));
    assert!(earnestness_timeline(&c, "s", &[]).is_err());
}

#[test]
fn at_risk_rules() {
    let mut c = corpus(4, 2);
    // flagged: 3 of 5 non-earnest
    for (q, text) in [("L2Q0", "a"), ("L2Q1", "b"), ("L3Q0", "a"), ("L3Q1", "b"), ("L4Q0", "c")] {
        respond(&mut c, q, "flag", text, Sync);
    }
    // only two responses in the window
    respond(&mut c, "L3Q0", "thin", "a", Sync);
    respond(&mut c, "L4Q0", "thin", "a", Sync);
    // all earnest
    for q in ["L2Q0", "L3Q0", "L4Q0"] {
        respond(&mut c, q, "good", "good", Sync);
    }
    let mut runs = vec![];
    for (i, q) in ["L2Q0", "L2Q1", "L3Q0", "L3Q1", "L4Q0"].iter().enumerate() {
        runs.push(run(&c, q, &format!("run-{i}"), 0, &[("a", NE), ("b", E), ("c", NE), ("good", E)]));
    }
    let flagged = flag_at_risk(&c, &runs, &AtRiskConfig::default()).unwrap();
    assert_eq!(flagged.len(), 1);
    assert_eq!(flagged[0].student_id, "flag");
    assert_eq!(flagged[0].window_fraction, 0.6);
    assert_eq!(flagged[0].window_lectures, vec![2, 3, 4]);
    assert_eq!(flagged[0].evidence.len(), 3);

    let loose = AtRiskConfig { min_responses: 2, ..Default::default() };
    let ids: Vec<String> = flag_at_risk(&c, &runs, &loose).unwrap().into_iter().map(|s| s.student_id).collect();
    assert_eq!(ids, vec!["thin", "flag"]);
    let mut shuffled = runs.clone();
    shuffled.reverse();
    assert_eq!(flag_at_risk(&c, &shuffled, &loose).unwrap(), flag_at_risk(&c, &runs, &loose).unwrap());
    assert!(flag_at_risk(&c, &[], &AtRiskConfig::default()).unwrap().is_empty());
}
