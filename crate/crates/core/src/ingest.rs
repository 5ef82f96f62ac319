//! CSV log parsing and per-learner trace reconstruction.
//!
//! All four log kinds share one reader: the header must match exactly, rows are
//! numbered by file line (header = line 1) and malformed rows either abort the
//! parse or are skipped and reported, depending on [`RowPolicy`].

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use chrono::{DateTime, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::course::{CourseStructure, StepRef};

pub type Timestamp = DateTime<Utc>;

pub const ACTIVITY_HEADER: [&str; 5] = [
    "learner_id",
    "week_number",
    "step_number",
    "first_visited_at",
    "last_completed_at",
];
pub const COMMENTS_HEADER: [&str; 4] = ["learner_id", "week_number", "step_number", "posted_at"];
pub const ATTEMPTS_HEADER: [&str; 6] = [
    "learner_id",
    "week_number",
    "step_number",
    "question_number",
    "correct",
    "submitted_at",
];
pub const ENROLMENTS_HEADER: [&str; 3] = ["learner_id", "enrolled_at", "unenrolled_at"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    Schema { expected: String, found: String },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("csv read failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowPolicy {
    /// Abort on the first malformed row.
    Strict,
    /// Skip malformed rows and report them.
    #[default]
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowIssue {
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub issues: Vec<RowIssue>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitRecord {
    pub learner_id: String,
    pub step: StepRef,
    pub first_visited_at: Timestamp,
    pub last_completed_at: Option<Timestamp>,
}

impl VisitRecord {
    fn order_key(&self) -> (Timestamp, u32, u32) {
        (self.first_visited_at, self.step.week, self.step.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommentRecord {
    pub learner_id: String,
    pub step: StepRef,
    pub posted_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttemptRecord {
    pub learner_id: String,
    pub step: StepRef,
    pub question_number: u32,
    pub correct: bool,
    pub submitted_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrolmentRecord {
    pub learner_id: String,
    pub enrolled_at: Timestamp,
    pub unenrolled_at: Option<Timestamp>,
}

/// Learners still enrolled (no unenrolment timestamp).
pub fn remaining_enrolments(records: &[EnrolmentRecord]) -> usize {
    records.iter().filter(|r| r.unenrolled_at.is_none()).count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LearnerTrace {
    pub learner_id: String,
    /// Sorted by (first_visited_at, week, index), one entry per step.
    pub visits: Vec<VisitRecord>,
    pub is_active: bool,
}

fn parse_csv<T, R, F>(
    reader: R,
    header: &[&str],
    policy: RowPolicy,
    mut parse_row: F,
) -> Result<Parsed<T>, IngestError>
where
    R: Read,
    F: FnMut(&csv::StringRecord) -> Result<T, String>,
{
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let found = rdr.headers()?.clone();
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(IngestError::Schema {
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut records = Vec::new();
    let mut issues = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let outcome = match row {
            Ok(row) if row.len() != header.len() => Err(format!(
                "expected {} fields, found {}",
                header.len(),
                row.len()
            )),
            Ok(row) => parse_row(&row),
            Err(e) => Err(e.to_string()),
        };
        match outcome {
            Ok(rec) => records.push(rec),
            Err(message) => match policy {
                RowPolicy::Strict => return Err(IngestError::Row { row: line, message }),
                RowPolicy::Skip => issues.push(RowIssue { row: line, message }),
            },
        }
    }
    Ok(Parsed { records, issues })
}

fn field(row: &csv::StringRecord, i: usize) -> &str {
    row.get(i).unwrap_or("").trim()
}

fn learner(row: &csv::StringRecord) -> Result<String, String> {
    let id = field(row, 0);
    if id.is_empty() {
        return Err("empty learner_id".into());
    }
    Ok(id.to_string())
}

fn positive(s: &str, what: &str) -> Result<u32, String> {
    match s.parse::<u32>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("{what} `{s}` is not a positive integer")),
    }
}

fn step(row: &csv::StringRecord) -> Result<StepRef, String> {
    Ok(StepRef::new(
        positive(field(row, 1), "week_number")?,
        positive(field(row, 2), "step_number")?,
    ))
}

pub fn parse_timestamp(s: &str) -> Result<Timestamp, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad timestamp `{s}`: {e}"))
}

fn optional_timestamp(s: &str) -> Result<Option<Timestamp>, String> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_timestamp(s).map(Some)
    }
}

pub fn format_timestamp(t: &Timestamp) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true)
}

pub fn parse_activity<R: Read>(
    reader: R,
    policy: RowPolicy,
) -> Result<Parsed<VisitRecord>, IngestError> {
    parse_csv(reader, &ACTIVITY_HEADER, policy, |row| {
        let learner_id = learner(row)?;
        let step = step(row)?;
        let first_visited_at = parse_timestamp(field(row, 3))?;
        let last_completed_at = optional_timestamp(field(row, 4))?;
        if let Some(done) = last_completed_at {
            if done < first_visited_at {
                return Err(format!(
                    "last_completed_at {} precedes first_visited_at {}",
                    format_timestamp(&done),
                    format_timestamp(&first_visited_at)
                ));
            }
        }
        Ok(VisitRecord {
            learner_id,
            step,
            first_visited_at,
            last_completed_at,
        })
    })
}

pub fn parse_comments<R: Read>(
    reader: R,
    policy: RowPolicy,
) -> Result<Parsed<CommentRecord>, IngestError> {
    parse_csv(reader, &COMMENTS_HEADER, policy, |row| {
        Ok(CommentRecord {
            learner_id: learner(row)?,
            step: step(row)?,
            posted_at: parse_timestamp(field(row, 3))?,
        })
    })
}

pub fn parse_attempts<R: Read>(
    reader: R,
    policy: RowPolicy,
) -> Result<Parsed<AttemptRecord>, IngestError> {
    parse_csv(reader, &ATTEMPTS_HEADER, policy, |row| {
        let correct = match field(row, 4) {
            "true" => true,
            "false" => false,
            other => return Err(format!("correct `{other}` is not true/false")),
        };
        Ok(AttemptRecord {
            learner_id: learner(row)?,
            step: step(row)?,
            question_number: positive(field(row, 3), "question_number")?,
            correct,
            submitted_at: parse_timestamp(field(row, 5))?,
        })
    })
}

pub fn parse_enrolments<R: Read>(
    reader: R,
    policy: RowPolicy,
) -> Result<Parsed<EnrolmentRecord>, IngestError> {
    parse_csv(reader, &ENROLMENTS_HEADER, policy, |row| {
        let enrolled_at = parse_timestamp(field(row, 1))?;
        let unenrolled_at = optional_timestamp(field(row, 2))?;
        if unenrolled_at.is_some_and(|u| u < enrolled_at) {
            return Err("unenrolled_at precedes enrolled_at".into());
        }
        Ok(EnrolmentRecord {
            learner_id: learner(row)?,
            enrolled_at,
            unenrolled_at,
        })
    })
}

/// Steps in `steps` that are not part of `course`.
pub fn unknown_steps<'a, I>(steps: I, course: &CourseStructure) -> Vec<StepRef>
where
    I: IntoIterator<Item = &'a StepRef>,
{
    steps
        .into_iter()
        .filter(|s| !course.contains(**s))
        .copied()
        .collect()
}

/// Collapses duplicate (learner, step) rows and orders each learner's visits.
pub fn build_traces<I>(visits: I) -> BTreeMap<String, LearnerTrace>
where
    I: IntoIterator<Item = VisitRecord>,
{
    let mut merged: HashMap<(String, StepRef), VisitRecord> = HashMap::new();
    for v in visits {
        match merged.get_mut(&(v.learner_id.clone(), v.step)) {
            Some(existing) => {
                existing.first_visited_at = existing.first_visited_at.min(v.first_visited_at);
                existing.last_completed_at = match (existing.last_completed_at, v.last_completed_at)
                {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    (a, b) => a.or(b),
                };
            }
            None => {
                merged.insert((v.learner_id.clone(), v.step), v);
            }
        }
    }

    let mut traces: BTreeMap<String, LearnerTrace> = BTreeMap::new();
    for ((learner_id, _), v) in merged {
        traces
            .entry(learner_id.clone())
            .or_insert_with(|| LearnerTrace {
                learner_id,
                visits: Vec::new(),
                is_active: false,
            })
            .visits
            .push(v);
    }
    for t in traces.values_mut() {
        t.visits.sort_by_key(VisitRecord::order_key);
        t.is_active = t.visits.iter().any(|v| v.last_completed_at.is_some());
    }
    traces
}

pub fn active_learners(traces: BTreeMap<String, LearnerTrace>) -> BTreeMap<String, LearnerTrace> {
    traces.into_iter().filter(|(_, t)| t.is_active).collect()
}

fn opt_ts(t: &Option<Timestamp>) -> String {
    t.as_ref().map(format_timestamp).unwrap_or_default()
}

pub fn activity_csv(records: &[VisitRecord]) -> String {
    let mut out = ACTIVITY_HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.learner_id,
            r.step.week,
            r.step.index,
            format_timestamp(&r.first_visited_at),
            opt_ts(&r.last_completed_at)
        ));
    }
    out
}

pub fn comments_csv(records: &[CommentRecord]) -> String {
    let mut out = COMMENTS_HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.learner_id,
            r.step.week,
            r.step.index,
            format_timestamp(&r.posted_at)
        ));
    }
    out
}

pub fn attempts_csv(records: &[AttemptRecord]) -> String {
    let mut out = ATTEMPTS_HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.learner_id,
            r.step.week,
            r.step.index,
            r.question_number,
            r.correct,
            format_timestamp(&r.submitted_at)
        ));
    }
    out
}

pub fn enrolments_csv(records: &[EnrolmentRecord]) -> String {
    let mut out = ENROLMENTS_HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{}\n",
            r.learner_id,
            format_timestamp(&r.enrolled_at),
            opt_ts(&r.unenrolled_at)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(s: &str) -> Timestamp {
        parse_timestamp(s).unwrap()
    }

    fn visit(l: &str, w: u32, i: u32, at: &str, done: Option<&str>) -> VisitRecord {
        VisitRecord {
            learner_id: l.into(),
            step: StepRef::new(w, i),
            first_visited_at: ts(at),
            last_completed_at: done.map(ts),
        }
    }

    const AH: &str = "learner_id,week_number,step_number,first_visited_at,last_completed_at\n";

    #[test]
    fn activity_row() {
        let csv = format!(
            "{AH}u1,1,2,2013-06-01T10:00:00Z,2013-06-01T10:05:00Z\nu2,1,3,2013-06-01T10:00:00Z,\n"
        );
        let p = parse_activity(csv.as_bytes(), RowPolicy::Strict).unwrap();
        assert_eq!(
            p.records[0],
            visit(
                "u1",
                1,
                2,
                "2013-06-01T10:00:00Z",
                Some("2013-06-01T10:05:00Z")
            )
        );
        assert_eq!(p.records[1].last_completed_at, None);
        assert!(p.issues.is_empty());
    }

    #[test]
    fn completion_before_visit_is_row_error() {
        let csv = format!("{AH}u1,1,2,2013-06-01T10:05:00Z,2013-06-01T10:00:00Z\n");
        match parse_activity(csv.as_bytes(), RowPolicy::Strict) {
            Err(IngestError::Row { row: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        let p = parse_activity(csv.as_bytes(), RowPolicy::Skip).unwrap();
        assert!(p.records.is_empty());
        assert_eq!(p.issues.len(), 1);
        assert_eq!(p.issues[0].row, 2);
    }

    #[test]
    fn skip_policy_counts_bad_rows() {
        let csv = format!(
            "{AH}u1,1,2,2013-06-01T10:00:00Z,\nu1,x,2,2013-06-01T10:00:00Z,\nu1,1,0,2013-06-01T10:00:00Z,\nu1,1,3,yesterday,\nu1,1,4,2013-06-01T10:00:00Z,\n"
        );
        let p = parse_activity(csv.as_bytes(), RowPolicy::Skip).unwrap();
        assert_eq!(p.records.len(), 2);
        assert_eq!(
            p.issues.iter().map(|i| i.row).collect::<Vec<_>>(),
            vec![3, 4, 5]
        );
    }

    #[test]
    fn header_mismatch() {
        let csv = "learner,week_number,step_number,first_visited_at,last_completed_at\n";
        assert!(matches!(
            parse_activity(csv.as_bytes(), RowPolicy::Skip),
            Err(IngestError::Schema { .. })
        ));
    }

    #[test]
    fn attempts_and_comments() {
        let csv = "learner_id,week_number,step_number,question_number,correct,submitted_at\nu1,1,13,4,true,2013-06-02T09:00:00Z\nu1,1,13,4,maybe,2013-06-02T09:00:00Z\n";
        let p = parse_attempts(csv.as_bytes(), RowPolicy::Skip).unwrap();
        assert_eq!(
            p.records,
            vec![AttemptRecord {
                learner_id: "u1".into(),
                step: StepRef::new(1, 13),
                question_number: 4,
                correct: true,
                submitted_at: ts("2013-06-02T09:00:00Z"),
            }]
        );
        assert_eq!(p.issues.len(), 1);

        let csv = "learner_id,week_number,step_number,posted_at\nu1,1,11,2013-06-02T09:00:00Z\n";
        let p = parse_comments(csv.as_bytes(), RowPolicy::Strict).unwrap();
        assert_eq!(p.records[0].step, StepRef::new(1, 11));
    }

    #[test]
    fn enrolments_remaining() {
        let csv = "learner_id,enrolled_at,unenrolled_at\nu1,2013-06-01T00:00:00Z,\nu2,2013-06-01T00:00:00Z,2013-06-03T00:00:00Z\n";
        let p = parse_enrolments(csv.as_bytes(), RowPolicy::Strict).unwrap();
        assert_eq!(p.records[0].unenrolled_at, None);
        assert_eq!(remaining_enrolments(&p.records), 1);

        let mut big = String::from("learner_id,enrolled_at,unenrolled_at\n");
        for i in 0..14_240 {
            let un = if i < 2_030 {
                "2013-07-01T00:00:00Z"
            } else {
                ""
            };
            big.push_str(&format!("e{i},2013-06-01T00:00:00Z,{un}\n"));
        }
        let p = parse_enrolments(big.as_bytes(), RowPolicy::Strict).unwrap();
        assert_eq!(p.records.len(), 14_240);
        assert_eq!(remaining_enrolments(&p.records), 12_210);
    }

    #[test]
    fn earliest_visit_wins() {
        let t = build_traces(vec![
            visit("u1", 1, 2, "2013-06-01T10:00:00Z", None),
            visit("u1", 1, 2, "2013-06-01T09:00:00Z", None),
        ]);
        let v = &t["u1"].visits;
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].first_visited_at, ts("2013-06-01T09:00:00Z"));
        assert!(!t["u1"].is_active);
    }

    #[test]
    fn sorted_and_tie_broken_by_path() {
        let t = build_traces(vec![
            visit(
                "u1",
                1,
                3,
                "2013-06-01T10:00:00Z",
                Some("2013-06-01T10:00:00Z"),
            ),
            visit("u1", 1, 2, "2013-06-01T10:00:00Z", None),
            visit("u1", 1, 1, "2013-06-01T11:00:00Z", None),
        ]);
        let steps: Vec<_> = t["u1"].visits.iter().map(|v| v.step.index).collect();
        assert_eq!(steps, vec![2, 3, 1]);
        assert!(t["u1"].is_active);
    }

    #[test]
    fn active_filter() {
        let t = build_traces(vec![
            visit(
                "a",
                1,
                1,
                "2013-06-01T10:00:00Z",
                Some("2013-06-01T10:01:00Z"),
            ),
            visit("b", 1, 1, "2013-06-01T10:00:00Z", None),
            visit(
                "c",
                1,
                1,
                "2013-06-01T10:00:00Z",
                Some("2013-06-01T10:01:00Z"),
            ),
        ]);
        let a = active_learners(t);
        assert_eq!(a.keys().collect::<Vec<_>>(), vec!["a", "c"]);
        let none = active_learners(build_traces(vec![visit(
            "b",
            1,
            1,
            "2013-06-01T10:00:00Z",
            None,
        )]));
        assert!(none.is_empty());
    }

    fn arb_visit() -> impl Strategy<Value = VisitRecord> {
        (
            0..4u8,
            1..3u32,
            1..4u32,
            0..50i64,
            proptest::option::of(0..20i64),
        )
            .prop_map(|(l, w, i, t, done)| {
                let base = ts("2013-06-01T00:00:00Z");
                let at = base + chrono::Duration::minutes(t);
                VisitRecord {
                    learner_id: format!("u{l}"),
                    step: StepRef::new(w, i),
                    first_visited_at: at,
                    last_completed_at: done.map(|d| at + chrono::Duration::minutes(d)),
                }
            })
    }

    proptest! {
        #[test]
        fn activity_csv_round_trips(rows in proptest::collection::vec(arb_visit(), 0..20)) {
            let text = activity_csv(&rows);
            let back = parse_activity(text.as_bytes(), RowPolicy::Strict).unwrap();
            prop_assert_eq!(back.records, rows);
        }

        #[test]
        fn build_traces_idempotent_and_order_free(
            (rows, shuffled) in proptest::collection::vec(arb_visit(), 0..40)
                .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()))
        ) {
            let once = build_traces(rows.clone());
            let flat: Vec<VisitRecord> = once.values().flat_map(|t| t.visits.clone()).collect();
            prop_assert_eq!(&build_traces(flat), &once);
            prop_assert_eq!(&build_traces(shuffled), &once);

            // a completion survives collapsing iff some input row carried one
            for t in once.values() {
                for v in &t.visits {
                    let any = rows.iter().any(|r| r.learner_id == v.learner_id
                        && r.step == v.step && r.last_completed_at.is_some());
                    prop_assert_eq!(v.last_completed_at.is_some(), any);
                    if let Some(done) = v.last_completed_at {
                        prop_assert!(done >= v.first_visited_at);
                    }
                }
            }
        }
    }
}
