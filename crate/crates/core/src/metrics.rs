//! Per-learner engagement and performance measures.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::course::CourseStructure;
use crate::ingest::{AttemptRecord, CommentRecord, LearnerTrace};

/// `count / total`, absent when `total` is zero.
pub fn proportion(count: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| count as f64 / total as f64)
}

/// `count / total` as a percentage.
pub fn percentage(count: usize, total: usize) -> Option<f64> {
    proportion(count, total).map(|p| p * 100.0)
}

pub fn comment_count(comments: &[CommentRecord], learner: &str, week: u32) -> usize {
    comments
        .iter()
        .filter(|c| c.learner_id == learner && c.step.week == week)
        .count()
}

/// Every submission row counts, retries included.
pub fn attempt_count(attempts: &[AttemptRecord], learner: &str, week: u32) -> usize {
    attempts
        .iter()
        .filter(|a| a.learner_id == learner && a.step.week == week)
        .count()
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
struct QuestionTally {
    attempted: BTreeSet<(u32, u32)>,
    correct: BTreeSet<(u32, u32)>,
}

impl QuestionTally {
    fn add(&mut self, a: &AttemptRecord) {
        let q = (a.step.index, a.question_number);
        self.attempted.insert(q);
        if a.correct {
            self.correct.insert(q);
        }
    }
}

/// Distinct questions ever answered correctly over distinct questions attempted.
pub fn correct_answer_rate(attempts: &[AttemptRecord], learner: &str, week: u32) -> Option<f64> {
    let mut tally = QuestionTally::default();
    attempts
        .iter()
        .filter(|a| a.learner_id == learner && a.step.week == week)
        .for_each(|a| tally.add(a));
    proportion(tally.correct.len(), tally.attempted.len())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EngagementRecord {
    pub learner_id: String,
    pub week: u32,
    pub comments: usize,
    pub attempts: usize,
    pub steps_visited: usize,
    pub steps_completed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerformanceRecord {
    pub learner_id: String,
    pub week: u32,
    pub questions_attempted: usize,
    pub questions_correct: usize,
    pub correct_answer_rate: Option<f64>,
}

/// One record per learner in `traces` per course week, ordered by (learner, week).
pub fn engagement_table(
    traces: &BTreeMap<String, LearnerTrace>,
    comments: &[CommentRecord],
    attempts: &[AttemptRecord],
    course: &CourseStructure,
) -> Vec<EngagementRecord> {
    let mut comment_counts: HashMap<(&str, u32), usize> = HashMap::new();
    for c in comments {
        *comment_counts
            .entry((c.learner_id.as_str(), c.step.week))
            .or_default() += 1;
    }
    let mut attempt_counts: HashMap<(&str, u32), usize> = HashMap::new();
    for a in attempts {
        *attempt_counts
            .entry((a.learner_id.as_str(), a.step.week))
            .or_default() += 1;
    }
    let weeks = course.num_weeks() as u32;
    let mut out = Vec::with_capacity(traces.len() * weeks as usize);
    for (id, t) in traces {
        for week in 1..=weeks {
            let in_week = t.visits.iter().filter(|v| v.step.week == week);
            let (visited, completed) = in_week.fold((0, 0), |(v, c), r| {
                (v + 1, c + usize::from(r.last_completed_at.is_some()))
            });
            let key = (id.as_str(), week);
            out.push(EngagementRecord {
                learner_id: id.clone(),
                week,
                comments: comment_counts.get(&key).copied().unwrap_or(0),
                attempts: attempt_counts.get(&key).copied().unwrap_or(0),
                steps_visited: visited,
                steps_completed: completed,
            });
        }
    }
    out
}

pub fn performance_table(
    traces: &BTreeMap<String, LearnerTrace>,
    attempts: &[AttemptRecord],
    course: &CourseStructure,
) -> Vec<PerformanceRecord> {
    let mut tallies: HashMap<(&str, u32), QuestionTally> = HashMap::new();
    for a in attempts {
        tallies
            .entry((a.learner_id.as_str(), a.step.week))
            .or_default()
            .add(a);
    }
    let weeks = course.num_weeks() as u32;
    let mut out = Vec::with_capacity(traces.len() * weeks as usize);
    for id in traces.keys() {
        for week in 1..=weeks {
            let (attempted, correct) = tallies
                .get(&(id.as_str(), week))
                .map(|t| (t.attempted.len(), t.correct.len()))
                .unwrap_or((0, 0));
            out.push(PerformanceRecord {
                learner_id: id.clone(),
                week,
                questions_attempted: attempted,
                questions_correct: correct,
                correct_answer_rate: proportion(correct, attempted),
            });
        }
    }
    out
}

pub fn engagement_csv(records: &[EngagementRecord]) -> String {
    let mut out = String::from("learner_id,week,comments,attempts,steps_visited,steps_completed\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.learner_id, r.week, r.comments, r.attempts, r.steps_visited, r.steps_completed
        ));
    }
    out
}

pub fn performance_csv(records: &[PerformanceRecord]) -> String {
    let mut out =
        String::from("learner_id,week,questions_attempted,questions_correct,correct_answer_rate\n");
    for r in records {
        let rate = r
            .correct_answer_rate
            .map(|x| x.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.learner_id, r.week, r.questions_attempted, r.questions_correct, rate
        ));
    }
    out
}
