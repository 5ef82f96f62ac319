//! Report assembly: the JSON report, one tidy CSV per figure, and the run
//! manifest embedded in every output.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classify::{
    cohort_styles, last_step_distribution, last_step_is_review, main_before_after,
    main_steps_visited, start_distribution, ClassifyError, KindShare, NavStyle, ReviewShare,
    StyleTable, SPECIAL_KINDS,
};
use crate::course::{CourseError, CourseStructure, StepKind};
use crate::ingest::{
    active_learners, activity_csv, attempts_csv, build_traces, comments_csv, enrolments_csv,
    remaining_enrolments, AttemptRecord, CommentRecord, EnrolmentRecord, LearnerTrace, VisitRecord,
};
use crate::metrics::{
    engagement_table, performance_table, proportion, EngagementRecord, PerformanceRecord,
};
use crate::simgen::SimulatedCohort;
use crate::stats::{compare_groups, CompareOptions, ComparisonReport, MonteCarlo, StatsError};
use crate::temporal::{
    all_transitions, completion_summary, dropout_distribution, periodicity_index, table_census,
    CompletionStats, DropoutDistribution, PathCount, TemporalError, TransitionMatrix,
};

pub const TOOL_NAME: &str = "navstyle";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// JSON schema for `report.json`.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Course(#[from] CourseError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Temporal(#[from] TemporalError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("week {0} is outside the course")]
    Week(u32),
    #[error("failed to write {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("failed to serialize report: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Who produced an output, from what, and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// Input role (e.g. `activity`) to SHA-256 of the file bytes.
    pub inputs: BTreeMap<String, String>,
    pub course_sha256: String,
    pub flags: BTreeMap<String, serde_json::Value>,
    pub seeds: BTreeMap<String, u64>,
    /// Only set when supplied explicitly, so reruns stay byte-identical.
    pub timestamp: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, course_document: &[u8]) -> Self {
        RunManifest {
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            command: command.into(),
            inputs: BTreeMap::new(),
            course_sha256: sha256_hex(course_document),
            flags: BTreeMap::new(),
            seeds: BTreeMap::new(),
            timestamp: None,
        }
    }

    pub fn input(mut self, role: &str, bytes: &[u8]) -> Self {
        self.inputs.insert(role.into(), sha256_hex(bytes));
        self
    }

    pub fn flag(mut self, name: &str, value: impl Into<serde_json::Value>) -> Self {
        self.flags.insert(name.into(), value.into());
        self
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.into(), value);
        self
    }

    pub fn timestamp(mut self, ts: Option<String>) -> Self {
        self.timestamp = ts;
        self
    }
}

/// RFC 3339 rendering of a Unix time in seconds, as used for `SOURCE_DATE_EPOCH`.
pub fn timestamp_from_epoch(secs: i64) -> Option<String> {
    chrono::DateTime::from_timestamp(secs, 0).map(|t| crate::ingest::format_timestamp(&t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub monte_carlo: MonteCarlo,
    pub continuity_correction: bool,
    pub top_k: usize,
    /// Week whose labels, metrics and step distributions feed the group comparisons.
    pub analysis_week: u32,
    /// Week whose labels group the dropout and completion analyses.
    pub group_week: u32,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            monte_carlo: MonteCarlo::default(),
            continuity_correction: false,
            top_k: 10,
            analysis_week: 1,
            group_week: 1,
        }
    }
}

/// Parsed input logs. Enrolments are optional.
#[derive(Debug, Clone, Copy)]
pub struct ReportInput<'a> {
    pub activity: &'a [VisitRecord],
    pub comments: &'a [CommentRecord],
    pub attempts: &'a [AttemptRecord],
    pub enrolments: Option<&'a [EnrolmentRecord]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortInfo {
    pub weeks: usize,
    pub total_steps: usize,
    pub learners_with_activity: usize,
    pub active_learners: usize,
    pub inactive_learners: usize,
    pub enrolments: Option<usize>,
    pub remaining_enrolments: Option<usize>,
    pub unknown_step_rows: usize,
    pub analysis_week: u32,
    pub group_week: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeekCounts {
    pub week: u32,
    pub sequential: usize,
    pub global: usize,
    pub middle: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HistogramBin {
    pub main_steps_visited: usize,
    pub count: usize,
    pub sequential: usize,
    pub global: usize,
    pub middle: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MainHistogram {
    pub week: u32,
    pub main_steps: usize,
    /// One bin per value 0..=main_steps.
    pub bins: Vec<HistogramBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeforeAfter {
    pub style: NavStyle,
    pub kind: StepKind,
    /// Learners who visited a step of `kind` that week.
    pub learners: usize,
    pub mean_before: Option<f64>,
    pub mean_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusSection {
    pub total: usize,
    pub distinct: usize,
    pub kept_count: usize,
    pub changed_count: usize,
    pub kept_proportion: Option<f64>,
    pub top: Vec<PathCount>,
}

/// Interpretive choices that shape the numbers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Semantics {
    pub sequential: &'static str,
    pub global: &'static str,
    pub inactive_week: &'static str,
    pub correct_answer: &'static str,
    pub attempts: &'static str,
    pub dropout_step: &'static str,
    pub lilliefors_p_value: &'static str,
    pub mann_whitney_statistic: &'static str,
    pub continuity_correction: bool,
    pub monte_carlo_replicates: usize,
    pub monte_carlo_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub manifest: RunManifest,
    pub cohort: CohortInfo,
    pub warnings: Vec<String>,
    pub weekly_counts: Vec<WeekCounts>,
    pub start_distribution: BTreeMap<StepKind, KindShare>,
    pub last_step_distribution: BTreeMap<StepKind, KindShare>,
    pub review_share: BTreeMap<NavStyle, ReviewShare>,
    pub main_histogram: MainHistogram,
    pub before_after: Vec<BeforeAfter>,
    pub comparisons: Vec<ComparisonReport>,
    pub transitions: Vec<TransitionMatrix>,
    pub path_census: CensusSection,
    pub dropout: DropoutDistribution,
    pub periodicity: BTreeMap<NavStyle, f64>,
    pub completion: BTreeMap<NavStyle, CompletionStats>,
    pub semantics: Semantics,
}

/// A report plus the per-learner tables behind its figures.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: Report,
    pub labels: StyleTable,
    pub engagement: Vec<EngagementRecord>,
    pub performance: Vec<PerformanceRecord>,
}

/// Output file name to contents, written in name order.
pub type Bundle = BTreeMap<String, String>;

/// Active learners' traces over known steps, the rows left out, and everyone seen.
pub fn prepare_traces(
    activity: &[VisitRecord],
    course: &CourseStructure,
) -> (BTreeMap<String, LearnerTrace>, usize, usize) {
    let known: Vec<VisitRecord> = activity
        .iter()
        .filter(|v| course.contains(v.step))
        .cloned()
        .collect();
    let unknown = activity.len() - known.len();
    let all = build_traces(known);
    let seen = all.len();
    (active_learners(all), unknown, seen)
}

pub fn weekly_counts(table: &StyleTable) -> Vec<WeekCounts> {
    table
        .weekly_counts()
        .into_iter()
        .enumerate()
        .map(|(i, [s, g, m])| WeekCounts {
            week: i as u32 + 1,
            sequential: s,
            global: g,
            middle: m,
            total: s + g + m,
        })
        .collect()
}

fn mean_of(values: &[usize]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<usize>() as f64 / values.len() as f64)
}

fn main_histogram(
    traces: &BTreeMap<String, LearnerTrace>,
    course: &CourseStructure,
    table: &StyleTable,
    week: u32,
) -> Result<MainHistogram, ReportError> {
    let main_steps = course.week(week)?.main_steps().len();
    let mut bins: Vec<HistogramBin> = (0..=main_steps)
        .map(|v| HistogramBin {
            main_steps_visited: v,
            count: 0,
            sequential: 0,
            global: 0,
            middle: 0,
        })
        .collect();
    for (id, t) in traces {
        let bin = &mut bins[main_steps_visited(t, course, week)?];
        bin.count += 1;
        match table.style(id, week) {
            Some(NavStyle::Sequential) => bin.sequential += 1,
            Some(NavStyle::Global) => bin.global += 1,
            Some(NavStyle::Middle) => bin.middle += 1,
            None => {}
        }
    }
    Ok(MainHistogram {
        week,
        main_steps,
        bins,
    })
}

fn before_after(
    traces: &BTreeMap<String, LearnerTrace>,
    course: &CourseStructure,
    table: &StyleTable,
    week: u32,
) -> Result<Vec<BeforeAfter>, ReportError> {
    let w = course.week(week)?;
    let mut out = Vec::new();
    for style in NavStyle::ALL {
        for kind in SPECIAL_KINDS {
            if w.steps_of_kind(kind).is_empty() {
                continue;
            }
            let mut before = Vec::new();
            let mut after = Vec::new();
            for (id, t) in traces {
                if table.style(id, week) != Some(style) {
                    continue;
                }
                if let Some((b, a)) = main_before_after(t, course, week, kind)? {
                    before.push(b);
                    after.push(a);
                }
            }
            out.push(BeforeAfter {
                style,
                kind,
                learners: before.len(),
                mean_before: mean_of(&before),
                mean_after: mean_of(&after),
            });
        }
    }
    Ok(out)
}

fn grouped(
    table: &StyleTable,
    week: u32,
    ids: impl Iterator<Item = (String, Option<f64>)>,
) -> Vec<(NavStyle, Vec<f64>)> {
    let mut groups: [Vec<f64>; 3] = Default::default();
    for (id, value) in ids {
        if let (Some(style), Some(v)) = (table.style(&id, week), value) {
            groups[style.ordinal()].push(v);
        }
    }
    NavStyle::ALL
        .iter()
        .zip(groups)
        .map(|(s, v)| (*s, v))
        .collect()
}

/// Runs the full analysis over parsed inputs.
pub fn analyze(
    course: &CourseStructure,
    input: ReportInput<'_>,
    options: &ReportOptions,
    manifest: RunManifest,
) -> Result<Analysis, ReportError> {
    for week in [options.analysis_week, options.group_week] {
        if week == 0 || week as usize > course.num_weeks() {
            return Err(ReportError::Week(week));
        }
    }
    let week = options.analysis_week;
    let mut warnings = Vec::new();

    let (traces, unknown, seen) = prepare_traces(input.activity, course);
    if unknown > 0 {
        warnings.push(format!(
            "{unknown} activity rows reference steps outside the course and were ignored"
        ));
    }
    if traces.is_empty() {
        warnings.push("no active learners: every group is empty".into());
    }
    let table = cohort_styles(&traces, course);
    let engagement = engagement_table(&traces, input.comments, input.attempts, course);
    let performance = performance_table(&traces, input.attempts, course);

    let compare = CompareOptions {
        monte_carlo: options.monte_carlo,
        continuity_correction: options.continuity_correction,
    };
    let in_week = |r: &&EngagementRecord| r.week == week;
    let comments = grouped(
        &table,
        week,
        engagement
            .iter()
            .filter(in_week)
            .map(|r| (r.learner_id.clone(), Some(r.comments as f64))),
    );
    let attempts = grouped(
        &table,
        week,
        engagement
            .iter()
            .filter(in_week)
            .map(|r| (r.learner_id.clone(), Some(r.attempts as f64))),
    );
    let rates = grouped(
        &table,
        week,
        performance
            .iter()
            .filter(|r| r.week == week)
            .map(|r| (r.learner_id.clone(), r.correct_answer_rate)),
    );
    let mut comparisons = Vec::new();
    for (metric, samples) in [
        ("comments", comments),
        ("attempts", attempts),
        ("correct_answer_rate", rates),
    ] {
        let c = compare_groups(metric, &samples, &compare)?;
        warnings.extend(c.warnings.iter().cloned());
        comparisons.push(c);
    }

    let census = table_census(&table);
    let top = census.top(options.top_k);
    let dropout = dropout_distribution(&traces, course, &table, options.group_week)?;
    let periodicity = periodicity_index(&dropout, course);
    let completion = completion_summary(&traces, course, &table, options.group_week);

    let enrolments = input.enrolments.map(|e| e.len());
    let remaining = input.enrolments.map(remaining_enrolments);

    let report = Report {
        manifest,
        cohort: CohortInfo {
            weeks: course.num_weeks(),
            total_steps: course.total_steps(),
            learners_with_activity: seen,
            active_learners: traces.len(),
            inactive_learners: seen - traces.len(),
            enrolments,
            remaining_enrolments: remaining,
            unknown_step_rows: unknown,
            analysis_week: week,
            group_week: options.group_week,
        },
        warnings,
        weekly_counts: weekly_counts(&table),
        start_distribution: start_distribution(traces.values(), course, week)?,
        last_step_distribution: last_step_distribution(traces.values(), course, week)?,
        review_share: last_step_is_review(&traces, course, week, &table)?,
        main_histogram: main_histogram(&traces, course, &table, week)?,
        before_after: before_after(&traces, course, &table, week)?,
        comparisons,
        transitions: all_transitions(&table),
        path_census: CensusSection {
            total: census.total(),
            distinct: census.distinct(),
            kept_count: census.kept_count,
            changed_count: census.changed_count,
            kept_proportion: proportion(census.kept_count, census.total()),
            top,
        },
        dropout,
        periodicity,
        completion,
        semantics: Semantics {
            sequential: "week first-visit order equals the full linear path",
            global: "some Main step first-visited after some step that follows the last Main step, same week",
            inactive_week: "Middle",
            correct_answer: "eventually_correct",
            attempts: "all_submissions",
            dropout_step: "last_first_visit",
            lilliefors_p_value: "(exceedances + 1) / (replicates + 1)",
            mann_whitney_statistic: "U of the first group",
            continuity_correction: options.continuity_correction,
            monte_carlo_replicates: options.monte_carlo.replicates,
            monte_carlo_seed: options.monte_carlo.seed,
        },
    };
    Ok(Analysis {
        report,
        labels: table,
        engagement,
        performance,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, ReportError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn fig1_csv(h: &MainHistogram) -> String {
    let mut out = String::from("group,main_steps_visited,count\n");
    for b in &h.bins {
        out.push_str(&format!("all,{},{}\n", b.main_steps_visited, b.count));
    }
    for s in NavStyle::ALL {
        for b in &h.bins {
            let c = match s {
                NavStyle::Sequential => b.sequential,
                NavStyle::Global => b.global,
                NavStyle::Middle => b.middle,
            };
            out.push_str(&format!("{s},{},{c}\n", b.main_steps_visited));
        }
    }
    out
}

pub fn fig2_csv(rows: &[BeforeAfter]) -> String {
    let mut out = String::from("style,kind,learners,mean_before,mean_after\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.style,
            r.kind.name(),
            r.learners,
            opt(r.mean_before),
            opt(r.mean_after)
        ));
    }
    out
}

pub fn fig3_csv(engagement: &[EngagementRecord], table: &StyleTable, week: u32) -> String {
    let mut out = String::from("learner_id,style,comments,attempts\n");
    for r in engagement.iter().filter(|r| r.week == week) {
        if let Some(s) = table.style(&r.learner_id, week) {
            out.push_str(&format!(
                "{},{s},{},{}\n",
                r.learner_id, r.comments, r.attempts
            ));
        }
    }
    out
}

pub fn fig4_csv(performance: &[PerformanceRecord], table: &StyleTable, week: u32) -> String {
    let mut out = String::from(
        "learner_id,style,questions_attempted,questions_correct,correct_answer_rate\n",
    );
    for r in performance.iter().filter(|r| r.week == week) {
        let (Some(s), Some(rate)) = (table.style(&r.learner_id, week), r.correct_answer_rate)
        else {
            continue;
        };
        out.push_str(&format!(
            "{},{s},{},{},{rate}\n",
            r.learner_id, r.questions_attempted, r.questions_correct
        ));
    }
    out
}

pub fn fig5_csv(counts: &[WeekCounts]) -> String {
    let mut out = String::from("week,style,count,proportion\n");
    for w in counts {
        for (s, c) in NavStyle::ALL.iter().zip([w.sequential, w.global, w.middle]) {
            out.push_str(&format!(
                "{},{s},{c},{}\n",
                w.week,
                opt(proportion(c, w.total))
            ));
        }
    }
    out
}

/// Transition matrices in the fixed interchange shape (rows and columns S, G, M).
pub fn transitions_json(matrices: &[TransitionMatrix]) -> Result<String, ReportError> {
    to_json(&matrices)
}

impl Analysis {
    pub fn bundle(&self) -> Result<Bundle, ReportError> {
        let r = &self.report;
        let week = r.cohort.analysis_week;
        let mut b = Bundle::new();
        b.insert("report.json".into(), to_json(r)?);
        b.insert("manifest.json".into(), to_json(&r.manifest)?);
        b.insert(
            "fig1_main_histogram.csv".into(),
            fig1_csv(&r.main_histogram),
        );
        b.insert("fig2_before_after.csv".into(), fig2_csv(&r.before_after));
        b.insert(
            "fig3_comments_attempts.csv".into(),
            fig3_csv(&self.engagement, &self.labels, week),
        );
        b.insert(
            "fig4_rate_distribution.csv".into(),
            fig4_csv(&self.performance, &self.labels, week),
        );
        b.insert("fig5_weekly_counts.csv".into(), fig5_csv(&r.weekly_counts));
        b.insert(
            "fig6_transitions.json".into(),
            transitions_json(&r.transitions)?,
        );
        b.insert("fig7_dropout.csv".into(), r.dropout.to_csv());
        Ok(b)
    }
}

/// The four ingest-format logs, the ground truth and the manifest.
pub fn simulation_bundle(
    cohort: &SimulatedCohort,
    manifest: &RunManifest,
) -> Result<Bundle, ReportError> {
    let mut b = Bundle::new();
    b.insert("activity.csv".into(), activity_csv(&cohort.activity));
    b.insert("comments.csv".into(), comments_csv(&cohort.comments));
    b.insert("attempts.csv".into(), attempts_csv(&cohort.attempts));
    b.insert("enrolments.csv".into(), enrolments_csv(&cohort.enrolments));
    b.insert("ground_truth.csv".into(), cohort.ground_truth.to_csv());
    b.insert("manifest.json".into(), to_json(manifest)?);
    Ok(b)
}

pub fn write_bundle(bundle: &Bundle, dir: &Path) -> Result<(), ReportError> {
    let io_err = |p: &Path, source| ReportError::Io {
        path: p.display().to_string(),
        source,
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (name, contents) in bundle {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::course::{reference_course, StepRef};
    use crate::ingest::parse_timestamp;
    use crate::simgen::{generate_cohort, SimConfig};

    fn quick() -> ReportOptions {
        ReportOptions {
            monte_carlo: MonteCarlo {
                replicates: 99,
                seed: 1,
            },
            ..ReportOptions::default()
        }
    }

    fn run(cohort: &SimulatedCohort) -> Analysis {
        let course = reference_course();
        let input = ReportInput {
            activity: &cohort.activity,
            comments: &cohort.comments,
            attempts: &cohort.attempts,
            enrolments: Some(&cohort.enrolments),
        };
        analyze(
            &course,
            input,
            &quick(),
            RunManifest::new("report", b"course"),
        )
        .unwrap()
    }

    #[test]
    fn simulated_report_shape() {
        let course = reference_course();
        let cfg = SimConfig {
            seed: 2,
            inactive_decoys: 20,
            ..SimConfig::default()
        };
        let cohort = generate_cohort(&course, &cfg).unwrap();
        let a = run(&cohort);
        let r = &a.report;
        assert_eq!(r.cohort.active_learners, 5204);
        assert_eq!(r.cohort.inactive_learners, 20);
        for w in &r.weekly_counts {
            assert_eq!(w.total, 5204);
        }
        let hist_total: usize = r.main_histogram.bins.iter().map(|b| b.count).sum();
        assert_eq!(hist_total, 5204);
        assert_eq!(r.main_histogram.bins.len(), 10);
        assert_eq!(r.transitions.len(), 5);
        assert_eq!(r.path_census.total, 5204);

        let comments = &r.comparisons[0];
        let means: Vec<f64> = comments
            .groups
            .iter()
            .map(|g| g.summary.unwrap().mean)
            .collect();
        assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
        assert_eq!(r.review_share[&NavStyle::Sequential].proportion, Some(1.0));
        let seq = r
            .before_after
            .iter()
            .find(|b| b.style == NavStyle::Sequential && b.kind == StepKind::Assessment)
            .unwrap();
        assert_eq!((seq.mean_before, seq.mean_after), (Some(9.0), Some(0.0)));
        let bundle = a.bundle().unwrap();
        assert_eq!(bundle.len(), 9);
        assert!(bundle["fig5_weekly_counts.csv"].starts_with("week,style,count,proportion\n1,S,"));
    }

    #[test]
    fn single_learner_degenerate() {
        let t = parse_timestamp("2013-06-01T00:00:00Z").unwrap();
        let activity = vec![VisitRecord {
            learner_id: "solo".into(),
            step: StepRef::new(1, 1),
            first_visited_at: t,
            last_completed_at: Some(t),
        }];
        let course = reference_course();
        let input = ReportInput {
            activity: &activity,
            comments: &[],
            attempts: &[],
            enrolments: None,
        };
        let r = analyze(&course, input, &quick(), RunManifest::new("report", b"c"))
            .unwrap()
            .report;
        assert_eq!(r.cohort.active_learners, 1);
        let c = &r.comparisons[0];
        assert_eq!(c.groups[2].summary.unwrap().n, 1);
        assert!(c.groups[0].summary.is_none());
        assert!(c.omnibus.is_none() && c.pairwise.is_empty());
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn empty_and_unknown_steps() {
        let t = parse_timestamp("2013-06-01T00:00:00Z").unwrap();
        let activity = vec![VisitRecord {
            learner_id: "x".into(),
            step: StepRef::new(1, 99),
            first_visited_at: t,
            last_completed_at: Some(t),
        }];
        let course = reference_course();
        let input = ReportInput {
            activity: &activity,
            comments: &[],
            attempts: &[],
            enrolments: None,
        };
        let a = analyze(&course, input, &quick(), RunManifest::new("report", b"c")).unwrap();
        assert_eq!(a.report.cohort.unknown_step_rows, 1);
        assert_eq!(a.report.cohort.active_learners, 0);
        assert!(a.report.transitions.iter().all(|m| m.empty == [true; 3]));
        a.bundle().unwrap();
    }

    #[test]
    fn bad_week_rejected() {
        let course = reference_course();
        let input = ReportInput {
            activity: &[],
            comments: &[],
            attempts: &[],
            enrolments: None,
        };
        let opts = ReportOptions {
            analysis_week: 7,
            ..quick()
        };
        assert!(matches!(
            analyze(&course, input, &opts, RunManifest::new("r", b"")),
            Err(ReportError::Week(7))
        ));
    }

    #[test]
    fn manifest_digests() {
        let m = RunManifest::new("report", b"abc")
            .input("activity", b"")
            .seed("mc", 3)
            .flag("strict", true);
        assert_eq!(
            m.course_sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(
            m.inputs["activity"],
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(m.timestamp, None);
        assert_eq!(
            timestamp_from_epoch(1_370_044_800).as_deref(),
            Some("2013-06-01T00:00:00Z")
        );
    }
}
