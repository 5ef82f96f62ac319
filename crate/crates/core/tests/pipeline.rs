//! End-to-end checks over the CSV interchange formats and the report schema.

use navstyle::classify::{cohort_styles, NavStyle};
use navstyle::course::{reference_course, StepRef};
use navstyle::ingest::{
    active_learners, activity_csv, attempts_csv, build_traces, comments_csv, enrolments_csv,
    parse_activity, parse_attempts, parse_comments, parse_enrolments, unknown_steps, IngestError,
    RowPolicy,
};
use navstyle::metrics::engagement_table;
use navstyle::report::{analyze, ReportInput, ReportOptions, RunManifest, REPORT_SCHEMA};
use navstyle::simgen::{generate_cohort, SimConfig};
use navstyle::stats::MonteCarlo;
use navstyle::temporal::{dropout_distribution, periodicity_index};
use serde_json::Value;

fn options() -> ReportOptions {
    ReportOptions {
        monte_carlo: MonteCarlo {
            replicates: 199,
            seed: 11,
        },
        ..ReportOptions::default()
    }
}

fn assert_schema_valid(report_json: &str) {
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let instance: Value = serde_json::from_str(report_json).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(&instance)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect();
    assert!(errors.is_empty(), "schema violations: {errors:#?}");
}

#[test]
fn csv_round_trip_gives_the_same_report() {
    let course = reference_course();
    let cfg = SimConfig {
        cohort_size: 400,
        seed: 21,
        inactive_decoys: 10,
        unenrolled: 4,
        ..SimConfig::default()
    };
    let cohort = generate_cohort(&course, &cfg).unwrap();

    let activity =
        parse_activity(activity_csv(&cohort.activity).as_bytes(), RowPolicy::Strict).unwrap();
    let comments =
        parse_comments(comments_csv(&cohort.comments).as_bytes(), RowPolicy::Strict).unwrap();
    let attempts =
        parse_attempts(attempts_csv(&cohort.attempts).as_bytes(), RowPolicy::Strict).unwrap();
    let enrolments = parse_enrolments(
        enrolments_csv(&cohort.enrolments).as_bytes(),
        RowPolicy::Strict,
    )
    .unwrap();
    assert_eq!(activity.records, cohort.activity);
    assert_eq!(comments.records, cohort.comments);
    assert_eq!(attempts.records, cohort.attempts);
    assert_eq!(enrolments.records, cohort.enrolments);

    let manifest = || RunManifest::new("report", b"c");
    let direct = analyze(
        &course,
        ReportInput {
            activity: &cohort.activity,
            comments: &cohort.comments,
            attempts: &cohort.attempts,
            enrolments: Some(&cohort.enrolments),
        },
        &options(),
        manifest(),
    )
    .unwrap();
    let parsed = analyze(
        &course,
        ReportInput {
            activity: &activity.records,
            comments: &comments.records,
            attempts: &attempts.records,
            enrolments: Some(&enrolments.records),
        },
        &options(),
        manifest(),
    )
    .unwrap();
    assert_eq!(direct.bundle().unwrap(), parsed.bundle().unwrap());
    let r = &parsed.report;
    assert_eq!(r.cohort.active_learners, 400);
    assert_eq!(r.cohort.inactive_learners, 10);
    assert_eq!(r.cohort.enrolments, Some(414));
    assert_eq!(r.cohort.remaining_enrolments, Some(410));
}

#[test]
fn reports_validate_against_schema() {
    let course = reference_course();
    let cohort = generate_cohort(
        &course,
        &SimConfig {
            cohort_size: 300,
            seed: 5,
            ..SimConfig::default()
        },
    )
    .unwrap();
    let input = ReportInput {
        activity: &cohort.activity,
        comments: &cohort.comments,
        attempts: &cohort.attempts,
        enrolments: None,
    };
    let bundle = analyze(
        &course,
        input,
        &options(),
        RunManifest::new("report", b"c").seed("monte_carlo", 11),
    )
    .unwrap()
    .bundle()
    .unwrap();
    assert_schema_valid(&bundle["report.json"]);

    // degenerate inputs must still produce a valid document
    let empty = ReportInput {
        activity: &[],
        comments: &[],
        attempts: &[],
        enrolments: None,
    };
    let bundle = analyze(&course, empty, &options(), RunManifest::new("report", b"c"))
        .unwrap()
        .bundle()
        .unwrap();
    assert_schema_valid(&bundle["report.json"]);
    let one = &cohort.activity[..1];
    let single = ReportInput {
        activity: one,
        comments: &[],
        attempts: &[],
        enrolments: None,
    };
    let bundle = analyze(
        &course,
        single,
        &options(),
        RunManifest::new("report", b"c"),
    )
    .unwrap()
    .bundle()
    .unwrap();
    assert_schema_valid(&bundle["report.json"]);
}

#[test]
fn schema_rejects_malformed_reports() {
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    assert!(!validator.is_valid(&serde_json::json!({"manifest": {}})));
}

#[test]
fn default_cohort_matches_calibration() {
    let course = reference_course();
    let cfg = SimConfig {
        cohort_size: 10_000,
        seed: 99,
        ..SimConfig::default()
    };
    let cohort = generate_cohort(&course, &cfg).unwrap();
    let traces = active_learners(build_traces(cohort.activity.clone()));
    let table = cohort_styles(&traces, &course);
    let week1 = table.weekly_counts()[0];
    for (i, share) in cfg.initial_mix.iter().enumerate() {
        let got = week1[i] as f64 / 10_000.0;
        assert!((got - share).abs() <= 0.01, "{i}: {got} vs {share}");
    }
    // Sequential learners see one Discussion step in week 1
    let engagement = engagement_table(&traces, &cohort.comments, &cohort.attempts, &course);
    let seq: Vec<f64> = engagement
        .iter()
        .filter(|r| r.week == 1 && table.style(&r.learner_id, 1) == Some(NavStyle::Sequential))
        .map(|r| r.comments as f64)
        .collect();
    let mean = seq.iter().sum::<f64>() / seq.len() as f64;
    assert!((mean - 0.3).abs() <= 0.05, "sequential comment mean {mean}");
}

#[test]
fn periodicity_of_pure_archetypes() {
    let course = reference_course();
    let identity = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let run = |mix: [f64; 3]| {
        let cfg = SimConfig {
            cohort_size: 2_000,
            seed: 3,
            initial_mix: mix,
            transitions: identity,
            ..SimConfig::default()
        };
        let cohort = generate_cohort(&course, &cfg).unwrap();
        let traces = active_learners(build_traces(cohort.activity));
        let table = cohort_styles(&traces, &course);
        periodicity_index(
            &dropout_distribution(&traces, &course, &table, 1).unwrap(),
            &course,
        )
    };
    assert_eq!(run([1.0, 0.0, 0.0])[&NavStyle::Sequential], 1.0);
    let m = run([0.0, 0.0, 1.0])[&NavStyle::Middle];
    assert!(m < 0.3, "middle periodicity {m}");
}

#[test]
fn ingest_validation_failures() {
    let course = reference_course();
    let csv = "learner_id,week_number,step_number,first_visited_at,last_completed_at\n\
               a,1,99,2013-06-01T00:00:00Z,\n\
               a,1,1,2013-06-01T00:01:00Z,2013-06-01T00:02:00Z\n";
    let parsed = parse_activity(csv.as_bytes(), RowPolicy::Strict).unwrap();
    let unknown = unknown_steps(parsed.records.iter().map(|v| &v.step), &course);
    assert_eq!(unknown, vec![StepRef::new(1, 99)]);

    let typo = "learner_id,week_numbr,step_number,first_visited_at,last_completed_at\n";
    assert!(matches!(
        parse_activity(typo.as_bytes(), RowPolicy::Skip),
        Err(IngestError::Schema { .. })
    ));
}
