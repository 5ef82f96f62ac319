use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn navstyle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_navstyle"))
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn simulate(dir: &Path, seed: &str, cohort: &str) -> Output {
    navstyle(&[
        "simulate",
        "--seed",
        seed,
        "--cohort",
        cohort,
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn simulate_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&simulate(&a, "42", "300")), 0);
    assert_eq!(code(&simulate(&b, "42", "300")), 0);
    let files = read_dir(&a);
    assert_eq!(
        files.keys().cloned().collect::<Vec<_>>(),
        [
            "activity.csv",
            "attempts.csv",
            "comments.csv",
            "enrolments.csv",
            "ground_truth.csv",
            "manifest.json"
        ]
    );
    assert_eq!(files, read_dir(&b));
    let c = tmp.path().join("c");
    simulate(&c, "43", "300");
    assert_ne!(files["activity.csv"], read_dir(&c)["activity.csv"]);
}

#[test]
fn large_simulation_round_trips_through_classify() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    assert_eq!(code(&simulate(&sim, "7", "10000")), 0);
    let out = tmp.path().join("labels");
    let o = navstyle(&[
        "classify",
        "--activity",
        &p(&sim, "activity.csv"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let truth: BTreeMap<String, String> = fs::read_to_string(sim.join("ground_truth.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    let labels: BTreeMap<String, String> = fs::read_to_string(out.join("labels.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[f.len() - 1].to_string())
        })
        .collect();
    assert_eq!(labels.len(), 10_000);
    assert_eq!(labels, truth);
    assert!(read_dir(&out).contains_key("fig5_weekly_counts.csv"));
}

#[test]
fn validate_reports_issues() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "1", "50");
    let clean = navstyle(&[
        "validate",
        "--activity",
        &p(&sim, "activity.csv"),
        "--comments",
        &p(&sim, "comments.csv"),
        "--attempts",
        &p(&sim, "attempts.csv"),
        "--enrolments",
        &p(&sim, "enrolments.csv"),
    ]);
    assert_eq!(code(&clean), 0, "{}", stdout(&clean));

    let bad = tmp.path().join("bad.csv");
    fs::write(
        &bad,
        "learner_id,week_number,step_number,first_visited_at,last_completed_at\n\
         a,1,99,2013-06-01T00:00:00Z,\n\
         a,1,1,not-a-time,\n",
    )
    .unwrap();
    let o = navstyle(&["validate", "--activity", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    assert!(out.contains("unknown step 1.99"), "{out}");
    assert!(out.contains("line 3"), "{out}");
    assert_eq!(
        code(&navstyle(&[
            "validate",
            "--strict",
            "--activity",
            bad.to_str().unwrap()
        ])),
        1
    );

    let typo = tmp.path().join("typo.csv");
    fs::write(
        &typo,
        "learner_id,week_numbr,step_number,first_visited_at,last_completed_at\n",
    )
    .unwrap();
    let o = navstyle(&["validate", "--activity", typo.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("header mismatch"), "{}", stderr(&o));
}

#[test]
fn missing_inputs_exit_one_with_path() {
    let o = navstyle(&["validate", "--course", "/nonexistent/course.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("/nonexistent/course.json"));
    let tmp = TempDir::new().unwrap();
    let o = navstyle(&[
        "simulate",
        "--course",
        "/nonexistent/c.json",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("/nonexistent/c.json"));

    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"initial_mix": [0.5, 0.5, 0.5]}"#).unwrap();
    let o = navstyle(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("initial_mix"));
    assert_eq!(code(&navstyle(&["bogus"])), 1);
}

#[test]
fn empty_activity_classifies_to_nothing() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty.csv");
    fs::write(
        &empty,
        "learner_id,week_number,step_number,first_visited_at,last_completed_at\n",
    )
    .unwrap();
    let o = navstyle(&["classify", "--activity", empty.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        stdout(&o),
        "learner_id,week_1,week_2,week_3,week_4,week_5,week_6,style_path\n"
    );
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn report_bundle_is_deterministic_across_threads() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "9", "600");
    let report = |threads: &str, out: &Path| {
        navstyle(&[
            "--threads",
            threads,
            "report",
            "--activity",
            &p(&sim, "activity.csv"),
            "--comments",
            &p(&sim, "comments.csv"),
            "--attempts",
            &p(&sim, "attempts.csv"),
            "--mc-replicates",
            "300",
            "--seed",
            "5",
            "--timestamp",
            "2024-01-01T00:00:00Z",
            "--out",
            out.to_str().unwrap(),
        ])
    };
    let (a, b) = (tmp.path().join("r1"), tmp.path().join("r4"));
    let o = report("1", &a);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&report("4", &b)), 0);
    let files = read_dir(&a);
    assert_eq!(files, read_dir(&b));
    assert_eq!(files.len(), 9);
    let json: serde_json::Value = serde_json::from_slice(&files["report.json"]).unwrap();
    assert_eq!(json["manifest"]["timestamp"], "2024-01-01T00:00:00Z");
    assert_eq!(json["manifest"]["seeds"]["monte_carlo"], 5);
    assert_eq!(json["cohort"]["active_learners"], 600);
    assert_eq!(
        json["manifest"],
        serde_json::from_slice::<serde_json::Value>(&files["manifest.json"]).unwrap()
    );
}

#[test]
fn transitions_and_dropout_subcommands() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "3", "200");
    let o = navstyle(&["transitions", "--activity", &p(&sim, "activity.csv")]);
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(m.as_array().unwrap().len(), 5);
    assert_eq!(m[0]["from_week"], 1);

    let out = tmp.path().join("d");
    let o = navstyle(&[
        "dropout",
        "--activity",
        &p(&sim, "activity.csv"),
        "--week",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("fig7_dropout.csv")).unwrap();
    assert!(csv.starts_with("style,global_step_index,week,step_index,count,proportion\n"));
    assert!(stderr(&o).contains("periodicity"));
    assert_eq!(
        code(&navstyle(&[
            "dropout",
            "--activity",
            &p(&sim, "activity.csv"),
            "--week",
            "9"
        ])),
        1
    );
}
