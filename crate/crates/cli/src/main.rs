//! `navstyle`: navigation-style analytics over clickstream exports.
//!
//! Exit codes: 0 success, 1 validation or configuration failure, 2 internal error.

use std::fmt::Display;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use navstyle::classify::cohort_styles;
use navstyle::course::{load_course, reference_course, reference_course_document, CourseStructure};
use navstyle::ingest::{
    parse_activity, parse_attempts, parse_comments, parse_enrolments, unknown_steps, AttemptRecord,
    CommentRecord, EnrolmentRecord, IngestError, Parsed, RowPolicy, VisitRecord,
};
use navstyle::report::{
    analyze, fig5_csv, prepare_traces, simulation_bundle, timestamp_from_epoch, to_json,
    transitions_json, weekly_counts, write_bundle, Bundle, ReportInput, ReportOptions, RunManifest,
};
use navstyle::simgen::{empirical_transition_check, generate_cohort, SimConfig};
use navstyle::stats::MonteCarlo;
use navstyle::temporal::{all_transitions, dropout_distribution, periodicity_index};

#[derive(Parser)]
#[command(
    name = "navstyle",
    version,
    about = "Navigation-style analytics for MOOC clickstream logs"
)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the course file and input logs; lists every issue found.
    Validate(InputArgs),
    /// Label every active learner per week and print per-week counts.
    Classify(InputArgs),
    /// Full report bundle: report.json, figure tables and manifest.
    Report(ReportArgs),
    /// Week-to-week style transition matrices as JSON.
    Transitions(InputArgs),
    /// Dropout-step distribution by style as CSV.
    Dropout(DropoutArgs),
    /// Generate a synthetic cohort with ground-truth labels.
    Simulate(SimulateArgs),
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Course structure JSON (default: the built-in six-week course).
    #[arg(long)]
    course: Option<PathBuf>,
    #[arg(long)]
    activity: Option<PathBuf>,
    #[arg(long)]
    comments: Option<PathBuf>,
    #[arg(long)]
    attempts: Option<PathBuf>,
    #[arg(long)]
    enrolments: Option<PathBuf>,
    /// Output directory (default: stdout where applicable).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fail on the first malformed row instead of skipping it.
    #[arg(long)]
    strict: bool,
    /// Manifest timestamp (default: SOURCE_DATE_EPOCH if set, else none).
    #[arg(long)]
    timestamp: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Seed for Monte-Carlo p-values.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    mc_replicates: usize,
    /// Week whose labels define the comparison groups.
    #[arg(long, default_value_t = 1)]
    week: u32,
    /// Week whose labels group the dropout analyses.
    #[arg(long, default_value_t = 1)]
    group_week: u32,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Apply the 0.5 continuity correction in Mann-Whitney tests.
    #[arg(long)]
    continuity_correction: bool,
}

#[derive(Args)]
struct DropoutArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Week whose labels define the groups.
    #[arg(long, default_value_t = 1)]
    week: u32,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    course: Option<PathBuf>,
    /// Simulation config JSON; omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config cohort size.
    #[arg(long)]
    cohort: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    timestamp: Option<String>,
}

/// Failure split by exit code.
enum Failure {
    Invalid(String),
    Internal(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Internal(e.into())
    }
}

fn invalid(msg: impl Display) -> Failure {
    Failure::Invalid(msg.to_string())
}

type Outcome = Result<(), Failure>;

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))
}

struct Course {
    structure: CourseStructure,
    document: Vec<u8>,
}

fn load(path: Option<&Path>) -> Result<Course, Failure> {
    match path {
        None => Ok(Course {
            structure: reference_course(),
            document: reference_course_document().as_bytes().to_vec(),
        }),
        Some(p) => {
            let bytes = read_file(p)?;
            let text = String::from_utf8(bytes.clone())
                .map_err(|_| invalid(format!("{}: not UTF-8", p.display())))?;
            let structure =
                load_course(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            Ok(Course {
                structure,
                document: bytes,
            })
        }
    }
}

#[derive(Default)]
struct Inputs {
    activity: Vec<VisitRecord>,
    comments: Vec<CommentRecord>,
    attempts: Vec<AttemptRecord>,
    enrolments: Option<Vec<EnrolmentRecord>>,
    /// `file line N: message` for every skipped row.
    issues: Vec<String>,
    digests: Vec<(&'static str, Vec<u8>)>,
}

fn parse_one<T>(
    role: &'static str,
    path: &Path,
    policy: RowPolicy,
    parse: fn(&[u8], RowPolicy) -> Result<Parsed<T>, IngestError>,
    inputs: &mut Inputs,
) -> Result<Vec<T>, Failure> {
    let bytes = read_file(path)?;
    let parsed = parse(&bytes, policy).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    for issue in parsed.issues {
        inputs.issues.push(format!(
            "{} line {}: {}",
            path.display(),
            issue.row,
            issue.message
        ));
    }
    inputs.digests.push((role, bytes));
    Ok(parsed.records)
}

fn read_inputs(args: &InputArgs, need_activity: bool) -> Result<Inputs, Failure> {
    let policy = if args.strict {
        RowPolicy::Strict
    } else {
        RowPolicy::Skip
    };
    let mut inputs = Inputs::default();
    match &args.activity {
        Some(p) => {
            inputs.activity = parse_one(
                "activity",
                p,
                policy,
                |b, pol| parse_activity(b, pol),
                &mut inputs,
            )?
        }
        None if need_activity => return Err(invalid("--activity is required")),
        None => {}
    }
    if let Some(p) = &args.comments {
        inputs.comments = parse_one(
            "comments",
            p,
            policy,
            |b, pol| parse_comments(b, pol),
            &mut inputs,
        )?;
    }
    if let Some(p) = &args.attempts {
        inputs.attempts = parse_one(
            "attempts",
            p,
            policy,
            |b, pol| parse_attempts(b, pol),
            &mut inputs,
        )?;
    }
    if let Some(p) = &args.enrolments {
        inputs.enrolments = Some(parse_one(
            "enrolments",
            p,
            policy,
            |b, pol| parse_enrolments(b, pol),
            &mut inputs,
        )?);
    }
    Ok(inputs)
}

fn manifest_timestamp(explicit: &Option<String>) -> Option<String> {
    explicit.clone().or_else(|| {
        std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|s| s.trim().parse::<i64>().ok())
            .and_then(timestamp_from_epoch)
    })
}

fn manifest(command: &str, course: &Course, inputs: &Inputs, args: &InputArgs) -> RunManifest {
    let mut m = RunManifest::new(command, &course.document)
        .flag("strict", args.strict)
        .timestamp(manifest_timestamp(&args.timestamp));
    for (role, bytes) in &inputs.digests {
        m = m.input(role, bytes);
    }
    m
}

fn warn(msg: impl Display) {
    eprintln!("warning: {msg}");
}

/// Writes `contents` to `out/name`, or to stdout without `--out`.
fn emit(out: &Option<PathBuf>, name: &str, contents: &str) -> Outcome {
    match out {
        Some(dir) => {
            let mut b = Bundle::new();
            b.insert(name.into(), contents.into());
            write_bundle(&b, dir)?;
        }
        None => io::stdout().write_all(contents.as_bytes())?,
    }
    Ok(())
}

fn cmd_validate(args: &InputArgs) -> Outcome {
    let course = load(args.course.as_deref())?;
    let inputs = read_inputs(args, false)?;
    let mut problems = inputs.issues.clone();
    let steps = inputs
        .activity
        .iter()
        .map(|v| &v.step)
        .chain(inputs.comments.iter().map(|c| &c.step))
        .chain(inputs.attempts.iter().map(|a| &a.step));
    for step in unknown_steps(steps, &course.structure) {
        problems.push(format!("unknown step {step}: not in the course structure"));
    }
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "course: {} weeks, {} steps",
        course.structure.num_weeks(),
        course.structure.total_steps()
    )?;
    for (role, _) in &inputs.digests {
        writeln!(out, "checked {role}")?;
    }
    for p in &problems {
        writeln!(out, "issue: {p}")?;
    }
    if problems.is_empty() {
        writeln!(out, "ok")?;
        Ok(())
    } else {
        Err(invalid(format!("{} issue(s) found", problems.len())))
    }
}

fn report_issues(inputs: &Inputs) {
    for i in &inputs.issues {
        warn(format!("skipped {i}"));
    }
}

fn cmd_classify(args: &InputArgs) -> Outcome {
    let course = load(args.course.as_deref())?;
    let inputs = read_inputs(args, true)?;
    report_issues(&inputs);
    let (traces, unknown, _) = prepare_traces(&inputs.activity, &course.structure);
    if unknown > 0 {
        warn(format!(
            "{unknown} activity rows reference unknown steps and were ignored"
        ));
    }
    if traces.is_empty() {
        warn("no active learners in the activity log");
    }
    let table = cohort_styles(&traces, &course.structure);
    let counts = weekly_counts(&table);
    match &args.out {
        Some(dir) => {
            let mut b = Bundle::new();
            b.insert("labels.csv".into(), table.to_csv());
            b.insert("fig5_weekly_counts.csv".into(), fig5_csv(&counts));
            b.insert(
                "manifest.json".into(),
                to_json(&manifest("classify", &course, &inputs, args))?,
            );
            write_bundle(&b, dir)?;
        }
        None => io::stdout().write_all(table.to_csv().as_bytes())?,
    }
    for w in &counts {
        eprintln!(
            "week {}: S={} G={} M={} (n={})",
            w.week, w.sequential, w.global, w.middle, w.total
        );
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Outcome {
    let Some(out) = &args.input.out else {
        return Err(invalid("--out is required for report"));
    };
    let course = load(args.input.course.as_deref())?;
    let inputs = read_inputs(&args.input, true)?;
    report_issues(&inputs);
    if args.mc_replicates == 0 {
        return Err(invalid("--mc-replicates must be at least 1"));
    }
    let options = ReportOptions {
        monte_carlo: MonteCarlo {
            replicates: args.mc_replicates,
            seed: args.seed,
        },
        continuity_correction: args.continuity_correction,
        top_k: args.top_k,
        analysis_week: args.week,
        group_week: args.group_week,
    };
    let m = manifest("report", &course, &inputs, &args.input)
        .seed("monte_carlo", args.seed)
        .flag("mc_replicates", args.mc_replicates)
        .flag("week", args.week)
        .flag("group_week", args.group_week)
        .flag("top_k", args.top_k)
        .flag("continuity_correction", args.continuity_correction);
    let input = ReportInput {
        activity: &inputs.activity,
        comments: &inputs.comments,
        attempts: &inputs.attempts,
        enrolments: inputs.enrolments.as_deref(),
    };
    let mut analysis = analyze(&course.structure, input, &options, m).map_err(|e| match e {
        navstyle::report::ReportError::Week(_) => invalid(e),
        other => Failure::Internal(other.into()),
    })?;
    let skipped = inputs.issues.iter().map(|i| format!("skipped {i}"));
    analysis.report.warnings.splice(0..0, skipped);
    for w in &analysis.report.warnings {
        warn(w);
    }
    write_bundle(&analysis.bundle()?, out)?;
    Ok(())
}

fn cmd_transitions(args: &InputArgs) -> Outcome {
    let course = load(args.course.as_deref())?;
    let inputs = read_inputs(args, true)?;
    report_issues(&inputs);
    let (traces, _, _) = prepare_traces(&inputs.activity, &course.structure);
    let table = cohort_styles(&traces, &course.structure);
    emit(
        &args.out,
        "fig6_transitions.json",
        &transitions_json(&all_transitions(&table))?,
    )
}

fn cmd_dropout(args: &DropoutArgs) -> Outcome {
    let course = load(args.input.course.as_deref())?;
    let inputs = read_inputs(&args.input, true)?;
    report_issues(&inputs);
    let (traces, _, _) = prepare_traces(&inputs.activity, &course.structure);
    let table = cohort_styles(&traces, &course.structure);
    let dist =
        dropout_distribution(&traces, &course.structure, &table, args.week).map_err(invalid)?;
    for (style, p) in periodicity_index(&dist, &course.structure) {
        eprintln!("periodicity {style}: {p}");
    }
    emit(&args.input.out, "fig7_dropout.csv", &dist.to_csv())
}

fn cmd_simulate(args: &SimulateArgs) -> Outcome {
    let course = load(args.course.as_deref())?;
    let (mut config, config_bytes) = match &args.config {
        Some(p) => {
            let bytes = read_file(p)?;
            let text = String::from_utf8(bytes.clone())
                .map_err(|_| invalid(format!("{}: not UTF-8", p.display())))?;
            (
                SimConfig::from_json(&text)
                    .map_err(|e| invalid(format!("{}: {e}", p.display())))?,
                Some(bytes),
            )
        }
        None => (SimConfig::default(), None),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.cohort {
        config.cohort_size = n;
    }
    let cohort = generate_cohort(&course.structure, &config).map_err(invalid)?;
    let mut m = RunManifest::new("simulate", &course.document)
        .seed("simulation", config.seed)
        .flag("cohort", config.cohort_size)
        .timestamp(manifest_timestamp(&args.timestamp));
    if let Some(bytes) = &config_bytes {
        m = m.input("config", bytes);
    }
    write_bundle(&simulation_bundle(&cohort, &m)?, &args.out)?;
    eprintln!(
        "simulated {} learners; max transition deviation {:.4}",
        config.cohort_size,
        empirical_transition_check(&cohort.ground_truth, &config)
    );
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Report(a) => cmd_report(a),
        Command::Transitions(a) => cmd_transitions(a),
        Command::Dropout(a) => cmd_dropout(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
    }
}
