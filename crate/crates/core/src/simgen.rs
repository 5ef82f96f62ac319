//! Seeded synthetic cohorts with known navigation-style labels.
//!
//! Each learner's weekly traces are built to classify as the style the
//! generator chose, so a round trip through the classifier must reproduce the
//! ground truth exactly. Week-1 styles are allocated by quota from the initial
//! mix; later weeks follow the transition matrix until the learner drops out,
//! after which every remaining week is inactive (and therefore Middle).
//!
//! Every learner draws from its own ChaCha stream (the run seed with the
//! learner's ordinal as stream id), so output does not depend on thread count.

use std::collections::BTreeMap;

use chrono::Duration;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{NavStyle, StylePath};
use crate::course::{CourseStructure, StepKind, StepRef, WeekStructure};
use crate::ingest::{
    parse_timestamp, AttemptRecord, CommentRecord, EnrolmentRecord, Timestamp, VisitRecord,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("cannot construct a {style:?} trace for week {week}: {reason}")]
    Unconstructible {
        style: NavStyle,
        week: u32,
        reason: String,
    },
    #[error("malformed simulation config: {0}")]
    Parse(#[from] serde_json::Error),
}

const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchetypeParams {
    /// Chance of one comment per Discussion step visited.
    pub comment_probability: f64,
    /// Poisson mean of submissions per Assessment step visited.
    pub mean_attempts: f64,
    pub correctness_probability: f64,
    /// Middle weeks: chance of stopping before each step.
    pub step_hazard: f64,
    /// Sequential and Global weeks: chance of stopping after the week.
    pub week_stop_probability: f64,
}

impl ArchetypeParams {
    fn validate(&self, name: &str) -> Result<(), SimError> {
        for (field, v) in [
            ("comment_probability", self.comment_probability),
            ("correctness_probability", self.correctness_probability),
            ("step_hazard", self.step_hazard),
            ("week_stop_probability", self.week_stop_probability),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::Config(format!(
                    "{name}.{field} = {v} is outside [0, 1]"
                )));
            }
        }
        if !self.mean_attempts.is_finite() || self.mean_attempts < 0.0 {
            return Err(SimError::Config(format!(
                "{name}.mean_attempts = {} must be a finite non-negative number",
                self.mean_attempts
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Archetypes {
    pub sequential: ArchetypeParams,
    pub global: ArchetypeParams,
    pub middle: ArchetypeParams,
}

impl Archetypes {
    pub fn get(&self, style: NavStyle) -> &ArchetypeParams {
        match style {
            NavStyle::Sequential => &self.sequential,
            NavStyle::Global => &self.global,
            NavStyle::Middle => &self.middle,
        }
    }
}

impl Default for Archetypes {
    fn default() -> Self {
        Archetypes {
            sequential: ArchetypeParams {
                comment_probability: 0.3,
                mean_attempts: 13.6,
                correctness_probability: 0.700,
                step_hazard: 0.0,
                week_stop_probability: 0.12,
            },
            global: ArchetypeParams {
                comment_probability: 0.22,
                mean_attempts: 9.1,
                correctness_probability: 0.643,
                step_hazard: 0.0,
                week_stop_probability: 0.35,
            },
            middle: ArchetypeParams {
                comment_probability: 0.02,
                mean_attempts: 0.8,
                correctness_probability: 0.593,
                step_hazard: 0.14,
                week_stop_probability: 0.0,
            },
        }
    }
}

/// Default week-to-week style transitions (rows and columns S, G, M): the
/// midpoints of the observed ranges, renormalized per row. The Sequential row
/// splits its leavers in the observed Week 1 to 2 ratio (457 : 208).
pub fn default_transitions() -> [[f64; 3]; 3] {
    let s_stay = (0.5715 + 0.7715) / 2.0;
    let s_rest = 1.0 - s_stay;
    let g = [
        (0.0803 + 0.2029) / 2.0,
        (0.2102 + 0.3976) / 2.0,
        (0.4142 + 0.6755) / 2.0,
    ];
    let g_sum: f64 = g.iter().sum();
    let m_to_s = (0.0016 + 0.0263) / 2.0;
    let m_stay = (0.8904 + 0.9886) / 2.0;
    [
        [s_stay, s_rest * 457.0 / 665.0, s_rest * 208.0 / 665.0],
        [g[0] / g_sum, g[1] / g_sum, g[2] / g_sum],
        [m_to_s, 1.0 - m_to_s - m_stay, m_stay],
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub cohort_size: usize,
    /// Week-1 shares of S, G, M.
    pub initial_mix: [f64; 3],
    pub transitions: [[f64; 3]; 3],
    pub archetypes: Archetypes,
    pub seed: u64,
    /// Learners who visit a few steps but never complete one.
    pub inactive_decoys: usize,
    /// Learners who enrol, never visit, and unenrol.
    pub unenrolled: usize,
    pub questions_per_assessment: u32,
    /// Chance that a visited step is also marked complete.
    pub completion_probability: f64,
    /// Course start, RFC 3339.
    pub start: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            cohort_size: 5_204,
            initial_mix: [0.2982, 0.0673, 0.6345],
            transitions: default_transitions(),
            archetypes: Archetypes::default(),
            seed: 0,
            inactive_decoys: 0,
            unenrolled: 0,
            questions_per_assessment: 7,
            completion_probability: 0.95,
            start: "2013-06-01T00:00:00Z".into(),
        }
    }
}

fn check_distribution(name: &str, p: &[f64; 3]) -> Result<(), SimError> {
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(SimError::Config(format!(
            "{name} has entries outside [0, 1]: {p:?}"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > TOLERANCE {
        return Err(SimError::Config(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self, course: &CourseStructure) -> Result<(), SimError> {
        check_distribution("initial_mix", &self.initial_mix)?;
        for (i, row) in self.transitions.iter().enumerate() {
            check_distribution(&format!("transitions row {}", NavStyle::ALL[i]), row)?;
        }
        self.archetypes.sequential.validate("sequential")?;
        self.archetypes.global.validate("global")?;
        self.archetypes.middle.validate("middle")?;
        if self.questions_per_assessment == 0 {
            return Err(SimError::Config(
                "questions_per_assessment must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.completion_probability) {
            return Err(SimError::Config(
                "completion_probability is outside [0, 1]".into(),
            ));
        }
        self.start_time()?;

        let g = NavStyle::Global.ordinal();
        let m = NavStyle::Middle.ordinal();
        for w in course.weeks() {
            let reachable = if w.week_number() == 1 {
                self.initial_mix[g] > 0.0
            } else {
                self.transitions.iter().any(|row| row[g] > 0.0)
            };
            if reachable && w.trigger_steps().is_empty() {
                return Err(SimError::Unconstructible {
                    style: NavStyle::Global,
                    week: w.week_number(),
                    reason: "no steps follow the last Main step".into(),
                });
            }
        }
        let first = &course.weeks()[0];
        if self.initial_mix[m] > 0.0 && first.len() < 2 {
            return Err(SimError::Unconstructible {
                style: NavStyle::Middle,
                week: 1,
                reason: "an active Middle week needs at least two steps".into(),
            });
        }
        Ok(())
    }

    fn start_time(&self) -> Result<Timestamp, SimError> {
        parse_timestamp(&self.start).map_err(SimError::Config)
    }
}

/// Steps emitted for one week, and whether the learner stops after them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeekTrace {
    pub steps: Vec<StepRef>,
    pub stopped: bool,
}

/// Builds a first-visit order for `week` that classifies as `style`.
///
/// Sequential: the full path. Global: the full path with one trigger step moved
/// to a sampled position before the last Main step. Middle: a strict in-order
/// prefix whose length follows the per-step hazard (the learner then stops),
/// or, if the hazard never fires, the path with one sampled step left out.
/// With `require_activity` a Middle week emits at least one step.
pub fn construct_week_trace<R: Rng>(
    style: NavStyle,
    week: &WeekStructure,
    params: &ArchetypeParams,
    require_activity: bool,
    rng: &mut R,
) -> Result<WeekTrace, SimError> {
    let path = week.path();
    match style {
        NavStyle::Sequential => Ok(WeekTrace {
            steps: path,
            stopped: rng.random_bool(params.week_stop_probability),
        }),
        NavStyle::Global => {
            let triggers = week.trigger_steps();
            if triggers.is_empty() {
                return Err(SimError::Unconstructible {
                    style,
                    week: week.week_number(),
                    reason: "no steps follow the last Main step".into(),
                });
            }
            let moved = triggers[rng.random_range(0..triggers.len())];
            let mut rest: Vec<StepRef> = path.into_iter().filter(|s| *s != moved).collect();
            let last_main = week
                .last_main_position()
                .expect("validated week has a Main step");
            // positions before the last Main are unaffected by removing a later step
            let at = rng.random_range(0..=last_main);
            rest.insert(at, moved);
            Ok(WeekTrace {
                steps: rest,
                stopped: rng.random_bool(params.week_stop_probability),
            })
        }
        NavStyle::Middle => {
            let k = path.len();
            let lo = usize::from(require_activity);
            for pos in lo..k {
                if rng.random_bool(params.step_hazard) {
                    return Ok(WeekTrace {
                        steps: path[..pos].to_vec(),
                        stopped: true,
                    });
                }
            }
            if require_activity && k < 2 {
                return Err(SimError::Unconstructible {
                    style,
                    week: week.week_number(),
                    reason: "an active Middle week needs at least two steps".into(),
                });
            }
            let skip = rng.random_range(0..k);
            let steps = path
                .into_iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, s)| s)
                .collect();
            Ok(WeekTrace {
                steps,
                stopped: false,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TruthEntry {
    pub path: StylePath,
    pub active: bool,
    /// Weeks whose style was drawn by the generator (the rest are post-dropout).
    pub sampled_weeks: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GroundTruth {
    pub learners: BTreeMap<String, TruthEntry>,
}

impl GroundTruth {
    /// CSV: `learner_id,style_path,active`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("learner_id,style_path,active\n");
        for (id, e) in &self.learners {
            out.push_str(&format!("{id},{},{}\n", e.path, e.active));
        }
        out
    }

    /// Week-to-week transition counts over weeks where both styles were drawn.
    pub fn empirical_transitions(&self) -> [[u64; 3]; 3] {
        let mut counts = [[0u64; 3]; 3];
        for e in self.learners.values().filter(|e| e.active) {
            let styles = e.path.styles();
            for w in 1..e.sampled_weeks as usize {
                counts[styles[w - 1].ordinal()][styles[w].ordinal()] += 1;
            }
        }
        counts
    }
}

/// Largest absolute gap between the empirical and configured transition
/// probabilities, over rows that have at least one observed transition.
pub fn empirical_transition_check(truth: &GroundTruth, config: &SimConfig) -> f64 {
    let counts = truth.empirical_transitions();
    let mut worst: f64 = 0.0;
    for (r, row) in counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        if total == 0 {
            continue;
        }
        for (count, target) in row.iter().zip(config.transitions[r]) {
            worst = worst.max((*count as f64 / total as f64 - target).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulatedCohort {
    pub activity: Vec<VisitRecord>,
    pub comments: Vec<CommentRecord>,
    pub attempts: Vec<AttemptRecord>,
    pub enrolments: Vec<EnrolmentRecord>,
    pub ground_truth: GroundTruth,
}

#[derive(Debug, Default)]
struct LearnerOutput {
    id: String,
    truth: Option<TruthEntry>,
    activity: Vec<VisitRecord>,
    comments: Vec<CommentRecord>,
    attempts: Vec<AttemptRecord>,
    enrolment: Option<EnrolmentRecord>,
}

/// Exact per-style quotas for `n` learners (largest remainder), in S, G, M order.
fn apportion(mix: &[f64; 3], n: usize) -> [usize; 3] {
    let raw: Vec<f64> = mix.iter().map(|p| p * n as f64).collect();
    let mut out = [0usize; 3];
    for i in 0..3 {
        out[i] = raw[i].floor() as usize;
    }
    let mut left = n - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        (raw[b] - raw[b].floor())
            .total_cmp(&(raw[a] - raw[a].floor()))
            .then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if mix[i] > 0.0 {
            out[i] += 1;
            left -= 1;
        }
    }
    out
}

fn sample_style<R: Rng>(p: &[f64; 3], rng: &mut R) -> NavStyle {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return NavStyle::ALL[i];
        }
    }
    // rounding slack: fall back to the last style with positive weight
    let last = p.iter().rposition(|&x| x > 0.0).unwrap_or(2);
    NavStyle::ALL[last]
}

fn learner_rng(seed: u64, ordinal: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ordinal);
    rng
}

struct Emitter<'a> {
    config: &'a SimConfig,
    course: &'a CourseStructure,
    out: LearnerOutput,
    clock: Timestamp,
}

impl Emitter<'_> {
    fn visit<R: Rng>(
        &mut self,
        step: StepRef,
        params: &ArchetypeParams,
        complete: bool,
        rng: &mut R,
    ) {
        self.clock += Duration::minutes(rng.random_range(1..=20));
        let at = self.clock;
        let id = self.out.id.clone();
        let done = complete.then(|| at + Duration::minutes(rng.random_range(0..=5)));
        self.out.activity.push(VisitRecord {
            learner_id: id.clone(),
            step,
            first_visited_at: at,
            last_completed_at: done,
        });
        match self.course.kind_of(step) {
            Some(StepKind::Discussion) if rng.random_bool(params.comment_probability) => {
                self.out.comments.push(CommentRecord {
                    learner_id: id,
                    step,
                    posted_at: at + Duration::minutes(1),
                });
            }
            Some(StepKind::Assessment) if params.mean_attempts > 0.0 => {
                let n = Poisson::new(params.mean_attempts)
                    .expect("validated mean")
                    .sample(rng) as u32;
                let q = self.config.questions_per_assessment;
                for j in 0..n {
                    self.out.attempts.push(AttemptRecord {
                        learner_id: id.clone(),
                        step,
                        question_number: j % q + 1,
                        correct: rng.random_bool(params.correctness_probability),
                        submitted_at: at + Duration::seconds(30 * (j as i64 + 1)),
                    });
                }
            }
            _ => {}
        }
    }
}

fn week_start(start: Timestamp, week: u32) -> Timestamp {
    start + Duration::days(7 * (week as i64 - 1))
}

fn active_learner(
    ordinal: usize,
    first_style: NavStyle,
    config: &SimConfig,
    course: &CourseStructure,
    start: Timestamp,
) -> Result<LearnerOutput, SimError> {
    let mut rng = learner_rng(config.seed, ordinal as u64);
    let id = format!("L{:06}", ordinal + 1);
    let enrolled = start - Duration::minutes(rng.random_range(1..=7 * 24 * 60));
    let mut em = Emitter {
        config,
        course,
        out: LearnerOutput {
            id: id.clone(),
            enrolment: Some(EnrolmentRecord {
                learner_id: id,
                enrolled_at: enrolled,
                unenrolled_at: None,
            }),
            ..Default::default()
        },
        clock: start + Duration::minutes(rng.random_range(0..3 * 24 * 60)),
    };

    let mut styles = Vec::with_capacity(course.num_weeks());
    let mut style = first_style;
    let mut dropped = false;
    let mut sampled_weeks = 0;
    let mut first_visit = true;
    for week in course.weeks() {
        if dropped {
            styles.push(NavStyle::Middle);
            continue;
        }
        let w = week.week_number();
        let params = config.archetypes.get(style);
        let plan = construct_week_trace(style, week, params, w == 1, &mut rng)?;
        em.clock = em.clock.max(week_start(start, w));
        for step in plan.steps {
            // the very first visit is always completed so the learner counts as active
            let complete = first_visit || rng.random_bool(config.completion_probability);
            first_visit = false;
            em.visit(step, params, complete, &mut rng);
        }
        styles.push(style);
        sampled_weeks = w;
        if plan.stopped {
            dropped = true;
        } else {
            style = sample_style(&config.transitions[style.ordinal()], &mut rng);
        }
    }
    em.out.truth = Some(TruthEntry {
        path: StylePath::from_styles(&styles),
        active: true,
        sampled_weeks,
    });
    Ok(em.out)
}

fn decoy_learner(
    ordinal: usize,
    index: usize,
    config: &SimConfig,
    course: &CourseStructure,
    start: Timestamp,
) -> LearnerOutput {
    let mut rng = learner_rng(config.seed, ordinal as u64);
    let id = format!("D{:06}", index + 1);
    let first = &course.weeks()[0];
    let len = if first.len() >= 2 {
        rng.random_range(1..=first.len().min(4) - 1)
    } else {
        0
    };
    let mut em = Emitter {
        config,
        course,
        out: LearnerOutput {
            id: id.clone(),
            enrolment: Some(EnrolmentRecord {
                learner_id: id,
                enrolled_at: start - Duration::minutes(rng.random_range(1..=7 * 24 * 60)),
                unenrolled_at: None,
            }),
            ..Default::default()
        },
        clock: start + Duration::minutes(rng.random_range(0..3 * 24 * 60)),
    };
    let quiet = ArchetypeParams {
        comment_probability: 0.0,
        mean_attempts: 0.0,
        correctness_probability: 0.0,
        step_hazard: 0.0,
        week_stop_probability: 0.0,
    };
    for step in first.path().into_iter().take(len) {
        em.visit(step, &quiet, false, &mut rng);
    }
    em.out.truth = Some(TruthEntry {
        path: StylePath::from_styles(&vec![NavStyle::Middle; course.num_weeks()]),
        active: false,
        sampled_weeks: 0,
    });
    em.out
}

fn unenrolled_learner(
    ordinal: usize,
    index: usize,
    config: &SimConfig,
    start: Timestamp,
) -> LearnerOutput {
    let mut rng = learner_rng(config.seed, ordinal as u64);
    let id = format!("X{:06}", index + 1);
    let enrolled = start - Duration::minutes(rng.random_range(1..=7 * 24 * 60));
    LearnerOutput {
        id: id.clone(),
        enrolment: Some(EnrolmentRecord {
            learner_id: id,
            enrolled_at: enrolled,
            unenrolled_at: Some(enrolled + Duration::minutes(rng.random_range(1..=14 * 24 * 60))),
        }),
        ..Default::default()
    }
}

/// Generates a full cohort. Deterministic for a given config and course,
/// whatever the size of the rayon pool it runs in.
pub fn generate_cohort(
    course: &CourseStructure,
    config: &SimConfig,
) -> Result<SimulatedCohort, SimError> {
    config.validate(course)?;
    let start = config.start_time()?;
    let n = config.cohort_size;

    let quotas = apportion(&config.initial_mix, n);
    let mut first_styles: Vec<NavStyle> = NavStyle::ALL
        .iter()
        .zip(quotas)
        .flat_map(|(s, q)| std::iter::repeat_n(*s, q))
        .collect();
    first_styles.shuffle(&mut learner_rng(config.seed, u64::MAX));

    let decoys = config.inactive_decoys;
    let total = n + decoys + config.unenrolled;
    let outputs: Vec<LearnerOutput> = (0..total)
        .into_par_iter()
        .map(|i| {
            if i < n {
                active_learner(i, first_styles[i], config, course, start)
            } else if i < n + decoys {
                Ok(decoy_learner(i, i - n, config, course, start))
            } else {
                Ok(unenrolled_learner(i, i - n - decoys, config, start))
            }
        })
        .collect::<Result<_, _>>()?;

    let mut cohort = SimulatedCohort::default();
    for o in outputs {
        cohort.activity.extend(o.activity);
        cohort.comments.extend(o.comments);
        cohort.attempts.extend(o.attempts);
        cohort.enrolments.extend(o.enrolment);
        if let Some(t) = o.truth {
            cohort.ground_truth.learners.insert(o.id, t);
        }
    }
    Ok(cohort)
}
