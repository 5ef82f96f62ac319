//! Weekly navigation-style labels and the Week-level descriptive analyses built on them.
//!
//! A learner's week is judged only by the order in which they first visited
//! that week's steps:
//!
//! * **Sequential**: every step of the week, in exact path order.
//! * **Global**: some Main step was first visited after some step that sits
//!   past the week's last Main step (a trigger step).
//! * **Middle**: anything else, including no activity at all.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::course::{CourseError, CourseStructure, StepKind, StepRef, WeekStructure};
use crate::ingest::LearnerTrace;
use crate::metrics::proportion;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Course(#[from] CourseError),
    #[error("{0} is not a special step kind (expected Discussion, Experiment or Assessment)")]
    InvalidKind(StepKind),
    #[error("invalid style path `{0}`")]
    InvalidPath(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NavStyle {
    #[serde(rename = "S")]
    Sequential,
    #[serde(rename = "G")]
    Global,
    #[serde(rename = "M")]
    Middle,
}

impl NavStyle {
    pub const ALL: [NavStyle; 3] = [NavStyle::Sequential, NavStyle::Global, NavStyle::Middle];

    pub fn code(self) -> char {
        match self {
            NavStyle::Sequential => 'S',
            NavStyle::Global => 'G',
            NavStyle::Middle => 'M',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c {
            'S' => Some(NavStyle::Sequential),
            'G' => Some(NavStyle::Global),
            'M' => Some(NavStyle::Middle),
            _ => None,
        }
    }

    /// Row/column position in S, G, M order.
    pub fn ordinal(self) -> usize {
        match self {
            NavStyle::Sequential => 0,
            NavStyle::Global => 1,
            NavStyle::Middle => 2,
        }
    }
}

impl fmt::Display for NavStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Concatenated weekly codes, e.g. `SGMMMM`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct StylePath(String);

impl StylePath {
    pub fn from_styles(styles: &[NavStyle]) -> Self {
        StylePath(styles.iter().map(|s| s.code()).collect())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn styles(&self) -> Vec<NavStyle> {
        self.0.chars().filter_map(NavStyle::from_code).collect()
    }

    pub fn week(&self, week: u32) -> Option<NavStyle> {
        self.0
            .as_bytes()
            .get((week as usize).checked_sub(1)?)
            .and_then(|&b| NavStyle::from_code(b as char))
    }

    /// True when the learner never changed style.
    pub fn is_constant(&self) -> bool {
        let mut chars = self.0.chars();
        match chars.next() {
            Some(first) => chars.all(|c| c == first),
            None => true,
        }
    }
}

impl FromStr for StylePath {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() || !s.chars().all(|c| NavStyle::from_code(c).is_some()) {
            return Err(ClassifyError::InvalidPath(s.to_string()));
        }
        Ok(StylePath(s.to_string()))
    }
}

impl fmt::Display for StylePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The learner's first-visit order restricted to one week's steps.
pub fn week_view(trace: &LearnerTrace, week: &WeekStructure) -> Vec<StepRef> {
    trace
        .visits
        .iter()
        .map(|v| v.step)
        .filter(|s| week.position(*s).is_some())
        .collect()
}

/// Labels a week-restricted first-visit sequence.
pub fn classify_sequence(first_visits: &[StepRef], week: &WeekStructure) -> NavStyle {
    if first_visits.len() == week.len()
        && first_visits
            .iter()
            .zip(week.steps())
            .all(|(a, (b, _))| a == b)
    {
        return NavStyle::Sequential;
    }
    let mut trigger_seen = false;
    for &s in first_visits {
        if week.is_trigger(s) {
            trigger_seen = true;
        } else if trigger_seen && week.kind_of(s) == Some(StepKind::Main) {
            return NavStyle::Global;
        }
    }
    NavStyle::Middle
}

pub fn classify_week(
    trace: &LearnerTrace,
    course: &CourseStructure,
    week: u32,
) -> Result<NavStyle, ClassifyError> {
    let w = course.week(week)?;
    Ok(classify_sequence(&week_view(trace, w), w))
}

pub fn style_path(trace: &LearnerTrace, course: &CourseStructure) -> StylePath {
    let styles: Vec<NavStyle> = course
        .weeks()
        .iter()
        .map(|w| classify_sequence(&week_view(trace, w), w))
        .collect();
    StylePath::from_styles(&styles)
}

pub fn start_step(
    trace: &LearnerTrace,
    course: &CourseStructure,
    week: u32,
) -> Result<Option<StepRef>, ClassifyError> {
    let w = course.week(week)?;
    Ok(week_view(trace, w).first().copied())
}

pub fn last_step(
    trace: &LearnerTrace,
    course: &CourseStructure,
    week: u32,
) -> Result<Option<StepRef>, ClassifyError> {
    let w = course.week(week)?;
    Ok(week_view(trace, w).last().copied())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KindShare {
    pub count: usize,
    pub proportion: f64,
}

fn kind_distribution<'a, I>(
    traces: I,
    course: &CourseStructure,
    week: u32,
    pick_last: bool,
) -> Result<BTreeMap<StepKind, KindShare>, ClassifyError>
where
    I: IntoIterator<Item = &'a LearnerTrace>,
{
    let w = course.week(week)?;
    let mut counts: BTreeMap<StepKind, usize> = BTreeMap::new();
    let mut total = 0;
    for t in traces {
        let f = week_view(t, w);
        let pick = if pick_last { f.last() } else { f.first() };
        if let Some(s) = pick {
            *counts
                .entry(w.kind_of(*s).expect("week view holds week steps"))
                .or_default() += 1;
            total += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|(k, count)| {
            (
                k,
                KindShare {
                    count,
                    proportion: proportion(count, total).unwrap_or(0.0),
                },
            )
        })
        .collect())
}

/// Start-step kinds over learners with any activity in `week`.
pub fn start_distribution<'a, I>(
    traces: I,
    course: &CourseStructure,
    week: u32,
) -> Result<BTreeMap<StepKind, KindShare>, ClassifyError>
where
    I: IntoIterator<Item = &'a LearnerTrace>,
{
    kind_distribution(traces, course, week, false)
}

/// Last-step kinds over learners with any activity in `week`.
pub fn last_step_distribution<'a, I>(
    traces: I,
    course: &CourseStructure,
    week: u32,
) -> Result<BTreeMap<StepKind, KindShare>, ClassifyError>
where
    I: IntoIterator<Item = &'a LearnerTrace>,
{
    kind_distribution(traces, course, week, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReviewShare {
    pub learners: usize,
    pub ended_at_review: usize,
    pub proportion: Option<f64>,
}

/// Per style, the share of learners whose last step in `week` was a Review step.
pub fn last_step_is_review(
    traces: &BTreeMap<String, LearnerTrace>,
    course: &CourseStructure,
    week: u32,
    labels: &StyleTable,
) -> Result<BTreeMap<NavStyle, ReviewShare>, ClassifyError> {
    let w = course.week(week)?;
    let mut tallies = [(0usize, 0usize); 3];
    for (id, t) in traces {
        let Some(style) = labels.style(id, week) else {
            continue;
        };
        let slot = &mut tallies[style.ordinal()];
        slot.0 += 1;
        if week_view(t, w)
            .last()
            .is_some_and(|s| w.kind_of(*s) == Some(StepKind::Review))
        {
            slot.1 += 1;
        }
    }
    Ok(NavStyle::ALL
        .iter()
        .map(|&s| {
            let (learners, ended_at_review) = tallies[s.ordinal()];
            (
                s,
                ReviewShare {
                    learners,
                    ended_at_review,
                    proportion: proportion(ended_at_review, learners),
                },
            )
        })
        .collect())
}

pub const SPECIAL_KINDS: [StepKind; 3] = [
    StepKind::Discussion,
    StepKind::Experiment,
    StepKind::Assessment,
];

/// Main steps first-visited before and after the learner's first visit to a `kind` step.
pub fn main_before_after(
    trace: &LearnerTrace,
    course: &CourseStructure,
    week: u32,
    kind: StepKind,
) -> Result<Option<(usize, usize)>, ClassifyError> {
    if !SPECIAL_KINDS.contains(&kind) {
        return Err(ClassifyError::InvalidKind(kind));
    }
    let w = course.week(week)?;
    let f = week_view(trace, w);
    let Some(pivot) = f.iter().position(|s| w.kind_of(*s) == Some(kind)) else {
        return Ok(None);
    };
    let is_main = |s: &&StepRef| w.kind_of(**s) == Some(StepKind::Main);
    let before = f[..pivot].iter().filter(is_main).count();
    let after = f[pivot + 1..].iter().filter(is_main).count();
    Ok(Some((before, after)))
}

/// Number of distinct Main steps of `week` the learner visited.
pub fn main_steps_visited(
    trace: &LearnerTrace,
    course: &CourseStructure,
    week: u32,
) -> Result<usize, ClassifyError> {
    let w = course.week(week)?;
    Ok(week_view(trace, w)
        .iter()
        .filter(|s| w.kind_of(**s) == Some(StepKind::Main))
        .count())
}

/// Did the learner first-visit some Main step after first visiting a `kind` step?
pub fn main_after_kind(
    trace: &LearnerTrace,
    course: &CourseStructure,
    week: u32,
    kind: StepKind,
) -> Result<bool, ClassifyError> {
    let w = course.week(week)?;
    let f = week_view(trace, w);
    Ok(match f.iter().position(|s| w.kind_of(*s) == Some(kind)) {
        Some(p) => f[p + 1..]
            .iter()
            .any(|s| w.kind_of(*s) == Some(StepKind::Main)),
        None => false,
    })
}

/// Learner × week label table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StyleTable {
    weeks: usize,
    rows: BTreeMap<String, Vec<NavStyle>>,
}

impl StyleTable {
    pub fn new(weeks: usize) -> Self {
        StyleTable {
            weeks,
            rows: BTreeMap::new(),
        }
    }

    /// Inserts a learner's weekly labels; panics if the row length is not `weeks`.
    pub fn insert(&mut self, learner_id: impl Into<String>, styles: Vec<NavStyle>) {
        assert_eq!(
            styles.len(),
            self.weeks,
            "style row length must equal week count"
        );
        self.rows.insert(learner_id.into(), styles);
    }

    pub fn weeks(&self) -> usize {
        self.weeks
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&String, &Vec<NavStyle>)> {
        self.rows.iter()
    }

    pub fn style(&self, learner_id: &str, week: u32) -> Option<NavStyle> {
        let row = self.rows.get(learner_id)?;
        row.get((week as usize).checked_sub(1)?).copied()
    }

    pub fn path(&self, learner_id: &str) -> Option<StylePath> {
        self.rows.get(learner_id).map(|r| StylePath::from_styles(r))
    }

    /// Per week, counts in S, G, M order.
    pub fn weekly_counts(&self) -> Vec<[usize; 3]> {
        let mut out = vec![[0usize; 3]; self.weeks];
        for row in self.rows.values() {
            for (w, s) in row.iter().enumerate() {
                out[w][s.ordinal()] += 1;
            }
        }
        out
    }

    pub fn labels_for_week(&self, week: u32) -> BTreeMap<String, NavStyle> {
        self.rows
            .iter()
            .filter_map(|(id, r)| Some((id.clone(), *r.get((week as usize).checked_sub(1)?)?)))
            .collect()
    }

    /// Labels CSV: `learner_id,week_1,...,week_W,style_path`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("learner_id");
        for w in 1..=self.weeks {
            out.push_str(&format!(",week_{w}"));
        }
        out.push_str(",style_path\n");
        for (id, row) in &self.rows {
            out.push_str(id);
            for s in row {
                out.push(',');
                out.push(s.code());
            }
            out.push(',');
            out.push_str(StylePath::from_styles(row).as_str());
            out.push('\n');
        }
        out
    }
}

/// Classifies every learner in every week. Learners are processed in parallel;
/// the result does not depend on the thread count.
pub fn cohort_styles(
    traces: &BTreeMap<String, LearnerTrace>,
    course: &CourseStructure,
) -> StyleTable {
    let rows: Vec<(String, Vec<NavStyle>)> = traces
        .par_iter()
        .map(|(id, t)| {
            let styles = course
                .weeks()
                .iter()
                .map(|w| classify_sequence(&week_view(t, w), w))
                .collect();
            (id.clone(), styles)
        })
        .collect();
    let mut table = StyleTable::new(course.num_weeks());
    for (id, styles) in rows {
        table.insert(id, styles);
    }
    table
}
