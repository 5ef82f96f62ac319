//! Course structure: weeks of typed steps and the linear learning path through them.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CourseError {
    #[error("malformed course document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid course: week {week}{}: {reason}", step.map(|s| format!(" step {s}")).unwrap_or_default())]
    Validation {
        week: u32,
        step: Option<StepRef>,
        reason: String,
    },
    #[error("unknown week {0}")]
    UnknownWeek(u32),
    #[error("unknown step {0}")]
    UnknownStep(StepRef),
    #[error("week {0} has no Main steps")]
    NoMainSteps(u32),
}

/// A step address, rendered `week.index` with both parts 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StepRef {
    pub week: u32,
    pub index: u32,
}

impl StepRef {
    pub const fn new(week: u32, index: u32) -> Self {
        StepRef { week, index }
    }
}

impl fmt::Display for StepRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.week, self.index)
    }
}

impl FromStr for StepRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (w, i) = s
            .split_once('.')
            .ok_or_else(|| format!("step reference `{s}` is not of the form week.index"))?;
        let week: u32 = w.parse().map_err(|_| format!("bad week in `{s}`"))?;
        let index: u32 = i.parse().map_err(|_| format!("bad step index in `{s}`"))?;
        if week == 0 || index == 0 {
            return Err(format!("step reference `{s}` must be 1-based"));
        }
        Ok(StepRef { week, index })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StepKind {
    Introduction,
    Main,
    Discussion,
    Experiment,
    Assessment,
    Review,
    FurtherReading,
    Certificates,
}

impl StepKind {
    pub const ALL: [StepKind; 8] = [
        StepKind::Introduction,
        StepKind::Main,
        StepKind::Discussion,
        StepKind::Experiment,
        StepKind::Assessment,
        StepKind::Review,
        StepKind::FurtherReading,
        StepKind::Certificates,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StepKind::Introduction => "Introduction",
            StepKind::Main => "Main",
            StepKind::Discussion => "Discussion",
            StepKind::Experiment => "Experiment",
            StepKind::Assessment => "Assessment",
            StepKind::Review => "Review",
            StepKind::FurtherReading => "FurtherReading",
            StepKind::Certificates => "Certificates",
        }
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One week of the course. Step order is the week's linear path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeekStructure {
    week_number: u32,
    steps: Vec<(StepRef, StepKind)>,
}

impl WeekStructure {
    /// Builds a week from kinds in path order; indices are assigned 1..k.
    pub fn from_kinds(week_number: u32, kinds: &[StepKind]) -> Result<Self, CourseError> {
        let steps = kinds
            .iter()
            .enumerate()
            .map(|(i, &k)| (StepRef::new(week_number, i as u32 + 1), k))
            .collect();
        let week = WeekStructure { week_number, steps };
        week.validate()?;
        Ok(week)
    }

    fn validate(&self) -> Result<(), CourseError> {
        let w = self.week_number;
        if self.steps.is_empty() {
            return Err(CourseError::Validation {
                week: w,
                step: None,
                reason: "week has no steps".into(),
            });
        }
        let mut seen = HashSet::new();
        for (pos, (step, _)) in self.steps.iter().enumerate() {
            if step.week != w {
                return Err(CourseError::Validation {
                    week: w,
                    step: Some(*step),
                    reason: format!(
                        "step belongs to week {} but is listed under week {w}",
                        step.week
                    ),
                });
            }
            if !seen.insert(step.index) {
                return Err(CourseError::Validation {
                    week: w,
                    step: Some(*step),
                    reason: "duplicate step index".into(),
                });
            }
            if step.index as usize != pos + 1 {
                return Err(CourseError::Validation {
                    week: w,
                    step: Some(*step),
                    reason: format!(
                        "expected step index {} at path position {}",
                        pos + 1,
                        pos + 1
                    ),
                });
            }
        }
        if !self.steps.iter().any(|(_, k)| *k == StepKind::Main) {
            return Err(CourseError::Validation {
                week: w,
                step: None,
                reason: "week has no Main steps".into(),
            });
        }
        Ok(())
    }

    pub fn week_number(&self) -> u32 {
        self.week_number
    }

    pub fn steps(&self) -> &[(StepRef, StepKind)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn path(&self) -> Vec<StepRef> {
        self.steps.iter().map(|(s, _)| *s).collect()
    }

    pub fn kind_of(&self, step: StepRef) -> Option<StepKind> {
        self.position(step).map(|p| self.steps[p].1)
    }

    /// 0-based path position of `step` within this week.
    pub fn position(&self, step: StepRef) -> Option<usize> {
        if step.week != self.week_number || step.index == 0 {
            return None;
        }
        let p = step.index as usize - 1;
        (p < self.steps.len()).then_some(p)
    }

    pub fn main_steps(&self) -> Vec<StepRef> {
        self.steps_of_kind(StepKind::Main)
    }

    pub fn steps_of_kind(&self, kind: StepKind) -> Vec<StepRef> {
        self.steps
            .iter()
            .filter(|(_, k)| *k == kind)
            .map(|(s, _)| *s)
            .collect()
    }

    /// Path position of the last Main step.
    pub fn last_main_position(&self) -> Option<usize> {
        self.steps.iter().rposition(|(_, k)| *k == StepKind::Main)
    }

    /// Steps strictly after the last Main step on the path.
    pub fn trigger_steps(&self) -> Vec<StepRef> {
        match self.last_main_position() {
            Some(p) => self.steps[p + 1..].iter().map(|(s, _)| *s).collect(),
            None => Vec::new(),
        }
    }

    pub fn is_trigger(&self, step: StepRef) -> bool {
        match (self.position(step), self.last_main_position()) {
            (Some(p), Some(lm)) => p > lm,
            _ => false,
        }
    }

    pub fn first_step(&self) -> StepRef {
        self.steps[0].0
    }

    pub fn final_step(&self) -> StepRef {
        self.steps[self.steps.len() - 1].0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CourseStructure {
    weeks: Vec<WeekStructure>,
    // Global index of each week's first step, 0-based.
    offsets: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CourseDoc {
    weeks: Vec<WeekDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeekDoc {
    week: u32,
    steps: Vec<StepDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepDoc {
    index: u32,
    kind: StepKind,
}

/// Parses and validates a JSON course document.
pub fn load_course(document: &str) -> Result<CourseStructure, CourseError> {
    let doc: CourseDoc = serde_json::from_str(document)?;
    let weeks = doc
        .weeks
        .into_iter()
        .map(|w| WeekStructure {
            week_number: w.week,
            steps: w
                .steps
                .into_iter()
                .map(|s| (StepRef::new(w.week, s.index), s.kind))
                .collect(),
        })
        .collect();
    CourseStructure::new(weeks)
}

const REFERENCE_COURSE: &str = include_str!("../data/six_week_course.json");

/// The bundled six-week, 82-step reference course.
pub fn reference_course() -> CourseStructure {
    load_course(REFERENCE_COURSE).expect("bundled course document is valid")
}

pub fn reference_course_document() -> &'static str {
    REFERENCE_COURSE
}

impl CourseStructure {
    pub fn new(weeks: Vec<WeekStructure>) -> Result<Self, CourseError> {
        if weeks.is_empty() {
            return Err(CourseError::Validation {
                week: 0,
                step: None,
                reason: "course has no weeks".into(),
            });
        }
        for (i, w) in weeks.iter().enumerate() {
            if w.week_number as usize != i + 1 {
                return Err(CourseError::Validation {
                    week: w.week_number,
                    step: None,
                    reason: format!("expected week number {} at position {}", i + 1, i + 1),
                });
            }
            w.validate()?;
        }
        let mut offsets = Vec::with_capacity(weeks.len());
        let mut acc = 0;
        for w in &weeks {
            offsets.push(acc);
            acc += w.len();
        }
        Ok(CourseStructure { weeks, offsets })
    }

    pub fn to_json(&self) -> String {
        let doc = CourseDoc {
            weeks: self
                .weeks
                .iter()
                .map(|w| WeekDoc {
                    week: w.week_number,
                    steps: w
                        .steps
                        .iter()
                        .map(|(s, k)| StepDoc {
                            index: s.index,
                            kind: *k,
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("course serializes")
    }

    pub fn weeks(&self) -> &[WeekStructure] {
        &self.weeks
    }

    pub fn num_weeks(&self) -> usize {
        self.weeks.len()
    }

    pub fn total_steps(&self) -> usize {
        self.weeks.iter().map(WeekStructure::len).sum()
    }

    pub fn week(&self, week: u32) -> Result<&WeekStructure, CourseError> {
        if week == 0 {
            return Err(CourseError::UnknownWeek(week));
        }
        self.weeks
            .get(week as usize - 1)
            .ok_or(CourseError::UnknownWeek(week))
    }

    pub fn linear_path(&self, week: u32) -> Result<Vec<StepRef>, CourseError> {
        Ok(self.week(week)?.path())
    }

    pub fn global_trigger_steps(&self, week: u32) -> Result<BTreeSet<StepRef>, CourseError> {
        let w = self.week(week)?;
        if w.last_main_position().is_none() {
            return Err(CourseError::NoMainSteps(week));
        }
        Ok(w.trigger_steps().into_iter().collect())
    }

    pub fn contains(&self, step: StepRef) -> bool {
        self.kind_of(step).is_some()
    }

    pub fn kind_of(&self, step: StepRef) -> Option<StepKind> {
        self.week(step.week).ok()?.kind_of(step)
    }

    /// 1-based position in the concatenation of all weekly paths.
    pub fn global_step_index(&self, step: StepRef) -> Result<usize, CourseError> {
        let w = self
            .week(step.week)
            .map_err(|_| CourseError::UnknownStep(step))?;
        let p = w.position(step).ok_or(CourseError::UnknownStep(step))?;
        Ok(self.offsets[step.week as usize - 1] + p + 1)
    }

    pub fn step_at_global_index(&self, index: usize) -> Option<StepRef> {
        if index == 0 {
            return None;
        }
        let zero = index - 1;
        let wi = self
            .offsets
            .partition_point(|&o| o <= zero)
            .checked_sub(1)?;
        let w = &self.weeks[wi];
        w.steps.get(zero - self.offsets[wi]).map(|(s, _)| *s)
    }

    pub fn final_step(&self) -> StepRef {
        self.weeks[self.weeks.len() - 1].final_step()
    }

    /// Global indices of each week's last step.
    pub fn week_final_indices(&self) -> Vec<usize> {
        self.weeks
            .iter()
            .enumerate()
            .map(|(i, w)| self.offsets[i] + w.len())
            .collect()
    }
}
