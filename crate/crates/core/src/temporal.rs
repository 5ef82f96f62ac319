//! Cross-week analyses: style transitions, style-path census, where learners stop.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::classify::{NavStyle, StylePath, StyleTable};
use crate::course::{CourseError, CourseStructure, StepRef};
use crate::ingest::{LearnerTrace, VisitRecord};
use crate::metrics::proportion;

#[derive(Debug, Error)]
pub enum TemporalError {
    #[error("week {0} has no following week in the style table")]
    UnknownWeek(u32),
    #[error("learner {0} has an empty trace")]
    EmptyTrace(String),
    #[error("group {0} has no learners")]
    EmptyGroup(NavStyle),
    #[error(transparent)]
    Course(#[from] CourseError),
}

/// Style switches from `from_week` to the next week. Rows and columns are S, G, M.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionMatrix {
    pub from_week: u32,
    pub counts: [[u64; 3]; 3],
    pub probabilities: [[f64; 3]; 3],
    /// Rows with no learners; their probabilities are all zero.
    pub empty: [bool; 3],
}

impl TransitionMatrix {
    pub fn from_counts(from_week: u32, counts: [[u64; 3]; 3]) -> Self {
        let mut probabilities = [[0.0; 3]; 3];
        let mut empty = [false; 3];
        for (r, row) in counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            if total == 0 {
                empty[r] = true;
                continue;
            }
            for c in 0..3 {
                probabilities[r][c] = row[c] as f64 / total as f64;
            }
        }
        TransitionMatrix {
            from_week,
            counts,
            probabilities,
            empty,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn column_sums(&self) -> [u64; 3] {
        let mut out = [0; 3];
        for row in &self.counts {
            for c in 0..3 {
                out[c] += row[c];
            }
        }
        out
    }
}

pub fn transition_matrix(
    table: &StyleTable,
    from_week: u32,
) -> Result<TransitionMatrix, TemporalError> {
    if from_week == 0 || from_week as usize >= table.weeks() {
        return Err(TemporalError::UnknownWeek(from_week));
    }
    let w = from_week as usize - 1;
    let mut counts = [[0u64; 3]; 3];
    for (_, row) in table.rows() {
        counts[row[w].ordinal()][row[w + 1].ordinal()] += 1;
    }
    Ok(TransitionMatrix::from_counts(from_week, counts))
}

/// Matrices for every consecutive week pair.
pub fn all_transitions(table: &StyleTable) -> Vec<TransitionMatrix> {
    (1..table.weeks() as u32)
        .map(|w| transition_matrix(table, w).expect("week in range"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathCount {
    pub path: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathCensus {
    pub counts: BTreeMap<String, usize>,
    /// Learners whose path uses a single style throughout.
    pub kept_count: usize,
    pub changed_count: usize,
}

impl PathCensus {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// Most frequent paths, ties broken alphabetically.
    pub fn top(&self, k: usize) -> Vec<PathCount> {
        let mut v: Vec<PathCount> = self
            .counts
            .iter()
            .map(|(p, &c)| PathCount {
                path: p.clone(),
                count: c,
            })
            .collect();
        v.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.path.cmp(&b.path)));
        v.truncate(k);
        v
    }
}

pub fn path_census<'a, I>(paths: I) -> PathCensus
where
    I: IntoIterator<Item = &'a StylePath>,
{
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut kept = 0;
    let mut changed = 0;
    for p in paths {
        *counts.entry(p.as_str().to_string()).or_default() += 1;
        if p.is_constant() {
            kept += 1;
        } else {
            changed += 1;
        }
    }
    PathCensus {
        counts,
        kept_count: kept,
        changed_count: changed,
    }
}

pub fn table_census(table: &StyleTable) -> PathCensus {
    let paths: Vec<StylePath> = table
        .rows()
        .map(|(_, r)| StylePath::from_styles(r))
        .collect();
    path_census(&paths)
}

/// The learner's last first-visited step (maximum of (first_visited_at, week, index)).
pub fn dropout_step(trace: &LearnerTrace) -> Result<StepRef, TemporalError> {
    trace
        .visits
        .iter()
        .max_by_key(|v: &&VisitRecord| (v.first_visited_at, v.step.week, v.step.index))
        .map(|v| v.step)
        .ok_or_else(|| TemporalError::EmptyTrace(trace.learner_id.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropoutBin {
    pub global_step_index: usize,
    pub step: StepRef,
    pub count: usize,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupDropout {
    pub learners: usize,
    /// Only steps where someone stopped, ascending by global index.
    pub bins: Vec<DropoutBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropoutDistribution {
    /// Week whose label defines the groups.
    pub group_week: u32,
    pub groups: BTreeMap<NavStyle, GroupDropout>,
}

impl DropoutDistribution {
    /// CSV: `style,global_step_index,week,step_index,count,proportion`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("style,global_step_index,week,step_index,count,proportion\n");
        for (style, g) in &self.groups {
            for b in &g.bins {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    style.code(),
                    b.global_step_index,
                    b.step.week,
                    b.step.index,
                    b.count,
                    b.proportion
                ));
            }
        }
        out
    }
}

/// Dropout steps grouped by each learner's style in `group_week`.
/// Learners missing from `table` or with empty traces are skipped.
pub fn dropout_distribution(
    traces: &BTreeMap<String, LearnerTrace>,
    course: &CourseStructure,
    table: &StyleTable,
    group_week: u32,
) -> Result<DropoutDistribution, TemporalError> {
    course.week(group_week)?;
    let mut tallies: BTreeMap<NavStyle, BTreeMap<usize, usize>> = BTreeMap::new();
    for (id, t) in traces {
        let Some(style) = table.style(id, group_week) else {
            continue;
        };
        let Ok(step) = dropout_step(t) else {
            continue;
        };
        let idx = course.global_step_index(step)?;
        *tallies.entry(style).or_default().entry(idx).or_default() += 1;
    }
    let groups = tallies
        .into_iter()
        .map(|(style, bins)| {
            let learners: usize = bins.values().sum();
            let bins = bins
                .into_iter()
                .map(|(idx, count)| DropoutBin {
                    global_step_index: idx,
                    step: course.step_at_global_index(idx).expect("index from course"),
                    count,
                    proportion: count as f64 / learners as f64,
                })
                .collect();
            (style, GroupDropout { learners, bins })
        })
        .collect();
    Ok(DropoutDistribution { group_week, groups })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionStats {
    pub learners: usize,
    /// Stopped at the course's final step.
    pub completed: usize,
    /// Stopped somewhere after the first week.
    pub continued_past_week1: usize,
    pub completed_proportion: Option<f64>,
    pub continued_proportion: Option<f64>,
}

pub fn completion_summary(
    traces: &BTreeMap<String, LearnerTrace>,
    course: &CourseStructure,
    table: &StyleTable,
    group_week: u32,
) -> BTreeMap<NavStyle, CompletionStats> {
    let last = course.final_step();
    let mut tallies = [(0usize, 0usize, 0usize); 3];
    for (id, t) in traces {
        let (Some(style), Ok(step)) = (table.style(id, group_week), dropout_step(t)) else {
            continue;
        };
        let slot = &mut tallies[style.ordinal()];
        slot.0 += 1;
        slot.1 += usize::from(step == last);
        slot.2 += usize::from(step.week > 1);
    }
    NavStyle::ALL
        .iter()
        .map(|&s| {
            let (learners, completed, continued) = tallies[s.ordinal()];
            (
                s,
                CompletionStats {
                    learners,
                    completed,
                    continued_past_week1: continued,
                    completed_proportion: proportion(completed, learners),
                    continued_proportion: proportion(continued, learners),
                },
            )
        })
        .collect()
}

/// Share of a group's dropout mass that sits on week-final steps.
pub fn periodicity_for(
    style: NavStyle,
    group: &GroupDropout,
    course: &CourseStructure,
) -> Result<f64, TemporalError> {
    let finals = course.week_final_indices();
    let on_boundary: usize = group
        .bins
        .iter()
        .filter(|b| finals.contains(&b.global_step_index))
        .map(|b| b.count)
        .sum();
    proportion(on_boundary, group.learners).ok_or(TemporalError::EmptyGroup(style))
}

/// Periodicity index for every non-empty group.
pub fn periodicity_index(
    dist: &DropoutDistribution,
    course: &CourseStructure,
) -> BTreeMap<NavStyle, f64> {
    dist.groups
        .iter()
        .filter_map(|(s, g)| periodicity_for(*s, g, course).ok().map(|p| (*s, p)))
        .collect()
}
