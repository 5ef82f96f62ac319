//! Descriptive statistics and the rank-based test battery used for group comparisons.
//!
//! - Lilliefors (KS with estimated mean/sd) normality screen, Monte-Carlo p-value
//! - Kruskal-Wallis H with tie correction, chi-square p-value
//! - Mann-Whitney U with tie-corrected normal approximation, plus an exact
//!   enumeration for small tie-free samples

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::classify::NavStyle;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("sample too small: need at least {needed}, got {got}")]
    TooSmall { needed: usize, got: usize },
    #[error("sample has zero standard deviation")]
    DegenerateSample,
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("exact enumeration supports at most {max} observations, got {got}")]
    TooLarge { max: usize, got: usize },
    #[error("exact enumeration requires tie-free data")]
    TiesPresent,
    #[error("sample contains a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); absent for n = 1.
    pub sd: Option<f64>,
    pub median: f64,
}

fn check_finite(values: &[f64]) -> Result<(), StatsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_sd(values: &[f64], mean: f64) -> f64 {
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

pub fn describe(values: &[f64]) -> Result<Summary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(values)?;
    let n = values.len();
    let m = mean(values);
    let s = sorted(values);
    let median = if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    };
    Ok(Summary {
        n,
        mean: m,
        sd: (n > 1).then(|| sample_sd(values, m)),
        median,
    })
}

/// Mid-ranks (1-based) of `values` in input order, and the tie term Σ(t³ − t).
pub fn mid_ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j share ranks i+1..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    (ranks, tie_term)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TestKind {
    #[serde(rename = "lilliefors")]
    Lilliefors,
    #[serde(rename = "kruskal_wallis")]
    KruskalWallis,
    #[serde(rename = "mann_whitney")]
    MannWhitney,
    #[serde(rename = "mann_whitney_exact")]
    MannWhitneyExact,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub test: TestKind,
    /// D for Lilliefors, H for Kruskal-Wallis, U of the first sample for Mann-Whitney.
    pub statistic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<usize>,
    /// Sample sizes, one per group.
    pub n: Vec<usize>,
    pub p_value: f64,
    pub tie_correction_applied: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub continuity_correction: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Two-sided normal tail probability for a z score.
pub fn two_sided_normal_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// KS distance between the ECDF of `values` (standardized by their own mean and
/// sample sd) and the standard normal CDF. `values` must be sorted ascending.
fn lilliefors_distance_sorted(values: &[f64], normal: &Normal) -> Result<f64, StatsError> {
    let n = values.len();
    let m = mean(values);
    let sd = sample_sd(values, m);
    if sd.is_nan() || sd <= 0.0 {
        return Err(StatsError::DegenerateSample);
    }
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let cdf = normal.cdf((x - m) / sd);
        let upper = (i + 1) as f64 / nf - cdf;
        let lower = cdf - i as f64 / nf;
        d = d.max(upper).max(lower);
    }
    Ok(d)
}

/// The Lilliefors D statistic alone.
pub fn lilliefors_statistic(values: &[f64]) -> Result<f64, StatsError> {
    check_finite(values)?;
    if values.len() < 2 {
        return Err(StatsError::TooSmall {
            needed: 2,
            got: values.len(),
        });
    }
    lilliefors_distance_sorted(&sorted(values), &std_normal())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarlo {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        MonteCarlo {
            replicates: 10_000,
            seed: 0,
        }
    }
}

/// Replicate `r` draws from its own generator seeded with `seed + r`, so the
/// p-value is identical for any thread count.
pub fn ks_normality(values: &[f64], mc: MonteCarlo) -> Result<TestResult, StatsError> {
    const MIN_N: usize = 4;
    check_finite(values)?;
    let n = values.len();
    if n < MIN_N {
        return Err(StatsError::TooSmall {
            needed: MIN_N,
            got: n,
        });
    }
    let normal = std_normal();
    let observed = lilliefors_distance_sorted(&sorted(values), &normal)?;
    let exceed: usize = (0..mc.replicates)
        .into_par_iter()
        .map_init(
            || vec![0.0f64; n],
            |buf, r| {
                let mut rng = ChaCha8Rng::seed_from_u64(mc.seed.wrapping_add(r as u64));
                for slot in buf.iter_mut() {
                    *slot = StandardNormal.sample(&mut rng);
                }
                buf.sort_unstable_by(f64::total_cmp);
                let d = lilliefors_distance_sorted(buf, &normal).unwrap_or(0.0);
                usize::from(d >= observed)
            },
        )
        .sum();
    Ok(TestResult {
        test: TestKind::Lilliefors,
        statistic: observed,
        z: None,
        df: None,
        n: vec![n],
        p_value: (exceed + 1) as f64 / (mc.replicates + 1) as f64,
        tie_correction_applied: false,
        continuity_correction: None,
        replicates: Some(mc.replicates),
        seed: Some(mc.seed),
    })
}

pub fn kruskal_wallis(groups: &[&[f64]]) -> Result<TestResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    if let Some(i) = groups.iter().position(|g| g.is_empty()) {
        return Err(StatsError::EmptyGroup(i));
    }
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    check_finite(&pooled)?;
    let big_n = pooled.len();
    if big_n < 3 {
        return Err(StatsError::TooSmall {
            needed: 3,
            got: big_n,
        });
    }
    let (ranks, tie_term) = mid_ranks(&pooled);
    let nf = big_n as f64;
    let mut offset = 0;
    let mut sum_sq = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum_sq += r * r / g.len() as f64;
        offset += g.len();
    }
    let df = groups.len() - 1;
    let correction = 1.0 - tie_term / (nf * nf * nf - nf);
    let (h, p) = if correction <= 0.0 {
        (0.0, 1.0)
    } else {
        let h = (12.0 / (nf * (nf + 1.0)) * sum_sq - 3.0 * (nf + 1.0)) / correction;
        let h = h.max(0.0);
        let chi = ChiSquared::new(df as f64).expect("df >= 1");
        (h, chi.sf(h).clamp(0.0, 1.0))
    };
    Ok(TestResult {
        test: TestKind::KruskalWallis,
        statistic: h,
        z: None,
        df: Some(df),
        n: groups.iter().map(|g| g.len()).collect(),
        p_value: p,
        tie_correction_applied: tie_term > 0.0,
        continuity_correction: None,
        replicates: None,
        seed: None,
    })
}

/// U statistic of `a` (rank sum of `a` minus n1(n1+1)/2) and the pooled tie term.
fn u_statistic(a: &[f64], b: &[f64]) -> (f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, tie_term) = mid_ranks(&pooled);
    let n1 = a.len() as f64;
    let ra: f64 = ranks[..a.len()].iter().sum();
    (ra - n1 * (n1 + 1.0) / 2.0, tie_term)
}

/// Two-sided Mann-Whitney U test, normal approximation with tie-corrected variance.
/// The reported statistic is the U of `a`.
pub fn mann_whitney(
    a: &[f64],
    b: &[f64],
    continuity_correction: bool,
) -> Result<TestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(a)?;
    check_finite(b)?;
    let (u, tie_term) = u_statistic(a, b);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let nf = n1 + n2;
    let mean_u = n1 * n2 / 2.0;
    let var = n1 * n2 / 12.0 * ((nf * nf * nf - nf) - tie_term) / (nf * (nf - 1.0));
    let (z, p) = if var > 0.0 {
        let mut diff = u - mean_u;
        if continuity_correction {
            diff = diff.signum() * (diff.abs() - 0.5).max(0.0);
        }
        let z = diff / var.sqrt();
        (z, two_sided_normal_p(z))
    } else {
        (0.0, 1.0)
    };
    Ok(TestResult {
        test: TestKind::MannWhitney,
        statistic: u,
        z: Some(z),
        df: None,
        n: vec![a.len(), b.len()],
        p_value: p,
        tie_correction_applied: tie_term > 0.0,
        continuity_correction: Some(continuity_correction),
        replicates: None,
        seed: None,
    })
}

pub const EXACT_MAX_N: usize = 12;

/// Exact two-sided Mann-Whitney p-value by enumerating every assignment of the
/// pooled ranks to the first sample. Tie-free samples with n1 + n2 ≤ 12 only.
pub fn mann_whitney_exact(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(a)?;
    check_finite(b)?;
    let (n1, n2) = (a.len(), b.len());
    let big_n = n1 + n2;
    if big_n > EXACT_MAX_N {
        return Err(StatsError::TooLarge {
            max: EXACT_MAX_N,
            got: big_n,
        });
    }
    let (u, tie_term) = u_statistic(a, b);
    if tie_term > 0.0 {
        return Err(StatsError::TiesPresent);
    }
    // Work in doubled units so every comparison is on integers.
    let twice_mean = (n1 * n2) as i64;
    let observed = (2.0 * u).round() as i64 - twice_mean;
    let offset = (n1 * (n1 + 1)) as i64;
    let mut extreme = 0u64;
    let mut total = 0u64;
    for mask in 0u32..(1u32 << big_n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let rank_sum: i64 = (0..big_n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| i as i64 + 1)
            .sum();
        let dev = 2 * rank_sum - offset - twice_mean;
        total += 1;
        if dev.abs() >= observed.abs() {
            extreme += 1;
        }
    }
    Ok(TestResult {
        test: TestKind::MannWhitneyExact,
        statistic: u,
        z: None,
        df: None,
        n: vec![n1, n2],
        p_value: extreme as f64 / total as f64,
        tie_correction_applied: false,
        continuity_correction: None,
        replicates: None,
        seed: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub group: NavStyle,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupEntry {
    pub group: NavStyle,
    /// Absent when the group has no observations.
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseResult {
    pub a: NavStyle,
    pub b: NavStyle,
    pub result: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub metric: String,
    pub groups: Vec<GroupEntry>,
    pub normality: Option<TestResult>,
    pub omnibus: Option<TestResult>,
    pub pairwise: Vec<PairwiseResult>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CompareOptions {
    pub monte_carlo: MonteCarlo,
    pub continuity_correction: bool,
}

/// Per-group summaries, a pooled normality screen, the Kruskal-Wallis omnibus and
/// all pairwise Mann-Whitney tests, in S, G, M order. Groups without data are
/// reported as absent; tests that cannot run are replaced by a warning.
pub fn compare_groups(
    metric: &str,
    samples: &[(NavStyle, Vec<f64>)],
    options: &CompareOptions,
) -> Result<ComparisonReport, StatsError> {
    let mut ordered: Vec<(NavStyle, &[f64])> = NavStyle::ALL
        .iter()
        .map(|&s| {
            let v = samples
                .iter()
                .find(|(g, _)| *g == s)
                .map(|(_, v)| v.as_slice())
                .unwrap_or(&[]);
            (s, v)
        })
        .collect();
    for (_, v) in &ordered {
        check_finite(v)?;
    }
    let mut warnings = Vec::new();
    let groups = ordered
        .iter()
        .map(|(g, v)| GroupEntry {
            group: *g,
            summary: describe(v).ok(),
        })
        .collect();
    ordered.retain(|(_, v)| !v.is_empty());

    let pooled: Vec<f64> = ordered
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .collect();
    let normality = match ks_normality(&pooled, options.monte_carlo) {
        Ok(r) => Some(r),
        Err(e) => {
            warnings.push(format!("{metric}: normality screen skipped ({e})"));
            None
        }
    };

    let omnibus = if ordered.len() < 2 {
        warnings.push(format!(
            "{metric}: fewer than two non-empty groups, no group tests run"
        ));
        None
    } else {
        let slices: Vec<&[f64]> = ordered.iter().map(|(_, v)| *v).collect();
        match kruskal_wallis(&slices) {
            Ok(r) => Some(r),
            Err(e) => {
                warnings.push(format!("{metric}: Kruskal-Wallis skipped ({e})"));
                None
            }
        }
    };

    let mut pairwise = Vec::new();
    for i in 0..ordered.len() {
        for j in i + 1..ordered.len() {
            let (ga, a) = ordered[i];
            let (gb, b) = ordered[j];
            pairwise.push(PairwiseResult {
                a: ga,
                b: gb,
                result: mann_whitney(a, b, options.continuity_correction)?,
            });
        }
    }
    Ok(ComparisonReport {
        metric: metric.to_string(),
        groups,
        normality,
        omnibus,
        pairwise,
        warnings,
    })
}
