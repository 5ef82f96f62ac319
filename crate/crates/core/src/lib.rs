//! Navigation-style analytics for MOOC clickstream logs.
//!
//! Learners are labelled per week as Sequential, Global or Middle according to
//! how their first visits follow a course's linear learning path. The crate
//! then compares engagement and performance across those groups, tracks how
//! labels change from week to week and where learners stop, and can generate
//! synthetic cohorts with known labels for end-to-end checks.

pub mod classify;
pub mod course;
pub mod ingest;
pub mod metrics;
pub mod report;
pub mod simgen;
pub mod stats;
pub mod temporal;
