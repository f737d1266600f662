use serde::{Deserialize, Serialize};

use crate::data::Trajectory;

/// Whether the grade-`k` event is known to have happened by `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CertaintyStatus {
    /// Occurred; the payload is the first time it is known to have occurred.
    OccurredBy(f64),
    NotOccurredBy,
    Uncertain,
}

/// Status using implied truths from max-severity records: with `O` the first
/// time a grade `>= k` is seen and `L` the last time a grade `< k` is seen,
/// the event occurred by `t` iff `O <= t`, had not occurred iff `L >= t`, and
/// is uncertain in between or after censoring.
pub fn certainty(traj: &Trajectory, k: f64, t: f64) -> CertaintyStatus {
    let first_hit = traj.observations.iter().find(|o| o.grade >= k).map(|o| o.time);
    if let Some(o) = first_hit {
        if o <= t {
            return CertaintyStatus::OccurredBy(o);
        }
    }
    let last_below = traj.observations.iter().rev().find(|o| o.grade < k).map(|o| o.time);
    match last_below {
        Some(l) if l >= t => CertaintyStatus::NotOccurredBy,
        _ => CertaintyStatus::Uncertain,
    }
}

/// What counts as an explicit grade-`k` record when implied truths are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NaiveRule {
    /// A record of exactly grade `k`.
    #[default]
    Exact,
    /// A record of any grade `>= k`.
    AtLeast,
}

impl std::str::FromStr for NaiveRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Self::Exact),
            "at-least" => Ok(Self::AtLeast),
            other => Err(format!("unknown naive rule {other:?} (expected exact or at-least)")),
        }
    }
}

/// Status that disregards implied truths: occurred once a qualifying record
/// is seen, otherwise not occurred up to the censoring time.
pub fn naive_status(traj: &Trajectory, k: f64, t: f64, rule: NaiveRule) -> CertaintyStatus {
    let hit = traj
        .observations
        .iter()
        .find(|o| match rule {
            NaiveRule::Exact => o.grade == k,
            NaiveRule::AtLeast => o.grade >= k,
        })
        .map(|o| o.time);
    match hit {
        Some(h) if h <= t => CertaintyStatus::OccurredBy(h),
        _ if t <= traj.censoring_time() => CertaintyStatus::NotOccurredBy,
        _ => CertaintyStatus::Uncertain,
    }
}

/// Which status function a Brier score uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatusRule {
    ImpliedTruth,
    Naive(NaiveRule),
}

impl StatusRule {
    pub fn status(self, traj: &Trajectory, k: f64, t: f64) -> CertaintyStatus {
        match self {
            Self::ImpliedTruth => certainty(traj, k, t),
            Self::Naive(rule) => naive_status(traj, k, t, rule),
        }
    }
}
