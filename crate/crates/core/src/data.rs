//! Subjects, intermittent observations and datasets.

use thiserror::Error;

pub type SubjectId = u64;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("subject {0}: trajectory has no observations")]
    Empty(SubjectId),
    #[error("subject {id}: observation times must be strictly increasing (t={time})")]
    NonIncreasingTime { id: SubjectId, time: f64 },
    #[error("subject {id}: recorded max-so-far grade decreases at t={time}")]
    NonMonotoneGrade { id: SubjectId, time: f64 },
    #[error("subject {id}: invalid value at t={time}")]
    NonFinite { id: SubjectId, time: f64 },
    #[error("subject {id}: expected {expected} features, got {got}")]
    FeatureDim { id: SubjectId, expected: usize, got: usize },
}

/// One monitoring record: the maximum severity reached by `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub grade: f64,
}

impl Observation {
    pub fn new(time: f64, grade: f64) -> Self {
        Self { time, grade }
    }
}

/// Intermittent max-severity observations for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Observation>,
    /// Full latent state path, kept by the simulator for oracle checks.
    pub latent_path: Option<Vec<u8>>,
}

impl Trajectory {
    pub fn new(observations: Vec<Observation>) -> Self {
        Self { observations, latent_path: None }
    }

    /// Builds a trajectory from `(time, grade)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self::new(pairs.iter().map(|&(t, g)| Observation::new(t, g)).collect())
    }

    /// Time of the last observation (the whole-trajectory censoring time).
    pub fn censoring_time(&self) -> f64 {
        self.observations.last().map_or(0.0, |o| o.time)
    }

    pub fn max_grade(&self) -> f64 {
        self.observations.last().map_or(0.0, |o| o.grade)
    }

    pub fn validate(&self, id: SubjectId) -> Result<(), DataError> {
        if self.observations.is_empty() {
            return Err(DataError::Empty(id));
        }
        for o in &self.observations {
            if !o.time.is_finite() || !o.grade.is_finite() {
                return Err(DataError::NonFinite { id, time: o.time });
            }
        }
        for w in self.observations.windows(2) {
            if w[1].time <= w[0].time {
                return Err(DataError::NonIncreasingTime { id, time: w[1].time });
            }
            if w[1].grade < w[0].grade {
                return Err(DataError::NonMonotoneGrade { id, time: w[1].time });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: SubjectId,
    pub features: Vec<f64>,
    pub trajectory: Trajectory,
}

/// A set of subjects sharing one feature dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub subjects: Vec<Subject>,
}

impl Dataset {
    pub fn new(subjects: Vec<Subject>) -> Self {
        Self { subjects }
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.subjects.first().map(|s| s.features.len())
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.subjects.iter().map(|s| &s.trajectory)
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.subjects.iter().map(|s| s.features.clone()).collect()
    }

    /// Largest observation time across all trajectories.
    pub fn max_time(&self) -> f64 {
        self.trajectories().map(Trajectory::censoring_time).fold(0.0, f64::max)
    }

    /// Subset by id, in the order of `ids`. Unknown ids are skipped.
    pub fn select(&self, ids: &[SubjectId]) -> Dataset {
        let subjects = ids.iter().filter_map(|id| self.subjects.iter().find(|s| s.id == *id).cloned()).collect();
        Dataset { subjects }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let dim = self.feature_dim().unwrap_or(0);
        for s in &self.subjects {
            s.trajectory.validate(s.id)?;
            if s.features.len() != dim {
                return Err(DataError::FeatureDim { id: s.id, expected: dim, got: s.features.len() });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_decreasing_grades() {
        let t = Trajectory::from_pairs(&[(0.0, 0.0), (1.0, 2.0), (2.0, 1.0)]);
        assert_eq!(t.validate(3), Err(DataError::NonMonotoneGrade { id: 3, time: 2.0 }));
    }

    #[test]
    fn censoring_time_is_last_observation() {
        let t = Trajectory::from_pairs(&[(0.0, 0.0), (3.0, 2.0), (5.0, 2.0)]);
        assert_eq!(t.censoring_time(), 5.0);
        assert_eq!(t.max_grade(), 2.0);
        assert!(t.validate(0).is_ok());
    }
}
