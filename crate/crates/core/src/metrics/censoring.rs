use serde::Serialize;

use super::MetricError;
use crate::data::Dataset;
use crate::scalar::Scalar;

/// Kaplan-Meier survival curve of the whole-trajectory censoring time.
///
/// `values[j]` is the right-continuous survival on `[times[j], times[j + 1])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensoringCurve<S> {
    times: Vec<f64>,
    values: Vec<S>,
}

impl<S: Scalar> CensoringCurve<S> {
    /// Product-limit estimate over censoring times, every one of them observed.
    pub fn kaplan_meier(censoring_times: &[f64]) -> Result<Self, MetricError> {
        if censoring_times.is_empty() {
            return Err(MetricError::Empty);
        }
        let mut sorted = censoring_times.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut surv = S::one();
        let mut at_risk = sorted.len();
        let mut i = 0;
        while i < sorted.len() {
            let c = sorted[i];
            let d = sorted[i..].iter().take_while(|&&v| v == c).count();
            surv = surv * (S::one() - S::from_usize(d) / S::from_usize(at_risk));
            times.push(c);
            values.push(surv.clone());
            at_risk -= d;
            i += d;
        }
        Ok(Self { times, values })
    }

    pub fn from_dataset(data: &Dataset) -> Result<Self, MetricError> {
        let c: Vec<f64> = data.trajectories().map(|t| t.censoring_time()).collect();
        Self::kaplan_meier(&c)
    }

    fn last_positive(&self) -> S {
        self.values.iter().rev().find(|v| **v > S::zero()).cloned().unwrap_or_else(S::one)
    }

    fn guard(&self, v: S) -> S {
        if v > S::zero() {
            v
        } else {
            self.last_positive()
        }
    }

    /// Right-continuous `G(t)`, never zero: past the data it stays at the
    /// last positive value.
    pub fn at(&self, t: f64) -> S {
        let n = self.times.partition_point(|&c| c <= t);
        let v = if n == 0 { S::one() } else { self.values[n - 1].clone() };
        self.guard(v)
    }

    /// Left limit `G(t-)`, never zero.
    pub fn left_limit(&self, t: f64) -> S {
        let n = self.times.partition_point(|&c| c < t);
        let v = if n == 0 { S::one() } else { self.values[n - 1].clone() };
        self.guard(v)
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }
}

/// Censoring weights used in the Brier score denominators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Weighting<S> {
    /// `G(t-)` from a Kaplan-Meier curve.
    Ipcw(CensoringCurve<S>),
    /// `G = 1`.
    Unweighted,
}

impl<S: Scalar> Weighting<S> {
    pub fn ipcw(data: &Dataset) -> Result<Self, MetricError> {
        Ok(Self::Ipcw(CensoringCurve::from_dataset(data)?))
    }

    pub fn weight(&self, t: f64) -> S {
        match self {
            Self::Ipcw(c) => c.left_limit(t),
            Self::Unweighted => S::one(),
        }
    }
}
