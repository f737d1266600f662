use serde::Serialize;

use super::{check_alignment, lookup, MetricError, StatusRule, Weighting};
use crate::data::{Dataset, Trajectory};
use crate::metrics::CertaintyStatus;
use crate::model::CifSurface;
use crate::scalar::Scalar;

/// Brier score at one time; `value` is `None` when no subject is certain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrierPoint<S> {
    pub time: f64,
    pub value: Option<S>,
    pub n_certain: usize,
}

/// Weighted Brier score at `t` for grade `k`. `cif[i]` is the predicted
/// CIF of `trajectories[i]` at `(t, k)`; survival is `1 - cif`.
///
/// Occurred subjects add `(1 - cif)^2 / G(T-)`, not-occurred subjects add
/// `cif^2 / G(t-)`, uncertain subjects are left out of sum and count.
pub fn bs_ipcw<S: Scalar>(
    rule: StatusRule,
    cif: &[S],
    trajectories: &[&Trajectory],
    k: f64,
    t: f64,
    weights: &Weighting<S>,
) -> Result<BrierPoint<S>, MetricError> {
    if cif.len() != trajectories.len() {
        return Err(MetricError::Shape(format!("{} predictions for {} trajectories", cif.len(), trajectories.len())));
    }
    let mut sum = S::zero();
    let mut n = 0usize;
    for (c, tr) in cif.iter().zip(trajectories) {
        let surv = S::one() - c.clone();
        match rule.status(tr, k, t) {
            CertaintyStatus::OccurredBy(hit) => {
                sum = sum + surv.clone() * surv / weights.weight(hit);
                n += 1;
            }
            CertaintyStatus::NotOccurredBy => {
                let d = S::one() - surv;
                sum = sum + d.clone() * d / weights.weight(t);
                n += 1;
            }
            CertaintyStatus::Uncertain => {}
        }
    }
    let value = (n > 0).then(|| sum / S::from_usize(n));
    Ok(BrierPoint { time: t, value, n_certain: n })
}

pub fn bs_ipcw_iti<S: Scalar>(
    cif: &[S],
    trajectories: &[&Trajectory],
    k: f64,
    t: f64,
    weights: &Weighting<S>,
) -> Result<BrierPoint<S>, MetricError> {
    bs_ipcw(StatusRule::ImpliedTruth, cif, trajectories, k, t, weights)
}

pub fn bs_ipcw_naive<S: Scalar>(
    cif: &[S],
    trajectories: &[&Trajectory],
    k: f64,
    t: f64,
    weights: &Weighting<S>,
    rule: super::NaiveRule,
) -> Result<BrierPoint<S>, MetricError> {
    bs_ipcw(StatusRule::Naive(rule), cif, trajectories, k, t, weights)
}

/// Integrated score with its per-time points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratedBrier<S> {
    pub value: S,
    pub points: Vec<BrierPoint<S>>,
}

/// Trapezoid integral of the Brier score over `t_grid` divided by the last
/// grid time. Times with no certain subject are dropped with a warning.
pub fn ibs_ipcw<S: Scalar>(
    rule: StatusRule,
    surfaces: &[CifSurface<S>],
    data: &Dataset,
    k: f64,
    t_grid: &[f64],
    weights: &Weighting<S>,
) -> Result<IntegratedBrier<S>, MetricError> {
    check_alignment(surfaces, data)?;
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MetricError::Shape("time grid must be non-empty and ascending".into()));
    }
    let trajectories: Vec<&Trajectory> = data.trajectories().collect();
    let mut points = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let cif = surfaces.iter().map(|s| lookup(s, t, k)).collect::<Result<Vec<_>, _>>()?;
        points.push(bs_ipcw(rule, &cif, &trajectories, k, t, weights)?);
    }
    let defined: Vec<(f64, S)> = points.iter().filter_map(|p| p.value.clone().map(|v| (p.time, v))).collect();
    if defined.is_empty() {
        return Err(MetricError::AllUndefined { grade: k });
    }
    if defined.len() < points.len() {
        let skipped: Vec<f64> = points.iter().filter(|p| p.value.is_none()).map(|p| p.time).collect();
        log::warn!("grade {k}: no certain subjects at t = {skipped:?}; dropped from the integral");
    }
    let two = S::from_usize(2);
    let mut area = S::zero();
    for w in defined.windows(2) {
        let dt = S::from_f64(w[1].0) - S::from_f64(w[0].0);
        area = area + dt * (w[0].1.clone() + w[1].1.clone()) / two.clone();
    }
    let t_max = *t_grid.last().unwrap();
    if !(t_max > 0.0) {
        return Err(MetricError::Shape("last grid time must be positive".into()));
    }
    Ok(IntegratedBrier { value: area / S::from_f64(t_max), points })
}

pub fn ibs_ipcw_iti<S: Scalar>(
    surfaces: &[CifSurface<S>],
    data: &Dataset,
    k: f64,
    t_grid: &[f64],
    weights: &Weighting<S>,
) -> Result<IntegratedBrier<S>, MetricError> {
    ibs_ipcw(StatusRule::ImpliedTruth, surfaces, data, k, t_grid, weights)
}

pub fn ibs_ipcw_naive<S: Scalar>(
    surfaces: &[CifSurface<S>],
    data: &Dataset,
    k: f64,
    t_grid: &[f64],
    weights: &Weighting<S>,
    rule: super::NaiveRule,
) -> Result<IntegratedBrier<S>, MetricError> {
    ibs_ipcw(StatusRule::Naive(rule), surfaces, data, k, t_grid, weights)
}
