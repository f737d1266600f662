//! Censoring weights, implied-truth and naive Brier scores, and diagnostics
//! against known ground truth.

mod brier;
mod censoring;
mod importance;
mod report;
mod scores;
mod status;

pub use brier::{
    bs_ipcw, bs_ipcw_iti, bs_ipcw_naive, ibs_ipcw, ibs_ipcw_iti, ibs_ipcw_naive, BrierPoint, IntegratedBrier,
};
pub use censoring::{CensoringCurve, Weighting};
pub use importance::{mean_ibs_iti, permutation_importance, FeatureImportance, ImportanceConfig, ImportanceReport};
pub use report::{evaluate, EvalOptions, EvalReport, GradeReport, Variant};
pub use scores::{average_ranks, mse_vs_truth, spearman_rho, violation_extent};
pub use status::{certainty, naive_status, CertaintyStatus, NaiveRule, StatusRule};

use thiserror::Error;

use crate::data::{Dataset, SubjectId};
use crate::model::{CifSurface, ModelError};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no data")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("subject id mismatch (prediction, data): {0:?}")]
    IdMismatch(Vec<(SubjectId, SubjectId)>),
    #[error("subject {id}: no prediction at t={time}, grade={grade}")]
    MissingGridPoint { id: SubjectId, time: f64, grade: f64 },
    #[error("grade {grade}: no certain subject at any grid time")]
    AllUndefined { grade: f64 },
    #[error("rank correlation undefined: zero variance")]
    ZeroVariance,
    #[error("value not representable in this scalar type")]
    NotRepresentable,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Value of `surface` at exactly `(t, g)`.
pub(crate) fn lookup<S: Clone>(surface: &CifSurface<S>, t: f64, g: f64) -> Result<S, MetricError> {
    let missing = || MetricError::MissingGridPoint { id: surface.subject_id, time: t, grade: g };
    let ti = surface.t_grid.iter().position(|&v| v == t).ok_or_else(missing)?;
    let gi = surface.g_grid.iter().position(|&v| v == g).ok_or_else(missing)?;
    Ok(surface.at(ti, gi))
}

/// Surfaces must follow the dataset's subject order.
pub(crate) fn check_alignment<S: Scalar>(surfaces: &[CifSurface<S>], data: &Dataset) -> Result<(), MetricError> {
    if surfaces.len() != data.len() {
        return Err(MetricError::Shape(format!("{} surfaces for {} subjects", surfaces.len(), data.len())));
    }
    let bad: Vec<_> = surfaces
        .iter()
        .zip(&data.subjects)
        .filter(|(p, s)| p.subject_id != s.id)
        .map(|(p, s)| (p.subject_id, s.id))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(MetricError::IdMismatch(bad))
    }
}
