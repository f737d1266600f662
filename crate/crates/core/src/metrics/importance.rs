use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ibs_ipcw_iti, MetricError, Weighting};
use crate::data::Dataset;
use crate::model::{predict_dataset, Network};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceConfig {
    pub n_reps: usize,
    pub seed: u64,
    pub t_grid: Vec<f64>,
    pub grades: Vec<f64>,
    /// Features to permute; all when `None`.
    pub features: Option<Vec<usize>>,
    pub ipcw: bool,
}

impl ImportanceConfig {
    pub fn new(t_grid: Vec<f64>, grades: Vec<f64>) -> Self {
        Self { n_reps: 50, seed: 0, t_grid, grades, features: None, ipcw: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureImportance {
    pub feature: usize,
    pub mean_degradation: f64,
    /// Sample standard deviation over repetitions.
    pub sd: f64,
    pub ci95_half_width: f64,
    pub degradations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceReport {
    pub baseline: f64,
    pub features: Vec<FeatureImportance>,
}

/// Mean over `grades` of the implied-truth integrated Brier score.
pub fn mean_ibs_iti(
    net: &Network<f64>,
    data: &Dataset,
    t_grid: &[f64],
    grades: &[f64],
    weights: &Weighting<f64>,
) -> Result<f64, MetricError> {
    if grades.is_empty() {
        return Err(MetricError::Empty);
    }
    let surfaces = predict_dataset(net, data, t_grid, grades)?;
    let mut sum = 0.0;
    for &k in grades {
        sum += ibs_ipcw_iti(&surfaces, data, k, t_grid, weights)?.value;
    }
    Ok(sum / grades.len() as f64)
}

const STREAM_IMPORTANCE: u64 = 20;

/// Shuffles one feature column at a time across subjects and reports how
/// much [`mean_ibs_iti`] worsens relative to the unshuffled data.
pub fn permutation_importance(
    net: &Network<f64>,
    data: &Dataset,
    config: &ImportanceConfig,
) -> Result<ImportanceReport, MetricError> {
    if config.n_reps < 2 {
        return Err(MetricError::Shape("n_reps must be at least 2".into()));
    }
    let dim = data.feature_dim().ok_or(MetricError::Empty)?;
    let features = config.features.clone().unwrap_or_else(|| (0..dim).collect());
    if let Some(&bad) = features.iter().find(|&&j| j >= dim) {
        return Err(MetricError::Shape(format!("feature {bad} out of range for dimension {dim}")));
    }
    let weights = if config.ipcw { Weighting::ipcw(data)? } else { Weighting::Unweighted };
    let baseline = mean_ibs_iti(net, data, &config.t_grid, &config.grades, &weights)?;

    let jobs: Vec<(usize, usize)> = features.iter().flat_map(|&j| (0..config.n_reps).map(move |r| (j, r))).collect();
    let scores = jobs
        .par_iter()
        .map(|&(j, r)| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_IMPORTANCE, ((j as u64) << 32) | r as u64));
            let mut column: Vec<f64> = data.subjects.iter().map(|s| s.features[j]).collect();
            column.shuffle(&mut rng);
            let mut permuted = data.clone();
            for (s, v) in permuted.subjects.iter_mut().zip(column) {
                s.features[j] = v;
            }
            mean_ibs_iti(net, &permuted, &config.t_grid, &config.grades, &weights)
        })
        .collect::<Result<Vec<f64>, _>>()?;

    let features = features
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let degradations: Vec<f64> =
                scores[i * config.n_reps..(i + 1) * config.n_reps].iter().map(|s| s - baseline).collect();
            let n = degradations.len() as f64;
            let mean = degradations.iter().sum::<f64>() / n;
            let var = degradations.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            FeatureImportance { feature: j, mean_degradation: mean, sd, ci95_half_width: 1.96 * sd, degradations }
        })
        .collect();
    Ok(ImportanceReport { baseline, features })
}
