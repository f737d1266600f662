//! Synthetic ground truth: features, a random net mapping features to a
//! per-subject Markov chain over grades 0..=5, intermittent and censored
//! running-max observation, and exact CIFs.

mod chain;
mod net;
mod observe;

pub use chain::{simulate_path, true_cif, true_cif_surface, TransitionModel, ABSORBING, EVENT_GRADES, NUM_STATES};
pub use net::{Controls, GroundTruthNet, DEFAULT_GAIN, DEFAULT_WIDTHS, NUM_CHANNELS};
pub use observe::{apply_censoring, apply_intermittency, censor_last, observe};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Subject, SubjectId, Trajectory};
use crate::model::CifSurface;
pub use crate::seed::derive_seed;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
}

pub const NUM_FEATURES: usize = 32;

const STREAM_NET: u64 = 0;
const STREAM_FEATURES: u64 = 1;
const STREAM_PATH: u64 = 2;
const STREAM_SPLIT: u64 = 3;

fn subject_rng(base: u64, stream: u64, id: SubjectId) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, id))
}

/// One subject's features: `n_features - 1` standard normals and a last
/// standard normal mapped to 1 if positive, else 0.
pub fn gen_feature_vector(seed: u64, id: SubjectId, n_features: usize) -> Vec<f64> {
    let mut rng = subject_rng(seed, STREAM_FEATURES, id);
    let mut x: Vec<f64> = (0..n_features).map(|_| StandardNormal.sample(&mut rng)).collect();
    if let Some(last) = x.last_mut() {
        *last = if *last > 0.0 { 1.0 } else { 0.0 };
    }
    x
}

/// Features for subjects `0..n`.
pub fn gen_features(n: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n as u64).map(|id| gen_feature_vector(seed, id, NUM_FEATURES)).collect()
}

/// Transition matrix for one feature vector.
pub fn transition_matrix(x: &[f64], net: &GroundTruthNet, lambda_prog: f64, lambda_stay: f64) -> TransitionModel<f64> {
    let c = net.controls(x);
    TransitionModel::from_controls(&c.progress, &c.regress, lambda_prog, lambda_stay)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_subjects: usize,
    pub lambda_prog: f64,
    pub lambda_stay: f64,
    pub steps: usize,
    pub intermittency: bool,
    pub censoring: bool,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    #[serde(default = "default_gain")]
    pub net_gain: f64,
}

fn default_gain() -> f64 {
    DEFAULT_GAIN
}

impl SimConfig {
    pub fn sim_main(seed: u64) -> Self {
        Self {
            n_subjects: 4000,
            lambda_prog: 2.0,
            lambda_stay: 1.0,
            steps: 10,
            intermittency: true,
            censoring: true,
            seed,
            n_train: 1000,
            n_val: 500,
            n_test: 2500,
            net_gain: DEFAULT_GAIN,
        }
    }

    pub fn sim_lackprog(seed: u64) -> Self {
        Self { n_subjects: 2000, lambda_prog: 0.02, censoring: false, n_test: 500, ..Self::sim_main(seed) }
    }

    /// Scaled-down variant: 600 subjects split 300/100/200.
    pub fn desk(self) -> Self {
        Self { n_subjects: 600, n_train: 300, n_val: 100, n_test: 200, ..self }
    }

    /// Looks up `sim-main`, `sim-lackprog`, `desk` (= desk-scale sim-main) or
    /// `desk-lackprog`.
    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "sim-main" => Some(Self::sim_main(seed)),
            "sim-lackprog" => Some(Self::sim_lackprog(seed)),
            "desk" => Some(Self::sim_main(seed).desk()),
            "desk-lackprog" => Some(Self::sim_lackprog(seed).desk()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.n_subjects == 0 {
            return bad("n_subjects must be positive");
        }
        if self.n_train + self.n_val + self.n_test > self.n_subjects {
            return bad("split sizes exceed n_subjects");
        }
        if !(self.lambda_prog >= 0.0) || !self.lambda_prog.is_finite() {
            return bad("lambda_prog must be finite and non-negative");
        }
        if !(self.lambda_stay > 0.0) || !self.lambda_stay.is_finite() {
            return bad("lambda_stay must be finite and positive");
        }
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if !(self.net_gain > 0.0) || !self.net_gain.is_finite() {
            return bad("net_gain must be finite and positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<SubjectId>,
    pub val: Vec<SubjectId>,
    pub test: Vec<SubjectId>,
}

/// Generated subjects with their chains, exact CIFs and split.
#[derive(Debug, Clone)]
pub struct SimDataset {
    pub config: SimConfig,
    pub net_seed: u64,
    pub data: Dataset,
    pub transitions: Vec<TransitionModel<f64>>,
    /// Exact CIF on `t = 0..=steps` and grades 1..=5, indexed by subject id.
    pub true_cif: Vec<CifSurface<f64>>,
    pub split: Split,
}

impl SimDataset {
    pub fn train(&self) -> Dataset {
        self.subset(&self.split.train)
    }

    pub fn val(&self) -> Dataset {
        self.subset(&self.split.val)
    }

    pub fn test(&self) -> Dataset {
        self.subset(&self.split.test)
    }

    pub fn subset(&self, ids: &[SubjectId]) -> Dataset {
        Dataset::new(ids.iter().map(|&id| self.data.subjects[id as usize].clone()).collect())
    }

    pub fn true_surfaces(&self, ids: &[SubjectId]) -> Vec<CifSurface<f64>> {
        ids.iter().map(|&id| self.true_cif[id as usize].clone()).collect()
    }

    /// Fraction of subjects whose observed grades skip at least one grade
    /// below their final observed grade.
    pub fn missing_intermediate_fraction(&self) -> f64 {
        missing_intermediate_fraction(&self.data)
    }
}

/// Fraction of subjects whose observed grades skip at least one grade
/// below their final observed grade.
pub fn missing_intermediate_fraction(data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let skipped =
        data.trajectories().filter(|tr| tr.observations.windows(2).any(|w| w[1].grade - w[0].grade > 1.0)).count();
    skipped as f64 / data.len() as f64
}

fn simulate_subject(
    config: &SimConfig,
    net: &GroundTruthNet,
    id: SubjectId,
) -> (Subject, TransitionModel<f64>, CifSurface<f64>) {
    let features = gen_feature_vector(config.seed, id, NUM_FEATURES);
    let model = transition_matrix(&features, net, config.lambda_prog, config.lambda_stay);
    let mut rng = subject_rng(config.seed, STREAM_PATH, id);
    let path = simulate_path(&model, config.steps, &mut rng);
    let mut obs = observe(&path);
    if config.intermittency {
        obs = apply_intermittency(&obs, &mut rng);
    }
    if config.censoring {
        obs = apply_censoring(&obs, &mut rng);
    }
    let trajectory = Trajectory { observations: obs, latent_path: Some(path) };
    let values = true_cif_surface(&model, config.steps);
    let surface = CifSurface {
        subject_id: id,
        t_grid: (0..=config.steps).map(|t| t as f64).collect(),
        g_grid: EVENT_GRADES.iter().map(|&k| k as f64).collect(),
        values,
    };
    (Subject { id, features, trajectory }, model, surface)
}

/// Generates all subjects (ids `0..n`) in parallel and splits them.
pub fn build_dataset(config: &SimConfig) -> Result<SimDataset, SimError> {
    config.validate()?;
    let net_seed = derive_seed(config.seed, STREAM_NET, 0);
    let net = GroundTruthNet::with_shape(net_seed, &DEFAULT_WIDTHS, config.net_gain);
    let generated: Vec<_> =
        (0..config.n_subjects as u64).into_par_iter().map(|id| simulate_subject(config, &net, id)).collect();
    let mut subjects = Vec::with_capacity(generated.len());
    let mut transitions = Vec::with_capacity(generated.len());
    let mut true_cif = Vec::with_capacity(generated.len());
    for (s, m, c) in generated {
        subjects.push(s);
        transitions.push(m);
        true_cif.push(c);
    }

    let mut ids: Vec<SubjectId> = (0..config.n_subjects as u64).collect();
    ids.shuffle(&mut subject_rng(config.seed, STREAM_SPLIT, 0));
    let (train, rest) = ids.split_at(config.n_train);
    let (val, rest) = rest.split_at(config.n_val);
    let test = &rest[..config.n_test];
    let split = Split { train: train.to_vec(), val: val.to_vec(), test: test.to_vec() };

    Ok(SimDataset { config: config.clone(), net_seed, data: Dataset::new(subjects), transitions, true_cif, split })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_shape_and_binary_last() {
        let x = gen_features(50, 1);
        assert_eq!(x.len(), 50);
        for v in &x {
            assert_eq!(v.len(), NUM_FEATURES);
            assert!(v[31] == 0.0 || v[31] == 1.0);
        }
        assert_eq!(x, gen_features(50, 1));
        assert_ne!(x, gen_features(50, 2));
    }

    #[test]
    fn presets() {
        let m = SimConfig::preset("sim-main", 0).unwrap();
        assert_eq!((m.n_subjects, m.n_train, m.n_val, m.n_test), (4000, 1000, 500, 2500));
        assert!(m.censoring);
        let l = SimConfig::preset("sim-lackprog", 0).unwrap();
        assert_eq!(l.lambda_prog, 0.02);
        assert!(!l.censoring);
        let d = SimConfig::preset("desk", 0).unwrap();
        assert_eq!((d.n_subjects, d.n_train, d.n_val, d.n_test), (600, 300, 100, 200));
        assert!(SimConfig::preset("nope", 0).is_none());
    }

    #[test]
    fn split_is_disjoint_and_sized() {
        let cfg = SimConfig { n_subjects: 60, n_train: 30, n_val: 10, n_test: 20, ..SimConfig::sim_main(7) };
        let ds = build_dataset(&cfg).unwrap();
        let mut all: Vec<_> = ds.split.train.iter().chain(&ds.split.val).chain(&ds.split.test).copied().collect();
        assert_eq!(all.len(), 60);
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 60);
        ds.data.validate().unwrap();
    }

    #[test]
    fn oversized_split_rejected() {
        let cfg = SimConfig { n_subjects: 10, n_train: 10, n_val: 1, n_test: 0, ..SimConfig::sim_main(0) };
        assert!(build_dataset(&cfg).is_err());
    }
}
