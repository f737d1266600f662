//! Per-observation likelihood loss, Adam and early-stopped training.

mod adam;
mod loss;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use loss::{batch_loss, batch_loss_and_grad, loss_dydg, pool_loss, sample_loss_on_tape, DEFAULT_EPS_CLAMP};

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, SubjectId};
use crate::model::{ModelError, Network};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("parameter/gradient length mismatch: {params} vs {grads}")]
    Shape { params: usize, grads: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<crate::autodiff::AutodiffError> for TrainError {
    fn from(e: crate::autodiff::AutodiffError) -> Self {
        TrainError::Model(ModelError::from(e))
    }
}

/// One `(subject, monitoring time)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSample {
    /// Position of the subject in the dataset the sample was built from.
    pub index: usize,
    pub id: SubjectId,
    pub time: f64,
    /// Maximum observed grade by `time` when `label`, else `delta_g`.
    pub grade: f64,
    pub label: bool,
}

/// One sample per monitoring point: `(t, max grade, 1)` once any grade above
/// zero has been recorded, `(t, delta_g, 0)` before that.
pub fn build_samples(data: &Dataset, delta_g: f64) -> Result<Vec<TrainingSample>, TrainError> {
    if !(delta_g > 0.0) || !delta_g.is_finite() {
        return Err(TrainError::Config(format!("delta_g must be positive, got {delta_g}")));
    }
    let mut out = Vec::new();
    for (index, s) in data.subjects.iter().enumerate() {
        s.trajectory.validate(s.id)?;
        for o in &s.trajectory.observations {
            let label = o.grade > 0.0;
            let grade = if label { o.grade } else { delta_g };
            if label && grade < delta_g {
                return Err(TrainError::Config(format!("subject {}: grade {} below delta_g {delta_g}", s.id, o.grade)));
            }
            out.push(TrainingSample { index, id: s.id, time: o.time, grade, label });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightDecay {
    /// The decay gradient is added to the loss gradient before the moments.
    Coupled,
}

/// What the L2 decay shrinks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayTarget {
    /// The weights the network uses: non-negative parameters after the map,
    /// so they shrink toward zero.
    Effective,
    /// The stored raw values. Under softplus this pulls non-negative weights
    /// toward `ln 2`, not zero.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub weight_decay_mode: WeightDecay,
    pub weight_decay_target: DecayTarget,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub delta_g: f64,
    pub eps_clamp: f64,
    pub seed: u64,
    /// Layer widths, ending in 1.
    pub widths: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            weight_decay: 0.005,
            weight_decay_mode: WeightDecay::Coupled,
            weight_decay_target: DecayTarget::Effective,
            batch_size: 64,
            max_epochs: 500,
            patience: 20,
            delta_g: 1.0,
            eps_clamp: DEFAULT_EPS_CLAMP,
            seed: 0,
            widths: vec![32, 32, 32, 1],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !pos(self.learning_rate) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return bad("weight_decay must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !pos(self.delta_g) {
            return bad("delta_g must be positive");
        }
        if !pos(self.eps_clamp) || self.eps_clamp >= 1.0 {
            return bad("eps_clamp must lie in (0, 1)");
        }
        if self.widths.last() != Some(&1) || self.widths.contains(&0) {
            return bad("widths must be positive and end in 1");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the full training pool at the end of the epoch.
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Row 0 holds the losses at the initial parameters.
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Mean per-batch loss within each trained epoch; entry `e - 1` is epoch `e`.
    pub mean_batch_loss: Vec<f64>,
}

impl History {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch)
    }
}

pub struct TrainOutcome<T> {
    pub network: Network<T>,
    pub history: History,
}

const STREAM_INIT: u64 = 10;
const STREAM_SHUFFLE: u64 = 11;

/// Initializes a network from `config.seed` and trains it.
pub fn train<T: Float + Send + Sync>(
    config: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
) -> Result<TrainOutcome<T>, TrainError> {
    config.validate()?;
    let dim = train_set.feature_dim().ok_or(TrainError::Data(DataError::Empty(0)))?;
    let net = Network::init(derive_seed(config.seed, STREAM_INIT, 0), dim, &config.widths)?;
    train_from(net, config, train_set, val_set)
}

/// Trains `net` from its current parameters. `t_scale` is reset to the
/// largest training observation time and `delta_g` to the config value.
pub fn train_from<T: Float + Send + Sync>(
    mut net: Network<T>,
    config: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
) -> Result<TrainOutcome<T>, TrainError> {
    config.validate()?;
    if train_set.subjects.iter().any(|s| val_set.subjects.iter().any(|v| v.id == s.id)) {
        return Err(TrainError::Config("train and validation sets share subject ids".into()));
    }
    let t = |v: f64| T::from(v).unwrap();
    let max_time = train_set.max_time();
    net.t_scale = if max_time > 0.0 { t(max_time) } else { T::one() };
    net.delta_g = t(config.delta_g);
    net.validate()?;

    let train_samples = build_samples(train_set, config.delta_g)?;
    let val_samples = build_samples(val_set, config.delta_g)?;
    if train_samples.is_empty() || val_samples.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let to_t = |d: &Dataset| -> Vec<Vec<T>> {
        d.subjects.iter().map(|s| s.features.iter().map(|&v| t(v)).collect()).collect()
    };
    let train_x = to_t(train_set);
    let val_x = to_t(val_set);
    let eps = t(config.eps_clamp);
    let lr = t(config.learning_rate);
    let wd = t(config.weight_decay);

    let mut history = History::default();
    let eval = |net: &Network<T>, epoch: usize| -> Result<EpochRecord, TrainError> {
        let train_loss = pool_loss(net, &train_samples, &train_x, eps)?.to_f64().unwrap();
        let val_loss = pool_loss(net, &val_samples, &val_x, eps)?.to_f64().unwrap();
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                loss: if train_loss.is_finite() { val_loss } else { train_loss },
            });
        }
        Ok(EpochRecord { epoch, train_loss, val_loss })
    };
    let first = eval(&net, 0)?;
    history.epochs.push(first);
    let mut best_val = first.val_loss;
    let mut best_params = net.flatten();
    let mut since_best = 0;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_SHUFFLE, 0));
    let mut order: Vec<usize> = (0..train_samples.len()).collect();
    let mut params = net.flatten();
    let mut state = AdamState::new(params.len());
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut batch_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<TrainingSample> = chunk.iter().map(|&i| train_samples[i]).collect();
            let (loss, mut grad) = batch_loss_and_grad(&net, &batch, &train_x, eps)?;
            let loss = loss.to_f64().unwrap();
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::Diverged { epoch, loss });
            }
            match config.weight_decay_target {
                DecayTarget::Raw => adam_step(&mut params, &grad, &mut state, lr, wd)?,
                DecayTarget::Effective => {
                    for (g, d) in grad.iter_mut().zip(net.effective_decay_direction()) {
                        *g = *g + wd * d;
                    }
                    adam_step(&mut params, &grad, &mut state, lr, T::zero())?
                }
            }
            net.assign(&params)?;
            batch_sum += loss;
            batches += 1;
        }
        let rec = eval(&net, epoch)?;
        log::debug!("epoch {epoch}: train {:.6} val {:.6}", rec.train_loss, rec.val_loss);
        history.epochs.push(rec);
        history.mean_batch_loss.push(batch_sum / batches as f64);
        if rec.val_loss < best_val {
            best_val = rec.val_loss;
            best_params.clone_from(&params);
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > config.patience {
                break;
            }
        }
    }
    net.assign(&best_params)?;
    log::info!(
        "trained {} epochs; best epoch {} with validation loss {:.6}",
        history.epochs.len() - 1,
        history.best_epoch,
        best_val
    );
    Ok(TrainOutcome { network: net, history })
}
