use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Progression controls for grades 0..=4 plus regression controls for grades 1..=4.
pub const NUM_CHANNELS: usize = 9;
pub const DEFAULT_WIDTHS: [usize; 4] = [32, 16, 16, NUM_CHANNELS];
/// Standard deviation multiplier applied to `1 / sqrt(fan_in)`.
pub const DEFAULT_GAIN: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DenseLayer {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl DenseLayer {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let row = &self.weights[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[r]
            })
            .collect()
    }
}

/// Per-state transition controls, each in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controls {
    pub progress: [f64; 5],
    pub regress: [f64; 4],
}

/// Seeded random feed-forward net mapping features to transition controls:
/// tanh, tanh, then sigmoid on the output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthNet {
    layers: Vec<DenseLayer>,
}

impl GroundTruthNet {
    pub fn random(seed: u64) -> Self {
        Self::with_shape(seed, &DEFAULT_WIDTHS, DEFAULT_GAIN)
    }

    /// Weights `N(0, gain^2 / fan_in)`, biases `N(0, 0.25)`.
    pub fn with_shape(seed: u64, widths: &[usize], gain: f64) -> Self {
        assert!(widths.len() >= 2, "need input and output widths");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bias_dist = Normal::new(0.0, 0.5).expect("valid normal");
        let layers = widths
            .windows(2)
            .map(|w| {
                let (cols, rows) = (w[0], w[1]);
                let dist = Normal::new(0.0, gain / (cols as f64).sqrt()).expect("valid normal");
                DenseLayer {
                    rows,
                    cols,
                    weights: (0..rows * cols).map(|_| dist.sample(&mut rng)).collect(),
                    bias: (0..rows).map(|_| bias_dist.sample(&mut rng)).collect(),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.rows)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "feature dimension");
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&h);
            for v in &mut h {
                *v = if k == last { 1.0 / (1.0 + (-*v).exp()) } else { v.tanh() };
            }
        }
        h
    }

    pub fn controls(&self, x: &[f64]) -> Controls {
        let u = self.forward(x);
        assert!(u.len() >= NUM_CHANNELS, "net emits {} channels, need {NUM_CHANNELS}", u.len());
        let mut c = Controls { progress: [0.0; 5], regress: [0.0; 4] };
        c.progress.copy_from_slice(&u[..5]);
        c.regress.copy_from_slice(&u[5..9]);
        c
    }
}
