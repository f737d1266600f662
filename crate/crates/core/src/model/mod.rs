//! Partially monotone network for cumulative incidence surfaces.
//!
//! Layer `k` computes
//!
//! ```text
//! z_k = act_k(alpha_k * t + gamma_k ⋄ h_k(t, g) + A_k z_{k-1} + f_k(z_0) + beta_k)
//! h_k(t, g) = [sigm(M_time_k t + c_time_k) - sigm(c_time_k)] ⋄ sigm(-M_grade_k g + c_grade_k)
//! f_k(z_0) = hardsigmoid(C_k f_{k-1}(z_0) + B_k z_0 + c_z0_k) - 1/2,   f_0 = 0
//! ```
//!
//! with `act_k = tanh` for hidden layers and the identity for the last,
//! scalar layer. `alpha`, `gamma`, `M_time`, `M_grade` and `A` are kept
//! non-negative through a softplus map of unconstrained raw values, so the
//! last-layer output is non-decreasing in `t` and non-increasing in `g`.
//! The cumulative incidence is `tanh(z_K(t, g) - z_K(0, g))`, which is zero at
//! `t = 0` and lies in `[0, 1)`.
//!
//! Two evaluation routes exist: [`Evaluator`] is a plain forward pass used
//! for inference and surfaces, and [`graph`] records the same computation on
//! an autodiff tape for training and gradient audits.

mod eval;
pub mod graph;
mod io;

pub use eval::{predict_dataset, CifSurface, Evaluator, SubjectCache};
pub use io::{MODEL_FORMAT, MODEL_VERSION};

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{sigmoid, softplus, AutodiffError};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("widths must be non-empty and end in 1, got {0:?}")]
    Widths(Vec<usize>),
    #[error("{what}: expected length {expected}, got {got}")]
    Dim { what: &'static str, expected: usize, got: usize },
    #[error("time must be non-negative and finite, got {0}")]
    NegativeTime(f64),
    #[error("grade must be finite, got {0}")]
    BadGrade(f64),
    #[error("empty evaluation grid")]
    EmptyGrid,
    #[error("grid must be ascending")]
    UnsortedGrid,
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Float> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .map(|row| row.iter().zip(x).fold(T::zero(), |s, (&w, &v)| s + w * v))
            .collect()
    }

    fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

/// How raw values become the non-negative weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonNegMap {
    Softplus,
    /// Raw values used as-is. No monotonicity guarantee; only for negative
    /// controls in the invariant checker.
    Unconstrained,
}

impl NonNegMap {
    pub fn apply<T: Float>(self, raw: T) -> T {
        match self {
            NonNegMap::Softplus => softplus(raw),
            NonNegMap::Unconstrained => raw,
        }
    }

    /// `d apply / d raw`.
    pub fn derivative<T: Float>(self, raw: T) -> T {
        match self {
            NonNegMap::Softplus => sigmoid(raw),
            NonNegMap::Unconstrained => T::one(),
        }
    }

    /// Raw value that maps to exactly zero.
    pub fn zero_raw<T: Float>(self) -> T {
        match self {
            NonNegMap::Softplus => T::from(-1e4).unwrap(),
            NonNegMap::Unconstrained => T::zero(),
        }
    }
}

/// Largest value below 1. `tanh` rounds to exactly 1 for arguments past
/// about 19 in `f64`; predicted CIFs are capped here to stay in `[0, 1)`.
pub fn cif_ceiling<T: Float>() -> T {
    T::one() - T::epsilon() / (T::one() + T::one())
}

/// Softplus mapping a raw value to a non-negative weight.
pub fn constrain<T: Float>(raw: T) -> T {
    softplus(raw)
}

/// Inverse of [`constrain`] for `y > 0`.
pub fn unconstrain<T: Float>(y: T) -> T {
    y.exp_m1().ln()
}

/// Unconstrained parameters of one layer. `raw_*` fields and `raw_a` pass
/// through the non-negative map; the rest are used directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams<T> {
    pub raw_alpha: Vec<T>,
    pub raw_gamma: Vec<T>,
    pub raw_m_time: Vec<T>,
    pub raw_m_grade: Vec<T>,
    pub c_time: Vec<T>,
    pub c_grade: Vec<T>,
    pub beta: Vec<T>,
    pub c_z0: Vec<T>,
    /// `width x previous width`, mapped to the non-negative `A_k`.
    pub raw_a: Matrix<T>,
    /// `width x previous width`, applied to `f_{k-1}`.
    pub c: Matrix<T>,
    /// `width x input_dim`, applied to `z_0`.
    pub b: Matrix<T>,
}

impl<T: Float> LayerParams<T> {
    pub fn width(&self) -> usize {
        self.beta.len()
    }

    pub fn prev_width(&self) -> usize {
        self.raw_a.cols
    }

    /// Positions in [`Self::slices`] that pass through the non-negative map.
    const NONNEG_SLICES: [usize; 5] = [0, 1, 2, 3, 8];

    fn slices(&self) -> [&[T]; 11] {
        [
            &self.raw_alpha,
            &self.raw_gamma,
            &self.raw_m_time,
            &self.raw_m_grade,
            &self.c_time,
            &self.c_grade,
            &self.beta,
            &self.c_z0,
            &self.raw_a.data,
            &self.c.data,
            &self.b.data,
        ]
    }

    fn slices_mut(&mut self) -> [&mut [T]; 11] {
        [
            &mut self.raw_alpha,
            &mut self.raw_gamma,
            &mut self.raw_m_time,
            &mut self.raw_m_grade,
            &mut self.c_time,
            &mut self.c_grade,
            &mut self.beta,
            &mut self.c_z0,
            &mut self.raw_a.data,
            &mut self.c.data,
            &mut self.b.data,
        ]
    }

    fn check_shapes(&self, prev: usize, input_dim: usize) -> Result<(), ModelError> {
        let w = self.width();
        let vectors = [
            ("raw_alpha", &self.raw_alpha),
            ("raw_gamma", &self.raw_gamma),
            ("raw_m_time", &self.raw_m_time),
            ("raw_m_grade", &self.raw_m_grade),
            ("c_time", &self.c_time),
            ("c_grade", &self.c_grade),
            ("c_z0", &self.c_z0),
        ];
        for (what, v) in vectors {
            if v.len() != w {
                return Err(ModelError::Dim { what, expected: w, got: v.len() });
            }
        }
        let mats = [("raw_a", &self.raw_a, prev), ("c", &self.c, prev), ("b", &self.b, input_dim)];
        for (what, m, cols) in mats {
            if m.rows != w || m.cols != cols || m.data.len() != w * cols {
                return Err(ModelError::Dim { what, expected: w * cols, got: m.data.len() });
            }
        }
        Ok(())
    }
}

/// Full network: layers plus the time scale and grade step it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network<T> {
    pub input_dim: usize,
    pub layers: Vec<LayerParams<T>>,
    /// Times enter the network as `t / t_scale`.
    pub t_scale: T,
    pub delta_g: T,
    pub nonneg: NonNegMap,
}

impl<T: Float> Network<T> {
    /// Random initialization. `widths` lists every layer width, ending in 1.
    ///
    /// Free weights are Glorot-uniform, biases start at zero, and raw values
    /// behind the non-negative map start at the softplus-inverse of draws from
    /// `U(0.01, 0.09)` so the initial monotone slopes are small.
    pub fn init(seed: u64, input_dim: usize, widths: &[usize]) -> Result<Self, ModelError> {
        if widths.is_empty() || *widths.last().unwrap() != 1 || widths.contains(&0) || input_dim == 0 {
            return Err(ModelError::Widths(widths.to_vec()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = |v: f64| T::from(v).unwrap();
        let small_pos = |n: usize, rng: &mut ChaCha8Rng| -> Vec<T> {
            (0..n).map(|_| unconstrain(t(rng.random_range(0.01..0.09)))).collect()
        };
        let glorot = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| -> Matrix<T> {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            Matrix { rows, cols, data: (0..rows * cols).map(|_| t(rng.random_range(-a..a))).collect() }
        };

        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = input_dim;
        for &w in widths {
            let raw_alpha = small_pos(w, &mut rng);
            let raw_gamma = small_pos(w, &mut rng);
            let raw_m_time = small_pos(w, &mut rng);
            let raw_m_grade = small_pos(w, &mut rng);
            let raw_a_data = small_pos(w * prev, &mut rng);
            let c = glorot(w, prev, &mut rng);
            let b = glorot(w, input_dim, &mut rng);
            layers.push(LayerParams {
                raw_alpha,
                raw_gamma,
                raw_m_time,
                raw_m_grade,
                c_time: vec![T::zero(); w],
                c_grade: vec![T::zero(); w],
                beta: vec![T::zero(); w],
                c_z0: vec![T::zero(); w],
                raw_a: Matrix { rows: w, cols: prev, data: raw_a_data },
                c,
                b,
            });
            prev = w;
        }
        Ok(Self { input_dim, layers, t_scale: T::one(), delta_g: T::one(), nonneg: NonNegMap::Softplus })
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(LayerParams::width).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.slices().iter().map(|s| s.len()).sum::<usize>()).sum()
    }

    /// All raw parameters in a fixed order (layer by layer, fields in
    /// declaration order, matrices row-major).
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            for s in l.slices() {
                out.extend_from_slice(s);
            }
        }
        out
    }

    /// Gradient of half the squared norm of the weights as the network uses
    /// them, in [`Network::flatten`] order: free parameters pass through,
    /// non-negative ones contribute `w * dw/draw` with `w` the mapped value.
    pub fn effective_decay_direction(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            for (i, s) in l.slices().iter().enumerate() {
                if LayerParams::<T>::NONNEG_SLICES.contains(&i) {
                    out.extend(s.iter().map(|&r| self.nonneg.apply(r) * self.nonneg.derivative(r)));
                } else {
                    out.extend_from_slice(s);
                }
            }
        }
        out
    }

    /// Inverse of [`Network::flatten`].
    pub fn assign(&mut self, flat: &[T]) -> Result<(), ModelError> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(ModelError::Dim { what: "flat parameters", expected: n, got: flat.len() });
        }
        let mut at = 0;
        for l in &mut self.layers {
            for s in l.slices_mut() {
                s.copy_from_slice(&flat[at..at + s.len()]);
                at += s.len();
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers.is_empty() || self.layers.last().unwrap().width() != 1 {
            return Err(ModelError::Widths(self.widths()));
        }
        let mut prev = self.input_dim;
        for l in &self.layers {
            l.check_shapes(prev, self.input_dim)?;
            prev = l.width();
        }
        if !(self.t_scale > T::zero()) || !self.t_scale.is_finite() {
            return Err(ModelError::Format("t_scale must be positive".into()));
        }
        if !(self.delta_g > T::zero()) || !self.delta_g.is_finite() {
            return Err(ModelError::Format("delta_g must be positive".into()));
        }
        if self.flatten().iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Format("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Cuts every path from input feature `j` into the network: zeroes column
    /// `j` of each `B_k` and of the first layer's `A_1`.
    pub fn silence_input(&mut self, j: usize) {
        let zero_raw = self.nonneg.zero_raw::<T>();
        for (k, l) in self.layers.iter_mut().enumerate() {
            for r in 0..l.b.rows {
                l.b.set(r, j, T::zero());
            }
            if k == 0 {
                for r in 0..l.raw_a.rows {
                    l.raw_a.set(r, j, zero_raw);
                }
            }
        }
    }

    pub fn evaluator(&self) -> Evaluator<'_, T> {
        Evaluator::new(self)
    }

    /// Predicted cumulative incidence of grade `g` by time `t` for features `x`.
    pub fn cif(&self, t: T, g: T, x: &[T]) -> Result<T, ModelError> {
        self.evaluator().cif(t, g, x)
    }
}

/// Layer parameters after the non-negative map.
#[derive(Debug, Clone)]
pub(crate) struct ConstrainedLayer<T> {
    pub alpha: Vec<T>,
    pub gamma: Vec<T>,
    pub m_time: Vec<T>,
    pub m_grade: Vec<T>,
    pub a: Matrix<T>,
}

impl<T: Float> ConstrainedLayer<T> {
    pub fn new(l: &LayerParams<T>, map: NonNegMap) -> Self {
        let f = |v: &Vec<T>| v.iter().map(|&x| map.apply(x)).collect();
        Self {
            alpha: f(&l.raw_alpha),
            gamma: f(&l.raw_gamma),
            m_time: f(&l.raw_m_time),
            m_grade: f(&l.raw_m_grade),
            a: l.raw_a.map(|x| map.apply(x)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = Network::<f64>::init(5, 32, &[32, 32, 32, 1]).unwrap();
        let b = Network::<f64>::init(5, 32, &[32, 32, 32, 1]).unwrap();
        assert_eq!(
            a.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(a.layers.len(), 4);
        assert_eq!(a.widths(), vec![32, 32, 32, 1]);
        a.validate().unwrap();
        let c = Network::<f64>::init(6, 32, &[32, 32, 32, 1]).unwrap();
        assert_ne!(a.flatten(), c.flatten());

        let five = Network::<f64>::init(1, 32, &[32, 32, 32, 32, 1]).unwrap();
        assert_eq!(five.layers.len(), 5);
        assert_eq!(five.layers[4].width(), 1);
    }

    #[test]
    fn init_rejects_non_scalar_output() {
        assert!(matches!(Network::<f64>::init(0, 3, &[4, 2]), Err(ModelError::Widths(_))));
        assert!(matches!(Network::<f64>::init(0, 3, &[]), Err(ModelError::Widths(_))));
    }

    #[test]
    fn initial_nonneg_weights_are_small() {
        let net = Network::<f64>::init(9, 8, &[16, 1]).unwrap();
        let c = ConstrainedLayer::new(&net.layers[0], net.nonneg);
        let mean = c.a.data.iter().sum::<f64>() / c.a.data.len() as f64;
        assert!((mean - 0.05).abs() < 0.01, "{mean}");
        assert!(c.a.data.iter().all(|&v| v > 0.0 && v < 0.1));
    }

    #[test]
    fn flatten_assign_roundtrip() {
        let mut net = Network::<f64>::init(3, 4, &[3, 1]).unwrap();
        let mut flat = net.flatten();
        assert_eq!(flat.len(), net.num_params());
        flat[0] = 42.0;
        net.assign(&flat).unwrap();
        assert_eq!(net.layers[0].raw_alpha[0], 42.0);
        assert!(net.assign(&flat[1..]).is_err());
    }

    #[test]
    fn constrain_examples() {
        assert!((constrain(0.0_f64) - std::f64::consts::LN_2).abs() < 1e-15);
        let tiny = constrain(-40.0_f64);
        assert!(tiny > 0.0 && tiny < 1e-17);
        assert!((constrain(40.0_f64) - 40.0).abs() < 1e-12);
        assert!((constrain(unconstrain(0.05_f64)) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn silenced_input_has_zero_weights() {
        let mut net = Network::<f64>::init(3, 4, &[3, 3, 1]).unwrap();
        net.silence_input(2);
        let c = ConstrainedLayer::new(&net.layers[0], net.nonneg);
        for r in 0..3 {
            assert_eq!(c.a.get(r, 2), 0.0);
            assert_eq!(net.layers[0].b.get(r, 2), 0.0);
            assert_eq!(net.layers[1].b.get(r, 2), 0.0);
        }
    }

    #[test]
    fn effective_decay_is_gradient_of_mapped_penalty() {
        let net = Network::<f64>::init(5, 3, &[2, 1]).unwrap();
        let penalty = |flat: &[f64]| {
            let mut n = net.clone();
            n.assign(flat).unwrap();
            let mut sum = 0.0;
            for l in &n.layers {
                let c = ConstrainedLayer::new(l, n.nonneg);
                let mapped = [&c.alpha, &c.gamma, &c.m_time, &c.m_grade, &c.a.data];
                let free = [&l.c_time, &l.c_grade, &l.beta, &l.c_z0, &l.c.data, &l.b.data];
                for v in mapped.into_iter().chain(free) {
                    sum += v.iter().map(|x| x * x).sum::<f64>() / 2.0;
                }
            }
            sum
        };
        let err = crate::autodiff::finite_diff_check(penalty, &net.effective_decay_direction(), &net.flatten(), 1e-6);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn ceiling_is_the_float_below_one() {
        assert_eq!(cif_ceiling::<f64>(), 1.0 - f64::EPSILON / 2.0);
        assert!(cif_ceiling::<f64>() < 1.0 && (cif_ceiling::<f64>() + f64::EPSILON / 4.0) == 1.0);
        assert!(cif_ceiling::<f32>() < 1.0);
    }
}
