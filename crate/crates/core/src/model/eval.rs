use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{ConstrainedLayer, ModelError, Network};
use crate::autodiff::{hardsigmoid, sigmoid};
use crate::data::{Dataset, SubjectId};
use rayon::prelude::*;

/// Predicted CIF over a time x grade grid for one subject; `values[i][j]` is
/// the value at `t_grid[i]`, `g_grid[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CifSurface<T> {
    pub subject_id: SubjectId,
    pub t_grid: Vec<f64>,
    pub g_grid: Vec<f64>,
    pub values: Vec<Vec<T>>,
}

impl<T: Clone> CifSurface<T> {
    pub fn at(&self, ti: usize, gi: usize) -> T {
        self.values[ti][gi].clone()
    }

    /// Column for one grade, over all times.
    pub fn grade_column(&self, gi: usize) -> Vec<T> {
        self.values.iter().map(|row| row[gi].clone()).collect()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.t_grid.len(), self.g_grid.len())
    }
}

/// Per-subject quantities that do not depend on `(t, g)`.
#[derive(Debug, Clone)]
pub struct SubjectCache<T> {
    pub x: Vec<T>,
    /// `f_1(z_0), ..., f_K(z_0)`.
    pub f: Vec<Vec<T>>,
    /// Last-layer output at `t = 0`.
    pub anchor: T,
}

/// Plain forward evaluation with the non-negative map applied once.
pub struct Evaluator<'a, T> {
    net: &'a Network<T>,
    layers: Vec<ConstrainedLayer<T>>,
    sig_c_time: Vec<Vec<T>>,
}

impl<'a, T: Float> Evaluator<'a, T> {
    pub fn new(net: &'a Network<T>) -> Self {
        let layers = net.layers.iter().map(|l| ConstrainedLayer::new(l, net.nonneg)).collect();
        let sig_c_time = net.layers.iter().map(|l| l.c_time.iter().map(|&c| sigmoid(c)).collect()).collect();
        Self { net, layers, sig_c_time }
    }

    pub fn network(&self) -> &Network<T> {
        self.net
    }

    /// `f_k(z_0)` for every layer.
    pub fn feature_path(&self, x: &[T]) -> Result<Vec<Vec<T>>, ModelError> {
        if x.len() != self.net.input_dim {
            return Err(ModelError::Dim { what: "features", expected: self.net.input_dim, got: x.len() });
        }
        let half = T::from(0.5).unwrap();
        let mut out: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        for (k, raw) in self.net.layers.iter().enumerate() {
            let mut pre = raw.b.matvec(x);
            if k > 0 {
                for (p, v) in pre.iter_mut().zip(raw.c.matvec(&out[k - 1])) {
                    *p = *p + v;
                }
            }
            let fk = pre.iter().zip(&raw.c_z0).map(|(&p, &c)| hardsigmoid(p + c) - half).collect();
            out.push(fk);
        }
        Ok(out)
    }

    /// `h_k(t, g)` with `t` already divided by the time scale.
    pub fn h(&self, k: usize, t_scaled: T, g: T) -> Vec<T> {
        let (c, raw) = (&self.layers[k], &self.net.layers[k]);
        (0..raw.width())
            .map(|i| {
                let rise = sigmoid(c.m_time[i] * t_scaled + raw.c_time[i]) - self.sig_c_time[k][i];
                rise * sigmoid(raw.c_grade[i] - c.m_grade[i] * g)
            })
            .collect()
    }

    /// One layer: `act(alpha t + gamma ⋄ h + A z_prev + f_k + beta)`.
    pub fn layer_forward(&self, k: usize, t_scaled: T, g: T, z_prev: &[T], f_k: &[T]) -> Vec<T> {
        let (c, raw) = (&self.layers[k], &self.net.layers[k]);
        let h = self.h(k, t_scaled, g);
        let az = c.a.matvec(z_prev);
        let last = k + 1 == self.layers.len();
        (0..raw.width())
            .map(|i| {
                let u = c.alpha[i] * t_scaled + c.gamma[i] * h[i] + az[i] + f_k[i] + raw.beta[i];
                if last {
                    u
                } else {
                    u.tanh()
                }
            })
            .collect()
    }

    /// Outputs of every layer at `(t, g)`.
    pub fn layer_outputs(&self, cache: &SubjectCache<T>, t: T, g: T) -> Vec<Vec<T>> {
        let ts = t * (T::one() / self.net.t_scale);
        let mut outs: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        for k in 0..self.layers.len() {
            let z = {
                let prev = if k == 0 { &cache.x } else { &outs[k - 1] };
                self.layer_forward(k, ts, g, prev, &cache.f[k])
            };
            outs.push(z);
        }
        outs
    }

    pub fn m_raw_cached(&self, cache: &SubjectCache<T>, t: T, g: T) -> T {
        self.layer_outputs(cache, t, g).last().unwrap()[0]
    }

    pub fn subject(&self, x: &[T]) -> Result<SubjectCache<T>, ModelError> {
        let f = self.feature_path(x)?;
        let mut cache = SubjectCache { x: x.to_vec(), f, anchor: T::zero() };
        // At t = 0 every layer reduces to act(A z_prev + f_k + beta): no g dependence.
        cache.anchor = self.m_raw_cached(&cache, T::zero(), self.net.delta_g);
        Ok(cache)
    }

    /// Last-layer output before anchoring.
    pub fn m_raw(&self, t: T, g: T, x: &[T]) -> Result<T, ModelError> {
        check_tg(t, g)?;
        let cache = self.subject(x)?;
        Ok(self.m_raw_cached(&cache, t, g))
    }

    pub fn cif_cached(&self, cache: &SubjectCache<T>, t: T, g: T) -> T {
        (self.m_raw_cached(cache, t, g) - cache.anchor).tanh().min(super::cif_ceiling())
    }

    pub fn cif(&self, t: T, g: T, x: &[T]) -> Result<T, ModelError> {
        check_tg(t, g)?;
        let cache = self.subject(x)?;
        Ok(self.cif_cached(&cache, t, g))
    }

    pub fn surface(
        &self,
        subject_id: SubjectId,
        x: &[T],
        t_grid: &[f64],
        g_grid: &[f64],
    ) -> Result<CifSurface<T>, ModelError> {
        check_grid(t_grid)?;
        check_grid(g_grid)?;
        let to_t = |v: f64| T::from(v).unwrap();
        check_tg(to_t(t_grid[0]), to_t(g_grid[0]))?;
        let cache = self.subject(x)?;
        let values = t_grid
            .iter()
            .map(|&t| g_grid.iter().map(|&g| self.cif_cached(&cache, to_t(t), to_t(g))).collect())
            .collect();
        Ok(CifSurface { subject_id, t_grid: t_grid.to_vec(), g_grid: g_grid.to_vec(), values })
    }
}

/// Surfaces for every subject of `data`, in dataset order.
pub fn predict_dataset<T: Float + Send + Sync>(
    net: &Network<T>,
    data: &Dataset,
    t_grid: &[f64],
    g_grid: &[f64],
) -> Result<Vec<CifSurface<T>>, ModelError> {
    let ev = net.evaluator();
    data.subjects
        .par_iter()
        .map(|s| {
            let x: Vec<T> = s.features.iter().map(|&v| T::from(v).unwrap()).collect();
            ev.surface(s.id, &x, t_grid, g_grid)
        })
        .collect()
}

fn check_tg<T: Float>(t: T, g: T) -> Result<(), ModelError> {
    if !(t >= T::zero()) || !t.is_finite() {
        return Err(ModelError::NegativeTime(t.to_f64().unwrap_or(f64::NAN)));
    }
    if !g.is_finite() {
        return Err(ModelError::BadGrade(g.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(())
}

fn check_grid(grid: &[f64]) -> Result<(), ModelError> {
    if grid.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ModelError::UnsortedGrid);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{unconstrain, LayerParams, Matrix, NonNegMap};

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Single scalar layer with every non-negative weight equal to `w` after the map.
    fn scalar_net(w: f64) -> Network<f64> {
        let r = unconstrain(w);
        Network {
            input_dim: 1,
            layers: vec![LayerParams {
                raw_alpha: vec![r],
                raw_gamma: vec![r],
                raw_m_time: vec![r],
                raw_m_grade: vec![r],
                c_time: vec![0.0],
                c_grade: vec![0.0],
                beta: vec![0.0],
                c_z0: vec![0.0],
                raw_a: Matrix { rows: 1, cols: 1, data: vec![r] },
                c: Matrix::zeros(1, 1),
                b: Matrix { rows: 1, cols: 1, data: vec![1.0] },
            }],
            t_scale: 1.0,
            delta_g: 1.0,
            nonneg: NonNegMap::Softplus,
        }
    }

    #[test]
    fn h_hand_value() {
        let net = scalar_net(1.0);
        let ev = net.evaluator();
        let h = ev.h(0, 1.0, 1.0)[0];
        let expected = (sig(1.0) - 0.5) * sig(-1.0);
        assert!((h - expected).abs() < 1e-12);
        assert!((h - 0.062_141_2).abs() < 1e-7);
        assert_eq!(ev.h(0, 0.0, 3.0)[0], 0.0);
    }

    #[test]
    fn h_large_time_limit() {
        let net = scalar_net(1.0);
        let ev = net.evaluator();
        let h = ev.h(0, 1e3, 2.0)[0];
        assert!((h - (1.0 - 0.5) * sig(-2.0)).abs() < 1e-12);
    }

    #[test]
    fn f_saturates_and_zero_preactivation_is_zero() {
        let net = scalar_net(1.0);
        let ev = net.evaluator();
        assert_eq!(ev.feature_path(&[9.0]).unwrap()[0], vec![0.5]);
        let mut zero = scalar_net(1.0);
        zero.layers[0].b.data[0] = 0.0;
        assert_eq!(zero.evaluator().feature_path(&[9.0]).unwrap()[0], vec![0.0]);
    }

    #[test]
    fn two_unit_layer_matches_direct_formula() {
        // Raw zeros everywhere: non-negative weights become ln 2.
        let ln2 = std::f64::consts::LN_2;
        let l = LayerParams {
            raw_alpha: vec![0.0; 2],
            raw_gamma: vec![0.0; 2],
            raw_m_time: vec![0.0; 2],
            raw_m_grade: vec![0.0; 2],
            c_time: vec![0.0; 2],
            c_grade: vec![0.0; 2],
            beta: vec![0.0; 2],
            c_z0: vec![0.0; 2],
            raw_a: Matrix::zeros(2, 2),
            c: Matrix::zeros(2, 2),
            b: Matrix::zeros(2, 2),
        };
        let mut out = l.clone();
        out.raw_alpha.truncate(1);
        out.raw_gamma.truncate(1);
        out.raw_m_time.truncate(1);
        out.raw_m_grade.truncate(1);
        out.c_time.truncate(1);
        out.c_grade.truncate(1);
        out.beta.truncate(1);
        out.c_z0.truncate(1);
        out.raw_a = Matrix::zeros(1, 2);
        out.c = Matrix::zeros(1, 2);
        out.b = Matrix::zeros(1, 2);
        let net =
            Network { input_dim: 2, layers: vec![l, out], t_scale: 1.0, delta_g: 1.0, nonneg: NonNegMap::Softplus };
        let ev = net.evaluator();
        let x = [0.3, -0.8];
        let (t, g) = (0.5, 2.0);
        let z = ev.layer_forward(0, t, g, &x, &[0.0, 0.0]);
        let h = (sig(ln2 * t) - 0.5) * sig(-ln2 * g);
        let expected = (ln2 * t + ln2 * h + ln2 * (x[0] + x[1])).tanh();
        assert!((z[0] - expected).abs() < 1e-15);
        assert_eq!(z[0], z[1]);

        // t = 0 reduces to act(A z_prev + f + beta), independent of g.
        let z0a = ev.layer_forward(0, 0.0, 1.0, &x, &[0.1, 0.2]);
        let z0b = ev.layer_forward(0, 0.0, 7.0, &x, &[0.1, 0.2]);
        assert_eq!(z0a, z0b);
        assert!((z0a[0] - (ln2 * (x[0] + x[1]) + 0.1).tanh()).abs() < 1e-15);
    }

    #[test]
    fn scalar_layer_diamond_is_scalar_product() {
        let net = scalar_net(0.7);
        let ev = net.evaluator();
        let z = ev.layer_forward(0, 0.4, 1.5, &[0.2], &[0.0]);
        let h = (sig(0.7 * 0.4) - 0.5) * sig(-0.7 * 1.5);
        assert!((z[0] - (0.7 * 0.4 + 0.7 * h + 0.7 * 0.2)).abs() < 1e-15);
    }

    #[test]
    fn cif_anchoring_and_range() {
        let net = Network::<f64>::init(11, 4, &[5, 5, 1]).unwrap();
        let ev = net.evaluator();
        let x = [0.1, -1.0, 2.0, 0.0];
        for g in [0.5, 1.0, 3.0] {
            assert_eq!(ev.cif(0.0, g, &x).unwrap(), 0.0);
        }
        let v = ev.cif(3.0, 1.0, &x).unwrap();
        assert!((0.0..1.0).contains(&v));
        assert!(matches!(ev.cif(-1.0, 1.0, &x), Err(ModelError::NegativeTime(_))));
        assert!(matches!(ev.cif(1.0, 1.0, &x[..3]), Err(ModelError::Dim { .. })));
    }

    #[test]
    fn surface_shape_and_order() {
        let net = Network::<f64>::init(2, 3, &[4, 4, 1]).unwrap();
        let ev = net.evaluator();
        let one = ev.surface(0, &[0.5, 0.5, 1.0], &[0.0], &[1.0]).unwrap();
        assert_eq!(one.values, vec![vec![0.0]]);

        let t: Vec<f64> = (0..10).map(f64::from).collect();
        let g: Vec<f64> = (1..=5).map(f64::from).collect();
        let s = ev.surface(7, &[1.0, -0.3, 0.0], &t, &g).unwrap();
        assert_eq!(s.shape(), (10, 5));
        for j in 0..5 {
            assert_eq!(s.values[0][j], 0.0);
            for i in 1..10 {
                assert!(s.values[i][j] >= s.values[i - 1][j]);
            }
        }
        for row in &s.values {
            for j in 1..5 {
                assert!(row[j] <= row[j - 1]);
            }
        }
        assert!(matches!(ev.surface(0, &[0.0; 3], &[], &g), Err(ModelError::EmptyGrid)));
        assert!(matches!(ev.surface(0, &[0.0; 3], &[2.0, 1.0], &g), Err(ModelError::UnsortedGrid)));
    }

    #[test]
    fn feature_path_ignores_time_and_grade() {
        let net = Network::<f64>::init(4, 3, &[4, 4, 1]).unwrap();
        let ev = net.evaluator();
        let x = [0.3, 1.2, -0.7];
        let cache = ev.subject(&x).unwrap();
        let f = ev.feature_path(&x).unwrap();
        assert_eq!(cache.f, f);
        for f_k in &f {
            assert!(f_k.iter().all(|v| (-0.5..=0.5).contains(v)));
        }
    }
}
