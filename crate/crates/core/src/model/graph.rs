//! The network recorded on an autodiff [`Tape`].
//!
//! [`bind`] pushes every raw parameter as an input leaf (in
//! [`Network::flatten`] order) and applies the non-negative map once, so a
//! single binding can be shared by many samples on the same tape.

use num_traits::Float;

use super::{ModelError, Network, NonNegMap};
use crate::autodiff::{Gradient, Tape, Var};

struct BoundLayer {
    alpha: Var,
    gamma: Var,
    m_time: Var,
    m_grade: Var,
    c_time: Var,
    c_grade: Var,
    beta: Var,
    c_z0: Var,
    a: Var,
    c: Var,
    b: Var,
    sig_c_time: Var,
}

/// Network parameters living on a tape.
pub struct BoundNetwork {
    layers: Vec<BoundLayer>,
    leaves: Vec<(Var, usize)>,
    inv_t_scale: Var,
    half: Var,
}

impl BoundNetwork {
    /// Raw-parameter leaves with their lengths, in flatten order.
    pub fn leaves(&self) -> &[(Var, usize)] {
        &self.leaves
    }

    /// Gradient with respect to all raw parameters, in flatten order.
    pub fn flat_gradient<T: Float>(&self, grad: &Gradient<T>) -> Vec<T> {
        let mut out = Vec::new();
        for &(v, n) in &self.leaves {
            out.extend(grad.wrt(v, n));
        }
        out
    }
}

/// Per-subject nodes that do not depend on `(t, g)`.
pub struct BoundSubject {
    x: Var,
    f: Vec<Var>,
    anchor: Var,
}

impl BoundSubject {
    /// `f_k(z_0)` for each layer.
    pub fn feature_nodes(&self) -> &[Var] {
        &self.f
    }
}

pub fn bind<T: Float>(tape: &mut Tape<T>, net: &Network<T>) -> Result<BoundNetwork, ModelError> {
    let mut leaves = Vec::new();
    let mut layers = Vec::with_capacity(net.layers.len());
    let constrained = |tape: &mut Tape<T>, v: Var| -> Result<Var, ModelError> {
        Ok(match net.nonneg {
            NonNegMap::Softplus => tape.softplus(v)?,
            NonNegMap::Unconstrained => v,
        })
    };
    for l in &net.layers {
        let mut leaf = |tape: &mut Tape<T>, v: &[T]| {
            let var = tape.input(v.to_vec());
            leaves.push((var, v.len()));
            var
        };
        let raw_alpha = leaf(tape, &l.raw_alpha);
        let raw_gamma = leaf(tape, &l.raw_gamma);
        let raw_m_time = leaf(tape, &l.raw_m_time);
        let raw_m_grade = leaf(tape, &l.raw_m_grade);
        let c_time = leaf(tape, &l.c_time);
        let c_grade = leaf(tape, &l.c_grade);
        let beta = leaf(tape, &l.beta);
        let c_z0 = leaf(tape, &l.c_z0);
        let mut mleaf = |tape: &mut Tape<T>, m: &super::Matrix<T>| {
            let var = tape.matrix_input(m.rows, m.cols, m.data.clone());
            leaves.push((var, m.data.len()));
            var
        };
        let raw_a = mleaf(tape, &l.raw_a);
        let c = mleaf(tape, &l.c);
        let b = mleaf(tape, &l.b);

        let sig_c_time = tape.sigmoid(c_time)?;
        layers.push(BoundLayer {
            alpha: constrained(tape, raw_alpha)?,
            gamma: constrained(tape, raw_gamma)?,
            m_time: constrained(tape, raw_m_time)?,
            m_grade: constrained(tape, raw_m_grade)?,
            c_time,
            c_grade,
            beta,
            c_z0,
            a: constrained(tape, raw_a)?,
            c,
            b,
            sig_c_time,
        });
    }
    let inv_t_scale = tape.scalar_constant(T::one() / net.t_scale);
    let half = tape.scalar_constant(T::from(0.5).unwrap());
    Ok(BoundNetwork { layers, leaves, inv_t_scale, half })
}

/// Records `f_k(z_0)` for every layer and the `t = 0` anchor.
pub fn bind_subject<T: Float>(tape: &mut Tape<T>, net: &BoundNetwork, x: &[T]) -> Result<BoundSubject, ModelError> {
    let x = tape.constant(x.to_vec());
    let mut f: Vec<Var> = Vec::with_capacity(net.layers.len());
    for (k, l) in net.layers.iter().enumerate() {
        let mut pre = tape.matvec(l.b, x)?;
        if k > 0 {
            let cf = tape.matvec(l.c, f[k - 1])?;
            pre = tape.add(pre, cf)?;
        }
        let pre = tape.add(pre, l.c_z0)?;
        let hs = tape.hardsigmoid(pre)?;
        f.push(tape.sub(hs, net.half)?);
    }

    // t = 0: z_k = act(A_k z_{k-1} + f_k + beta_k), constant in t and g.
    let mut z = x;
    let last = net.layers.len() - 1;
    for (k, l) in net.layers.iter().enumerate() {
        let az = tape.matvec(l.a, z)?;
        let u = tape.add(az, f[k])?;
        let u = tape.add(u, l.beta)?;
        z = if k == last { u } else { tape.tanh(u)? };
    }
    Ok(BoundSubject { x, f, anchor: z })
}

/// Last-layer output at `(t, g)`; `t` is in raw time units.
pub fn m_raw<T: Float>(
    tape: &mut Tape<T>,
    net: &BoundNetwork,
    subject: &BoundSubject,
    t: Var,
    g: Var,
) -> Result<Var, ModelError> {
    let ts = tape.mul(t, net.inv_t_scale)?;
    let mut z = subject.x;
    let last = net.layers.len() - 1;
    for (k, l) in net.layers.iter().enumerate() {
        let mt = tape.mul(l.m_time, ts)?;
        let mt = tape.add(mt, l.c_time)?;
        let rise = tape.sigmoid(mt)?;
        let rise = tape.sub(rise, l.sig_c_time)?;
        let mg = tape.mul(l.m_grade, g)?;
        let mg = tape.sub(l.c_grade, mg)?;
        let fall = tape.sigmoid(mg)?;
        let h = tape.mul(rise, fall)?;

        let at = tape.mul(l.alpha, ts)?;
        let gh = tape.mul(l.gamma, h)?;
        let az = tape.matvec(l.a, z)?;
        let u = tape.add(at, gh)?;
        let u = tape.add(u, az)?;
        let u = tape.add(u, subject.f[k])?;
        let u = tape.add(u, l.beta)?;
        z = if k == last { u } else { tape.tanh(u)? };
    }
    Ok(z)
}

/// `tanh(z_K(t, g) - z_K(0, g))`, capped at [`super::cif_ceiling`]. A capped
/// value is recorded as a constant; tanh has zero slope there anyway.
pub fn cif<T: Float>(
    tape: &mut Tape<T>,
    net: &BoundNetwork,
    subject: &BoundSubject,
    t: Var,
    g: Var,
) -> Result<Var, ModelError> {
    let m = m_raw(tape, net, subject, t, g)?;
    let d = tape.sub(m, subject.anchor)?;
    let c = tape.tanh(d)?;
    let ceiling = super::cif_ceiling();
    Ok(if tape.scalar(c) > ceiling { tape.scalar_constant(ceiling) } else { c })
}

/// Value of `cif` and its partial derivatives in `t` and `g`.
pub fn cif_with_tg_gradient<T: Float>(net: &Network<T>, t: T, g: T, x: &[T]) -> Result<(T, T, T), ModelError> {
    let mut tape = Tape::new();
    let bound = bind(&mut tape, net)?;
    let subject = bind_subject(&mut tape, &bound, x)?;
    let tv = tape.scalar_input(t);
    let gv = tape.scalar_input(g);
    let out = cif(&mut tape, &bound, &subject, tv, gv)?;
    let grad = tape.backward(out)?;
    Ok((tape.scalar(out), grad.scalar(tv), grad.scalar(gv)))
}

/// Value of `m_raw` and its partial derivatives in `t` and `g`.
pub fn m_raw_with_tg_gradient<T: Float>(net: &Network<T>, t: T, g: T, x: &[T]) -> Result<(T, T, T), ModelError> {
    let mut tape = Tape::new();
    let bound = bind(&mut tape, net)?;
    let subject = bind_subject(&mut tape, &bound, x)?;
    let tv = tape.scalar_input(t);
    let gv = tape.scalar_input(g);
    let out = m_raw(&mut tape, &bound, &subject, tv, gv)?;
    let grad = tape.backward(out)?;
    Ok((tape.scalar(out), grad.scalar(tv), grad.scalar(gv)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tape_matches_plain_forward() {
        let mut net = Network::<f64>::init(21, 5, &[6, 6, 1]).unwrap();
        net.t_scale = 10.0;
        let x = [0.4, -1.1, 0.0, 2.0, 1.0];
        let ev = net.evaluator();
        for &(t, g) in &[(0.0, 1.0), (3.0, 2.0), (9.5, 5.0), (1.0, 0.01)] {
            let (v, _, _) = cif_with_tg_gradient(&net, t, g, &x).unwrap();
            let plain = ev.cif(t, g, &x).unwrap();
            assert!((v - plain).abs() < 1e-15, "{v} vs {plain}");
        }
    }

    #[test]
    fn anchor_gradient_is_zero_at_origin() {
        let net = Network::<f64>::init(2, 3, &[4, 1]).unwrap();
        let (v, dt, dg) = cif_with_tg_gradient(&net, 0.0, 2.0, &[1.0, 0.0, -1.0]).unwrap();
        assert_eq!(v, 0.0);
        assert!(dt >= 0.0);
        assert_eq!(dg, 0.0);
    }

    #[test]
    fn flat_gradient_has_param_count() {
        let net = Network::<f64>::init(2, 3, &[4, 1]).unwrap();
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &net).unwrap();
        let s = bind_subject(&mut tape, &bound, &[0.1, 0.2, 0.3]).unwrap();
        let t = tape.scalar_constant(1.0);
        let g = tape.scalar_constant(1.0);
        let out = cif(&mut tape, &bound, &s, t, g).unwrap();
        let grad = tape.backward(out).unwrap();
        assert_eq!(bound.flat_gradient(&grad).len(), net.num_params());
    }
}
