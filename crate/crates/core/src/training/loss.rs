use num_traits::Float;
use rayon::prelude::*;

use super::{TrainError, TrainingSample};
use crate::autodiff::{Tape, Var};
use crate::model::graph::{bind, bind_subject, cif, BoundNetwork};
use crate::model::{Evaluator, Network};

pub const DEFAULT_EPS_CLAMP: f64 = 1e-7;

fn max_eps<T: Float>(v: T, eps: T) -> T {
    if v < eps {
        eps
    } else {
        v
    }
}

/// `-log(max(CIF(t, g) - CIF(t, g + delta_g), eps))` when the event was seen,
/// `-log(max(1 - CIF(t, delta_g), eps))` otherwise.
pub fn loss_dydg<T: Float>(net: &Network<T>, sample: &TrainingSample, x: &[T], eps: T) -> Result<T, TrainError> {
    let ev = net.evaluator();
    let cache = ev.subject(x)?;
    Ok(cached_loss(&ev, &cache, sample, eps))
}

fn cached_loss<T: Float>(
    ev: &Evaluator<'_, T>,
    cache: &crate::model::SubjectCache<T>,
    s: &TrainingSample,
    eps: T,
) -> T {
    let dg = ev.network().delta_g;
    let t = T::from(s.time).unwrap();
    let g = T::from(s.grade).unwrap();
    let arg = if s.label {
        ev.cif_cached(cache, t, g) - ev.cif_cached(cache, t, g + dg)
    } else {
        T::one() - ev.cif_cached(cache, t, dg)
    };
    -max_eps(arg, eps).ln()
}

/// Mean loss over `samples`; `xs[s.index]` holds each sample's features.
pub fn batch_loss<T: Float>(
    net: &Network<T>,
    samples: &[TrainingSample],
    xs: &[Vec<T>],
    eps: T,
) -> Result<T, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let ev = net.evaluator();
    let mut sum = T::zero();
    for s in samples {
        let cache = ev.subject(&xs[s.index])?;
        sum = sum + cached_loss(&ev, &cache, s, eps);
    }
    Ok(sum / T::from(samples.len()).unwrap())
}

/// [`batch_loss`] over a large pool, one subject cache per subject, computed
/// in parallel and summed in sample order.
pub fn pool_loss<T: Float + Send + Sync>(
    net: &Network<T>,
    samples: &[TrainingSample],
    xs: &[Vec<T>],
    eps: T,
) -> Result<T, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let ev = net.evaluator();
    let caches = xs.par_iter().map(|x| ev.subject(x)).collect::<Result<Vec<_>, _>>()?;
    let losses: Vec<T> = samples.par_iter().map(|s| cached_loss(&ev, &caches[s.index], s, eps)).collect();
    let sum = losses.into_iter().fold(T::zero(), |a, b| a + b);
    Ok(sum / T::from(samples.len()).unwrap())
}

/// Records one sample's loss on `tape`. A clamped log argument becomes a
/// constant, so it contributes no gradient.
pub fn sample_loss_on_tape<T: Float>(
    tape: &mut Tape<T>,
    bound: &BoundNetwork,
    net: &Network<T>,
    sample: &TrainingSample,
    x: &[T],
    eps: T,
) -> Result<Var, TrainError> {
    let subject = bind_subject(tape, bound, x)?;
    let t = tape.scalar_constant(T::from(sample.time).unwrap());
    let arg = if sample.label {
        let g = tape.scalar_constant(T::from(sample.grade).unwrap());
        let g2 = tape.scalar_constant(T::from(sample.grade).unwrap() + net.delta_g);
        let c1 = cif(tape, bound, &subject, t, g)?;
        let c2 = cif(tape, bound, &subject, t, g2)?;
        tape.sub(c1, c2)?
    } else {
        let g = tape.scalar_constant(net.delta_g);
        let c = cif(tape, bound, &subject, t, g)?;
        let one = tape.scalar_constant(T::one());
        tape.sub(one, c)?
    };
    let arg = if tape.scalar(arg) < eps { tape.scalar_constant(eps) } else { arg };
    let l = tape.log(arg)?;
    Ok(tape.neg(l)?)
}

/// Mean batch loss and its gradient with respect to the raw parameters in
/// [`Network::flatten`] order.
pub fn batch_loss_and_grad<T: Float>(
    net: &Network<T>,
    samples: &[TrainingSample],
    xs: &[Vec<T>],
    eps: T,
) -> Result<(T, Vec<T>), TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut tape = Tape::with_capacity(samples.len() * 256);
    let bound = bind(&mut tape, net)?;
    let losses = samples
        .iter()
        .map(|s| sample_loss_on_tape(&mut tape, &bound, net, s, &xs[s.index], eps))
        .collect::<Result<Vec<_>, _>>()?;
    let all = tape.concat(&losses)?;
    let mean = tape.mean(all)?;
    let grad = tape.backward(mean)?;
    Ok((tape.scalar(mean), bound.flat_gradient(&grad)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_diff_check;
    use crate::model::NonNegMap;

    fn sample(time: f64, grade: f64, label: bool) -> TrainingSample {
        TrainingSample { index: 0, id: 0, time, grade, label }
    }

    fn net() -> Network<f64> {
        let mut n = Network::init(5, 2, &[3, 1]).unwrap();
        n.t_scale = 4.0;
        n
    }

    #[test]
    fn zero_at_origin_without_event() {
        let l = loss_dydg(&net(), &sample(0.0, 1.0, false), &[0.3, -0.2], DEFAULT_EPS_CLAMP).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn clamp_path_is_finite() {
        // At t = 0 every CIF is zero, so the event branch hits the clamp.
        let l = loss_dydg(&net(), &sample(0.0, 1.0, true), &[0.3, -0.2], DEFAULT_EPS_CLAMP).unwrap();
        assert!((l - (-(1e-7f64).ln())).abs() < 1e-12);
        let (v, g) =
            batch_loss_and_grad(&net(), &[sample(0.0, 1.0, true)], &[vec![0.3, -0.2]], DEFAULT_EPS_CLAMP).unwrap();
        assert_eq!(v, l);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn event_branch_is_minus_log_delta() {
        let n = net();
        let x = [0.7, 0.1];
        let s = sample(3.0, 2.0, true);
        let d = n.cif(3.0, 2.0, &x).unwrap() - n.cif(3.0, 3.0, &x).unwrap();
        let l = loss_dydg(&n, &s, &x, DEFAULT_EPS_CLAMP).unwrap();
        assert!(d > 0.0);
        assert!((l + d.ln()).abs() < 1e-12);
    }

    #[test]
    fn batch_mean_properties() {
        let n = net();
        let xs = vec![vec![0.7, 0.1]];
        let s = sample(3.0, 2.0, true);
        let one = loss_dydg(&n, &s, &xs[0], DEFAULT_EPS_CLAMP).unwrap();
        let b = batch_loss(&n, &[s, s, s], &xs, DEFAULT_EPS_CLAMP).unwrap();
        assert!((b - one).abs() < 1e-15);
        let zero = sample(0.0, 1.0, false);
        let mixed = batch_loss(&n, &[zero, s], &xs, DEFAULT_EPS_CLAMP).unwrap();
        assert!((mixed - one / 2.0).abs() < 1e-15);
        assert!(batch_loss(&n, &[], &xs, DEFAULT_EPS_CLAMP).is_err());
    }

    #[test]
    fn tape_and_plain_agree() {
        let n = net();
        let xs = vec![vec![0.7, 0.1], vec![-1.0, 2.0]];
        let mut b = vec![sample(3.0, 2.0, true), sample(1.0, 1.0, false), sample(4.0, 1.0, true)];
        b[1].index = 1;
        let plain = batch_loss(&n, &b, &xs, DEFAULT_EPS_CLAMP).unwrap();
        let pool = pool_loss(&n, &b, &xs, DEFAULT_EPS_CLAMP).unwrap();
        let (tape, _) = batch_loss_and_grad(&n, &b, &xs, DEFAULT_EPS_CLAMP).unwrap();
        assert!((plain - tape).abs() < 1e-14);
        assert!((plain - pool).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut n = net();
        n.nonneg = NonNegMap::Softplus;
        let xs = vec![vec![0.7, 0.1], vec![-1.0, 2.0]];
        let mut b = vec![sample(3.0, 2.0, true), sample(1.0, 1.0, false), sample(4.0, 1.0, true)];
        b[1].index = 1;
        let (_, g) = batch_loss_and_grad(&n, &b, &xs, DEFAULT_EPS_CLAMP).unwrap();
        let p = n.flatten();
        let f = |q: &[f64]| {
            let mut m = n.clone();
            m.assign(q).unwrap();
            batch_loss(&m, &b, &xs, DEFAULT_EPS_CLAMP).unwrap()
        };
        let err = finite_diff_check(f, &g, &p, 1e-5);
        assert!(err < 1e-4, "{err}");
    }
}
