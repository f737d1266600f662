use num_traits::Float;

use super::{AutodiffError, Tape, Var};

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_difference<T: Float>(f: impl Fn(&[T]) -> T, point: &[T], step: T) -> Vec<T> {
    let two = T::one() + T::one();
    let mut x = point.to_vec();
    (0..point.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + step;
            let hi = f(&x);
            x[i] = orig - step;
            let lo = f(&x);
            x[i] = orig;
            (hi - lo) / (two * step)
        })
        .collect()
}

/// Largest `|analytic - numeric| / max(1, |analytic|)` over coordinates.
pub fn finite_diff_check<T: Float>(f: impl Fn(&[T]) -> T, analytic: &[T], point: &[T], step: T) -> T {
    assert_eq!(analytic.len(), point.len(), "gradient and point lengths differ");
    central_difference(f, point, step)
        .into_iter()
        .zip(analytic)
        .map(|(num, &an)| (an - num).abs() / an.abs().max(T::one()))
        .fold(T::zero(), T::max)
}

/// Value and gradient of a scalar function built on a fresh tape, with one
/// scalar input per coordinate of `point`.
pub fn gradient_at<T: Float>(
    build: impl Fn(&mut Tape<T>, &[Var]) -> Result<Var, AutodiffError>,
    point: &[T],
) -> Result<(T, Vec<T>), AutodiffError> {
    let mut tape = Tape::new();
    let inputs: Vec<Var> = point.iter().map(|&v| tape.scalar_input(v)).collect();
    let out = build(&mut tape, &inputs)?;
    let grad = tape.backward(out)?;
    Ok((tape.scalar(out), inputs.iter().map(|&v| grad.scalar(v)).collect()))
}
