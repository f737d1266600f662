use super::{lookup, MetricError};
use crate::model::CifSurface;
use crate::scalar::Scalar;

/// Mean squared error over subjects and the `t_grid x g_grid` cells.
pub fn mse_vs_truth<S: Scalar>(
    predicted: &[CifSurface<S>],
    truth: &[CifSurface<S>],
    t_grid: &[f64],
    g_grid: &[f64],
) -> Result<S, MetricError> {
    if predicted.len() != truth.len() {
        return Err(MetricError::Shape(format!("{} predicted vs {} true surfaces", predicted.len(), truth.len())));
    }
    if predicted.is_empty() || t_grid.is_empty() || g_grid.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut sum = S::zero();
    for (p, q) in predicted.iter().zip(truth) {
        if p.subject_id != q.subject_id {
            return Err(MetricError::IdMismatch(vec![(p.subject_id, q.subject_id)]));
        }
        for &t in t_grid {
            for &g in g_grid {
                let d = lookup(p, t, g)? - lookup(q, t, g)?;
                sum = sum + d.clone() * d;
            }
        }
    }
    Ok(sum / S::from_usize(predicted.len() * t_grid.len() * g_grid.len()))
}

/// Largest `CIF(t, g_{j+1}) - CIF(t, g_j)` over subjects, times and adjacent
/// grades, floored at zero.
pub fn violation_extent<S: Scalar>(surfaces: &[CifSurface<S>]) -> S {
    let mut worst = S::zero();
    for s in surfaces {
        for row in &s.values {
            for w in row.windows(2) {
                let d = w[1].clone() - w[0].clone();
                if d > worst {
                    worst = d;
                }
            }
        }
    }
    worst
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks<S: Scalar>(xs: &[S]) -> Vec<S> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![S::zero(); xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && xs[idx[j]] == xs[idx[i]] {
            j += 1;
        }
        // Positions i+1..=j average to (i + 1 + j) / 2.
        let r = S::from_usize(i + 1 + j) / S::from_usize(2);
        for &k in &idx[i..j] {
            ranks[k] = r.clone();
        }
        i = j;
    }
    ranks
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman_rho<S: Scalar>(xs: &[S], ys: &[S]) -> Result<S, MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::Shape(format!("{} vs {} values", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(MetricError::Empty);
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = S::from_usize(xs.len());
    let mean = |v: &[S]| v.iter().cloned().fold(S::zero(), |a, b| a + b) / n.clone();
    let (mx, my) = (mean(&rx), mean(&ry));
    let mut sxy = S::zero();
    let mut sxx = S::zero();
    let mut syy = S::zero();
    for (a, b) in rx.iter().zip(&ry) {
        let dx = a.clone() - mx.clone();
        let dy = b.clone() - my.clone();
        sxy = sxy + dx.clone() * dy.clone();
        sxx = sxx + dx.clone() * dx;
        syy = syy + dy.clone() * dy;
    }
    if sxx == S::zero() || syy == S::zero() {
        return Err(MetricError::ZeroVariance);
    }
    let denom = (sxx * syy).sqrt_opt().ok_or(MetricError::NotRepresentable)?;
    Ok(sxy / denom)
}
