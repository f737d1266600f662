use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Grades 0..=5; grade 5 absorbs.
pub const NUM_STATES: usize = 6;
pub const ABSORBING: usize = NUM_STATES - 1;
/// Event grades with a CIF (1..=5).
pub const EVENT_GRADES: [u8; 5] = [1, 2, 3, 4, 5];

/// Row-stochastic transition matrix over adjacent grades.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel<S> {
    pub p: [[S; NUM_STATES]; NUM_STATES],
}

impl<S: Scalar> TransitionModel<S> {
    /// Validates tridiagonal support, unit row sums (within `tol`) and the
    /// absorbing last row.
    pub fn check(&self, tol: f64) -> Result<(), String> {
        for (s, row) in self.p.iter().enumerate() {
            let mut sum = S::zero();
            for (s2, v) in row.iter().enumerate() {
                if *v < S::zero() {
                    return Err(format!("negative entry at ({s}, {s2})"));
                }
                if s.abs_diff(s2) > 1 && *v != S::zero() {
                    return Err(format!("non-adjacent transition ({s}, {s2})"));
                }
                sum = sum + v.clone();
            }
            if (sum.to_f64() - 1.0).abs() > tol {
                return Err(format!("row {s} sums to {}", sum.to_f64()));
            }
        }
        if self.p[ABSORBING][ABSORBING] != S::one() {
            return Err("last grade is not absorbing".into());
        }
        Ok(())
    }
}

impl TransitionModel<f64> {
    /// Builds the matrix from per-state control channels in `(0, 1)`.
    ///
    /// For a non-absorbing state `s` the unnormalized weights are
    /// `down = regress[s]` (absent for `s = 0`), `stay = lambda_stay` and
    /// `up = lambda_prog * progress[s]`; the row is then normalized.
    pub fn from_controls(progress: &[f64; 5], regress: &[f64; 4], lambda_prog: f64, lambda_stay: f64) -> Self {
        let mut p = [[0.0; NUM_STATES]; NUM_STATES];
        for s in 0..ABSORBING {
            let up = lambda_prog * progress[s];
            let down = if s == 0 { 0.0 } else { regress[s - 1] };
            let total = up + lambda_stay + down;
            if s > 0 {
                p[s][s - 1] = down / total;
            }
            p[s][s] = lambda_stay / total;
            p[s][s + 1] = up / total;
        }
        p[ABSORBING][ABSORBING] = 1.0;
        Self { p }
    }

    /// Samples one step from `state`.
    pub fn step(&self, state: usize, rng: &mut impl Rng) -> usize {
        let row = &self.p[state];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (s2, &v) in row.iter().enumerate() {
            acc += v;
            if u < acc {
                return s2;
            }
        }
        // Rounding left u above the final cumulative sum: take the last reachable state.
        row.iter().rposition(|&v| v > 0.0).unwrap_or(state)
    }
}

/// Latent path of `steps + 1` states starting at grade 0.
pub fn simulate_path(model: &TransitionModel<f64>, steps: usize, rng: &mut impl Rng) -> Vec<u8> {
    let mut path = Vec::with_capacity(steps + 1);
    let mut s = 0;
    path.push(0);
    for _ in 0..steps {
        s = model.step(s, rng);
        path.push(s as u8);
    }
    path
}

/// `cif[t][k - 1] = P(max grade over steps 0..=t >= k)` for `t = 0..=steps`,
/// `k = 1..=5`, by forward recursion over (current grade, max so far).
pub fn true_cif_surface<S: Scalar>(model: &TransitionModel<S>, steps: usize) -> Vec<Vec<S>> {
    let mut dist = vec![vec![S::zero(); NUM_STATES]; NUM_STATES];
    dist[0][0] = S::one();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(cif_from_joint(&dist));
    for _ in 0..steps {
        let mut next = vec![vec![S::zero(); NUM_STATES]; NUM_STATES];
        for (cur, row) in dist.iter().enumerate() {
            for (max, mass) in row.iter().enumerate() {
                if *mass == S::zero() {
                    continue;
                }
                let lo = cur.saturating_sub(1);
                let hi = (cur + 1).min(ABSORBING);
                for to in lo..=hi {
                    let p = &model.p[cur][to];
                    if *p == S::zero() {
                        continue;
                    }
                    let m = max.max(to);
                    next[to][m] = next[to][m].clone() + mass.clone() * p.clone();
                }
            }
        }
        dist = next;
        out.push(cif_from_joint(&dist));
    }
    out
}

fn cif_from_joint<S: Scalar>(dist: &[Vec<S>]) -> Vec<S> {
    EVENT_GRADES
        .iter()
        .map(|&k| {
            dist.iter()
                .flat_map(|row| row.iter().enumerate().filter(|(m, _)| *m >= k as usize).map(|(_, v)| v.clone()))
                .fold(S::zero(), |a, b| a + b)
        })
        .collect()
}

/// `P(max grade within the first t steps >= k)`.
pub fn true_cif<S: Scalar>(model: &TransitionModel<S>, k: u8, t: usize) -> S {
    assert!((1..=5).contains(&k), "grade {k} outside 1..=5");
    true_cif_surface(model, t)[t][k as usize - 1].clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn controls_hand_normalization() {
        let m = TransitionModel::from_controls(&[0.5; 5], &[0.5; 4], 2.0, 1.0);
        assert!((m.p[2][1] - 0.2).abs() < 1e-15);
        assert!((m.p[2][2] - 0.4).abs() < 1e-15);
        assert!((m.p[2][3] - 0.4).abs() < 1e-15);
        assert_eq!(m.p[5], [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        m.check(1e-12).unwrap();
    }

    #[test]
    fn low_progression_rows() {
        let m = TransitionModel::from_controls(&[0.999; 5], &[1e-3; 4], 0.02, 1.0);
        for s in 0..5 {
            assert!(m.p[s][s + 1] <= 0.02 / 1.02 + 1e-15);
        }
    }

    #[test]
    fn no_progression_gives_flat_path() {
        let m = TransitionModel::from_controls(&[0.5; 5], &[0.5; 4], 0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let path = simulate_path(&m, 10, &mut rng);
        assert_eq!(path, vec![0; 11]);
    }

    #[test]
    fn dp_small_cases() {
        let m = TransitionModel::from_controls(&[0.3, 0.6, 0.2, 0.9, 0.4], &[0.1, 0.7, 0.5, 0.2], 2.0, 1.0);
        let s = true_cif_surface(&m, 3);
        assert!(s[0].iter().all(|&v| v == 0.0));
        assert_eq!(s[1][0], m.p[0][1]);
        assert_eq!(s[1][1], 0.0);
        assert_eq!(true_cif(&m, 1, 1), m.p[0][1]);
        // Two steps to grade 2 is only 0 -> 1 -> 2.
        assert!((s[2][1] - m.p[0][1] * m.p[1][2]).abs() < 1e-16);
    }
}
