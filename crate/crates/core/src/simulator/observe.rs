use rand::seq::index;
use rand::Rng;

use crate::data::Observation;

/// Running-max observation of a latent path at every step.
pub fn observe(path: &[u8]) -> Vec<Observation> {
    let mut max = 0;
    path.iter()
        .enumerate()
        .map(|(t, &s)| {
            max = max.max(s);
            Observation::new(t as f64, max as f64)
        })
        .collect()
}

/// Keeps the first record and drops `floor((n - 1) / 2)` of the rest uniformly.
pub fn apply_intermittency(obs: &[Observation], rng: &mut impl Rng) -> Vec<Observation> {
    if obs.len() <= 2 {
        return obs.to_vec();
    }
    let rest = obs.len() - 1;
    let mut drop = vec![false; obs.len()];
    for i in index::sample(rng, rest, rest / 2) {
        drop[i + 1] = true;
    }
    obs.iter().zip(drop).filter(|(_, d)| !d).map(|(o, _)| *o).collect()
}

/// Draws `d` uniform in {1, 2, 3} and removes the last `min(d, n - 2)` records.
pub fn apply_censoring(obs: &[Observation], rng: &mut impl Rng) -> Vec<Observation> {
    let d: usize = rng.random_range(1..=3);
    censor_last(obs, d)
}

/// Removes the last `min(d, n - 2)` records.
pub fn censor_last(obs: &[Observation], d: usize) -> Vec<Observation> {
    let remove = d.min(obs.len().saturating_sub(2));
    obs[..obs.len() - remove].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grades(obs: &[Observation]) -> Vec<f64> {
        obs.iter().map(|o| o.grade).collect()
    }

    #[test]
    fn running_max() {
        let obs = observe(&[0, 1, 0, 2]);
        assert_eq!(grades(&obs), vec![0.0, 1.0, 1.0, 2.0]);
        assert_eq!(obs[0], Observation::new(0.0, 0.0));
        assert_eq!(grades(&observe(&[0, 1, 2, 3, 4, 5, 5])).last(), Some(&5.0));
    }

    #[test]
    fn intermittency_keeps_six_of_eleven() {
        let obs = observe(&[0; 11]);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let kept = apply_intermittency(&obs, &mut rng);
            assert_eq!(kept.len(), 6);
            assert_eq!(kept[0].time, 0.0);
            assert!(kept.windows(2).all(|w| w[1].time > w[0].time));
        }
        let a = apply_intermittency(&obs, &mut ChaCha8Rng::seed_from_u64(9));
        let b = apply_intermittency(&obs, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn censoring_rule() {
        let six = observe(&[0; 6]);
        assert_eq!(censor_last(&six, 3).len(), 3);
        assert_eq!(censor_last(&six, 1).len(), 5);
        let two = observe(&[0, 1]);
        for d in 1..=3 {
            assert_eq!(censor_last(&two, d), two);
        }
        let c = censor_last(&six, 2);
        assert_eq!(c.last().unwrap().time, 3.0);
    }

    #[test]
    fn censoring_draw_in_range() {
        let six = observe(&[0; 6]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let n = apply_censoring(&six, &mut rng).len();
            assert!((3..=5).contains(&n));
        }
    }
}
