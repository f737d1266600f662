use monocif::simulator::{
    build_dataset, simulate_path, true_cif_surface, SimConfig, TransitionModel, ABSORBING, NUM_STATES,
};
use monocif::Rational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_model(rng: &mut ChaCha8Rng) -> TransitionModel<f64> {
    let progress: [f64; 5] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
    let regress: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
    TransitionModel::from_controls(&progress, &regress, rng.random_range(0.0..3.0), rng.random_range(0.1..2.0))
}

/// `P(max over steps 0..=t >= k)` by summing over every state sequence.
fn enumerate<S: monocif::Scalar>(model: &TransitionModel<S>, t: usize, k: usize) -> S {
    fn walk<S: monocif::Scalar>(m: &TransitionModel<S>, state: usize, max: usize, left: usize, k: usize, p: S) -> S {
        if left == 0 {
            return if max >= k { p } else { S::zero() };
        }
        let mut acc = S::zero();
        for next in 0..NUM_STATES {
            let q = m.p[state][next].clone();
            if q != S::zero() {
                acc = acc + walk(m, next, max.max(next), left - 1, k, p.clone() * q);
            }
        }
        acc
    }
    walk(model, 0, 0, t, k, S::one())
}

#[test]
fn dp_matches_enumeration_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let m = random_model(&mut rng);
        m.check(1e-12).unwrap();
        let dp = true_cif_surface(&m, 4);
        for t in 0..=4 {
            for k in 1..=5 {
                let e = enumerate(&m, t, k);
                assert!((dp[t][k - 1] - e).abs() <= 1e-12, "t={t} k={k}: {} vs {e}", dp[t][k - 1]);
            }
        }
    }
}

#[test]
fn dp_matches_enumeration_exactly_in_rationals() {
    let r = |n: i128, d: i128| Rational::new(n, d);
    let mut p = [[r(0, 1); NUM_STATES]; NUM_STATES];
    let rows = [[r(1, 2), r(1, 2)], [r(1, 5), r(3, 5)], [r(1, 3), r(1, 3)], [r(1, 7), r(2, 7)], [r(1, 4), r(1, 4)]];
    for (s, [stay, up]) in rows.into_iter().enumerate() {
        p[s][s] = stay;
        p[s][s + 1] = up;
        if s > 0 {
            p[s][s - 1] = r(1, 1) - stay - up;
        } else {
            p[s][s] = r(1, 1) - up;
        }
    }
    p[ABSORBING][ABSORBING] = r(1, 1);
    let m = TransitionModel { p };
    m.check(0.0).unwrap();
    let dp = true_cif_surface(&m, 4);
    for t in 0..=4 {
        for k in 1..=5 {
            assert_eq!(dp[t][k - 1], enumerate(&m, t, k), "t={t} k={k}");
        }
    }
    assert_eq!(dp[1][0], r(1, 2));
    assert_eq!(dp[2][1], r(1, 2) * r(3, 5));
}

#[test]
fn monte_carlo_agrees_with_dp() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..3 {
        let m = random_model(&mut rng);
        let steps = 10;
        let dp = true_cif_surface(&m, steps);
        let n = 20_000;
        let mut counts = vec![[0usize; 5]; steps + 1];
        for _ in 0..n {
            let path = simulate_path(&m, steps, &mut rng);
            let mut max = 0;
            for (t, &s) in path.iter().enumerate() {
                max = max.max(s as usize);
                for k in 1..=max {
                    counts[t][k - 1] += 1;
                }
            }
        }
        for t in 0..=steps {
            for k in 0..5 {
                let mc = counts[t][k] as f64 / n as f64;
                assert!((mc - dp[t][k]).abs() <= 0.02, "t={t} k={}: mc {mc} dp {}", k + 1, dp[t][k]);
            }
        }
    }
}

#[test]
fn step_frequencies_within_three_sigma() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = random_model(&mut rng);
    let n = 100_000;
    for s in 0..NUM_STATES {
        let mut counts = [0usize; NUM_STATES];
        for _ in 0..n {
            counts[m.step(s, &mut rng)] += 1;
        }
        for (to, &c) in counts.iter().enumerate() {
            let p = m.p[s][to];
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sigma + 1e-9, "{s}->{to}: {c} vs p {p}");
        }
    }
}

#[test]
fn every_true_surface_is_monotone_and_anchored() {
    for cfg in [SimConfig::sim_main(4).desk(), SimConfig::sim_lackprog(4).desk()] {
        let ds = build_dataset(&cfg).unwrap();
        assert_eq!(ds.true_cif.len(), cfg.n_subjects);
        for s in &ds.true_cif {
            assert!(s.values[0].iter().all(|&v| v == 0.0));
            for ti in 0..s.t_grid.len() {
                for gi in 0..s.g_grid.len() {
                    let v = s.values[ti][gi];
                    assert!((0.0..=1.0).contains(&v));
                    if ti > 0 {
                        assert!(v >= s.values[ti - 1][gi]);
                    }
                    if gi > 0 {
                        assert!(v <= s.values[ti][gi - 1]);
                    }
                }
            }
        }
    }
}

#[test]
fn same_seed_same_dataset() {
    let cfg = SimConfig::sim_main(9).desk();
    let a = build_dataset(&cfg).unwrap();
    let b = build_dataset(&cfg).unwrap();
    assert_eq!(a.data, b.data);
    assert_eq!(a.split, b.split);
    assert_eq!(a.true_cif, b.true_cif);
    let c = build_dataset(&SimConfig::sim_main(10).desk()).unwrap();
    assert_ne!(a.data, c.data);
}

#[test]
fn lackprog_rarely_progresses() {
    let main = build_dataset(&SimConfig::sim_main(5).desk()).unwrap();
    let lack = build_dataset(&SimConfig::sim_lackprog(5).desk()).unwrap();
    let mean_cif1 = |ds: &monocif::simulator::SimDataset| {
        ds.true_cif.iter().map(|s| s.values[9][0]).sum::<f64>() / ds.true_cif.len() as f64
    };
    assert!(mean_cif1(&lack) < 0.5 * mean_cif1(&main));
    // Deliberate censoring always removes the final step; intermittency alone
    // keeps it about half the time.
    let at_end = |ds: &monocif::simulator::SimDataset| {
        ds.data.subjects.iter().filter(|s| s.trajectory.censoring_time() == 10.0).count() as f64 / ds.data.len() as f64
    };
    assert_eq!(at_end(&main), 0.0);
    assert!(at_end(&lack) > 0.3, "{}", at_end(&lack));
}
