use monocif::metrics::{
    bs_ipcw_iti, bs_ipcw_naive, ibs_ipcw_iti, spearman_rho, violation_extent, CensoringCurve, NaiveRule, Weighting,
};
use monocif::{CifSurface, Dataset, Subject, Trajectory};
use proptest::prelude::*;

/// Running-max record of a +-1 walk observed at every integer time.
fn full_trajectory(steps: &[i8]) -> Trajectory {
    let mut state: i8 = 0;
    let mut max = 0;
    let mut pairs = vec![(0.0, 0.0)];
    for (i, &d) in steps.iter().enumerate() {
        if state < 5 {
            state = (state + d).clamp(0, 5);
        }
        max = max.max(state);
        pairs.push(((i + 1) as f64, max as f64));
    }
    Trajectory::from_pairs(&pairs)
}

fn walks() -> impl Strategy<Value = Vec<Vec<i8>>> {
    prop::collection::vec(prop::collection::vec(prop::sample::select(vec![-1i8, 0, 1, 1]), 1..10), 2..12)
}

fn dataset(trajs: Vec<Trajectory>) -> Dataset {
    Dataset::new(
        trajs
            .into_iter()
            .enumerate()
            .map(|(i, trajectory)| Subject { id: i as u64, features: vec![], trajectory })
            .collect(),
    )
}

proptest! {
    #[test]
    fn km_is_a_non_increasing_survival_curve(times in prop::collection::vec(1u8..12, 1..30)) {
        let times: Vec<f64> = times.into_iter().map(f64::from).collect();
        let km = CensoringCurve::<f64>::kaplan_meier(&times).unwrap();
        let mut prev = 1.0;
        for i in 0..=60 {
            let t = i as f64 * 0.25;
            let g = km.at(t);
            prop_assert!((0.0..=1.0).contains(&g) && g <= prev + 1e-15);
            prop_assert!(km.left_limit(t) >= g - 1e-15);
            prev = g;
        }
        prop_assert_eq!(km.left_limit(0.5), 1.0);
    }

    #[test]
    fn unweighted_brier_lies_in_unit_interval(walks in walks(), cif in prop::collection::vec(0.0f64..1.0, 12), t in 1u8..10) {
        let trajs: Vec<Trajectory> = walks.iter().map(|w| full_trajectory(w)).collect();
        let refs: Vec<&Trajectory> = trajs.iter().collect();
        let cif = &cif[..trajs.len()];
        for k in 1..=5 {
            let p = bs_ipcw_iti(cif, &refs, k as f64, t as f64, &Weighting::Unweighted).unwrap();
            if let Some(v) = p.value {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn fully_observed_walks_make_naive_and_iti_agree(walks in walks(), cif in prop::collection::vec(0.0f64..1.0, 12), t in 1u8..10) {
        let trajs: Vec<Trajectory> = walks.iter().map(|w| full_trajectory(w)).collect();
        let refs: Vec<&Trajectory> = trajs.iter().collect();
        let cif = &cif[..trajs.len()];
        let w = Weighting::ipcw(&dataset(trajs.clone())).unwrap();
        for k in 1..=5 {
            let a = bs_ipcw_iti(cif, &refs, k as f64, t as f64, &w).unwrap();
            let b = bs_ipcw_naive(cif, &refs, k as f64, t as f64, &w, NaiveRule::Exact).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn perfect_predictor_has_zero_ibs_when_fully_observed(walks in walks()) {
        let trajs: Vec<Trajectory> = walks.iter().map(|w| full_trajectory(w)).collect();
        let data = dataset(trajs.clone());
        let grid = [1.0, 2.0, 3.0];
        let surfaces: Vec<CifSurface> = trajs.iter().enumerate().map(|(i, tr)| {
            let values = grid.iter().map(|&t| {
                (1..=5).map(|k| {
                    let hit = tr.observations.iter().any(|o| o.time <= t && o.grade >= k as f64);
                    if hit { 1.0 } else { 0.0 }
                }).collect()
            }).collect();
            CifSurface { subject_id: i as u64, t_grid: grid.to_vec(), g_grid: (1..=5).map(f64::from).collect(), values }
        }).collect();
        for k in 1..=5 {
            if let Ok(ibs) = ibs_ipcw_iti(&surfaces, &data, k as f64, &grid, &Weighting::Unweighted) {
                prop_assert_eq!(ibs.value, 0.0);
            }
        }
    }

    #[test]
    fn spearman_is_bounded_and_rank_invariant(xs in prop::collection::vec(-5.0f64..5.0, 3..20), ys in prop::collection::vec(-5.0f64..5.0, 20)) {
        let ys = &ys[..xs.len()];
        if let Ok(r) = spearman_rho(&xs, ys) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            let transformed: Vec<f64> = xs.iter().map(|x| x.powi(3) + 2.0 * x).collect();
            let r2 = spearman_rho(&transformed, ys).unwrap();
            prop_assert!((r - r2).abs() < 1e-12);
        }
        if let Ok(r) = spearman_rho(&xs, &xs) {
            prop_assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn violation_extent_flags_any_grade_inversion(vals in prop::collection::vec(0.0f64..1.0, 5)) {
        let mut sorted = vals.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let surface = |row: Vec<f64>| CifSurface { subject_id: 0, t_grid: vec![1.0], g_grid: (1..=5).map(f64::from).collect(), values: vec![row] };
        prop_assert_eq!(violation_extent(&[surface(sorted.clone())]), 0.0);
        let worst = vals.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        prop_assert_eq!(violation_extent(&[surface(vals)]), worst);
    }
}
