use monocif::model::graph::{bind, bind_subject, cif, cif_with_tg_gradient};
use monocif::Network;
use monocif::Tape;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIM: usize = 4;

/// Network with every raw parameter redrawn from U(-2, 2), a random time
/// scale and one of two grade steps.
fn random_net(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths: &[usize] = if seed.is_multiple_of(2) { &[5, 5, 1] } else { &[3, 1] };
    let mut net = Network::init(seed, DIM, widths).unwrap();
    let flat: Vec<f64> = (0..net.num_params()).map(|_| rng.random_range(-2.0..2.0)).collect();
    net.assign(&flat).unwrap();
    net.t_scale = rng.random_range(1.0..20.0);
    net.delta_g = if seed.is_multiple_of(3) { 0.01 } else { 1.0 };
    net
}

fn random_x(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..DIM).map(|_| rng.random_range(-3.0..3.0)).collect()
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 100, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn anchored_at_zero_and_in_range(seed in any::<u64>()) {
        let net = random_net(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..10 {
            let x = random_x(&mut rng);
            let g = rng.random_range(net.delta_g..10.0);
            prop_assert_eq!(net.cif(0.0, g, &x).unwrap(), 0.0);
            let c = net.cif(rng.random_range(0.0..20.0), g, &x).unwrap();
            prop_assert!((0.0..1.0).contains(&c), "cif {}", c);
        }
    }

    #[test]
    fn m_raw_monotone_along_dense_time_grid(seed in any::<u64>()) {
        let net = random_net(seed);
        let ev = net.evaluator();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let x = random_x(&mut rng);
        let g = rng.random_range(net.delta_g..10.0);
        let cache = ev.subject(&x).unwrap();
        let m: Vec<f64> = (0..500).map(|i| ev.m_raw_cached(&cache, 20.0 * i as f64 / 499.0, g)).collect();
        for w in m.windows(2) {
            prop_assert!(w[1] - w[0] >= -1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn m_raw_antitone_along_grade_sweep(seed in any::<u64>()) {
        let net = random_net(seed);
        let ev = net.evaluator();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let x = random_x(&mut rng);
        let t = rng.random_range(0.0..20.0);
        let cache = ev.subject(&x).unwrap();
        let lo = net.delta_g;
        let m: Vec<f64> = (0..500).map(|i| ev.m_raw_cached(&cache, t, lo + (10.0 - lo) * i as f64 / 499.0)).collect();
        for w in m.windows(2) {
            prop_assert!(w[1] - w[0] <= 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn tape_partials_have_the_right_signs(seed in any::<u64>()) {
        let net = random_net(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        for _ in 0..10 {
            let x = random_x(&mut rng);
            let t = rng.random_range(0.0..20.0);
            let g = rng.random_range(net.delta_g..10.0);
            let (c, dt, dg) = cif_with_tg_gradient(&net, t, g, &x).unwrap();
            prop_assert!(dt >= -1e-12 && dg <= 1e-12, "dt {} dg {}", dt, dg);
            prop_assert_eq!(c, net.cif(t, g, &x).unwrap());
        }
    }

    #[test]
    fn model_json_round_trip_is_bit_exact(seed in any::<u64>()) {
        let net = random_net(seed);
        let back = Network::from_json(&net.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        net.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(back, net);
    }
}

#[test]
fn feature_path_ignores_time_and_grade() {
    let net = random_net(12);
    let mut tape = Tape::new();
    let bound = bind(&mut tape, &net).unwrap();
    let subject = bind_subject(&mut tape, &bound, &[0.5, -1.0, 2.0, 0.0]).unwrap();
    let t = tape.scalar_input(1.0);
    let g = tape.scalar_input(1.0);
    let out = cif(&mut tape, &bound, &subject, t, g).unwrap();
    let f_values = |tape: &Tape| subject.feature_nodes().iter().map(|&v| tape.value(v).to_vec()).collect::<Vec<_>>();
    let reference = f_values(&tape);
    let mut outputs = Vec::new();
    for i in 0..10 {
        tape.set_value(t, vec![0.7 * i as f64]).unwrap();
        tape.set_value(g, vec![1.0 + 0.4 * i as f64]).unwrap();
        tape.forward().unwrap();
        assert_eq!(f_values(&tape), reference);
        outputs.push(tape.scalar(out));
    }
    outputs.dedup();
    assert!(outputs.len() > 1);
}
