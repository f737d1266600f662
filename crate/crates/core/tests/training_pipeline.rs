use monocif::simulator::{build_dataset, SimConfig};
use monocif::training::{train, DecayTarget, TrainConfig};

fn small() -> (monocif::Dataset, monocif::Dataset) {
    let cfg = SimConfig { n_subjects: 60, n_train: 30, n_val: 15, n_test: 15, ..SimConfig::sim_main(4) };
    let sim = build_dataset(&cfg).unwrap();
    (sim.train(), sim.val())
}

fn config(target: DecayTarget) -> TrainConfig {
    TrainConfig {
        widths: vec![6, 1],
        max_epochs: 8,
        patience: 8,
        batch_size: 16,
        seed: 2,
        weight_decay_target: target,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_same_parameters_and_history() {
    let (tr, va) = small();
    let a = train::<f64>(&config(DecayTarget::Effective), &tr, &va).unwrap();
    let b = train::<f64>(&config(DecayTarget::Effective), &tr, &va).unwrap();
    assert_eq!(a.network, b.network);
    assert_eq!(a.history, b.history);
}

#[test]
fn history_has_initial_row_and_best_is_minimum() {
    let (tr, va) = small();
    let out = train::<f64>(&config(DecayTarget::Effective), &tr, &va).unwrap();
    let h = &out.history;
    assert_eq!(h.epochs.len(), 9);
    assert_eq!(h.mean_batch_loss.len(), 8);
    assert!(h.epochs.iter().enumerate().all(|(i, r)| r.epoch == i));
    let min = h.epochs.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(h.best().unwrap().val_loss, min);
    assert!(min < h.epochs[0].val_loss);
}

#[test]
fn decay_targets_train_differently() {
    let (tr, va) = small();
    let eff = train::<f64>(&config(DecayTarget::Effective), &tr, &va).unwrap();
    let raw = train::<f64>(&config(DecayTarget::Raw), &tr, &va).unwrap();
    assert_eq!(eff.history.epochs[0], raw.history.epochs[0]);
    assert_ne!(eff.network.flatten(), raw.network.flatten());
}
