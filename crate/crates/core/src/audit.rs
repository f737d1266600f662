//! Invariant checks for a network: anchoring at `t = 0`, output range,
//! monotone sweeps in `t` and `g`, autodiff gradient signs, and a
//! finite-difference audit of the loss gradient.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::finite_diff_check;
use crate::model::graph::cif_with_tg_gradient;
use crate::model::Network;
use crate::training::{batch_loss, batch_loss_and_grad, TrainError, TrainingSample, DEFAULT_EPS_CLAMP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    /// Random probe points for anchoring, range and gradient signs; one
    /// sweep in each direction per hundred points.
    pub n_points: usize,
    pub seed: u64,
    pub t_max: f64,
    pub g_max: f64,
    pub sweep_len: usize,
    pub tol: f64,
    pub fd_samples: usize,
    /// Parameters audited by finite differences, drawn at random; all when
    /// the network has fewer.
    pub fd_coords: usize,
    pub fd_step: f64,
    pub fd_tol: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            n_points: 1000,
            seed: 0,
            t_max: 20.0,
            g_max: 10.0,
            sweep_len: 500,
            tol: 1e-12,
            fd_samples: 5,
            fd_coords: 200,
            fd_step: 1e-5,
            fd_tol: 1e-4,
        }
    }
}

/// Where a check came out worst.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub t: f64,
    pub g: f64,
    /// Offending value: a CIF, a difference, a partial derivative, or a
    /// relative gradient error, depending on the check.
    pub value: f64,
    /// Second grid point of a difference, if any.
    pub other: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub evaluated: usize,
    /// Largest violation (zero or negative when every point is fine).
    pub worst: f64,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub checks: Vec<CheckOutcome>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Tracks the largest violation seen and where.
struct Worst {
    value: f64,
    witness: Option<Witness>,
    evaluated: usize,
}

impl Worst {
    fn new() -> Self {
        Self { value: f64::NEG_INFINITY, witness: None, evaluated: 0 }
    }

    fn see(&mut self, violation: f64, witness: impl FnOnce() -> Witness) {
        self.evaluated += 1;
        if violation > self.value || violation.is_nan() && !self.value.is_nan() {
            self.value = violation;
            self.witness = Some(witness());
        }
    }

    fn finish(self, name: &'static str, limit: f64) -> CheckOutcome {
        let passed = self.value <= limit;
        let witness = if passed { None } else { self.witness };
        CheckOutcome { name, passed, evaluated: self.evaluated, worst: self.value.max(0.0), witness }
    }
}

fn random_x(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Runs every check. Model errors (bad shapes, non-finite inputs) abort; a
/// violated invariant only marks its check as failed.
pub fn audit(net: &Network<f64>, cfg: &AuditConfig) -> Result<AuditReport, TrainError> {
    net.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = net.input_dim;
    let dg = net.delta_g;
    let ev = net.evaluator();
    let point = |rng: &mut ChaCha8Rng| {
        let x = random_x(rng, dim);
        let t = rng.random_range(0.0..=cfg.t_max);
        let g = rng.random_range(dg..=cfg.g_max.max(dg));
        (x, t, g)
    };

    let mut anchor = Worst::new();
    let mut range = Worst::new();
    let mut signs = Worst::new();
    for _ in 0..cfg.n_points {
        let (x, t, g) = point(&mut rng);
        let cache = ev.subject(&x)?;
        let c0 = ev.cif_cached(&cache, 0.0, g);
        anchor.see(c0.abs(), || Witness { x: x.clone(), t: 0.0, g, value: c0, other: None });
        let c = ev.cif_cached(&cache, t, g);
        let out_of_range = (-c).max(c - 1.0 + f64::EPSILON);
        range.see(out_of_range, || Witness { x: x.clone(), t, g, value: c, other: None });
        let (_, dt, dgrad) = cif_with_tg_gradient(net, t, g, &x)?;
        signs.see((-dt).max(dgrad), || Witness {
            x: x.clone(),
            t,
            g,
            value: if -dt > dgrad { dt } else { dgrad },
            other: None,
        });
    }

    let n_sweeps = (cfg.n_points / 100).max(1);
    let mut mono_t = Worst::new();
    let mut mono_g = Worst::new();
    let t_sweep = linspace(0.0, cfg.t_max, cfg.sweep_len);
    let g_sweep = linspace(dg, cfg.g_max.max(dg), cfg.sweep_len);
    for _ in 0..n_sweeps {
        let (x, t, g) = point(&mut rng);
        let cache = ev.subject(&x)?;
        let ms: Vec<f64> = t_sweep.iter().map(|&tt| ev.m_raw_cached(&cache, tt, g)).collect();
        for i in 1..ms.len() {
            let drop = ms[i - 1] - ms[i];
            mono_t.see(drop, || Witness {
                x: x.clone(),
                t: t_sweep[i - 1],
                g,
                value: -drop,
                other: Some((t_sweep[i], g)),
            });
        }
        let ms: Vec<f64> = g_sweep.iter().map(|&gg| ev.m_raw_cached(&cache, t, gg)).collect();
        for i in 1..ms.len() {
            let rise = ms[i] - ms[i - 1];
            mono_g.see(rise, || Witness {
                x: x.clone(),
                t,
                g: g_sweep[i - 1],
                value: rise,
                other: Some((t, g_sweep[i])),
            });
        }
    }

    let fd = fd_audit(net, cfg, &mut rng)?;

    Ok(AuditReport {
        checks: vec![
            anchor.finish("anchoring", f64::EPSILON),
            range.finish("range", 0.0),
            mono_t.finish("monotone_t", cfg.tol),
            mono_g.finish("monotone_g", cfg.tol),
            signs.finish("gradient_sign", cfg.tol),
            fd,
        ],
    })
}

fn fd_audit(net: &Network<f64>, cfg: &AuditConfig, rng: &mut ChaCha8Rng) -> Result<CheckOutcome, TrainError> {
    let mut worst = Worst::new();
    if cfg.fd_samples == 0 {
        return Ok(worst.finish("gradient_audit", cfg.fd_tol));
    }
    let t_hi = net.t_scale.max(1.0);
    let xs: Vec<Vec<f64>> = (0..cfg.fd_samples).map(|_| random_x(rng, net.input_dim)).collect();
    let samples: Vec<TrainingSample> = (0..cfg.fd_samples)
        .map(|index| {
            let label = rng.random_bool(0.5);
            let grade = if label { net.delta_g * rng.random_range(1..=5) as f64 } else { net.delta_g };
            TrainingSample { index, id: index as u64, time: rng.random_range(0.1 * t_hi..=t_hi), grade, label }
        })
        .collect();
    let flat = net.flatten();
    let (_, grad) = batch_loss_and_grad(net, &samples, &xs, DEFAULT_EPS_CLAMP)?;
    let coords: Vec<usize> = if flat.len() <= cfg.fd_coords {
        (0..flat.len()).collect()
    } else {
        sample_indices(rng, flat.len(), cfg.fd_coords).into_vec()
    };
    let probe = std::cell::RefCell::new(net.clone());
    for i in coords {
        let loss_at = |v: &[f64]| {
            let mut p = flat.clone();
            p[i] = v[0];
            let mut n = probe.borrow_mut();
            n.assign(&p).expect("same parameter count");
            batch_loss(&*n, &samples, &xs, DEFAULT_EPS_CLAMP).expect("non-empty batch")
        };
        let err = finite_diff_check(loss_at, &[grad[i]], &[flat[i]], cfg.fd_step);
        worst.see(err, || Witness {
            x: vec![],
            t: f64::NAN,
            g: f64::NAN,
            value: err,
            other: Some((i as f64, grad[i])),
        });
    }
    Ok(worst.finish("gradient_audit", cfg.fd_tol))
}
