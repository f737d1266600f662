use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use monocif::audit::{audit, AuditConfig, AuditReport};
use monocif::data::{Dataset, Subject, SubjectId, Trajectory};
use monocif::io;
use monocif::metrics::{evaluate as score, permutation_importance, EvalOptions, ImportanceConfig};
use monocif::model::{CifSurface, Network};
use monocif::simulator::{build_dataset, SimConfig, Split};
use monocif::training::{self, TrainConfig};

use crate::error::{Failure, Kind};
use crate::grid::parse_grid;
use crate::manifest::{RunManifest, Staged};
use crate::{
    CheckArgs, EvaluateArgs, ImportanceArgs, PredictArgs, SimulateArgs, SplitArg, Switch, TrainArgs, SEED_ENV,
};

pub const FEATURES: &str = "features.csv";
pub const TRAJECTORIES: &str = "trajectories.csv";
pub const TRUE_CIF: &str = "true_cif.csv";
pub const MODEL: &str = "model.json";
pub const HISTORY: &str = "history.csv";
pub const CIF: &str = "cif.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const IMPORTANCE: &str = "importance.csv";
pub const CHECK: &str = "check.json";

/// `--seed`, then the environment, then the config file, then 0.
fn resolve_seed(flag: Option<u64>, from_config: Option<u64>) -> Result<(u64, &'static str), Failure> {
    if let Some(s) = flag {
        return Ok((s, "flag"));
    }
    if let Ok(v) = std::env::var(SEED_ENV) {
        let s =
            v.trim().parse().map_err(|_| Failure::config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        return Ok((s, "env"));
    }
    Ok(from_config.map_or((0, "default"), |s| (s, "config")))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::from(e).context(format!("reading {}", path.display())))
}

fn open(path: &Path) -> Result<fs::File, Failure> {
    fs::File::open(path).map_err(|e| Failure::from(e).context(format!("opening {}", path.display())))
}

fn grid(text: &str, what: &str) -> Result<Vec<f64>, Failure> {
    parse_grid(text).map_err(|e| Failure::config(format!("--{what}: {e}")))
}

fn load_model(path: &Path) -> Result<Network<f64>, Failure> {
    let net = Network::<f64>::from_json(&read_text(path)?)
        .map_err(|e| Failure::from(e).context(format!("loading {}", path.display())))?;
    net.validate()?;
    Ok(net)
}

fn load_dataset(dir: &Path) -> Result<Dataset, Failure> {
    let features = io::read_features(open(&dir.join(FEATURES))?).map_err(|e| Failure::from(e).context(FEATURES))?;
    let trajectories =
        io::read_trajectories(open(&dir.join(TRAJECTORIES))?).map_err(|e| Failure::from(e).context(TRAJECTORIES))?;
    Ok(io::join_dataset(features, trajectories)?)
}

fn dataset_split(dir: &Path) -> Result<Option<Split>, Failure> {
    if !dir.join(crate::manifest::MANIFEST).exists() {
        return Ok(None);
    }
    Ok(RunManifest::read(dir)?.split)
}

fn split_ids(dir: &Path, which: SplitArg) -> Result<Option<Vec<SubjectId>>, Failure> {
    if matches!(which, SplitArg::All) {
        return Ok(None);
    }
    let split = dataset_split(dir)?
        .ok_or_else(|| Failure::config(format!("{} has no split in its manifest", dir.display())))?;
    let ids = match which {
        SplitArg::Train => split.train,
        SplitArg::Val => split.val,
        SplitArg::Test => split.test,
        SplitArg::All => unreachable!(),
    };
    Ok(Some(ids))
}

fn select(data: &Dataset, ids: &[SubjectId], what: &str) -> Result<Dataset, Failure> {
    let out = data.select(ids);
    if out.len() != ids.len() {
        return Err(Failure::config(format!("{what}: {} split ids missing from the dataset", ids.len() - out.len())));
    }
    Ok(out)
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<(), io::IoError>) -> Vec<u8> {
    let mut buf = Vec::new();
    write(&mut buf).expect("in-memory csv");
    buf
}

pub fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let mut staged = Staged::new("simulate");
    let mut cfg = match &a.config {
        Some(path) => {
            staged.input("config", path);
            serde_json::from_str::<SimConfig>(&read_text(path)?)
                .map_err(|e| Failure::from(e).context(path.display().to_string()))?
        }
        None => {
            SimConfig::preset(&a.preset, 0).ok_or_else(|| Failure::config(format!("unknown preset {:?}", a.preset)))?
        }
    };
    let (seed, source) = resolve_seed(a.seed, a.config.as_ref().map(|_| cfg.seed))?;
    cfg.seed = seed;
    cfg.validate()?;
    log::info!("simulating {} subjects", cfg.n_subjects);
    let ds = build_dataset(&cfg)?;
    staged.file(FEATURES, csv_bytes(|b| io::write_features(b, &ds.data)));
    staged.file(TRAJECTORIES, csv_bytes(|b| io::write_trajectories(b, &ds.data)));
    staged.file(TRUE_CIF, csv_bytes(|b| io::write_surfaces(b, &ds.true_cif)));
    staged.config = serde_json::to_value(&cfg)?;
    staged.seeds.insert("seed".into(), seed);
    staged.seeds.insert("net_seed".into(), ds.net_seed);
    staged.seed_source = source.into();
    staged.split = Some(ds.split.clone());
    staged.commit(&a.out)?;
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<(), Failure> {
    let mut staged = Staged::new("train");
    let (mut cfg, cfg_seed) = match &a.config {
        Some(path) => {
            staged.input("config", path);
            let text = read_text(path)?;
            let raw: serde_json::Value = serde_json::from_str(&text)?;
            let cfg =
                TrainConfig::from_json(&text).map_err(|e| Failure::from(e).context(path.display().to_string()))?;
            let has_seed = raw.get("seed").is_some();
            (cfg.clone(), has_seed.then_some(cfg.seed))
        }
        None => (TrainConfig::default(), None),
    };
    let (seed, source) = resolve_seed(a.seed, cfg_seed)?;
    cfg.seed = seed;
    if let Some(v) = a.delta_g {
        cfg.delta_g = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = a.patience {
        cfg.patience = v;
    }
    cfg.validate()?;

    staged.input("data", &a.data);
    let data = load_dataset(&a.data)?;
    let split = dataset_split(&a.data)?
        .ok_or_else(|| Failure::config(format!("{}: manifest has no train/val split", a.data.display())))?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Failure::config("train and validation splits must be non-empty"));
    }
    let train_set = select(&data, &split.train, "train")?;
    let val_set = select(&data, &split.val, "val")?;
    log::info!("training on {} subjects, validating on {}", train_set.len(), val_set.len());
    let outcome = training::train::<f64>(&cfg, &train_set, &val_set)?;

    staged.file(MODEL, outcome.network.to_json()?.into_bytes());
    staged.file(HISTORY, csv_bytes(|b| io::write_history(b, &outcome.history)));
    staged.config = serde_json::to_value(&cfg)?;
    staged.seeds.insert("seed".into(), seed);
    staged.seed_source = source.into();
    staged.commit(&a.out)?;
    Ok(())
}

fn predict_rows(
    net: &Network<f64>,
    rows: &[(SubjectId, Vec<f64>)],
    t_grid: &[f64],
    g_grid: &[f64],
) -> Result<Vec<CifSurface<f64>>, Failure> {
    let ev = net.evaluator();
    let mut out = Vec::with_capacity(rows.len());
    for (id, x) in rows {
        let s = ev.surface(*id, x, t_grid, g_grid).map_err(|e| Failure::from(e).context(format!("subject {id}")))?;
        if s.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Failure::new(Kind::Numeric, anyhow::anyhow!("non-finite prediction for subject {id}")));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn predict(a: &PredictArgs) -> Result<(), Failure> {
    let mut staged = Staged::new("predict");
    staged.input("model", &a.model);
    let net = load_model(&a.model)?;
    let t_grid = grid(&a.t_grid, "t-grid")?;
    let g_grid = grid(&a.grades, "grades")?;
    let rows: Vec<(SubjectId, Vec<f64>)> = match (&a.features, &a.data) {
        (Some(path), _) => {
            staged.input("features", path);
            io::read_features(open(path)?)?
        }
        (None, Some(dir)) => {
            staged.input("data", dir);
            let rows = io::read_features(open(&dir.join(FEATURES))?)?;
            match split_ids(dir, a.split)? {
                Some(ids) => {
                    let keep: BTreeSet<SubjectId> = ids.into_iter().collect();
                    rows.into_iter().filter(|(id, _)| keep.contains(id)).collect()
                }
                None => rows,
            }
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    if let Some((id, x)) = rows.iter().find(|(_, x)| x.len() != net.input_dim) {
        return Err(Failure::config(format!("subject {id}: {} features, model expects {}", x.len(), net.input_dim)));
    }
    let surfaces = predict_rows(&net, &rows, &t_grid, &g_grid)?;
    staged.file(CIF, csv_bytes(|b| io::write_surfaces(b, &surfaces)));
    staged.config =
        serde_json::json!({ "t_grid": t_grid, "grades": g_grid, "split": format!("{:?}", a.split).to_lowercase() });
    staged.commit(&a.out)?;
    Ok(())
}

/// Lists ids present on only one side.
fn id_mismatch(pred: &BTreeSet<SubjectId>, data: &BTreeSet<SubjectId>) -> Option<String> {
    let only_pred: Vec<_> = pred.difference(data).take(20).collect();
    let only_data: Vec<_> = data.difference(pred).take(20).collect();
    if only_pred.is_empty() && only_data.is_empty() {
        return None;
    }
    Some(format!("subject ids differ; only in predictions: {only_pred:?}; only in data: {only_data:?} (first 20 each)"))
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), Failure> {
    let mut staged = Staged::new("evaluate");
    staged.input("cif", &a.cif);
    let predicted =
        io::read_surfaces(open(&a.cif)?).map_err(|e| Failure::from(e).context(a.cif.display().to_string()))?;
    if predicted.is_empty() {
        return Err(Failure::config("prediction file has no rows"));
    }

    let (mut data, truth_path) = match (&a.data, &a.trajectories) {
        (Some(dir), _) => {
            staged.input("data", dir);
            let mut data = load_dataset(dir)?;
            if let Some(ids) = split_ids(dir, a.split)? {
                data = select(&data, &ids, "split")?;
            }
            let default_truth = dir.join(TRUE_CIF);
            (data, a.true_cif.clone().or_else(|| default_truth.exists().then_some(default_truth)))
        }
        (None, Some(path)) => {
            staged.input("trajectories", path);
            let subjects = io::read_trajectories(open(path)?)?
                .into_iter()
                .map(|(id, trajectory): (SubjectId, Trajectory)| Subject { id, features: Vec::new(), trajectory })
                .collect();
            let data = Dataset::new(subjects);
            data.validate().map_err(Failure::config)?;
            (data, a.true_cif.clone())
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    let truth_path = if a.no_truth { None } else { truth_path };
    data.subjects.sort_by_key(|s| s.id);

    let pred_ids: BTreeSet<SubjectId> = predicted.iter().map(|s| s.subject_id).collect();
    let data_ids: BTreeSet<SubjectId> = data.subjects.iter().map(|s| s.id).collect();
    if let Some(msg) = id_mismatch(&pred_ids, &data_ids) {
        return Err(Failure::config(msg));
    }

    let truth = match &truth_path {
        Some(path) => {
            staged.input("true_cif", path);
            let all =
                io::read_surfaces(open(path)?).map_err(|e| Failure::from(e).context(path.display().to_string()))?;
            let kept: Vec<CifSurface<f64>> = all.into_iter().filter(|s| data_ids.contains(&s.subject_id)).collect();
            if kept.len() != data_ids.len() {
                return Err(Failure::config(format!(
                    "{}: true CIF missing for {} subjects",
                    path.display(),
                    data_ids.len() - kept.len()
                )));
            }
            Some(kept)
        }
        None => None,
    };

    let t_grid = match &a.t_grid {
        Some(s) => grid(s, "t-grid")?,
        None => predicted[0].t_grid.iter().copied().filter(|&t| t > 0.0).collect(),
    };
    if t_grid.is_empty() {
        return Err(Failure::config("no positive evaluation times"));
    }
    let grades = match &a.grades {
        Some(s) => grid(s, "grades")?,
        None => predicted[0].g_grid.clone(),
    };
    let mut opts = EvalOptions::new(t_grid, grades);
    opts.variant = a.variant;
    opts.ipcw = a.ipcw == Switch::On;
    opts.naive_rule = a.naive_rule;

    let report = score(&predicted, &data, truth.as_deref(), &opts)?;
    staged.file(REPORT_JSON, report.to_json().into_bytes());
    staged.file(REPORT_CSV, report.to_csv().into_bytes());
    staged.config = serde_json::to_value(&opts)?;
    staged.commit(&a.out)?;
    Ok(())
}

pub fn importance(a: &ImportanceArgs) -> Result<(), Failure> {
    let mut staged = Staged::new("importance");
    staged.input("model", &a.model);
    staged.input("data", &a.data);
    let net = load_model(&a.model)?;
    let mut data = load_dataset(&a.data)?;
    if let Some(ids) = split_ids(&a.data, a.split)? {
        data = select(&data, &ids, "split")?;
    }
    if data.feature_dim() != Some(net.input_dim) {
        return Err(Failure::config(format!(
            "dataset has {:?} features, model expects {}",
            data.feature_dim(),
            net.input_dim
        )));
    }
    let (seed, source) = resolve_seed(a.seed, None)?;
    let mut cfg = ImportanceConfig::new(grid(&a.t_grid, "t-grid")?, grid(&a.grades, "grades")?);
    cfg.n_reps = a.n_reps;
    cfg.seed = seed;
    cfg.ipcw = a.ipcw == Switch::On;
    cfg.features = a.features.clone();
    let report = permutation_importance(&net, &data, &cfg)?;
    staged.file(IMPORTANCE, csv_bytes(|b| io::write_importance(b, &report)));
    staged.config = serde_json::to_value(&cfg)?;
    staged.seeds.insert("seed".into(), seed);
    staged.seed_source = source.into();
    staged.commit(&a.out)?;
    Ok(())
}

fn print_audit(report: &AuditReport) {
    for c in &report.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("{status} {:<15} evaluated={} worst={:e}", c.name, c.evaluated, c.worst);
        if let Some(w) = &c.witness {
            if c.name == "gradient_audit" {
                let (i, g) = w.other.unwrap_or((f64::NAN, f64::NAN));
                println!("     witness: parameter {i} analytic={g:e} rel_error={:e}", w.value);
            } else {
                let other = w.other.map(|(t, g)| format!(" next=(t={t}, g={g})")).unwrap_or_default();
                println!("     witness: t={} g={}{other} value={:e} x={:?}", w.t, w.g, w.value, w.x);
            }
        }
    }
}

pub fn check(a: &CheckArgs) -> Result<(), Failure> {
    let mut staged = Staged::new("check");
    staged.input("model", &a.model);
    let net = load_model(&a.model)?;
    let (seed, source) = resolve_seed(a.seed, None)?;
    let cfg = AuditConfig { n_points: a.points, seed, ..AuditConfig::default() };
    let report = audit(&net, &cfg)?;
    print_audit(&report);
    if let Some(out) = &a.out {
        staged.file(CHECK, serde_json::to_vec_pretty(&report)?);
        staged.config = serde_json::to_value(&cfg)?;
        staged.seeds.insert("seed".into(), seed);
        staged.seed_source = source.into();
        staged.commit(out)?;
    }
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name).collect();
        Err(Failure::new(Kind::Invariant, anyhow::anyhow!("failed checks: {}", names.join(", "))))
    }
}
