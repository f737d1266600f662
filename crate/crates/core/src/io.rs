//! CSV formats for datasets, predictions, training history and importance.
//!
//! | file | columns |
//! |---|---|
//! | features | `subject_id,f1,...,fD` |
//! | trajectories | `subject_id,time,grade` |
//! | CIF surfaces | `subject_id,grade,time,cif`, sorted by subject, grade, time |
//! | history | `epoch,train_loss,val_loss` |
//! | importance | `feature,mean_degradation,sd,ci95_half_width` |
//!
//! Floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use thiserror::Error;

use crate::data::{Dataset, Observation, Subject, SubjectId, Trajectory};
use crate::metrics::ImportanceReport;
use crate::model::CifSurface;
use crate::training::History;

pub const FEATURES_PREFIX: &str = "subject_id";
pub const TRAJECTORY_HEADER: [&str; 3] = ["subject_id", "time", "grade"];
pub const SURFACE_HEADER: [&str; 4] = ["subject_id", "grade", "time", "cif"];
pub const HISTORY_HEADER: [&str; 3] = ["epoch", "train_loss", "val_loss"];
pub const IMPORTANCE_HEADER: [&str; 4] = ["feature", "mean_degradation", "sd", "ci95_half_width"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{file}: {msg}")]
    Format { file: &'static str, msg: String },
}

fn format_err(file: &'static str, msg: impl Into<String>) -> IoError {
    IoError::Format { file, msg: msg.into() }
}

fn check_header(file: &'static str, got: &csv::StringRecord, want: &[&str]) -> Result<(), IoError> {
    if got.iter().ne(want.iter().copied()) {
        return Err(format_err(file, format!("expected header {:?}, got {:?}", want, got.iter().collect::<Vec<_>>())));
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(file: &'static str, rec: &csv::StringRecord, i: usize) -> Result<T, IoError> {
    let line = rec.position().map_or(0, |p| p.line());
    let cell = rec.get(i).ok_or_else(|| format_err(file, format!("line {line}: missing column {i}")))?;
    cell.trim().parse().map_err(|_| format_err(file, format!("line {line}: cannot parse {cell:?}")))
}

pub fn feature_name(j: usize) -> String {
    format!("f{}", j + 1)
}

pub fn write_features<W: Write>(out: W, data: &Dataset) -> Result<(), IoError> {
    let dim = data.feature_dim().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![FEATURES_PREFIX.to_string()];
    header.extend((0..dim).map(feature_name));
    w.write_record(&header)?;
    for s in &data.subjects {
        let mut row = vec![s.id.to_string()];
        row.extend(s.features.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `(subject_id, features)` in file order.
pub fn read_features<R: Read>(input: R) -> Result<Vec<(SubjectId, Vec<f64>)>, IoError> {
    const FILE: &str = "features";
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let dim = header.len().saturating_sub(1);
    let want: Vec<String> = std::iter::once(FEATURES_PREFIX.to_string()).chain((0..dim).map(feature_name)).collect();
    check_header(FILE, &header, &want.iter().map(String::as_str).collect::<Vec<_>>())?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let id = parse(FILE, &rec, 0)?;
        let x = (1..=dim).map(|i| parse(FILE, &rec, i)).collect::<Result<Vec<f64>, _>>()?;
        out.push((id, x));
    }
    Ok(out)
}

pub fn write_trajectories<W: Write>(out: W, data: &Dataset) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for s in &data.subjects {
        for o in &s.trajectory.observations {
            w.write_record([s.id.to_string(), o.time.to_string(), o.grade.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Observations grouped by subject id, each in file order.
pub fn read_trajectories<R: Read>(input: R) -> Result<BTreeMap<SubjectId, Trajectory>, IoError> {
    const FILE: &str = "trajectories";
    let mut r = csv::Reader::from_reader(input);
    check_header(FILE, &r.headers()?.clone(), &TRAJECTORY_HEADER)?;
    let mut out: BTreeMap<SubjectId, Trajectory> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let id = parse(FILE, &rec, 0)?;
        let obs = Observation::new(parse(FILE, &rec, 1)?, parse(FILE, &rec, 2)?);
        out.entry(id).or_insert_with(|| Trajectory::new(Vec::new())).observations.push(obs);
    }
    Ok(out)
}

/// Joins features and trajectories by id, ordered as in the features file.
pub fn join_dataset(
    features: Vec<(SubjectId, Vec<f64>)>,
    mut trajectories: BTreeMap<SubjectId, Trajectory>,
) -> Result<Dataset, IoError> {
    let mut subjects = Vec::with_capacity(features.len());
    for (id, x) in features {
        let trajectory = trajectories
            .remove(&id)
            .ok_or_else(|| format_err("trajectories", format!("no observations for subject {id}")))?;
        subjects.push(Subject { id, features: x, trajectory });
    }
    if let Some(id) = trajectories.keys().next() {
        return Err(format_err("features", format!("no features for subject {id}")));
    }
    let data = Dataset::new(subjects);
    data.validate().map_err(|e| format_err("trajectories", e.to_string()))?;
    Ok(data)
}

/// Long format sorted by (subject, grade, time).
pub fn write_surfaces<W: Write>(out: W, surfaces: &[CifSurface<f64>]) -> Result<(), IoError> {
    let mut sorted: Vec<&CifSurface<f64>> = surfaces.iter().collect();
    sorted.sort_by_key(|s| s.subject_id);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SURFACE_HEADER)?;
    for s in sorted {
        for (gi, g) in s.g_grid.iter().enumerate() {
            for (ti, t) in s.t_grid.iter().enumerate() {
                w.write_record([s.subject_id.to_string(), g.to_string(), t.to_string(), s.values[ti][gi].to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds one surface per subject; every subject must cover the same full
/// time x grade grid.
pub fn read_surfaces<R: Read>(input: R) -> Result<Vec<CifSurface<f64>>, IoError> {
    const FILE: &str = "cif";
    let mut r = csv::Reader::from_reader(input);
    check_header(FILE, &r.headers()?.clone(), &SURFACE_HEADER)?;
    let mut cells: BTreeMap<SubjectId, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let id = parse(FILE, &rec, 0)?;
        cells.entry(id).or_default().push((parse(FILE, &rec, 1)?, parse(FILE, &rec, 2)?, parse(FILE, &rec, 3)?));
    }
    let mut out = Vec::with_capacity(cells.len());
    for (id, rows) in cells {
        let mut g_grid: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut t_grid: Vec<f64> = rows.iter().map(|r| r.1).collect();
        for v in [&mut g_grid, &mut t_grid] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        if rows.len() != g_grid.len() * t_grid.len() {
            return Err(format_err(FILE, format!("subject {id}: rows do not form a complete time x grade grid")));
        }
        let mut values = vec![vec![f64::NAN; g_grid.len()]; t_grid.len()];
        for (g, t, v) in rows {
            let gi = g_grid.iter().position(|&x| x == g).unwrap();
            let ti = t_grid.iter().position(|&x| x == t).unwrap();
            if !values[ti][gi].is_nan() {
                return Err(format_err(FILE, format!("subject {id}: duplicate row at t={t}, grade={g}")));
            }
            values[ti][gi] = v;
        }
        out.push(CifSurface { subject_id: id, t_grid, g_grid, values });
    }
    Ok(out)
}

pub fn write_history<W: Write>(out: W, history: &History) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HISTORY_HEADER)?;
    for e in &history.epochs {
        w.write_record([e.epoch.to_string(), e.train_loss.to_string(), e.val_loss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_importance<W: Write>(out: W, report: &ImportanceReport) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(IMPORTANCE_HEADER)?;
    for f in &report.features {
        w.write_record([
            feature_name(f.feature),
            f.mean_degradation.to_string(),
            f.sd.to_string(),
            f.ci95_half_width.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> Dataset {
        Dataset::new(vec![
            Subject { id: 3, features: vec![0.1, -2.5], trajectory: Trajectory::from_pairs(&[(0.0, 0.0), (2.0, 1.0)]) },
            Subject { id: 1, features: vec![1.0 / 3.0, 0.0], trajectory: Trajectory::from_pairs(&[(0.0, 0.0)]) },
        ])
    }

    #[test]
    fn dataset_round_trip() {
        let d = data();
        let mut f = Vec::new();
        let mut t = Vec::new();
        write_features(&mut f, &d).unwrap();
        write_trajectories(&mut t, &d).unwrap();
        assert!(String::from_utf8(f.clone()).unwrap().starts_with("subject_id,f1,f2\n3,0.1,-2.5\n"));
        let back = join_dataset(read_features(&f[..]).unwrap(), read_trajectories(&t[..]).unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn surfaces_round_trip_sorted() {
        let s = vec![
            CifSurface {
                subject_id: 2,
                t_grid: vec![0.0, 1.5],
                g_grid: vec![1.0, 2.0],
                values: vec![vec![0.0, 0.0], vec![0.3, 0.1]],
            },
            CifSurface {
                subject_id: 0,
                t_grid: vec![0.0, 1.5],
                g_grid: vec![1.0, 2.0],
                values: vec![vec![0.0, 0.0], vec![0.7, 0.2]],
            },
        ];
        let mut buf = Vec::new();
        write_surfaces(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "subject_id,grade,time,cif");
        assert_eq!(lines[1], "0,1,0,0");
        assert_eq!(lines[2], "0,1,1.5,0.7");
        assert_eq!(lines[3], "0,2,0,0");
        let back = read_surfaces(&buf[..]).unwrap();
        assert_eq!(back, vec![s[1].clone(), s[0].clone()]);
    }

    #[test]
    fn incomplete_grid_rejected() {
        let text = "subject_id,grade,time,cif\n0,1,0,0\n0,1,1,0.5\n0,2,0,0\n";
        assert!(read_surfaces(text.as_bytes()).is_err());
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(read_trajectories("id,time,grade\n".as_bytes()).is_err());
    }

    #[test]
    fn missing_join_partner_rejected() {
        let f = vec![(0, vec![1.0])];
        let t = BTreeMap::new();
        assert!(join_dataset(f, t).is_err());
    }
}
