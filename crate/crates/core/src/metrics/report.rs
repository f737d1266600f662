use serde::{Deserialize, Serialize};

use super::{ibs_ipcw, mse_vs_truth, violation_extent, BrierPoint, MetricError, NaiveRule, StatusRule, Weighting};
use crate::data::Dataset;
use crate::model::CifSurface;

/// Which Brier variants to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Iti,
    Naive,
    #[default]
    Both,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iti" => Ok(Self::Iti),
            "naive" => Ok(Self::Naive),
            "both" => Ok(Self::Both),
            other => Err(format!("unknown variant {other:?} (expected iti, naive or both)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub t_grid: Vec<f64>,
    pub grades: Vec<f64>,
    pub variant: Variant,
    /// Kaplan-Meier censoring weights when true, `G = 1` otherwise.
    pub ipcw: bool,
    pub naive_rule: NaiveRule,
}

impl EvalOptions {
    pub fn new(t_grid: Vec<f64>, grades: Vec<f64>) -> Self {
        Self { t_grid, grades, variant: Variant::Both, ipcw: true, naive_rule: NaiveRule::Exact }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradeReport {
    pub grade: f64,
    pub ibs_iti: Option<f64>,
    pub ibs_naive: Option<f64>,
    pub mse: Option<f64>,
    pub bs_iti: Vec<BrierPoint<f64>>,
    pub bs_naive: Vec<BrierPoint<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub options: EvalOptions,
    pub n_subjects: usize,
    pub per_grade: Vec<GradeReport>,
    pub mean_ibs_iti: Option<f64>,
    pub mean_ibs_naive: Option<f64>,
    pub mse: Option<f64>,
    pub violation_extent: f64,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn integrated(
    rule: StatusRule,
    predicted: &[CifSurface<f64>],
    data: &Dataset,
    k: f64,
    t_grid: &[f64],
    weights: &Weighting<f64>,
) -> Result<(Option<f64>, Vec<BrierPoint<f64>>), MetricError> {
    match ibs_ipcw(rule, predicted, data, k, t_grid, weights) {
        Ok(r) => Ok((Some(r.value), r.points)),
        Err(MetricError::AllUndefined { .. }) => {
            log::warn!("grade {k}: score undefined at every grid time");
            let points = t_grid.iter().map(|&t| BrierPoint { time: t, value: None, n_certain: 0 }).collect();
            Ok((None, points))
        }
        Err(e) => Err(e),
    }
}

/// Scores `predicted` (one surface per subject, in dataset order) against
/// the observed trajectories and, if given, the true CIF surfaces.
pub fn evaluate(
    predicted: &[CifSurface<f64>],
    data: &Dataset,
    truth: Option<&[CifSurface<f64>]>,
    options: &EvalOptions,
) -> Result<EvalReport, MetricError> {
    if data.is_empty() {
        return Err(MetricError::Empty);
    }
    let weights = if options.ipcw { Weighting::ipcw(data)? } else { Weighting::Unweighted };
    let mut per_grade = Vec::with_capacity(options.grades.len());
    for &k in &options.grades {
        let (ibs_iti, bs_iti) = if options.variant != Variant::Naive {
            integrated(StatusRule::ImpliedTruth, predicted, data, k, &options.t_grid, &weights)?
        } else {
            (None, Vec::new())
        };
        let (ibs_naive, bs_naive) = if options.variant != Variant::Iti {
            integrated(StatusRule::Naive(options.naive_rule), predicted, data, k, &options.t_grid, &weights)?
        } else {
            (None, Vec::new())
        };
        let mse = truth.map(|tr| mse_vs_truth(predicted, tr, &options.t_grid, &[k])).transpose()?;
        per_grade.push(GradeReport { grade: k, ibs_iti, ibs_naive, mse, bs_iti, bs_naive });
    }
    let mse = truth.map(|tr| mse_vs_truth(predicted, tr, &options.t_grid, &options.grades)).transpose()?;
    Ok(EvalReport {
        options: options.clone(),
        n_subjects: data.len(),
        mean_ibs_iti: mean(per_grade.iter().map(|g| g.ibs_iti)),
        mean_ibs_naive: mean(per_grade.iter().map(|g| g.ibs_naive)),
        per_grade,
        mse,
        violation_extent: violation_extent(predicted),
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Long format: `metric,grade,time,value`; empty cells where a column
    /// does not apply or a value is undefined.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut row = |metric: &str, grade: Option<f64>, time: Option<f64>, value: String| {
            w.write_record([metric.to_string(), cell(grade), cell(time), value]).expect("in-memory write");
        };
        row("metric", None, None, String::new());
        for g in &self.per_grade {
            let k = Some(g.grade);
            if self.options.variant != Variant::Naive {
                row("ibs_iti", k, None, cell(g.ibs_iti));
            }
            if self.options.variant != Variant::Iti {
                row("ibs_naive", k, None, cell(g.ibs_naive));
            }
            if g.mse.is_some() {
                row("mse", k, None, cell(g.mse));
            }
            for (name, n_name, points) in
                [("bs_iti", "n_certain_iti", &g.bs_iti), ("bs_naive", "n_certain_naive", &g.bs_naive)]
            {
                for p in points {
                    row(name, k, Some(p.time), cell(p.value));
                    row(n_name, k, Some(p.time), p.n_certain.to_string());
                }
            }
        }
        if self.options.variant != Variant::Naive {
            row("mean_ibs_iti", None, None, cell(self.mean_ibs_iti));
        }
        if self.options.variant != Variant::Iti {
            row("mean_ibs_naive", None, None, cell(self.mean_ibs_naive));
        }
        if self.mse.is_some() {
            row("mse", None, None, cell(self.mse));
        }
        row("violation_extent", None, None, self.violation_extent.to_string());
        let bytes = w.into_inner().expect("in-memory flush");
        let text = String::from_utf8(bytes).expect("utf-8 csv");
        // The first record only served to fix the column count; replace it with the header.
        let body = text.split_once('\n').map_or("", |(_, rest)| rest);
        format!("metric,grade,time,value\n{body}")
    }
}
