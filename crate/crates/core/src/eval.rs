//! RMSE, percent improvement over a baseline, and the results table.
//!
//! Report CSV columns, in order:
//! `property,model,stage1,stage2,hyperparam_optimization,val_rmse,test_rmse,pct_improvement,label_space,seed`.
//! Numbers are written at full precision; `-` marks an absent stage-2 or
//! improvement value.

use std::fmt::Write as _;
use std::io::Read;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::data::LabelTransform;
use crate::error::{Error, Result};

pub const BASELINE_MODEL: &str = "Baseline";

pub fn rmse(pred: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Shape("rmse of an empty vector".into()));
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok((sum / pred.len() as f64).sqrt())
}

/// `100·(baseline − model)/baseline`; negative when the model is worse.
pub fn percent_improvement(baseline_rmse: f64, model_rmse: f64) -> Result<f64> {
    if !(baseline_rmse > 0.0) {
        return Err(Error::Numeric(format!(
            "baseline RMSE must be positive, got {baseline_rmse}"
        )));
    }
    Ok(100.0 * (baseline_rmse - model_rmse) / baseline_rmse)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImprovementBasis {
    #[default]
    Test,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub property: String,
    pub model: String,
    pub stage1: String,
    pub stage2: Option<String>,
    pub optimization: String,
    pub val_rmse: f64,
    pub test_rmse: f64,
    pub improvement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
    pub label_transform: LabelTransform,
    pub seed: u64,
    pub basis: ImprovementBasis,
}

impl RunReport {
    pub fn new(label_transform: LabelTransform, seed: u64) -> Self {
        Self {
            rows: Vec::new(),
            label_transform,
            seed,
            basis: ImprovementBasis::Test,
        }
    }

    fn basis_value(&self, row: &ReportRow) -> f64 {
        match self.basis {
            ImprovementBasis::Test => row.test_rmse,
            ImprovementBasis::Val => row.val_rmse,
        }
    }

    /// Fills missing improvements of non-baseline rows from the baseline row
    /// of the same property, looked up first in this report, then in
    /// `reference`.
    pub fn fill_improvements(&mut self, reference: &[ReportRow]) -> Result<()> {
        let find = |rows: &[ReportRow], property: &str| {
            rows.iter()
                .find(|r| r.model == BASELINE_MODEL && r.property == property)
                .cloned()
        };
        for i in 0..self.rows.len() {
            let row = &self.rows[i];
            if row.model == BASELINE_MODEL || row.improvement.is_some() {
                continue;
            }
            let Some(base) = find(&self.rows, &row.property).or_else(|| find(reference, &row.property))
            else {
                continue;
            };
            let p = percent_improvement(self.basis_value(&base), self.basis_value(row))?;
            self.rows[i].improvement = Some(p);
        }
        Ok(())
    }
}

/// Density to four decimals, everything else to three.
pub fn format_rmse(property: &str, value: f64) -> String {
    if property.eq_ignore_ascii_case("density") {
        format!("{value:.4}")
    } else {
        format!("{value:.3}")
    }
}

/// Whole percent, or one decimal below 2% in magnitude.
pub fn format_percent(p: f64) -> String {
    if p.abs() < 2.0 {
        format!("{p:.1}%")
    } else {
        format!("{p:.0}%")
    }
}

const HEADERS: [&str; 8] = [
    "Property",
    "Model",
    "Stage #1",
    "Stage #2",
    "Hyperparam Optimization",
    "Val RMSE",
    "Test RMSE",
    "% Improvement",
];

const CSV_HEADER: [&str; 10] = [
    "property",
    "model",
    "stage1",
    "stage2",
    "hyperparam_optimization",
    "val_rmse",
    "test_rmse",
    "pct_improvement",
    "label_space",
    "seed",
];

/// Renders the plain-text table and the CSV. Byte-for-byte deterministic.
pub fn emit_report(report: &RunReport) -> Result<(String, String)> {
    let cells: Vec<[String; 8]> = report
        .rows
        .iter()
        .map(|r| {
            [
                r.property.clone(),
                r.model.clone(),
                r.stage1.clone(),
                r.stage2.clone().unwrap_or_else(|| "-".into()),
                r.optimization.clone(),
                format_rmse(&r.property, r.val_rmse),
                format_rmse(&r.property, r.test_rmse),
                r.improvement.map_or_else(|| "-".into(), format_percent),
            ]
        })
        .collect();
    let mut widths = HEADERS.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut text = String::new();
    let line = |text: &mut String, row: &[String]| {
        let joined: Vec<String> = row
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(text, "{}", joined.join("  ").trim_end());
    };
    line(&mut text, &HEADERS.map(String::from));
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(&mut text, &rule);
    for row in &cells {
        line(&mut text, row);
    }
    let basis = match report.basis {
        ImprovementBasis::Test => "test",
        ImprovementBasis::Val => "validation",
    };
    let _ = writeln!(
        text,
        "RMSE in {}; % improvement = 100*(baseline - model)/baseline on {basis} RMSE; seed {}",
        report.label_transform, report.seed
    );

    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(CSV_HEADER)?;
    for r in &report.rows {
        wtr.write_record([
            r.property.clone(),
            r.model.clone(),
            r.stage1.clone(),
            r.stage2.clone().unwrap_or_else(|| "-".into()),
            r.optimization.clone(),
            r.val_rmse.to_string(),
            r.test_rmse.to_string(),
            r.improvement.map_or_else(|| "-".into(), |p| p.to_string()),
            report.label_transform.to_string(),
            report.seed.to_string(),
        ])?;
    }
    let csv = String::from_utf8(wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .expect("csv output is utf-8");
    Ok((text, csv))
}

/// Reads rows back from a report CSV (e.g. to use a baseline run as the
/// reference for later runs).
pub fn read_report_csv<R: Read>(reader: R) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let idx: Vec<usize> = CSV_HEADER[..8].iter().map(|n| col(n)).collect::<Result<_>>()?;
    let num = |s: &str, what: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Data(format!("bad {what} value {s:?} in report")))
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(idx[i]).unwrap_or("").to_string();
        let opt = |s: String| (s != "-" && !s.is_empty()).then_some(s);
        rows.push(ReportRow {
            property: get(0),
            model: get(1),
            stage1: get(2),
            stage2: opt(get(3)),
            optimization: get(4),
            val_rmse: num(&get(5), "val_rmse")?,
            test_rmse: num(&get(6), "test_rmse")?,
            improvement: opt(get(7)).map(|s| num(&s, "pct_improvement")).transpose()?,
        });
    }
    Ok(rows)
}
