use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{DescriptorDataset, FeatureLayout, PRESSURE_COLUMN, TEMPERATURE_COLUMN};
use crate::error::{Error, Result};

/// Expected physical ranges per column; values outside produce warnings.
pub const LABEL_BOUNDS: [(&str, f64, f64); 5] = [
    (TEMPERATURE_COLUMN, 278.15, 373.15),
    (PRESSURE_COLUMN, 100.0, 20_000.0),
    ("cpt", 231.8, 1764.0),
    ("density", 847.5, 1557.1),
    ("viscosity", 0.00316, 10.2),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RangeWarning {
    pub column: String,
    pub count: usize,
    /// Data row index (0-based, header excluded) of the first offender.
    pub first_row: usize,
    pub first_value: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub dropped_rows: usize,
    pub warnings: Vec<RangeWarning>,
}

/// Loads a descriptor CSV, taking the first `expected_tasks` columns that
/// are not feature or state columns as labels.
pub fn load_csv(path: impl AsRef<Path>, expected_tasks: usize) -> Result<(DescriptorDataset, LoadReport)> {
    read_csv(File::open(path)?, FeatureLayout::default(), LabelColumns::First(expected_tasks))
}

pub fn load_csv_with_labels(
    path: impl AsRef<Path>,
    labels: &[&str],
) -> Result<(DescriptorDataset, LoadReport)> {
    let names = labels.iter().map(|s| s.to_string()).collect();
    read_csv(File::open(path)?, FeatureLayout::default(), LabelColumns::Named(names))
}

#[derive(Debug, Clone)]
pub enum LabelColumns {
    First(usize),
    Named(Vec<String>),
}

pub fn read_csv<R: Read>(
    reader: R,
    layout: FeatureLayout,
    labels: LabelColumns,
) -> Result<(DescriptorDataset, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();

    let feature_names = layout.column_names();
    let feature_idx = feature_names
        .iter()
        .map(|name| index.get(name.as_str()).copied().ok_or_else(|| Error::MissingColumn(name.clone())))
        .collect::<Result<Vec<_>>>()?;

    let label_names: Vec<String> = match labels {
        LabelColumns::Named(names) => names,
        LabelColumns::First(n) => {
            let candidates: Vec<String> = headers
                .iter()
                .filter(|h| !feature_names.iter().any(|f| f == h))
                .map(str::to_string)
                .collect();
            if candidates.len() < n {
                return Err(Error::MissingColumn(format!(
                    "expected {n} label columns, found {} ({})",
                    candidates.len(),
                    candidates.join(",")
                )));
            }
            candidates.into_iter().take(n).collect()
        }
    };
    if label_names.is_empty() {
        return Err(Error::Data("no label columns requested".into()));
    }
    let label_idx = label_names
        .iter()
        .map(|name| index.get(name.as_str()).copied().ok_or_else(|| Error::MissingColumn(name.clone())))
        .collect::<Result<Vec<_>>>()?;

    let width = feature_idx.len();
    let n_tasks = label_idx.len();
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut report = LoadReport::default();
    let mut row_buf = vec![0.0; width + n_tasks];

    for record in rdr.records() {
        let record = record?;
        report.rows_read += 1;
        let parsed = feature_idx.iter().chain(&label_idx).zip(row_buf.iter_mut()).all(|(&i, slot)| {
            match record.get(i).and_then(|s| s.parse::<f64>().ok()) {
                Some(v) if v.is_finite() => {
                    *slot = v;
                    true
                }
                _ => false,
            }
        });
        if !parsed {
            report.dropped_rows += 1;
            continue;
        }
        features.extend_from_slice(&row_buf[..width]);
        targets.extend_from_slice(&row_buf[width..]);
    }
    if report.dropped_rows > 0 {
        log::warn!(
            "dropped {} of {} rows with missing or non-finite values",
            report.dropped_rows,
            report.rows_read
        );
    }
    let n = features.len() / width;
    if n == 0 {
        return Err(Error::EmptyDataset(format!(
            "no usable rows ({} read, {} dropped)",
            report.rows_read, report.dropped_rows
        )));
    }
    let features = Array2::from_shape_vec((n, width), features).map_err(|e| Error::Shape(e.to_string()))?;
    let labels = Array2::from_shape_vec((n, n_tasks), targets).map_err(|e| Error::Shape(e.to_string()))?;

    let state_cols = layout.state_range();
    for (name, lo, hi) in LABEL_BOUNDS {
        let column = if let Some(j) = feature_names[state_cols.clone()].iter().position(|f| f == name) {
            features.column(state_cols.start + j)
        } else if let Some(t) = label_names.iter().position(|l| l == name) {
            labels.column(t)
        } else {
            continue;
        };
        let mut offenders = column.iter().enumerate().filter(|(_, &v)| v < lo || v > hi);
        if let Some((first_row, &first_value)) = offenders.next() {
            let count = 1 + offenders.count();
            log::warn!("{count} value(s) of {name} outside [{lo}, {hi}] (first: row {first_row}, {first_value})");
            report.warnings.push(RangeWarning {
                column: name.to_string(),
                count,
                first_row,
                first_value,
                min: lo,
                max: hi,
            });
        }
    }

    let dataset = DescriptorDataset::new(layout, features, labels, label_names)?;
    Ok((dataset, report))
}

/// Writes the dataset in the documented schema. Floats use Rust's
/// shortest round-trip formatting so re-reading is exact.
pub fn write_csv<W: Write>(dataset: &DescriptorDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = dataset.layout().column_names();
    header.extend(dataset.label_names().iter().cloned());
    wtr.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for (f, l) in dataset.features().rows().into_iter().zip(dataset.labels().rows()) {
        row.clear();
        row.extend(f.iter().chain(l.iter()).map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> String {
        let mut cols = FeatureLayout::default().column_names();
        cols.extend(["cpt", "density", "viscosity"].map(String::from));
        cols.join(",")
    }

    fn row(temperature: f64) -> String {
        let mut vals: Vec<String> = (0..188).map(|i| format!("{}", i as f64 * 0.01)).collect();
        vals.push(temperature.to_string());
        vals.push("101.3".into());
        vals.extend(["500", "1200", "0.05"].map(String::from));
        vals.join(",")
    }

    fn read(text: &str, tasks: usize) -> Result<(DescriptorDataset, LoadReport)> {
        read_csv(text.as_bytes(), FeatureLayout::default(), LabelColumns::First(tasks))
    }

    #[test]
    fn happy_path_ten_rows() {
        let mut text = header();
        for _ in 0..10 {
            text.push('\n');
            text.push_str(&row(300.0));
        }
        let (d, report) = read(&text, 3).unwrap();
        assert_eq!(d.len(), 10);
        assert_eq!(d.n_tasks(), 3);
        assert_eq!(d.label_names(), ["cpt", "density", "viscosity"]);
        assert!(report.warnings.is_empty());
        assert_eq!(d.state_vars()[[0, 0]], 300.0);
    }

    #[test]
    fn hot_row_warns_but_loads() {
        let text = format!("{}\n{}\n{}", header(), row(300.0), row(500.0));
        let (d, report) = read(&text, 3).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(report.warnings.len(), 1);
        let w = &report.warnings[0];
        assert_eq!((w.column.as_str(), w.first_row, w.first_value), ("temperature_K", 1, 500.0));
        assert_eq!(w.max, 373.15);
    }

    #[test]
    fn missing_pressure_column_named() {
        let text = header().replace("pressure_kPa", "pressure");
        let err = read(&text, 3).unwrap_err();
        assert!(matches!(&err, Error::MissingColumn(c) if c == "pressure_kPa"), "{err}");
    }

    #[test]
    fn dirty_rows_dropped() {
        let bad = row(300.0).replacen("0.05", "", 1);
        let nan = row(300.0).replacen("1200", "NaN", 1);
        let text = format!("{}\n{}\n{}\n{}", header(), row(300.0), bad, nan);
        let (d, report) = read(&text, 3).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(report.dropped_rows, 2);
    }

    #[test]
    fn all_rows_dirty_is_empty_error() {
        let bad = row(300.0).replacen("0.05", "x", 1);
        let text = format!("{}\n{}", header(), bad);
        assert!(matches!(read(&text, 3), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn first_task_only() {
        let text = format!("{}\n{}", header(), row(300.0));
        let (d, _) = read(&text, 1).unwrap();
        assert_eq!(d.label_names(), ["cpt"]);
        assert!(matches!(read(&text, 4), Err(Error::MissingColumn(_))));
    }
}
