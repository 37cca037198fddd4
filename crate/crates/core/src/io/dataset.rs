use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{QifError, Result};
use crate::model::{LongitudinalDataset, Subject};

/// Which columns of a long-format file hold what.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub id: String,
    pub time: String,
    pub response: String,
    pub covariates: Vec<String>,
}

impl ColumnSchema {
    pub fn new(id: &str, time: &str, response: &str, covariates: &[&str]) -> Self {
        Self {
            id: id.into(),
            time: time.into(),
            response: response.into(),
            covariates: covariates.iter().map(|c| c.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub dataset: LongitudinalDataset,
    /// Subject ids in dataset order.
    pub ids: Vec<String>,
    /// Subjects removed because a time point or a cell was missing.
    pub dropped: usize,
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<LoadedDataset> {
    let file = File::open(path.as_ref()).map_err(|e| QifError::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_dataset(file, schema)
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | ".")
}

struct Pending {
    rows: Vec<Option<(Vec<f64>, f64)>>,
    incomplete: bool,
}

/// Reads a header-bearing comma-separated long-format table. The panel
/// length `q` is the largest time index in the file; subjects lacking any
/// time point or with a missing cell are dropped.
pub fn read_dataset<R: Read>(reader: R, schema: &ColumnSchema) -> Result<LoadedDataset> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| QifError::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| QifError::Config(format!("column '{name}' not found in header")))
    };
    let id_col = column(&schema.id)?;
    let time_col = column(&schema.time)?;
    let y_col = column(&schema.response)?;
    let x_cols = schema
        .covariates
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    if x_cols.is_empty() {
        return Err(QifError::Config("at least one covariate column is required".into()));
    }

    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, Pending> = HashMap::new();
    let mut q = 0usize;
    for record in csv.records() {
        let record = record.map_err(|e| QifError::MalformedRow {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |reason: String| QifError::MalformedRow { line, reason };
        let id = record[id_col].to_string();
        if id.is_empty() {
            return Err(bad("empty subject id".into()));
        }
        let t: usize = record[time_col]
            .parse()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| bad(format!("time index '{}' is not a positive integer", &record[time_col])))?;
        let mut missing = false;
        let mut cell = |col: usize, what: &str| -> Result<f64> {
            let raw = &record[col];
            if is_missing(raw) {
                missing = true;
                return Ok(f64::NAN);
            }
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(bad(format!("{what} '{raw}' is not a finite number"))),
            }
        };
        let y = cell(y_col, "response")?;
        let x = x_cols
            .iter()
            .map(|&c| cell(c, "covariate"))
            .collect::<Result<Vec<_>>>()?;
        let entry = pending.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Pending {
                rows: Vec::new(),
                incomplete: false,
            }
        });
        if entry.rows.len() < t {
            entry.rows.resize(t, None);
        }
        if entry.rows[t - 1].is_some() {
            return Err(QifError::UnbalancedSubject(id));
        }
        entry.rows[t - 1] = Some((x, y));
        entry.incomplete |= missing;
        q = q.max(t);
    }

    let p = x_cols.len();
    let mut subjects = Vec::new();
    let mut ids = Vec::new();
    let mut dropped = 0;
    for id in order {
        let s = pending.remove(&id).expect("recorded id");
        if s.incomplete || s.rows.len() < q || s.rows.iter().any(Option::is_none) {
            dropped += 1;
            continue;
        }
        let rows: Vec<(Vec<f64>, f64)> = s.rows.into_iter().flatten().collect();
        let y = DVector::from_iterator(q, rows.iter().map(|r| r.1));
        let x = DMatrix::from_fn(q, p, |j, k| rows[j].0[k]);
        subjects.push(Subject::new(y, x));
        ids.push(id);
    }
    if subjects.is_empty() {
        return Err(QifError::EmptyDataset);
    }
    Ok(LoadedDataset {
        dataset: LongitudinalDataset::new(subjects)?,
        ids,
        dropped,
    })
}

/// Writes a dataset in the long format read by [`read_dataset`]. Values are
/// printed with enough digits to round-trip exactly.
pub fn write_dataset<W: Write>(
    writer: W,
    dataset: &LongitudinalDataset,
    ids: &[String],
    schema: &ColumnSchema,
) -> Result<()> {
    if ids.len() != dataset.n() || schema.covariates.len() != dataset.p() {
        return Err(QifError::DimensionMismatch(format!(
            "{} ids and {} covariate names for n = {}, p = {}",
            ids.len(),
            schema.covariates.len(),
            dataset.n(),
            dataset.p()
        )));
    }
    let io_err = |e: csv::Error| QifError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![schema.id.clone(), schema.time.clone(), schema.response.clone()];
    header.extend(schema.covariates.iter().cloned());
    w.write_record(&header).map_err(io_err)?;
    for (id, s) in ids.iter().zip(dataset.subjects()) {
        for j in 0..dataset.q() {
            let mut row = vec![id.clone(), (j + 1).to_string(), s.response[j].to_string()];
            row.extend((0..dataset.p()).map(|k| s.covariates[(j, k)].to_string()));
            w.write_record(&row).map_err(io_err)?;
        }
    }
    w.flush()?;
    Ok(())
}
