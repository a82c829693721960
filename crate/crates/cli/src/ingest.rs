//! Reading and writing the two sample files.
//!
//! Sample A: a header with `pi_a` and the covariate columns. Sample B: `y`
//! and the same covariate columns in the same order. The intercept is added
//! here and is never part of a file. Line numbers count the header as line 1.

use std::path::{Path, PathBuf};

use drsel::model::{NonProbabilitySample, OutcomeFamily, ProbabilitySample};
use drsel::numerics::DenseMatrix;

use crate::format_f64;

pub const PI_COLUMN: &str = "pi_a";
pub const Y_COLUMN: &str = "y";

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: missing column {column:?}")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: line {line}: inclusion probability {value} is outside (0, 1]")]
    BadProbability { path: PathBuf, line: u64, value: f64 },
    #[error("{path}: no data rows")]
    EmptyFile { path: PathBuf },
    #[error("{path}: covariates {found:?} do not match sample A's {expected:?}")]
    ColumnMismatch {
        path: PathBuf,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{path}: line {line}: outcome {value} is not 0 or 1")]
    BadOutcome { path: PathBuf, line: u64, value: f64 },
    #[error("{path}: line {line}: missing value in column {column:?}")]
    MissingValue { path: PathBuf, line: u64, column: String },
    #[error("{path}: line {line}: cannot read {text:?} in column {column:?} as a finite number")]
    BadNumber {
        path: PathBuf,
        line: u64,
        column: String,
        text: String,
    },
    #[error("{path}: duplicate column {column:?}")]
    DuplicateColumn { path: PathBuf, column: String },
    #[error("covariate column {column} is constant across both samples")]
    DegenerateColumn { column: usize },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// A sample together with its covariate names (intercept excluded).
#[derive(Debug, Clone)]
pub struct Loaded<S> {
    pub sample: S,
    pub names: Vec<String>,
}

struct Table {
    names: Vec<String>,
    key: Vec<f64>,
    key_lines: Vec<u64>,
    rows: Vec<f64>,
}

fn is_missing(s: &str) -> bool {
    matches!(s, "" | "NA" | "na" | "NaN" | "nan" | ".")
}

fn read_table(path: &Path, key: &str) -> Result<Table, DataError> {
    let csv_err = |source| DataError::Csv { path: path.to_path_buf(), source };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(DataError::EmptyFile { path: path.to_path_buf() });
    }
    for (i, h) in header.iter().enumerate() {
        if header[..i].contains(h) {
            return Err(DataError::DuplicateColumn { path: path.to_path_buf(), column: h.clone() });
        }
    }
    let key_idx = header
        .iter()
        .position(|h| h == key)
        .ok_or_else(|| DataError::MissingColumn { path: path.to_path_buf(), column: key.to_string() })?;
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != key_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let p = names.len() + 1;
    let mut table = Table { names, key: Vec::new(), key_lines: Vec::new(), rows: Vec::new() };
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(p);
        row.push(1.0);
        for (i, field) in rec.iter().enumerate() {
            if is_missing(field) {
                return Err(DataError::MissingValue {
                    path: path.to_path_buf(),
                    line,
                    column: header[i].clone(),
                });
            }
            let v: f64 = field
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| DataError::BadNumber {
                    path: path.to_path_buf(),
                    line,
                    column: header[i].clone(),
                    text: field.to_string(),
                })?;
            if i == key_idx {
                table.key.push(v);
                table.key_lines.push(line);
            } else {
                row.push(v);
            }
        }
        table.rows.extend(row);
    }
    if table.key.is_empty() {
        return Err(DataError::EmptyFile { path: path.to_path_buf() });
    }
    Ok(table)
}

fn matrix(t: &Table) -> DenseMatrix {
    DenseMatrix::new(t.key.len(), t.names.len() + 1, t.rows.clone()).expect("values checked finite")
}

pub fn ingest_sample_a(path: &Path) -> Result<Loaded<ProbabilitySample>, DataError> {
    let t = read_table(path, PI_COLUMN)?;
    for (&pi, &line) in t.key.iter().zip(&t.key_lines) {
        if !(pi > 0.0 && pi <= 1.0) {
            return Err(DataError::BadProbability { path: path.to_path_buf(), line, value: pi });
        }
    }
    let sample = ProbabilitySample::new(matrix(&t), t.key.clone().into())
        .expect("probabilities and shape validated");
    Ok(Loaded { sample, names: t.names })
}

/// Reads Sample B. With `family` set to the logit family every outcome must
/// be 0 or 1; with `expected` set the covariate names must match exactly.
pub fn ingest_sample_b(
    path: &Path,
    family: OutcomeFamily,
    expected: Option<&[String]>,
) -> Result<Loaded<NonProbabilitySample>, DataError> {
    let t = read_table(path, Y_COLUMN)?;
    if let Some(exp) = expected {
        if exp != t.names.as_slice() {
            return Err(DataError::ColumnMismatch {
                path: path.to_path_buf(),
                expected: exp.to_vec(),
                found: t.names,
            });
        }
    }
    if family == OutcomeFamily::BinaryLogit {
        for (&y, &line) in t.key.iter().zip(&t.key_lines) {
            if y != 0.0 && y != 1.0 {
                return Err(DataError::BadOutcome { path: path.to_path_buf(), line, value: y });
            }
        }
    }
    let sample = NonProbabilitySample::new(matrix(&t), t.key.clone().into()).expect("shape validated");
    Ok(Loaded { sample, names: t.names })
}

fn write_table(
    path: &Path,
    key: &str,
    key_values: &[f64],
    x: &DenseMatrix,
    names: &[String],
) -> Result<(), DataError> {
    let csv_err = |source| DataError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec![key.to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (k, row) in key_values.iter().zip(x.row_iter()) {
        let mut rec = vec![format_f64(*k)];
        rec.extend(row[1..].iter().map(|&v| format_f64(v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

/// Writes Sample A so that [`ingest_sample_a`] reproduces it bit for bit.
pub fn write_sample_a(path: &Path, a: &ProbabilitySample, names: &[String]) -> Result<(), DataError> {
    write_table(path, PI_COLUMN, a.inclusion_probs(), a.covariates(), names)
}

/// Writes Sample B so that [`ingest_sample_b`] reproduces it bit for bit.
pub fn write_sample_b(path: &Path, b: &NonProbabilitySample, names: &[String]) -> Result<(), DataError> {
    write_table(path, Y_COLUMN, b.outcomes(), b.covariates(), names)
}
