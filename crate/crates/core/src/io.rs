//! Dataset ingestion, feature screening and flat config files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{HrError, Result};
use crate::DataMatrix;

/// A numeric table, optionally with a final class-label column.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DataMatrix,
    pub labels: Option<Vec<u8>>,
}

fn parse_error(row: usize, col: usize, message: impl Into<String>) -> HrError {
    HrError::Parse {
        row,
        col,
        message: message.into(),
    }
}

/// Reads a rectangular numeric CSV. Rows and columns in errors are 1-based
/// positions in the file, header included.
pub fn read_csv<R: Read>(reader: R, has_header: bool, label_column: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| parse_error(row, 0, e.to_string()))?;
        if has_header && i == 0 {
            continue;
        }
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(parse_error(row, 0, format!("expected {w} fields, found {}", rec.len())));
            }
            _ => {}
        }
        let data_cols = if label_column { rec.len() - 1 } else { rec.len() };
        if data_cols == 0 {
            return Err(parse_error(row, 1, "no numeric columns"));
        }
        for (j, field) in rec.iter().enumerate().take(data_cols) {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(row, j + 1, format!("'{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_error(row, j + 1, format!("'{field}' is not finite")));
            }
            values.push(v);
        }
        if label_column {
            let field = &rec[data_cols];
            let label = match parse_label(field) {
                Some(l) => l,
                None => return Err(parse_error(row, data_cols + 1, format!("label '{field}' is not 1 or 2"))),
            };
            labels.push(label);
        }
        rows += 1;
    }
    let Some(w) = width else {
        return Err(parse_error(0, 0, "file contains no data rows"));
    };
    let p = if label_column { w - 1 } else { w };
    Ok(Dataset {
        x: DataMatrix::from_row_slice(rows, p, &values),
        labels: label_column.then_some(labels),
    })
}

pub fn load_csv(path: &Path, has_header: bool, label_column: bool) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| HrError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_csv(file, has_header, label_column)
}

/// Accepts `1`, `2` and numeric spellings such as `2.0`.
fn parse_label(field: &str) -> Option<u8> {
    match field.trim().parse::<f64>() {
        Ok(1.0) => Some(1),
        Ok(2.0) => Some(2),
        _ => None,
    }
}

/// Reads one label per line (`1` or `2`), blank lines ignored.
pub fn load_labels(path: &Path) -> Result<Vec<u8>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match parse_label(l) {
            Some(v) => Ok(v),
            None => Err(parse_error(i + 1, 1, format!("label '{}' is not 1 or 2", l.trim()))),
        })
        .collect()
}

/// Writes rows with 17 significant digits, enough to read back every
/// value exactly.
pub fn write_csv<W: Write>(x: &DataMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in x.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Splits rows by label into class 1 and class 2.
pub fn split_by_label(x: &DataMatrix, labels: &[u8]) -> Result<(DataMatrix, DataMatrix)> {
    if labels.len() != x.nrows() {
        return Err(HrError::Dimension(format!(
            "{} labels for {} rows",
            labels.len(),
            x.nrows()
        )));
    }
    let pick = |class: u8| {
        let idx: Vec<usize> = (0..x.nrows()).filter(|&i| labels[i] == class).collect();
        x.select_rows(idx.iter())
    };
    Ok((pick(1), pick(2)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Screening {
    /// Columns with Welch p-value below the threshold, ascending.
    pub kept: Vec<usize>,
    /// Columns with zero variance in both classes; never kept.
    pub zero_variance: Vec<usize>,
    pub p_values: Vec<f64>,
}

fn mean_var(c: &[f64]) -> (f64, f64) {
    let n = c.len() as f64;
    let m = c.iter().sum::<f64>() / n;
    (m, c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Two-sided Welch two-sample t-test p-value.
pub fn welch_p_value(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if !(se2 > 0.0) {
        return None;
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some(2.0 * dist.sf(t.abs()))
}

/// Per-column Welch t-test screen between two classes.
pub fn screen_genes(x1: &DataMatrix, x2: &DataMatrix, p_threshold: f64) -> Result<Screening> {
    if x1.nrows() < 2 || x2.nrows() < 2 {
        return Err(HrError::Domain("screening needs at least 2 rows per class".into()));
    }
    if x1.ncols() != x2.ncols() {
        return Err(HrError::Dimension("classes differ in column count".into()));
    }
    let mut kept = Vec::new();
    let mut zero_variance = Vec::new();
    let mut p_values = Vec::with_capacity(x1.ncols());
    for j in 0..x1.ncols() {
        let a: Vec<f64> = x1.column(j).iter().copied().collect();
        let b: Vec<f64> = x2.column(j).iter().copied().collect();
        match welch_p_value(&a, &b) {
            Some(p) => {
                if p < p_threshold {
                    kept.push(j);
                }
                p_values.push(p);
            }
            None => {
                zero_variance.push(j);
                p_values.push(1.0);
            }
        }
    }
    Ok(Screening {
        kept,
        zero_variance,
        p_values,
    })
}

/// Parses `key = value` lines. `#` starts a comment; keys are lower-cased
/// with `-` folded to `_`. A repeated key is an error.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| HrError::Config(format!("config line {}: expected 'key = value'", i + 1)))?;
        let key = normalize_key(k);
        if key.is_empty() {
            return Err(HrError::Config(format!("config line {}: empty key", i + 1)));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(HrError::Config(format!("config line {}: duplicate key '{key}'", i + 1)));
        }
    }
    Ok(out)
}

pub fn normalize_key(k: &str) -> String {
    k.trim().to_ascii_lowercase().replace('-', "_")
}
