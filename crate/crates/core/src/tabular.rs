//! Numeric tables loaded from CSV.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Named, equal-length, finite numeric columns. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Dataset {
    pub fn new(columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let Some(n_rows) = columns.first().map(|(_, v)| v.len()) else {
            return Err(Error::MissingHeader);
        };
        if n_rows == 0 {
            return Err(Error::NoRows);
        }
        let mut names = Vec::with_capacity(columns.len());
        let mut values = Vec::with_capacity(columns.len());
        for (col, (name, v)) in columns.into_iter().enumerate() {
            if name.is_empty() || names.contains(&name) {
                return Err(Error::BadColumnName(name));
            }
            if v.len() != n_rows {
                return Err(Error::DimensionMismatch(format!(
                    "column {name:?} has {} values, expected {n_rows}",
                    v.len()
                )));
            }
            if let Some(row) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonNumericCell {
                    row: row + 2,
                    col: col + 1,
                    value: v[row].to_string(),
                });
            }
            names.push(name);
            values.push(v);
        }
        Ok(Self {
            names,
            columns: values,
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.columns.iter().map(Vec::as_slice))
    }

    /// Rows reordered by `perm`, where row `i` of the result is row `perm[i]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_rows {
            return Err(Error::DimensionMismatch("permutation length".into()));
        }
        let cols = self
            .columns()
            .map(|(n, v)| (n.to_string(), perm.iter().map(|&i| v[i]).collect()))
            .collect();
        Self::new(cols)
    }
}

/// Reads a headed, comma-delimited numeric file.
///
/// Error positions are 1-based file records: the header is row 1, the first
/// data row is row 2.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv_from(file)
}

pub fn read_csv_from(reader: impl Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        None => return Err(Error::EmptyFile),
        Some(rec) => rec?,
    };
    if header.iter().all(str::is_empty) {
        return Err(Error::MissingHeader);
    }
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    for (i, name) in names.iter().enumerate() {
        if name.is_empty() || names[..i].contains(name) {
            return Err(Error::BadColumnName(name.clone()));
        }
    }

    let mut columns = vec![Vec::new(); names.len()];
    for (idx, rec) in records.enumerate() {
        let rec = rec?;
        let row = idx + 2;
        if rec.len() != names.len() {
            return Err(Error::RaggedRow {
                row,
                expected: names.len(),
                found: rec.len(),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let value = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumericCell {
                    row,
                    col: c + 1,
                    value: cell.to_string(),
                })?;
            columns[c].push(value);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::NoRows);
    }
    Dataset::new(names.into_iter().zip(columns).collect())
}

/// Writes with shortest round-trip float formatting, so `read_csv` recovers
/// every value exactly.
pub fn write_csv(d: &Dataset, mut out: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(&mut out);
    wtr.write_record(d.names())?;
    for i in 0..d.n_rows() {
        wtr.write_record(d.columns.iter().map(|c| c[i].to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub sample_sd: f64,
    /// `(p, quantile(p))` pairs in the order requested.
    pub quantiles: Vec<(f64, f64)>,
}

pub fn column_stats(d: &Dataset, name: &str, probs: &[f64]) -> Result<ColumnStats> {
    let x = d.column(name)?;
    if x.len() < 2 {
        return Err(Error::DegenerateColumn(name.to_string()));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(ColumnStats {
        mean: mean(x),
        sample_sd: sample_sd(x),
        quantiles: probs
            .iter()
            .map(|&p| (p, quantile_type1(&sorted, p)))
            .collect(),
    })
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Standard deviation with denominator n - 1.
pub fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (x.len() as f64 - 1.0)).sqrt()
}

/// Inverse empirical CDF: the order statistic at 1-based index `ceil(p * n)`,
/// clamped to `[1, n]`. `sorted` must be ascending.
///
/// `p * n` values within 1e-9 of an integer are treated as that integer so
/// that e.g. `0.3 * 10` selects the third order statistic.
pub fn quantile_type1(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let t = p * n as f64;
    let k = if (t - t.round()).abs() <= 1e-9 * (n as f64).max(1.0) {
        t.round()
    } else {
        t.ceil()
    };
    let k = (k as isize).clamp(1, n as isize) as usize;
    sorted[k - 1]
}
