use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::EnvDataset;
use crate::error::{Error, Result};

/// Column names used when reading a dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvSchema {
    /// Covariate columns in order. `None` picks every `x<digits>` column,
    /// ordered by its number.
    pub covariates: Option<Vec<String>>,
    pub response: String,
    pub env: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self { covariates: None, response: "y".into(), env: "env".into() }
    }
}

fn csv_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Csv { row, column: column.to_string(), message: message.into() }
}

fn covariate_number(name: &str) -> Option<usize> {
    name.strip_prefix('x').filter(|s| !s.is_empty()).and_then(|s| s.parse().ok())
}

/// Reads an environment-labelled CSV file.
///
/// Environment labels are arbitrary strings, mapped to `0..K` in order of
/// first appearance. Row numbers in errors are file line numbers (the header
/// is line 1).
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<EnvDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => csv_err(1, "", format!("{other:?}")),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(1, "", e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(csv_err(1, "", "file is empty"));
    }
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| csv_err(1, name, "missing column"))
    };
    let cov_idx: Vec<(usize, String)> = match &schema.covariates {
        Some(names) => names
            .iter()
            .map(|n| find(n).map(|i| (i, n.clone())))
            .collect::<Result<_>>()?,
        None => {
            let mut cols: Vec<(usize, usize)> = header
                .iter()
                .enumerate()
                .filter_map(|(i, h)| covariate_number(h).map(|num| (num, i)))
                .collect();
            cols.sort_unstable();
            cols.into_iter().map(|(_, i)| (i, header[i].clone())).collect()
        }
    };
    if cov_idx.is_empty() {
        return Err(csv_err(1, "x1", "missing column"));
    }
    let y_idx = find(&schema.response)?;
    let env_idx = find(&schema.env)?;

    let p = cov_idx.len();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut env = Vec::new();
    let mut labels: HashMap<String, usize> = HashMap::new();
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| csv_err(line, "", e.to_string()))?;
        let cell = |i: usize, name: &str| -> Result<f64> {
            let raw = record.get(i).ok_or_else(|| csv_err(line, name, "missing cell"))?;
            let v: f64 = raw
                .trim()
                .parse()
                .map_err(|_| csv_err(line, name, format!("non-numeric value `{raw}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(csv_err(line, name, format!("non-finite value `{raw}`")))
            }
        };
        for (i, name) in &cov_idx {
            x.push(cell(*i, name)?);
        }
        y.push(cell(y_idx, &schema.response)?);
        let label = record
            .get(env_idx)
            .ok_or_else(|| csv_err(line, &schema.env, "missing cell"))?
            .trim()
            .to_string();
        if label.is_empty() {
            return Err(csv_err(line, &schema.env, "empty environment label"));
        }
        let next = labels.len();
        env.push(*labels.entry(label).or_insert(next));
    }
    if y.is_empty() {
        return Err(csv_err(2, "", "file has a header but no data rows"));
    }
    EnvDataset::new(x, y, env, p, labels.len())
}

/// Writes `ds` with header `x1,..,xp,y,env`.
pub fn write_csv(ds: &EnvDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    let mut header: Vec<String> = (1..=ds.p()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    header.push("env".into());
    writeln!(out, "{}", header.join(","))?;
    for i in 0..ds.n() {
        for v in ds.row(i) {
            write!(out, "{v},")?;
        }
        writeln!(out, "{},{}", ds.y()[i], ds.env()[i])?;
    }
    out.flush()?;
    Ok(())
}
