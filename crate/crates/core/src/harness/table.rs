use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stats::{ci_half_width, mean};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub rep: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    /// Absent below two repetitions.
    pub ci_half: Option<f64>,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellError {
    pub method: String,
    pub rep: usize,
    pub message: String,
}

/// Per-repetition values, single-value summaries, wall-clock times and
/// failed cells of one experiment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub name: String,
    pub rows: Vec<ResultRow>,
    /// Values computed across repetitions (bias, medians), not per repetition.
    pub summaries: Vec<(String, String, f64)>,
    pub runtimes: Vec<(String, usize, f64)>,
    pub errors: Vec<CellError>,
}

impl ResultTable {
    pub fn new(name: &str) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    pub fn push(&mut self, method: &str, rep: usize, metric: &str, value: f64) {
        self.rows.push(ResultRow { method: method.into(), rep, metric: metric.into(), value });
    }

    pub fn push_summary(&mut self, method: &str, metric: &str, value: f64) {
        self.summaries.push((method.into(), metric.into(), value));
    }

    pub fn push_runtime(&mut self, method: &str, rep: usize, seconds: f64) {
        self.runtimes.push((method.into(), rep, seconds));
    }

    pub fn push_error(&mut self, method: &str, rep: usize, message: &str) {
        self.errors.push(CellError { method: method.into(), rep, message: message.into() });
    }

    pub fn values(&self, method: &str, metric: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.method == method && r.metric == metric).map(|r| r.value).collect()
    }

    pub fn summary(&self, method: &str, metric: &str) -> Option<f64> {
        self.summaries.iter().find(|(m, k, _)| m == method && k == metric).map(|s| s.2)
    }

    /// Methods in order of first appearance.
    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for m in self.rows.iter().map(|r| &r.method).chain(self.summaries.iter().map(|s| &s.0)) {
            if !out.contains(m) {
                out.push(m.clone());
            }
        }
        out
    }

    /// Mean and 95% t-interval per (method, metric), in order of first
    /// appearance; summaries follow with no interval. Non-finite values
    /// are skipped.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut keys: Vec<(&str, &str)> = Vec::new();
        for r in &self.rows {
            let key = (r.method.as_str(), r.metric.as_str());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        let mut out: Vec<Aggregate> = keys
            .into_iter()
            .filter_map(|(method, metric)| {
                let v: Vec<f64> = self.values(method, metric).into_iter().filter(|x| x.is_finite()).collect();
                (!v.is_empty()).then(|| Aggregate {
                    method: method.into(),
                    metric: metric.into(),
                    mean: mean(&v),
                    ci_half: ci_half_width(&v),
                    n: v.len(),
                })
            })
            .collect();
        out.extend(self.summaries.iter().map(|(m, k, v)| Aggregate { method: m.clone(), metric: k.clone(), mean: *v, ci_half: None, n: 1 }));
        out
    }

    pub fn aggregate(&self, method: &str, metric: &str) -> Option<Aggregate> {
        self.aggregates().into_iter().find(|a| a.method == method && a.metric == metric)
    }

    /// `method,rep,metric,value`.
    pub fn rows_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "rep", "metric", "value"]).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([r.method.as_str(), &r.rep.to_string(), &r.metric, &fmt(r.value)]).map_err(csv_err)?;
        }
        finish(w)
    }

    /// `method,metric,mean,ci_half`, with an empty `ci_half` when undefined.
    pub fn aggregate_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "metric", "mean", "ci_half"]).map_err(csv_err)?;
        for a in self.aggregates() {
            w.write_record([a.method.as_str(), &a.metric, &fmt(a.mean), &a.ci_half.map(fmt).unwrap_or_default()]).map_err(csv_err)?;
        }
        finish(w)
    }

    /// Wall-clock seconds per cell and failed cells; the only output that
    /// varies between identical runs.
    pub fn runtime_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "rep", "seconds", "error"]).map_err(csv_err)?;
        for (m, rep, s) in &self.runtimes {
            w.write_record([m.as_str(), &rep.to_string(), &fmt(*s), ""]).map_err(csv_err)?;
        }
        for e in &self.errors {
            w.write_record([e.method.as_str(), &e.rep.to_string(), "", &e.message]).map_err(csv_err)?;
        }
        finish(w)
    }

    /// Writes `<name>_reps.csv`, `<name>_aggregate.csv` and
    /// `<name>_runtime.csv` to `dir` and returns their paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let files = [
            (format!("{}_reps.csv", self.name), self.rows_csv()?),
            (format!("{}_aggregate.csv", self.name), self.aggregate_csv()?),
            (format!("{}_runtime.csv", self.name), self.runtime_csv()?),
        ];
        let mut out = Vec::new();
        for (file, text) in files {
            let path = dir.join(file);
            fs::write(&path, text)?;
            out.push(path);
        }
        Ok(out)
    }
}

fn fmt(v: f64) -> String {
    // shortest representation that round-trips
    format!("{v}")
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Io(std::io::Error::other(e))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| crate::error::Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
