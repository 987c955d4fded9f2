//! Environment-labelled datasets, simulation generators and CSV ingestion.

mod bootstrap;
mod csv_io;
mod dgp;
pub mod gp;

pub use bootstrap::{bootstrap_rows, bootstrap_sample, stratified_split};
pub use csv_io::{load_csv, write_csv, CsvSchema};
pub use dgp::{
    gen_gp_envs, gen_mixture_uniform, gen_piecewise_linear, sample_covariates, simulate,
    DgpConfig, OracleFn, Setting, Simulation, MIXTURE_SLOPES, PWL_SLOPES,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Covariates, responses and environment labels.
///
/// Covariates are stored row-major (`n × p`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvDataset {
    x: Vec<f64>,
    y: Vec<f64>,
    env: Vec<usize>,
    p: usize,
    k: usize,
}

impl EnvDataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, env: Vec<usize>, p: usize, k: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::data("dataset must have at least one covariate"));
        }
        if k == 0 {
            return Err(Error::data("dataset must have at least one environment"));
        }
        if x.len() != y.len() * p {
            return Err(Error::data(format!(
                "covariate buffer has {} values, expected {} rows × {p}",
                x.len(),
                y.len()
            )));
        }
        if env.len() != y.len() {
            return Err(Error::data(format!(
                "{} environment labels for {} rows",
                env.len(),
                y.len()
            )));
        }
        if let Some((i, &e)) = env.iter().enumerate().find(|(_, &e)| e >= k) {
            return Err(Error::data(format!("row {i}: label {e} is not below K = {k}")));
        }
        Ok(Self { x, y, env, p, k })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn env(&self) -> &[usize] {
        &self.env
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn value(&self, i: usize, feature: usize) -> f64 {
        self.x[i * self.p + feature]
    }

    pub fn env_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &e in &self.env {
            counts[e] += 1;
        }
        counts
    }

    pub fn env_rows(&self, e: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.env[i] == e).collect()
    }

    /// Rows `rows` (repetition allowed) as a new dataset with the same `K`.
    pub fn subset(&self, rows: &[usize]) -> EnvDataset {
        let mut x = Vec::with_capacity(rows.len() * self.p);
        let mut y = Vec::with_capacity(rows.len());
        let mut env = Vec::with_capacity(rows.len());
        for &i in rows {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
            env.push(self.env[i]);
        }
        EnvDataset { x, y, env, p: self.p, k: self.k }
    }

    /// Fails unless every environment has at least one row.
    pub fn require_nonempty_envs(&self) -> Result<()> {
        match self.env_counts().iter().position(|&c| c == 0) {
            Some(e) => Err(Error::EnvironmentTooSmall { env: e, count: 0, needed: 1 }),
            None => Ok(()),
        }
    }

    /// Concatenates datasets with the same `p` and `K`.
    pub fn concat(parts: &[EnvDataset]) -> Result<EnvDataset> {
        let first = parts.first().ok_or_else(|| Error::data("nothing to concatenate"))?;
        let (p, k) = (first.p, first.k);
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut env = Vec::new();
        for part in parts {
            if part.p != p || part.k != k {
                return Err(Error::data("cannot concatenate datasets of different shape"));
            }
            x.extend_from_slice(&part.x);
            y.extend_from_slice(&part.y);
            env.extend_from_slice(&part.env);
        }
        EnvDataset::new(x, y, env, p, k)
    }
}
