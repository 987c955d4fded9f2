//! Risk kinds, per-environment offsets and empirical risks on a fixed
//! partition.
//!
//! Every risk is the environment MSE minus a constant `c_e`:
//! `R_e(theta) = (1/n_e) sum_t [SSD_et + n_et (mu_et - theta_t)^2] - c_e`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cart::{fit_cart_tree, EnvMoments, Predictor, Tree, TreeHyperparams};
use crate::data::EnvDataset;
use crate::error::{Error, Result};
use crate::rng::{self, tags};

/// Relative tolerance for membership in the argmax set.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskKind {
    /// Mean squared error.
    Mse,
    /// Negative reward: MSE minus the mean squared response.
    Nrw,
    /// Regret: MSE minus that of a tree fitted to the environment alone.
    Reg,
}

impl RiskKind {
    pub const ALL: [RiskKind; 3] = [RiskKind::Mse, RiskKind::Nrw, RiskKind::Reg];

    pub fn name(self) -> &'static str {
        match self {
            RiskKind::Mse => "mse",
            RiskKind::Nrw => "nrw",
            RiskKind::Reg => "reg",
        }
    }
}

impl fmt::Display for RiskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RiskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RiskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown risk `{s}` (expected mse, nrw or reg)")))
    }
}

/// A risk kind with its per-environment offsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    pub kind: RiskKind,
    pub offsets: Vec<f64>,
}

impl RiskSpec {
    pub fn mse(k: usize) -> Self {
        Self { kind: RiskKind::Mse, offsets: vec![0.0; k] }
    }

    pub fn new(kind: RiskKind, offsets: Vec<f64>) -> Result<Self> {
        if kind == RiskKind::Mse && offsets.iter().any(|&c| c != 0.0) {
            return Err(Error::config("MSE risk takes zero offsets"));
        }
        if offsets.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("risk offsets must be finite"));
        }
        Ok(Self { kind, offsets })
    }

    /// Offsets computed from `ds`.
    pub fn fit(ds: &EnvDataset, kind: RiskKind, hp: &TreeHyperparams) -> Result<Self> {
        Self::new(kind, risk_offsets(ds, kind, hp)?)
    }
}

/// Offsets `c_e` for `kind`, computed on each environment's rows of `ds`.
pub fn risk_offsets(ds: &EnvDataset, kind: RiskKind, hp: &TreeHyperparams) -> Result<Vec<f64>> {
    let k = ds.k();
    match kind {
        RiskKind::Mse => Ok(vec![0.0; k]),
        RiskKind::Nrw => {
            let mut sum = vec![0.0; k];
            let mut cnt = vec![0usize; k];
            for (&e, &y) in ds.env().iter().zip(ds.y()) {
                sum[e] += y * y;
                cnt[e] += 1;
            }
            Ok(sum.iter().zip(&cnt).map(|(s, &c)| s / c.max(1) as f64).collect())
        }
        RiskKind::Reg => (0..k)
            .map(|e| {
                let rows = ds.env_rows(e);
                let needed = hp.min_leaf_size.max(2);
                if rows.len() < needed {
                    return Err(Error::EnvironmentTooSmall { env: e, count: rows.len(), needed });
                }
                let sub = ds.subset(&rows);
                let hp_e = TreeHyperparams {
                    seed: rng::derive_seed(hp.seed, &[tags::REGRET_TREE, e as u64]),
                    ..hp.clone()
                };
                let tree = fit_cart_tree(&sub, &hp_e)?;
                Ok(tree_mse(&tree, &sub))
            })
            .collect(),
    }
}

fn tree_mse(tree: &Tree, ds: &EnvDataset) -> f64 {
    let sse: f64 = (0..ds.n())
        .map(|i| {
            let d = ds.y()[i] - tree.predict(ds.row(i));
            d * d
        })
        .sum();
    sse / ds.n() as f64
}

/// `(1/(n_e v 1)) |A_e theta - y_e|^2 - c_e`, where `leaf_of_row` lists the
/// leaf of each of the environment's rows.
pub fn empirical_env_risk(theta: &[f64], leaf_of_row: &[usize], y: &[f64], offset: f64) -> f64 {
    let sse: f64 = leaf_of_row
        .iter()
        .zip(y)
        .map(|(&t, &v)| {
            let d = theta[t] - v;
            d * d
        })
        .sum();
    sse / leaf_of_row.len().max(1) as f64 - offset
}

/// Per-environment risks with their maximum over included environments.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskValue {
    pub per_env: Vec<f64>,
    /// Environments that take part in the maximum.
    pub included: Vec<bool>,
    pub max: f64,
    /// Included environments within the tie tolerance of the maximum.
    pub argmax: Vec<usize>,
}

impl RiskValue {
    pub fn from_parts(per_env: Vec<f64>, included: Vec<bool>) -> Result<Self> {
        let max = per_env
            .iter()
            .zip(&included)
            .filter(|(_, &inc)| inc)
            .map(|(&r, _)| r)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::data("every environment is empty"));
        }
        let tol = TIE_TOLERANCE * max.abs().max(1.0);
        let argmax = (0..per_env.len()).filter(|&e| included[e] && per_env[e] >= max - tol).collect();
        Ok(Self { per_env, included, max, argmax })
    }
}

/// Per-leaf, per-environment moments with per-environment totals.
///
/// Stored leaf-major: entry `(t, e)` lives at `t * k + e`.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafEnvStats {
    t: usize,
    k: usize,
    count: Vec<f64>,
    mean: Vec<f64>,
    ssd: Vec<f64>,
    env_total: Vec<f64>,
}

impl LeafEnvStats {
    /// Totals are the column sums of the leaf counts.
    pub fn new(k: usize, leaves: &[Vec<EnvMoments>]) -> Self {
        let mut s = Self::with_totals(k, leaves, vec![0.0; k]);
        for t in 0..s.t {
            for e in 0..k {
                s.env_total[e] += s.count[t * k + e];
            }
        }
        s
    }

    /// Explicit totals, for sub-problems over some leaves of a larger tree.
    pub fn with_totals(k: usize, leaves: &[Vec<EnvMoments>], env_total: Vec<f64>) -> Self {
        let t = leaves.len();
        let mut s = Self {
            t,
            k,
            count: vec![0.0; t * k],
            mean: vec![0.0; t * k],
            ssd: vec![0.0; t * k],
            env_total,
        };
        for (i, leaf) in leaves.iter().enumerate() {
            s.set_leaf(i, leaf);
        }
        s
    }

    pub fn from_tree(tree: &Tree) -> Self {
        let leaves: Vec<Vec<EnvMoments>> = tree.leaves().iter().map(|l| l.stats.clone()).collect();
        let totals = tree.env_totals().iter().map(|&c| c as f64).collect();
        Self::with_totals(tree.k(), &leaves, totals)
    }

    pub fn set_leaf(&mut self, t: usize, leaf: &[EnvMoments]) {
        for (e, m) in leaf.iter().enumerate().take(self.k) {
            let i = t * self.k + e;
            self.count[i] = m.count as f64;
            self.mean[i] = m.mean;
            self.ssd[i] = m.ssd;
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.t
    }

    pub fn n_envs(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn count(&self, t: usize, e: usize) -> f64 {
        self.count[t * self.k + e]
    }

    #[inline]
    pub fn mean(&self, t: usize, e: usize) -> f64 {
        self.mean[t * self.k + e]
    }

    #[inline]
    pub fn ssd(&self, t: usize, e: usize) -> f64 {
        self.ssd[t * self.k + e]
    }

    #[inline]
    pub fn env_total(&self, e: usize) -> f64 {
        self.env_total[e]
    }

    /// Environments with at least one observation.
    pub fn included(&self) -> Vec<bool> {
        self.env_total.iter().map(|&n| n > 0.0).collect()
    }

    /// Squared-error contribution of leaf `t` to environment `e`, divided
    /// by `n_e`.
    #[inline]
    pub fn contribution(&self, t: usize, e: usize, theta: f64) -> f64 {
        let i = t * self.k + e;
        let n = self.count[i];
        if n == 0.0 {
            return 0.0;
        }
        let d = self.mean[i] - theta;
        (self.ssd[i] + n * d * d) / self.env_total[e].max(1.0)
    }

    /// `R_e(theta)` for every environment; empty environments get `-c_e`.
    pub fn env_risks_into(&self, theta: &[f64], offsets: &[f64], out: &mut [f64]) {
        for (e, o) in out.iter_mut().enumerate() {
            *o = -offsets[e];
        }
        for (t, &th) in theta.iter().enumerate().take(self.t) {
            for (e, o) in out.iter_mut().enumerate() {
                *o += self.contribution(t, e, th);
            }
        }
    }

    pub fn env_risks(&self, theta: &[f64], offsets: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        self.env_risks_into(theta, offsets, &mut out);
        out
    }

    /// Maximum of `R_e(theta)` over included environments.
    pub fn max_risk(&self, theta: &[f64], offsets: &[f64]) -> f64 {
        let r = self.env_risks(theta, offsets);
        r.iter()
            .zip(&self.env_total)
            .filter(|(_, &n)| n > 0.0)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pooled leaf means (`init[t]` for leaves without observations).
    pub fn pooled_means(&self, init: &[f64]) -> Vec<f64> {
        (0..self.t)
            .map(|t| {
                let (mut n, mut s) = (0.0, 0.0);
                for e in 0..self.k {
                    n += self.count(t, e);
                    s += self.count(t, e) * self.mean(t, e);
                }
                if n > 0.0 {
                    s / n
                } else {
                    init[t]
                }
            })
            .collect()
    }
}

/// Per-environment risks of leaf values `theta` and their maximum over
/// nonempty environments.
pub fn max_empirical_risk(theta: &[f64], stats: &LeafEnvStats, spec: &RiskSpec) -> Result<RiskValue> {
    if theta.len() != stats.n_leaves() {
        return Err(Error::data(format!(
            "{} leaf values for {} leaves",
            theta.len(),
            stats.n_leaves()
        )));
    }
    if spec.offsets.len() != stats.n_envs() {
        return Err(Error::data("offset count differs from the environment count"));
    }
    RiskValue::from_parts(stats.env_risks(theta, &spec.offsets), stats.included())
}
