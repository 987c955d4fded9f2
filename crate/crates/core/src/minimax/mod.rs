//! Solvers for `min_theta max_e R_e(theta)` on a fixed partition.
//!
//! * [`extragradient_posthoc`]: projected extragradient on the saddle form
//!   `min_theta max_{p in simplex} sum_e p_e R_e(theta)`, with best-so-far
//!   tracking and patience.
//! * [`bcd_posthoc`]: cyclic block-coordinate descent, each block solved
//!   exactly.
//! * [`kkt_posthoc`]: exact solution by active-set enumeration on the dual
//!   `max_p g(p)`, where `g(p) = min_theta sum_e p_e R_e(theta)` is attained at
//!   [`weighted_leaf_means`].
//! * [`extragradient_weights`]: simplex-constrained tree weights.

mod bcd;
mod extragradient;
mod kkt;
mod weights;

pub use bcd::bcd_posthoc;
pub use extragradient::extragradient_posthoc;
pub use kkt::{kkt_local_solve, kkt_posthoc, LocalSolution, WarmStart};
pub use weights::{extragradient_weights, WeightConfig, WeightResult};

pub(crate) use bcd::bcd_raw;
pub(crate) use extragradient::extragradient_raw;
pub(crate) use kkt::kkt_raw;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use crate::risk::LeafEnvStats;
use crate::error::{Error, Result};
use crate::risk::RiskSpec;

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    project_simplex_into(v, &mut out);
    out
}

pub(crate) fn project_simplex_into(v: &[f64], out: &mut [f64]) {
    let n = v.len();
    if n == 0 {
        return;
    }
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - tau).max(0.0);
    }
}

/// Minimizer of `sum_e p_e R_e(theta)`: per-leaf means weighted by
/// `p_e n_et / n_e`. Leaves with zero total weight keep `init` and are
/// flagged as indeterminate.
pub fn weighted_leaf_means(p: &[f64], stats: &LeafEnvStats, init: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let k = stats.n_envs();
    let mut theta = Vec::with_capacity(stats.n_leaves());
    let mut indeterminate = Vec::with_capacity(stats.n_leaves());
    for t in 0..stats.n_leaves() {
        let (mut a, mut b) = (0.0, 0.0);
        for e in 0..k {
            let n_e = stats.env_total(e);
            if n_e > 0.0 && p[e] > 0.0 {
                let w = p[e] * stats.count(t, e) / n_e;
                a += w * stats.mean(t, e);
                b += w;
            }
        }
        if b > 0.0 {
            theta.push(a / b);
            indeterminate.push(false);
        } else {
            theta.push(init[t]);
            indeterminate.push(true);
        }
    }
    (theta, indeterminate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    Eg,
    Bcd,
    Kkt,
}

impl SolverMethod {
    pub fn name(self) -> &'static str {
        match self {
            SolverMethod::Eg => "eg",
            SolverMethod::Bcd => "bcd",
            SolverMethod::Kkt => "kkt",
        }
    }
}

impl fmt::Display for SolverMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eg" => Ok(SolverMethod::Eg),
            "bcd" => Ok(SolverMethod::Bcd),
            "kkt" => Ok(SolverMethod::Kkt),
            _ => Err(Error::config(format!("unknown solver `{s}` (expected eg, bcd or kkt)"))),
        }
    }
}

/// Solver parameters. `patience` defaults to 5 for extragradient and 1 for
/// block-coordinate descent when read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SolverSpec")]
pub struct SolverConfig {
    pub method: SolverMethod,
    pub gamma: f64,
    pub t_max: usize,
    pub delta: f64,
    pub patience: usize,
    pub block_size: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSpec {
    method: Option<SolverMethod>,
    gamma: Option<f64>,
    t_max: Option<usize>,
    delta: Option<f64>,
    patience: Option<usize>,
    block_size: Option<usize>,
}

impl TryFrom<SolverSpec> for SolverConfig {
    type Error = Error;

    fn try_from(s: SolverSpec) -> Result<Self> {
        let base = SolverConfig::for_method(s.method.unwrap_or(SolverMethod::Eg));
        let cfg = SolverConfig {
            method: base.method,
            gamma: s.gamma.unwrap_or(base.gamma),
            t_max: s.t_max.unwrap_or(base.t_max),
            delta: s.delta.unwrap_or(base.delta),
            patience: s.patience.unwrap_or(base.patience),
            block_size: s.block_size.unwrap_or(base.block_size),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::for_method(SolverMethod::Eg)
    }
}

impl SolverConfig {
    /// Defaults: `gamma = 0.1`, `t_max = 100`, `delta = 1e-3`, `b = 15`,
    /// patience 5 (1 for BCD).
    pub fn for_method(method: SolverMethod) -> Self {
        Self {
            method,
            gamma: 0.1,
            t_max: 100,
            delta: 1e-3,
            patience: if method == SolverMethod::Bcd { 1 } else { 5 },
            block_size: 15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("solver.gamma must be positive"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::config("solver.delta must be positive"));
        }
        if self.patience == 0 || self.block_size == 0 {
            return Err(Error::config("solver.patience and solver.block_size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverResult {
    pub theta: Vec<f64>,
    /// Maximum risk at `theta` over nonempty environments.
    pub z: f64,
    /// Environment weights (zero for empty environments).
    pub p: Vec<f64>,
    pub iterations: usize,
    /// Stopped by its own criterion rather than the iteration cap.
    pub converged: bool,
    /// The exact solver could not certify a solution and used extragradient.
    pub fallback: bool,
    /// Environments within the tie tolerance of `z`.
    pub active: Vec<usize>,
    /// Leaves whose value the active environments do not determine.
    pub indeterminate: Vec<bool>,
}

pub(crate) fn included_envs(stats: &LeafEnvStats) -> Result<Vec<usize>> {
    let envs: Vec<usize> = (0..stats.n_envs()).filter(|&e| stats.env_total(e) > 0.0).collect();
    if envs.is_empty() {
        return Err(Error::solver("every environment is empty"));
    }
    Ok(envs)
}

/// Fills `z`, `active` and `indeterminate` from `theta`.
pub(crate) fn finish_result(
    stats: &LeafEnvStats,
    offsets: &[f64],
    theta: Vec<f64>,
    p: Vec<f64>,
    iterations: usize,
    converged: bool,
    fallback: bool,
) -> Result<SolverResult> {
    let risks = stats.env_risks(&theta, offsets);
    let value = crate::risk::RiskValue::from_parts(risks, stats.included())
        .map_err(|_| Error::solver("every environment is empty"))?;
    if !value.max.is_finite() {
        return Err(Error::solver("non-finite risk at the solution"));
    }
    let indeterminate = (0..stats.n_leaves())
        .map(|t| value.argmax.iter().all(|&e| stats.count(t, e) == 0.0))
        .collect();
    Ok(SolverResult {
        theta,
        z: value.max,
        p,
        iterations,
        converged,
        fallback,
        active: value.argmax,
        indeterminate,
    })
}

fn check_inputs(theta0: &[f64], stats: &LeafEnvStats, spec: &RiskSpec) -> Result<()> {
    if theta0.len() != stats.n_leaves() {
        return Err(Error::solver(format!(
            "{} initial values for {} leaves",
            theta0.len(),
            stats.n_leaves()
        )));
    }
    if spec.offsets.len() != stats.n_envs() {
        return Err(Error::solver("offset count differs from the environment count"));
    }
    Ok(())
}

/// Dispatches on `cfg.method`; only the exact solver returns a warm start.
pub(crate) fn solve_raw(
    theta0: &[f64],
    stats: &LeafEnvStats,
    offsets: &[f64],
    warm: Option<&WarmStart>,
    cfg: &SolverConfig,
) -> Result<(SolverResult, Option<WarmStart>)> {
    match cfg.method {
        SolverMethod::Eg => Ok((extragradient_raw(theta0, stats, offsets, cfg)?, None)),
        SolverMethod::Bcd => Ok((bcd_raw(theta0, stats, offsets, cfg)?, None)),
        SolverMethod::Kkt => kkt_raw(theta0, stats, offsets, warm, cfg).map(|(r, w)| (r, Some(w))),
    }
}

/// Solves the leaf-value problem with the method of `cfg`.
pub fn solve_posthoc(
    theta0: &[f64],
    stats: &LeafEnvStats,
    spec: &RiskSpec,
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    check_inputs(theta0, stats, spec)?;
    cfg.validate()?;
    solve_raw(theta0, stats, &spec.offsets, None, cfg).map(|(r, _)| r)
}
