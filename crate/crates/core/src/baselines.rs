//! Reference estimators: the standard random forest, magging over
//! environment-specific forests, and closed-form oracle risks.

use rayon::prelude::*;

use crate::cart::{fit_random_forest, Forest, Predictor, TreeHyperparams};
use crate::data::{DgpConfig, EnvDataset, Setting, MIXTURE_SLOPES, PWL_SLOPES};
use crate::error::{Error, Result};
use crate::minimax::{extragradient_weights, WeightConfig};
use crate::risk::RiskSpec;
use crate::rng::{derive_seed, tags};

/// Standard random forest: bagged CART trees with uniform weights.
pub fn fit_rf(ds: &EnvDataset, hp: &TreeHyperparams, b: usize, seed: u64) -> Result<Forest> {
    fit_random_forest(ds, hp, b, seed)
}

/// Convex combination of one forest per training environment.
#[derive(Clone, Debug, PartialEq)]
pub struct MaggingModel {
    pub forests: Vec<Forest>,
    pub q: Vec<f64>,
    pub risk: RiskSpec,
    /// In-sample maximum risk at `q`.
    pub z: f64,
}

impl MaggingModel {
    /// All trees in one forest, each weighted by its forest's mixture weight.
    pub fn to_forest(&self) -> Forest {
        let mut trees = Vec::new();
        let mut weights = Vec::new();
        for (f, q) in self.forests.iter().zip(&self.q) {
            trees.extend(f.trees.iter().cloned());
            weights.extend(f.weights.iter().map(|w| w * q));
        }
        // renormalize away rounding so the document validates
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        Forest { trees, weights }
    }
}

impl Predictor for MaggingModel {
    fn predict(&self, x: &[f64]) -> f64 {
        self.forests.iter().zip(&self.q).map(|(f, q)| q * f.predict(x)).sum()
    }
}

/// Fits one forest per environment on that environment's rows and mixes
/// them with simplex weights minimizing the maximum in-sample risk.
pub fn fit_magging(ds: &EnvDataset, spec: &RiskSpec, hp: &TreeHyperparams, b: usize, seed: u64) -> Result<MaggingModel> {
    if spec.offsets.len() != ds.k() {
        return Err(Error::config("risk offsets do not match the number of environments"));
    }
    ds.require_nonempty_envs()?;
    let forests: Vec<Forest> = (0..ds.k())
        .into_par_iter()
        .map(|e| {
            let sub = ds.subset(&ds.env_rows(e));
            fit_random_forest(&sub, hp, b, derive_seed(seed, &[tags::ENV_FOREST, e as u64]))
        })
        .collect::<Result<_>>()?;
    let k = forests.len();
    let mut preds = vec![0.0; ds.n() * k];
    for (i, row) in preds.chunks_exact_mut(k).enumerate() {
        for (slot, f) in row.iter_mut().zip(&forests) {
            *slot = f.predict(ds.row(i));
        }
    }
    let r = extragradient_weights(&preds, ds, &spec.offsets, &WeightConfig::default())?;
    Ok(MaggingModel { forests, q: r.w, risk: spec.clone(), z: r.z })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleRisks {
    pub per_env: Vec<f64>,
    pub max: f64,
}

/// Population MSE per environment of `f(x) = left·x` for `x <= 0` and
/// `right·x` for `x > 0`, using the noise level of `cfg`.
pub fn oracle_analytic_risks(left: f64, right: f64, cfg: &DgpConfig) -> Result<OracleRisks> {
    let s2 = cfg.noise_sd * cfg.noise_sd;
    let per_env: Vec<f64> = match cfg.setting {
        // E[X² 1{X<=0}] = E[X² 1{X>0}] = 8/3 for X ~ U[-4, 4]
        Setting::PiecewiseLinear => PWL_SLOPES
            .iter()
            .map(|&(a, b)| 8.0 / 3.0 * ((a - left).powi(2) + (b - right).powi(2)) + s2)
            .collect(),
        // 0.9 of the mass on one side gives 0.9·16/3, the rest 0.1·16/3
        Setting::MixtureUniform => MIXTURE_SLOPES
            .iter()
            .enumerate()
            .map(|(e, &c)| {
                let (wp, wn) = if e == 1 { (8.0 / 15.0, 24.0 / 5.0) } else { (24.0 / 5.0, 8.0 / 15.0) };
                wp * (c - right).powi(2) + wn * (c - left).powi(2) + s2
            })
            .collect(),
        s => return Err(Error::config(format!("no closed-form risks for setting {s}"))),
    };
    let max = per_env.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(OracleRisks { per_env, max })
}
