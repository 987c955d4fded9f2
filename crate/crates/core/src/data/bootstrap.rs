use rand::seq::SliceRandom;
use rand::Rng;

use super::EnvDataset;
use crate::error::{Error, Result};
use crate::rng::{self, tags};

/// `n` row indices drawn uniformly with replacement from `0..n`.
pub fn bootstrap_rows<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// A bootstrap resample of the pooled sample. Environments may end up empty.
pub fn bootstrap_sample(ds: &EnvDataset, seed: u64) -> EnvDataset {
    let mut rng = rng::stream(seed, &[tags::TREE, 0]);
    ds.subset(&bootstrap_rows(ds.n(), &mut rng))
}

/// Splits rows into `(fit, holdout)` within each environment, holding out
/// `round(holdout_fraction · n_e)` rows of environment `e`.
pub fn stratified_split(
    ds: &EnvDataset,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::config(format!(
            "holdout_fraction must lie in (0, 1), got {holdout_fraction}"
        )));
    }
    let mut rng = rng::stream(seed, &[tags::HOLDOUT]);
    let mut fit = Vec::new();
    let mut holdout = Vec::new();
    for e in 0..ds.k() {
        let mut rows = ds.env_rows(e);
        let n_hold = (holdout_fraction * rows.len() as f64).round() as usize;
        if n_hold == 0 || n_hold == rows.len() {
            return Err(Error::EnvironmentTooSmall { env: e, count: rows.len(), needed: 2 });
        }
        rows.shuffle(&mut rng);
        holdout.extend_from_slice(&rows[..n_hold]);
        fit.extend_from_slice(&rows[n_hold..]);
    }
    fit.sort_unstable();
    holdout.sort_unstable();
    Ok((fit, holdout))
}
