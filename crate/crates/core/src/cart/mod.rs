//! Regression trees, forests and the split-search engine shared by every
//! growth strategy.

mod forest;
pub(crate) mod grow;
mod tree;

pub use forest::{fit_random_forest, Forest, ForestDocument, FOREST_FORMAT, FOREST_VERSION};
pub use grow::Acc;
pub(crate) use forest::tree_stream;
pub(crate) use tree::grow_cart;
pub use tree::{fit_cart_tree, leaf_assignment, LeafAssignment, Leaf, Node, Tree};

use serde::{Deserialize, Serialize};

use crate::data::EnvDataset;
use crate::error::{Error, Result};

/// Count, mean and sum of squared deviations of the responses of one
/// environment inside one leaf.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvMoments {
    pub count: usize,
    pub mean: f64,
    pub ssd: f64,
}

impl EnvMoments {
    /// Two-pass moments of `values`.
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let ssd = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        Self { count: values.len(), mean, ssd }
    }

    /// `ssd + count * (mean - theta)^2`, the squared error of predicting `theta`.
    #[inline]
    pub fn sse_at(&self, theta: f64) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            let d = self.mean - theta;
            self.ssd + self.count as f64 * d * d
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeHyperparams {
    /// `None` grows until the leaf-size limit stops it.
    #[serde(default)]
    pub max_depth: Option<usize>,
    pub min_leaf_size: usize,
    /// Features examined per split; `None` means all of them.
    #[serde(default)]
    pub m_try: Option<usize>,
    /// Seed of single-tree fits. Forest fits derive per-tree streams from
    /// their own seed instead.
    #[serde(default)]
    pub seed: u64,
}

impl Default for TreeHyperparams {
    fn default() -> Self {
        Self { max_depth: None, min_leaf_size: 15, m_try: None, seed: 0 }
    }
}

impl TreeHyperparams {
    pub fn with_min_leaf(min_leaf_size: usize) -> Self {
        Self { min_leaf_size, ..Self::default() }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.min_leaf_size == 0 {
            return Err(Error::config("min_leaf_size must be at least 1"));
        }
        if let Some(m) = self.m_try {
            if m == 0 || m > p {
                return Err(Error::config(format!("m_try must lie in 1..={p}, got {m}")));
            }
        }
        Ok(())
    }

    pub(crate) fn m_try_for(&self, p: usize) -> usize {
        self.m_try.unwrap_or(p).min(p)
    }
}

/// Anything that maps a covariate vector to a prediction.
pub trait Predictor {
    fn predict(&self, x: &[f64]) -> f64;

    /// Predictions for every row of `ds`.
    fn predict_dataset(&self, ds: &EnvDataset) -> Vec<f64> {
        (0..ds.n()).map(|i| self.predict(ds.row(i))).collect()
    }
}

impl<T: Predictor + ?Sized> Predictor for &T {
    fn predict(&self, x: &[f64]) -> f64 {
        (**self).predict(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_values() {
        let m = EnvMoments::from_values(&[0.0, 2.0]);
        assert_eq!((m.count, m.mean, m.ssd), (2, 1.0, 2.0));
        assert_eq!(m.sse_at(0.0), 4.0);
        assert_eq!(EnvMoments::default().sse_at(3.0), 0.0);
    }

    #[test]
    fn hyperparameter_validation() {
        assert!(TreeHyperparams::with_min_leaf(0).validate(1).is_err());
        let hp = TreeHyperparams { m_try: Some(3), ..Default::default() };
        assert!(hp.validate(2).is_err());
        assert!(hp.validate(3).is_ok());
    }
}
