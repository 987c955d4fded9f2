use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::grow_cart;
use super::{Predictor, Tree, TreeHyperparams};
use crate::data::{bootstrap_rows, EnvDataset};
use crate::error::{Error, Result};
use crate::rng::{self, tags, StreamRng};

pub const FOREST_FORMAT: &str = "maxrm-forest";
pub const FOREST_VERSION: u32 = 1;

/// Trees with simplex weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub weights: Vec<f64>,
}

impl Forest {
    /// Equal weights `1/B`.
    pub fn uniform(trees: Vec<Tree>) -> Self {
        let b = trees.len();
        Self { trees, weights: vec![1.0 / b as f64; b] }
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Per-tree predictions for every row of `ds`, row-major `n × B`.
    pub fn tree_predictions(&self, ds: &EnvDataset) -> Vec<f64> {
        let b = self.trees.len();
        let mut out = vec![0.0; ds.n() * b];
        for (i, row) in out.chunks_exact_mut(b).enumerate() {
            let x = ds.row(i);
            for (slot, tree) in row.iter_mut().zip(&self.trees) {
                *slot = tree.predict(x);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() || self.trees.len() != self.weights.len() {
            return Err(Error::data("forest needs one weight per tree and at least one tree"));
        }
        let sum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::data("forest weights must lie on the simplex"));
        }
        let p = self.trees[0].p();
        for t in &self.trees {
            if t.p() != p {
                return Err(Error::data("trees disagree on the covariate dimension"));
            }
            t.validate()?;
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.trees.first().map_or(0, Tree::p)
    }
}

impl Predictor for Forest {
    fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().zip(&self.weights).map(|(t, w)| w * t.predict(x)).sum()
    }
}

/// Versioned on-disk form of a fitted forest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestDocument {
    pub format: String,
    pub version: u32,
    /// Method name the forest was fitted with.
    pub method: String,
    pub forest: Forest,
}

impl ForestDocument {
    pub fn new(method: impl Into<String>, forest: Forest) -> Self {
        Self { format: FOREST_FORMAT.into(), version: FOREST_VERSION, method: method.into(), forest }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ForestDocument = serde_json::from_str(text)?;
        if doc.format != FOREST_FORMAT || doc.version != FOREST_VERSION {
            return Err(Error::data(format!(
                "unsupported model document {} v{}",
                doc.format, doc.version
            )));
        }
        doc.forest.validate()?;
        Ok(doc)
    }
}

/// Bootstrap rows and the random stream of tree `b`; the stream continues
/// into split-feature sampling.
pub(crate) fn tree_stream(n: usize, seed: u64, b: usize) -> (Vec<usize>, StreamRng) {
    let mut r = rng::stream(seed, &[tags::TREE, b as u64]);
    let rows = bootstrap_rows(n, &mut r);
    (rows, r)
}

/// A standard bagged forest of CART trees.
pub fn fit_random_forest(ds: &EnvDataset, hp: &TreeHyperparams, b: usize, seed: u64) -> Result<Forest> {
    hp.validate(ds.p())?;
    if b == 0 {
        return Err(Error::config("a forest needs at least one tree"));
    }
    if ds.n() == 0 {
        return Err(Error::data("cannot fit a forest on an empty dataset"));
    }
    let trees = (0..b)
        .into_par_iter()
        .map(|i| {
            let (rows, mut r) = tree_stream(ds.n(), seed, i);
            grow_cart(ds, rows, hp, &mut r)
        })
        .collect();
    Ok(Forest::uniform(trees))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{simulate, DgpConfig, Setting};

    #[test]
    fn weighted_average_of_trees() {
        let f = Forest { trees: vec![Tree::constant(0.0, 1), Tree::constant(2.0, 1)], weights: vec![0.5, 0.5] };
        assert_eq!(f.predict(&[0.3]), 1.0);
        let f = Forest { weights: vec![0.0, 1.0], ..f };
        assert_eq!(f.predict(&[0.3]), 2.0);
        let single = Forest::uniform(vec![Tree::constant(4.0, 1)]);
        assert_eq!(single.predict(&[1.0]), single.trees[0].predict(&[1.0]));
    }

    #[test]
    fn deterministic_and_serializable() {
        let cfg = DgpConfig { n_total: Some(300), ..DgpConfig::preset(Setting::PiecewiseLinear) };
        let ds = simulate(&cfg).unwrap().train;
        let hp = TreeHyperparams::with_min_leaf(10);
        let a = fit_random_forest(&ds, &hp, 8, 3).unwrap();
        let b = fit_random_forest(&ds, &hp, 8, 3).unwrap();
        assert_eq!(a, b);
        let doc = ForestDocument::new("rf", a.clone());
        let back = ForestDocument::from_json(&serde_json::to_string(&doc).unwrap()).unwrap();
        assert_eq!(back.forest, a);
        for i in 0..ds.n() {
            assert_eq!(back.forest.predict(ds.row(i)), a.predict(ds.row(i)));
        }
    }

    #[test]
    fn rejects_foreign_documents() {
        let doc = ForestDocument::new("rf", Forest::uniform(vec![Tree::constant(1.0, 1)]));
        let mut v = serde_json::to_value(&doc).unwrap();
        v["version"] = 99.into();
        assert!(ForestDocument::from_json(&v.to_string()).is_err());
    }
}
