use serde::{Deserialize, Serialize};

use super::grow::{CartPolicy, Engine};
use super::{EnvMoments, Predictor, TreeHyperparams};
use crate::data::EnvDataset;
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { leaf: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub value: f64,
    /// Per-environment moments of the training rows in this leaf.
    pub stats: Vec<EnvMoments>,
}

/// An axis-aligned partition with a value per leaf. Node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
    leaves: Vec<Leaf>,
    p: usize,
    k: usize,
    env_totals: Vec<usize>,
}

impl Tree {
    pub(crate) fn from_parts(
        nodes: Vec<Node>,
        leaves: Vec<Leaf>,
        p: usize,
        k: usize,
        env_totals: Vec<usize>,
    ) -> Self {
        Self { nodes, leaves, p, k, env_totals }
    }

    /// A one-leaf tree predicting `value`.
    pub fn constant(value: f64, p: usize) -> Self {
        Self {
            nodes: vec![Node::Leaf { leaf: 0 }],
            leaves: vec![Leaf { value, stats: Vec::new() }],
            p,
            k: 0,
            env_totals: Vec::new(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Training rows per environment (the bootstrap counts `s_e`).
    pub fn env_totals(&self) -> &[usize] {
        &self.env_totals
    }

    pub fn leaf_values(&self) -> Vec<f64> {
        self.leaves.iter().map(|l| l.value).collect()
    }

    pub fn set_leaf_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.leaves.len() {
            return Err(Error::data(format!(
                "{} values for {} leaves",
                values.len(),
                self.leaves.len()
            )));
        }
        for (leaf, &v) in self.leaves.iter_mut().zip(values) {
            leaf.value = v;
        }
        Ok(())
    }

    #[inline]
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut node = 0;
        loop {
            match self.nodes[node] {
                Node::Leaf { leaf } => return leaf,
                Node::Split { feature, threshold, left, right } => {
                    node = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Per-leaf per-environment moments of `ds`'s rows `rows` routed
    /// through this tree.
    pub fn route_stats(&self, ds: &EnvDataset, rows: &[usize]) -> Vec<Vec<EnvMoments>> {
        let mut values: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); ds.k()]; self.n_leaves()];
        for &i in rows {
            values[self.leaf_index(ds.row(i))][ds.env()[i]].push(ds.y()[i]);
        }
        values
            .iter()
            .map(|per_env| per_env.iter().map(|v| EnvMoments::from_values(v)).collect())
            .collect()
    }

    /// Structural checks used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() || self.leaves.is_empty() {
            return Err(Error::data("tree has no nodes"));
        }
        let mut seen = vec![false; self.leaves.len()];
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, depth)) = stack.pop() {
            if depth > self.nodes.len() {
                return Err(Error::data("tree contains a cycle"));
            }
            match self.nodes.get(i) {
                None => return Err(Error::data(format!("dangling node index {i}"))),
                Some(Node::Leaf { leaf }) => match seen.get_mut(*leaf) {
                    Some(s) if !*s => *s = true,
                    _ => return Err(Error::data(format!("invalid or repeated leaf {leaf}"))),
                },
                Some(Node::Split { feature, threshold, left, right }) => {
                    if *feature >= self.p || !threshold.is_finite() {
                        return Err(Error::data(format!("invalid split at node {i}")));
                    }
                    stack.push((*left, depth + 1));
                    stack.push((*right, depth + 1));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::data("unreachable leaf"));
        }
        if self.leaves.iter().any(|l| !l.value.is_finite()) {
            return Err(Error::data("non-finite leaf value"));
        }
        Ok(())
    }
}

impl Predictor for Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        self.leaves[self.leaf_index(x)].value
    }
}

pub(crate) fn grow_cart(
    ds: &EnvDataset,
    rows: Vec<usize>,
    hp: &TreeHyperparams,
    rng: &mut StreamRng,
) -> Tree {
    Engine::new(ds, rows, hp).grow_dfs(&mut CartPolicy, rng)
}

/// A pooled-MSE regression tree on all rows of `ds`.
pub fn fit_cart_tree(ds: &EnvDataset, hp: &TreeHyperparams) -> Result<Tree> {
    hp.validate(ds.p())?;
    if ds.n() == 0 {
        return Err(Error::data("cannot fit a tree on an empty dataset"));
    }
    let mut rng = rng::stream(hp.seed, &[]);
    Ok(grow_cart(ds, (0..ds.n()).collect(), hp, &mut rng))
}

/// Leaf index of every row, plus per-environment views.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeafAssignment {
    pub n_leaves: usize,
    /// Leaf of each row of the dataset.
    pub leaf_of_row: Vec<usize>,
    /// For each environment, the leaf of each of its rows (in row order).
    pub per_env: Vec<Vec<usize>>,
}

pub fn leaf_assignment(tree: &Tree, ds: &EnvDataset) -> LeafAssignment {
    let leaf_of_row: Vec<usize> = (0..ds.n()).map(|i| tree.leaf_index(ds.row(i))).collect();
    let mut per_env = vec![Vec::new(); ds.k()];
    for (i, &t) in leaf_of_row.iter().enumerate() {
        per_env[ds.env()[i]].push(t);
    }
    LeafAssignment { n_leaves: tree.n_leaves(), leaf_of_row, per_env }
}
