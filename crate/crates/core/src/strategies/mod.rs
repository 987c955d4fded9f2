//! MaxRM forests: CART partitions with max-risk leaf values, max-risk split
//! selection, and max-risk tree weights.

mod policy;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::grow::Engine;
use crate::cart::{grow_cart, tree_stream, Forest, Predictor, Tree, TreeHyperparams};
use crate::data::{stratified_split, EnvDataset};
use crate::error::{Error, Result};
use crate::minimax::{extragradient_weights, solve_raw, SolverConfig, SolverResult, WeightConfig};
use crate::risk::{LeafEnvStats, RiskSpec};

use policy::{GlobalPolicy, LocalPolicy};

pub const DEFAULT_HOLDOUT_FRACTION: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    /// CART partition, leaf values re-optimized afterwards.
    Posthoc,
    /// Splits chosen by re-optimizing the two children only.
    Local,
    /// Splits chosen by re-optimizing all leaves, depth-first.
    Global,
    /// Like `Global`, but each step takes the best split over all leaves.
    GlobalNonDfs,
    /// CART trees, only the tree weights are optimized.
    Weights,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Posthoc => "posthoc",
            StrategyKind::Local => "local",
            StrategyKind::Global => "global",
            StrategyKind::GlobalNonDfs => "global-nondfs",
            StrategyKind::Weights => "weights",
        }
    }
}

/// A strategy name such as `posthoc`, `global-nondfs` or `local-w`; the
/// `-w` suffix adds tree-weight optimization on a holdout split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub reweight: bool,
    pub holdout_fraction: f64,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind, reweight: bool) -> Self {
        Self { kind, reweight: reweight || kind == StrategyKind::Weights, holdout_fraction: DEFAULT_HOLDOUT_FRACTION }
    }

    pub fn with_holdout_fraction(mut self, f: f64) -> Self {
        self.holdout_fraction = f;
        self
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())?;
        if self.reweight && self.kind != StrategyKind::Weights {
            f.write_str("-w")?;
        }
        Ok(())
    }
}

impl FromStr for StrategySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, reweight) = match s.strip_suffix("-w") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let kind = match base {
            "posthoc" => StrategyKind::Posthoc,
            "local" => StrategyKind::Local,
            "global" => StrategyKind::Global,
            "global-nondfs" => StrategyKind::GlobalNonDfs,
            "weights" => StrategyKind::Weights,
            _ => {
                return Err(Error::config(format!(
                    "unknown strategy `{s}` (expected posthoc, local, global, global-nondfs or weights, optionally with -w)"
                )))
            }
        };
        Ok(Self::new(kind, reweight))
    }
}

/// Solver outcome for one tree, on that tree's bootstrap sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeDiagnostics {
    pub n_leaves: usize,
    pub max_risk: f64,
    pub active: Vec<usize>,
    pub fallback: bool,
    /// Leaves without observations from any environment in `active`.
    pub indeterminate: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxRmForest {
    pub forest: Forest,
    pub strategy: StrategySpec,
    pub risk: RiskSpec,
    pub solver: SolverConfig,
    pub diagnostics: Vec<TreeDiagnostics>,
    /// Holdout maximum risk of the optimized weights.
    pub holdout_max_risk: Option<f64>,
}

impl Predictor for MaxRmForest {
    fn predict(&self, x: &[f64]) -> f64 {
        self.forest.predict(x)
    }
}

fn diagnostics_of(tree: &Tree, spec: &RiskSpec, fallback: bool) -> TreeDiagnostics {
    let stats = LeafEnvStats::from_tree(tree);
    let v = crate::risk::max_empirical_risk(&tree.leaf_values(), &stats, spec);
    let (max_risk, active) = v.map(|v| (v.max, v.argmax)).unwrap_or((f64::NAN, Vec::new()));
    let indeterminate = indeterminate_leaves(tree, &active).count();
    TreeDiagnostics { n_leaves: tree.n_leaves(), max_risk, active, fallback, indeterminate }
}

fn indeterminate_leaves<'a>(tree: &'a Tree, active: &'a [usize]) -> impl Iterator<Item = usize> + 'a {
    tree.leaves()
        .iter()
        .enumerate()
        .filter(move |(_, l)| active.iter().all(|&e| l.stats[e].count == 0))
        .map(|(t, _)| t)
}

/// Sets every indeterminate leaf back to the pooled mean of its
/// observations, the value a random forest would use.
pub fn revert_indeterminate(model: &mut MaxRmForest) -> Result<()> {
    for (tree, d) in model.forest.trees.iter_mut().zip(&model.diagnostics) {
        let mut values = tree.leaf_values();
        for t in indeterminate_leaves(tree, &d.active) {
            let stats = &tree.leaves()[t].stats;
            let n: usize = stats.iter().map(|m| m.count).sum();
            if n > 0 {
                values[t] = stats.iter().map(|m| m.count as f64 * m.mean).sum::<f64>() / n as f64;
            }
        }
        tree.set_leaf_values(&values)?;
    }
    Ok(())
}

/// Replaces the leaf values of `tree` by the solution of the max-risk
/// problem on its cached leaf statistics, starting from the current
/// values. If the solver ends above the starting point, the tree is kept.
pub fn posthoc_adjust(tree: &Tree, spec: &RiskSpec, solver: &SolverConfig) -> Result<(Tree, SolverResult)> {
    let stats = LeafEnvStats::from_tree(tree);
    let theta0 = tree.leaf_values();
    if spec.offsets.len() != tree.k() {
        return Err(Error::solver("offset count differs from the environment count"));
    }
    let (mut r, _) = solve_raw(&theta0, &stats, &spec.offsets, None, solver)?;
    let z0 = stats.max_risk(&theta0, &spec.offsets);
    let mut out = tree.clone();
    if r.z > z0 {
        r = crate::minimax::finish_result(&stats, &spec.offsets, theta0, r.p, r.iterations, r.converged, r.fallback)?;
    } else {
        out.set_leaf_values(&r.theta)?;
    }
    Ok((out, r))
}

/// Grows one tree of `kind` on the bootstrap rows of `ds`.
pub(crate) fn grow_strategy_tree(
    ds: &EnvDataset,
    kind: StrategyKind,
    spec: &RiskSpec,
    solver: &SolverConfig,
    hp: &TreeHyperparams,
    seed: u64,
    b: usize,
) -> Result<(Tree, TreeDiagnostics)> {
    let (rows, mut rng) = tree_stream(ds.n(), seed, b);
    grow_on_rows(ds, rows, &mut rng, kind, spec, solver, hp)
        .map_err(|e| Error::Solver(format!("tree {b}: {e}")))
}

/// A single tree grown with `kind` on every row of `ds` (no bootstrap),
/// with split features drawn from `hp.seed`.
pub fn fit_maxrm_tree(
    ds: &EnvDataset,
    kind: StrategyKind,
    spec: &RiskSpec,
    solver: &SolverConfig,
    hp: &TreeHyperparams,
) -> Result<(Tree, TreeDiagnostics)> {
    hp.validate(ds.p())?;
    solver.validate()?;
    ds.require_nonempty_envs()?;
    if spec.offsets.len() != ds.k() {
        return Err(Error::config("risk offsets do not match the number of environments"));
    }
    let mut rng = crate::rng::stream(hp.seed, &[crate::rng::tags::TREE]);
    grow_on_rows(ds, (0..ds.n()).collect(), &mut rng, kind, spec, solver, hp)
}

fn grow_on_rows(
    ds: &EnvDataset,
    rows: Vec<usize>,
    rng: &mut crate::rng::StreamRng,
    kind: StrategyKind,
    spec: &RiskSpec,
    solver: &SolverConfig,
    hp: &TreeHyperparams,
) -> Result<(Tree, TreeDiagnostics)> {
    let k = ds.k();
    match kind {
        StrategyKind::Weights => {
            let tree = grow_cart(ds, rows, hp, rng);
            let d = diagnostics_of(&tree, spec, false);
            Ok((tree, d))
        }
        StrategyKind::Posthoc => {
            let tree = grow_cart(ds, rows, hp, rng);
            let (tree, r) = posthoc_adjust(&tree, spec, solver)?;
            let d = diagnostics_of(&tree, spec, r.fallback);
            Ok((tree, d))
        }
        StrategyKind::Local => {
            let mut pol = LocalPolicy::new(k, &spec.offsets, solver);
            let tree = Engine::new(ds, rows, hp).grow_dfs(&mut pol, rng);
            if let Some(e) = pol.take_error() {
                return Err(e);
            }
            let d = diagnostics_of(&tree, spec, false);
            Ok((tree, d))
        }
        StrategyKind::Global | StrategyKind::GlobalNonDfs => {
            let mut pol = GlobalPolicy::new(k, &spec.offsets, solver);
            let engine = Engine::new(ds, rows, hp);
            let tree = if kind == StrategyKind::Global {
                engine.grow_dfs(&mut pol, rng)
            } else {
                engine.grow_best_first(&mut pol, rng)
            };
            if let Some(e) = pol.take_error() {
                return Err(e);
            }
            let d = diagnostics_of(&tree, spec, false);
            Ok((tree, d))
        }
    }
}

/// Optimizes the weights of `forest` on `holdout`. The result is never
/// worse on the holdout than uniform weights.
pub fn optimize_tree_weights(forest: &Forest, holdout: &EnvDataset, spec: &RiskSpec, cfg: &WeightConfig) -> Result<(Forest, f64)> {
    let preds = forest.tree_predictions(holdout);
    let r = extragradient_weights(&preds, holdout, &spec.offsets, cfg)?;
    Ok((Forest { trees: forest.trees.clone(), weights: r.w }, r.z))
}

/// Fits `b` trees on bootstrap samples of `ds` with the given strategy.
///
/// Tree `i` draws its bootstrap rows and split features from the stream
/// `(seed, i)`, so posthoc and weights-only forests share their partitions
/// with a random forest fitted with the same seed. With reweighting, trees
/// are fitted on a split stratified by environment and weighted on the
/// held-out part.
#[allow(clippy::too_many_arguments)]
pub fn fit_maxrm_forest(
    ds: &EnvDataset,
    strategy: &StrategySpec,
    spec: &RiskSpec,
    solver: &SolverConfig,
    hp: &TreeHyperparams,
    b: usize,
    seed: u64,
) -> Result<MaxRmForest> {
    hp.validate(ds.p())?;
    solver.validate()?;
    if b == 0 {
        return Err(Error::config("a forest needs at least one tree"));
    }
    ds.require_nonempty_envs()?;
    if spec.offsets.len() != ds.k() {
        return Err(Error::config("risk offsets do not match the number of environments"));
    }
    let split = if strategy.reweight {
        let (fit, hold) = stratified_split(ds, strategy.holdout_fraction, seed)?;
        Some((ds.subset(&fit), ds.subset(&hold)))
    } else {
        None
    };
    let train = split.as_ref().map_or(ds, |(f, _)| f);
    let grown: Vec<(Tree, TreeDiagnostics)> = (0..b)
        .into_par_iter()
        .map(|i| grow_strategy_tree(train, strategy.kind, spec, solver, hp, seed, i))
        .collect::<Result<_>>()?;
    let (trees, diagnostics): (Vec<Tree>, Vec<TreeDiagnostics>) = grown.into_iter().unzip();
    let mut forest = Forest::uniform(trees);
    let mut holdout_max_risk = None;
    if let Some((_, hold)) = &split {
        let (f, z) = optimize_tree_weights(&forest, hold, spec, &WeightConfig::default())?;
        forest = f;
        holdout_max_risk = Some(z);
    }
    Ok(MaxRmForest { forest, strategy: *strategy, risk: spec.clone(), solver: solver.clone(), diagnostics, holdout_max_risk })
}

#[cfg(test)]
mod tests;
