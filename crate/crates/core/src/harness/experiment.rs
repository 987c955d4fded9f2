//! Experiment configuration and the repetition runner.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checks::consistency_probe;
use super::metrics::{evaluate, mise, Metrics};
use super::table::ResultTable;
use crate::baselines::{fit_magging, fit_rf, MaggingModel};
use crate::cart::{fit_cart_tree, Forest, Predictor, Tree, TreeHyperparams};
use crate::data::{sample_covariates, simulate, DgpConfig, EnvDataset, OracleFn, Simulation};
use crate::error::{Error, Result};
use crate::minimax::{SolverConfig, SolverMethod};
use crate::risk::{RiskKind, RiskSpec};
use crate::rng::{derive_seed, tags};
use crate::strategies::{fit_maxrm_forest, fit_maxrm_tree, revert_indeterminate, MaxRmForest, StrategySpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Fit every method on fresh data per repetition and evaluate on test data.
    #[default]
    Compare,
    /// Squared bias and variance of predictions across repetitions.
    BiasVariance,
    /// Excess population risk of post-hoc values on a fixed partition.
    Consistency,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Rf,
    Maxrm,
    /// One MaxRM tree on the whole sample.
    MaxrmTree,
    Magging,
    /// The known minimizer of the population maximum MSE.
    Oracle,
    /// The known minimizer of the population pooled MSE.
    PooledOracle,
}

fn default_trees() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub name: String,
    pub model: ModelKind,
    /// Strategy name for `maxrm` and `maxrm-tree`, e.g. `posthoc-w`.
    #[serde(default)]
    pub strategy: Option<String>,
    #[serde(default = "default_risk")]
    pub risk: RiskKind,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default = "default_trees")]
    pub trees: usize,
    #[serde(default)]
    pub hyperparams: TreeHyperparams,
    /// Leaf size of magging's per-environment forests.
    #[serde(default)]
    pub env_min_leaf: Option<usize>,
    /// Reset indeterminate leaves to their pooled means after fitting.
    #[serde(default)]
    pub revert_indeterminate: bool,
    #[serde(default)]
    pub holdout_fraction: Option<f64>,
}

fn default_risk() -> RiskKind {
    RiskKind::Mse
}

impl MethodConfig {
    pub fn new(name: impl Into<String>, model: ModelKind) -> Self {
        Self {
            name: name.into(),
            model,
            strategy: None,
            risk: RiskKind::Mse,
            solver: None,
            trees: 100,
            hyperparams: TreeHyperparams::default(),
            env_min_leaf: None,
            revert_indeterminate: false,
            holdout_fraction: None,
        }
    }

    pub fn maxrm(name: impl Into<String>, strategy: &str) -> Self {
        Self { strategy: Some(strategy.into()), ..Self::new(name, ModelKind::Maxrm) }
    }

    fn strategy(&self) -> Result<StrategySpec> {
        let s: StrategySpec = self.strategy.as_deref().unwrap_or("posthoc").parse()?;
        Ok(match self.holdout_fraction {
            Some(f) => s.with_holdout_fraction(f),
            None => s,
        })
    }

    fn solver(&self) -> SolverConfig {
        self.solver.clone().unwrap_or_else(|| SolverConfig::for_method(SolverMethod::Kkt))
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains([',', '@', '\n']) {
            return Err(Error::config(format!("method name `{}` must be nonempty without `,` `@` or newlines", self.name)));
        }
        if matches!(self.model, ModelKind::Maxrm | ModelKind::MaxrmTree) {
            let s = self.strategy()?;
            if !(s.holdout_fraction > 0.0 && s.holdout_fraction < 1.0) {
                return Err(Error::config("holdout_fraction must lie in (0, 1)"));
            }
        } else if self.strategy.is_some() {
            return Err(Error::config(format!("method `{}`: only maxrm models take a strategy", self.name)));
        }
        if self.trees == 0 {
            return Err(Error::config(format!("method `{}` needs at least one tree", self.name)));
        }
        self.solver().validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    MaxMse,
    PooledMse,
    MaxNrw,
    MaxReg,
    /// One `env_mse_<e>` column per environment.
    EnvMse,
    Mise,
    /// Share of leaves without observations from a worst-case environment.
    IndeterminateFraction,
    /// Share of trees whose solver fell back to extragradient.
    FallbackFraction,
}

impl MetricName {
    pub fn name(self) -> &'static str {
        match self {
            MetricName::MaxMse => "max_mse",
            MetricName::PooledMse => "pooled_mse",
            MetricName::MaxNrw => "max_nrw",
            MetricName::MaxReg => "max_reg",
            MetricName::EnvMse => "env_mse",
            MetricName::Mise => "mise",
            MetricName::IndeterminateFraction => "indeterminate_fraction",
            MetricName::FallbackFraction => "fallback_fraction",
        }
    }
}

fn default_metrics() -> Vec<MetricName> {
    vec![MetricName::MaxMse, MetricName::PooledMse]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    K,
    NPerEnv,
    NTotal,
    MinLeafSize,
    MaxDepth,
    MTry,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::K => "k",
            SweepParameter::NPerEnv => "n_per_env",
            SweepParameter::NTotal => "n_total",
            SweepParameter::MinLeafSize => "min_leaf_size",
            SweepParameter::MaxDepth => "max_depth",
            SweepParameter::MTry => "m_try",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<usize>,
}

fn default_eval_points() -> usize {
    1000
}

fn default_population() -> usize {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Covariate points at which bias and variance (or MISE) are averaged.
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
    /// Consistency: total sample sizes.
    #[serde(default)]
    pub n_grid: Vec<usize>,
    /// Consistency: observations per environment standing in for the population.
    #[serde(default = "default_population")]
    pub population_per_env: usize,
    /// Consistency: sample size on which the fixed partition is grown.
    #[serde(default)]
    pub partition_n: Option<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { eval_points: default_eval_points(), n_grid: Vec::new(), population_per_env: default_population(), partition_n: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Free text, e.g. how the setup was scaled down.
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub kind: ExperimentKind,
    pub dgp: DgpConfig,
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    pub methods: Vec<MethodConfig>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricName>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub probe: ProbeConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::config("repetitions must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("at least one method is required"));
        }
        let mut names = std::collections::HashSet::new();
        for m in &self.methods {
            m.validate()?;
            if !names.insert(&m.name) {
                return Err(Error::config(format!("duplicate method name `{}`", m.name)));
            }
        }
        for p in self.points() {
            p.dgp.validate()?;
            for m in &p.methods {
                m.hyperparams.validate(p.dgp.p)?;
            }
        }
        match self.kind {
            ExperimentKind::Compare => {}
            ExperimentKind::BiasVariance | ExperimentKind::Consistency if self.sweep.is_some() => {
                return Err(Error::config("sweeps are only supported for compare experiments"));
            }
            ExperimentKind::BiasVariance => {
                if self.probe.eval_points == 0 {
                    return Err(Error::config("bias_variance needs eval_points > 0"));
                }
                if simulate_oracle(&self.dgp).is_none() {
                    return Err(Error::config(format!("setting {} has no known oracle", self.dgp.setting)));
                }
            }
            ExperimentKind::Consistency => {
                if self.probe.n_grid.is_empty() {
                    return Err(Error::config("consistency needs a nonempty probe.n_grid"));
                }
            }
        }
        let needs_oracle = self.metrics.contains(&MetricName::Mise)
            || self.methods.iter().any(|m| matches!(m.model, ModelKind::Oracle | ModelKind::PooledOracle));
        if needs_oracle && simulate_oracle(&self.dgp).is_none() {
            return Err(Error::config(format!("setting {} has no known oracle", self.dgp.setting)));
        }
        Ok(())
    }

    /// The configuration at every sweep value (a single point without a sweep).
    fn points(&self) -> Vec<Point> {
        let Some(sweep) = &self.sweep else {
            return vec![Point { label: None, dgp: self.dgp.clone(), methods: self.methods.clone() }];
        };
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut dgp = self.dgp.clone();
                let mut methods = self.methods.clone();
                match sweep.parameter {
                    SweepParameter::K => dgp.k = v,
                    SweepParameter::NPerEnv => {
                        dgp.n_per_env = v;
                        dgp.n_total = None;
                    }
                    SweepParameter::NTotal => dgp.n_total = Some(v),
                    SweepParameter::MinLeafSize => methods.iter_mut().for_each(|m| m.hyperparams.min_leaf_size = v),
                    SweepParameter::MaxDepth => methods.iter_mut().for_each(|m| m.hyperparams.max_depth = Some(v)),
                    SweepParameter::MTry => methods.iter_mut().for_each(|m| m.hyperparams.m_try = Some(v)),
                }
                Point { label: Some(format!("{}={v}", sweep.parameter.name())), dgp, methods }
            })
            .collect()
    }
}

fn simulate_oracle(cfg: &DgpConfig) -> Option<(OracleFn, Option<OracleFn>)> {
    use crate::data::Setting;
    match cfg.setting {
        Setting::PiecewiseLinear => Some((
            OracleFn::piecewise_linear(1.25, 2.25, "max-MSE oracle"),
            Some(OracleFn::piecewise_linear(5.0 / 3.0, 11.0 / 6.0, "pooled-MSE oracle")),
        )),
        Setting::MixtureUniform => Some((OracleFn::piecewise_linear(-2.4, 2.4, "max-MSE oracle"), None)),
        _ => None,
    }
}

struct Point {
    label: Option<String>,
    dgp: DgpConfig,
    methods: Vec<MethodConfig>,
}

/// A fitted model of any method.
pub enum Fitted {
    Forest(Forest),
    MaxRm(MaxRmForest),
    Tree(Tree),
    Magging(MaggingModel),
    Oracle(OracleFn),
}

impl Predictor for Fitted {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Fitted::Forest(f) => f.predict(x),
            Fitted::MaxRm(f) => f.predict(x),
            Fitted::Tree(t) => t.predict(x),
            Fitted::Magging(m) => m.predict(x),
            Fitted::Oracle(o) => o.eval(x),
        }
    }
}

impl Fitted {
    fn leaf_counts(&self) -> Option<(usize, usize, usize)> {
        match self {
            Fitted::MaxRm(m) => Some(m.diagnostics.iter().fold((0, 0, 0), |(i, n, f), d| {
                (i + d.indeterminate, n + d.n_leaves, f + usize::from(d.fallback))
            })),
            _ => None,
        }
    }

    /// The model as one weighted forest; `None` for oracles.
    pub fn to_forest(&self) -> Option<Forest> {
        match self {
            Fitted::Forest(f) => Some(f.clone()),
            Fitted::MaxRm(m) => Some(m.forest.clone()),
            Fitted::Tree(t) => Some(Forest::uniform(vec![t.clone()])),
            Fitted::Magging(m) => Some(m.to_forest()),
            Fitted::Oracle(_) => None,
        }
    }

    fn n_trees(&self) -> usize {
        match self {
            Fitted::MaxRm(m) => m.forest.n_trees(),
            _ => 1,
        }
    }
}

/// Fits `method` on the training sample of `sim` with the forest seed `seed`.
pub fn fit_method(method: &MethodConfig, sim: &Simulation, seed: u64) -> Result<Fitted> {
    match method.model {
        ModelKind::Oracle => Ok(Fitted::Oracle(sim.oracle.clone().ok_or_else(|| Error::config("no oracle for this setting"))?)),
        ModelKind::PooledOracle => {
            Ok(Fitted::Oracle(sim.pooled_oracle.clone().ok_or_else(|| Error::config("no pooled oracle for this setting"))?))
        }
        _ => fit_on(method, &sim.train, seed),
    }
}

/// Fits a data-driven `method` on `train`; oracle models need a simulation.
pub fn fit_on(method: &MethodConfig, train: &EnvDataset, seed: u64) -> Result<Fitted> {
    let hp = &method.hyperparams;
    let spec = || RiskSpec::fit(train, method.risk, hp);
    Ok(match method.model {
        ModelKind::Rf => Fitted::Forest(fit_rf(train, hp, method.trees, seed)?),
        ModelKind::Maxrm => {
            let mut m = fit_maxrm_forest(train, &method.strategy()?, &spec()?, &method.solver(), hp, method.trees, seed)?;
            if method.revert_indeterminate {
                revert_indeterminate(&mut m)?;
            }
            Fitted::MaxRm(m)
        }
        ModelKind::MaxrmTree => {
            let hp = TreeHyperparams { seed, ..hp.clone() };
            let (tree, _) = fit_maxrm_tree(train, method.strategy()?.kind, &spec()?, &method.solver(), &hp)?;
            Fitted::Tree(tree)
        }
        ModelKind::Magging => {
            let env_hp = TreeHyperparams { min_leaf_size: method.env_min_leaf.unwrap_or(hp.min_leaf_size), ..hp.clone() };
            Fitted::Magging(fit_magging(train, &spec()?, &env_hp, method.trees, seed)?)
        }
        ModelKind::Oracle | ModelKind::PooledOracle => {
            return Err(Error::config(format!("method `{}`: oracle models are only available for simulated data", method.name)))
        }
    })
}

fn kinds_of(metrics: &[MetricName]) -> Vec<RiskKind> {
    let mut kinds = vec![RiskKind::Mse];
    if metrics.contains(&MetricName::MaxNrw) {
        kinds.push(RiskKind::Nrw);
    }
    if metrics.contains(&MetricName::MaxReg) {
        kinds.push(RiskKind::Reg);
    }
    kinds
}

fn metric_values(metrics: &[MetricName], m: &Metrics, fitted: &Fitted) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for &name in metrics {
        match name {
            MetricName::MaxMse => out.push((name.name().into(), m.max(RiskKind::Mse).unwrap_or(f64::NAN))),
            MetricName::MaxNrw => out.push((name.name().into(), m.max(RiskKind::Nrw).unwrap_or(f64::NAN))),
            MetricName::MaxReg => out.push((name.name().into(), m.max(RiskKind::Reg).unwrap_or(f64::NAN))),
            MetricName::PooledMse => out.push((name.name().into(), m.pooled_mse)),
            MetricName::EnvMse => out.extend(m.env_mse.iter().enumerate().map(|(e, v)| (format!("env_mse_{e}"), *v))),
            MetricName::Mise => {
                if let Some(v) = m.mise {
                    out.push((name.name().into(), v));
                }
            }
            MetricName::IndeterminateFraction => {
                if let Some((ind, total, _)) = fitted.leaf_counts() {
                    out.push((name.name().into(), ind as f64 / total.max(1) as f64));
                }
            }
            MetricName::FallbackFraction => {
                if let Some((_, _, fb)) = fitted.leaf_counts() {
                    out.push((name.name().into(), fb as f64 / fitted.n_trees() as f64));
                }
            }
        }
    }
    out
}

fn label(method: &str, point: &Option<String>) -> String {
    match point {
        Some(p) => format!("{method}@{p}"),
        None => method.to_string(),
    }
}

/// Seeds of repetition `rep`: data, then forests (shared by all methods so
/// that random forest and post-hoc fits use the same partitions).
fn rep_seeds(cfg: &ExperimentConfig, rep: usize) -> (u64, u64) {
    (derive_seed(cfg.seed, &[tags::REPETITION, rep as u64]), derive_seed(cfg.seed, &[tags::METHOD, rep as u64]))
}

fn rep_dgp(cfg: &ExperimentConfig, dgp: &DgpConfig, rep: usize) -> DgpConfig {
    let (data_seed, _) = rep_seeds(cfg, rep);
    // covariate-shift parameters stay fixed across repetitions
    DgpConfig { seed: data_seed, shift_seed: Some(dgp.shift_seed.unwrap_or(cfg.seed)), ..dgp.clone() }
}

struct Cell {
    method: String,
    rep: usize,
    outcome: std::result::Result<(Vec<(String, f64)>, f64), String>,
}

/// Runs every repetition of `cfg`. Failures of single methods are recorded
/// in the table and do not stop the other cells.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    run_experiment_with(cfg, &|_: &str, _: usize, _: &Fitted| {})
}

/// Like [`run_experiment`], also handing every fitted model to `inspect`
/// together with its method label and repetition.
pub fn run_experiment_with<F>(cfg: &ExperimentConfig, inspect: &F) -> Result<ResultTable>
where
    F: Fn(&str, usize, &Fitted) + Sync,
{
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::Compare => run_compare(cfg, inspect),
        ExperimentKind::BiasVariance => run_bias_variance(cfg, inspect),
        ExperimentKind::Consistency => run_consistency(cfg),
    }
}

fn run_compare<F: Fn(&str, usize, &Fitted) + Sync>(cfg: &ExperimentConfig, inspect: &F) -> Result<ResultTable> {
    let mut table = ResultTable::new(&cfg.name);
    let kinds = kinds_of(&cfg.metrics);
    for point in cfg.points() {
        let cells: Vec<Vec<Cell>> = (0..cfg.repetitions)
            .into_par_iter()
            .map(|rep| {
                let dgp = rep_dgp(cfg, &point.dgp, rep);
                let (_, forest_seed) = rep_seeds(cfg, rep);
                let sim = match simulate(&dgp) {
                    Ok(s) => s,
                    Err(e) => {
                        return point
                            .methods
                            .iter()
                            .map(|m| Cell { method: label(&m.name, &point.label), rep, outcome: Err(format!("data: {e}")) })
                            .collect();
                    }
                };
                let x_eval = cfg.metrics.contains(&MetricName::Mise).then(|| sample_covariates(&dgp, 10_000, dgp.seed));
                point
                    .methods
                    .iter()
                    .map(|m| {
                        let start = Instant::now();
                        let method = label(&m.name, &point.label);
                        let outcome = fit_method(m, &sim, forest_seed)
                            .and_then(|fitted| {
                                let secs = start.elapsed().as_secs_f64();
                                inspect(&method, rep, &fitted);
                                let mut metrics = evaluate(&fitted, &sim.test, &kinds, &m.hyperparams)?;
                                if let (Some(x), Some(o)) = (&x_eval, &sim.oracle) {
                                    metrics.mise = Some(mise(&fitted, o, x, dgp.p));
                                }
                                for w in &metrics.warnings {
                                    log::warn!("{} rep {rep}: {w}", m.name);
                                }
                                Ok((metric_values(&cfg.metrics, &metrics, &fitted), secs))
                            })
                            .map_err(|e| e.to_string());
                        Cell { method, rep, outcome }
                    })
                    .collect()
            })
            .collect();
        for cell in cells.into_iter().flatten() {
            match cell.outcome {
                Ok((values, secs)) => {
                    for (metric, v) in values {
                        table.push(&cell.method, cell.rep, &metric, v);
                    }
                    table.push_runtime(&cell.method, cell.rep, secs);
                }
                Err(msg) => {
                    log::error!("{} rep {}: {msg}", cell.method, cell.rep);
                    table.push_error(&cell.method, cell.rep, &msg);
                }
            }
        }
    }
    Ok(table)
}

fn run_bias_variance<F: Fn(&str, usize, &Fitted) + Sync>(cfg: &ExperimentConfig, inspect: &F) -> Result<ResultTable> {
    let mut table = ResultTable::new(&cfg.name);
    let (oracle, _) = simulate_oracle(&cfg.dgp).expect("validated");
    let x_eval = sample_covariates(&cfg.dgp, cfg.probe.eval_points, derive_seed(cfg.seed, &[tags::EVAL]));
    let p = cfg.dgp.p;
    let truth: Vec<f64> = x_eval.chunks_exact(p).map(|x| oracle.eval(x)).collect();
    for m in &cfg.methods {
        let runs: Vec<Result<(Vec<f64>, f64)>> = (0..cfg.repetitions)
            .into_par_iter()
            .map(|rep| {
                let sim = simulate(&rep_dgp(cfg, &cfg.dgp, rep))?;
                let start = Instant::now();
                let fitted = fit_method(m, &sim, rep_seeds(cfg, rep).1)?;
                let secs = start.elapsed().as_secs_f64();
                inspect(&m.name, rep, &fitted);
                Ok((x_eval.chunks_exact(p).map(|x| fitted.predict(x)).collect(), secs))
            })
            .collect();
        let mut preds = Vec::new();
        for (rep, r) in runs.into_iter().enumerate() {
            match r {
                Ok((v, secs)) => {
                    table.push(&m.name, rep, "mise", v.iter().zip(&truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / truth.len() as f64);
                    table.push_runtime(&m.name, rep, secs);
                    preds.push(v);
                }
                Err(e) => table.push_error(&m.name, rep, &e.to_string()),
            }
        }
        if preds.len() < 2 {
            continue;
        }
        let r = preds.len() as f64;
        let (mut bias2, mut var) = (0.0, 0.0);
        for (j, t) in truth.iter().enumerate() {
            let mean = preds.iter().map(|v| v[j]).sum::<f64>() / r;
            bias2 += (mean - t) * (mean - t);
            var += preds.iter().map(|v| (v[j] - mean) * (v[j] - mean)).sum::<f64>() / (r - 1.0);
        }
        let m_pts = truth.len() as f64;
        table.push_summary(&m.name, "bias2", bias2 / m_pts);
        table.push_summary(&m.name, "variance", var / m_pts);
    }
    Ok(table)
}

fn run_consistency(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let mut table = ResultTable::new(&cfg.name);
    for m in &cfg.methods {
        let partition_cfg = DgpConfig {
            n_total: cfg.probe.partition_n.or(cfg.dgp.n_total),
            seed: derive_seed(cfg.seed, &[tags::PROBE, 1]),
            ..cfg.dgp.clone()
        };
        let outcome = simulate(&partition_cfg).and_then(|sim| {
            let hp = TreeHyperparams { seed: derive_seed(cfg.seed, &[tags::TREE]), ..m.hyperparams.clone() };
            let tree = fit_cart_tree(&sim.train, &hp)?;
            consistency_probe(&tree, &cfg.dgp, m.risk, &m.solver(), &cfg.probe.n_grid, cfg.repetitions, cfg.probe.population_per_env, cfg.seed)
        });
        match outcome {
            Ok(report) => {
                for (n, row) in report.n_grid.iter().zip(&report.excess) {
                    let method = format!("{}@n={n}", m.name);
                    for (rep, v) in row.iter().enumerate() {
                        table.push(&method, rep, "excess_max_risk", *v);
                    }
                    table.push_summary(&method, "median_excess_max_risk", super::stats::median(row));
                }
            }
            Err(e) => table.push_error(&m.name, 0, &e.to_string()),
        }
    }
    Ok(table)
}
