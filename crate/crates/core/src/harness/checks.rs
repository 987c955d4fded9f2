//! Empirical checks of the convex-hull guarantees and of the consistency
//! of post-hoc leaf values.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::stats::median;
use crate::cart::{Predictor, Tree};
use crate::data::{simulate, DgpConfig, EnvDataset, Setting, PWL_SLOPES};
use crate::error::{Error, Result};
use crate::minimax::{solve_raw, SolverConfig};
use crate::risk::{risk_offsets, LeafEnvStats, RiskSpec};
use crate::rng::{self, derive_seed, tags, StreamRng};

/// Uniform draw from the probability simplex.
fn simplex_point(k: usize, r: &mut StreamRng) -> Vec<f64> {
    let g: Vec<f64> = (0..k).map(|_| Exp1.sample(r)).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HullReport {
    pub n_mix: usize,
    pub violations: usize,
    /// Largest `mixture risk - max vertex risk` seen (non-positive when no
    /// mixture exceeds the maximum).
    pub max_excess: f64,
    pub vertex_risks: Vec<f64>,
}

/// Risk of `model` under mixtures `sum_e q_e P_e` of the test environments,
/// for `n_mix` uniform draws of `q`, against the largest single-environment
/// risk.
pub fn convexhull_risk_check<M: Predictor + ?Sized>(
    model: &M,
    test: &EnvDataset,
    spec: &RiskSpec,
    n_mix: usize,
    seed: u64,
) -> Result<HullReport> {
    if spec.offsets.len() != test.k() {
        return Err(Error::data("offset count differs from the environment count"));
    }
    test.require_nonempty_envs()?;
    let k = test.k();
    let preds = model.predict_dataset(test);
    let counts = test.env_counts();
    let mut sse = vec![0.0; k];
    for ((&e, &y), p) in test.env().iter().zip(test.y()).zip(&preds) {
        sse[e] += (y - p) * (y - p);
    }
    let vertex: Vec<f64> = (0..k).map(|e| sse[e] / counts[e] as f64 - spec.offsets[e]).collect();
    let top = vertex.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut r = rng::stream(seed, &[tags::MIXTURE]);
    let mut violations = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for _ in 0..n_mix {
        let q = simplex_point(k, &mut r);
        // expected loss under the mixture: each row of environment e has mass q_e / n_e
        let loss: f64 = preds
            .iter()
            .zip(test.y())
            .zip(test.env())
            .map(|((p, y), &e)| q[e] / counts[e] as f64 * (y - p) * (y - p))
            .sum();
        let risk = loss - q.iter().zip(&spec.offsets).map(|(a, c)| a * c).sum::<f64>();
        max_excess = max_excess.max(risk - top);
        if risk > top + 1e-12 {
            violations += 1;
        }
    }
    Ok(HullReport { n_mix, violations, max_excess, vertex_risks: vertex })
}

/// Regression functions of every environment at shared covariates, for
/// building synthetic test environments inside the convex hull.
#[derive(Clone, Debug, PartialEq)]
pub struct HullFunctions {
    /// Row-major covariates, `p` columns.
    pub x: Vec<f64>,
    pub p: usize,
    /// `f[e][j]`: environment `e`'s function at covariate row `j`.
    pub f: Vec<Vec<f64>>,
    pub noise_sd: f64,
}

impl HullFunctions {
    /// Functions of the simulation settings without covariate shift: exact
    /// for the piecewise-linear setting, drawn jointly with the training
    /// functions for the GP setting (requires `probe_points > 0`).
    pub fn for_config(cfg: &DgpConfig, m: usize, seed: u64) -> Result<Self> {
        match cfg.setting {
            Setting::PiecewiseLinear => {
                let mut r = rng::stream(seed, &[tags::PROBE]);
                let x: Vec<f64> = (0..m).map(|_| r.random_range(-4.0..4.0)).collect();
                let f = PWL_SLOPES
                    .iter()
                    .map(|&(a, b)| x.iter().map(|&v| if v <= 0.0 { a * v } else { b * v }).collect())
                    .collect();
                Ok(Self { x, p: 1, f, noise_sd: cfg.noise_sd })
            }
            Setting::GpNoShift | Setting::GpIdentical => {
                let cfg = DgpConfig { probe_points: m, ..cfg.clone() };
                let probe = simulate(&cfg)?.probe.ok_or_else(|| Error::config("probe points were not drawn"))?;
                Ok(Self { x: probe.x, p: cfg.p, f: probe.f, noise_sd: cfg.noise_sd })
            }
            s => Err(Error::config(format!("setting {s} has covariate shift; the convex-hull guarantee needs a shared covariate law"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prop1Report {
    pub n_mix: usize,
    pub violations: usize,
    /// Largest MSE among the training environments on the shared covariates.
    pub train_max: f64,
    /// Largest MSE among the synthetic mixture environments.
    pub mixture_max: f64,
}

/// Synthetic test environments with regression function
/// `sum_k q_k f^{e_k}` and fresh Gaussian noise. A draw violates the
/// guarantee if its MSE exceeds the training-environment maximum by more
/// than two Monte Carlo standard errors.
pub fn prop1_check<M: Predictor + ?Sized>(model: &M, funcs: &HullFunctions, n_mix: usize, seed: u64) -> Result<Prop1Report> {
    let k = funcs.f.len();
    let m = funcs.x.len() / funcs.p;
    if k == 0 || m < 2 {
        return Err(Error::data("need at least one environment and two covariate rows"));
    }
    let preds: Vec<f64> = funcs.x.chunks_exact(funcs.p).map(|x| model.predict(x)).collect();
    let mut r = rng::stream(seed, &[tags::MIXTURE]);
    let mse_of = |f: &dyn Fn(usize) -> f64, r: &mut StreamRng| -> (f64, f64) {
        let losses: Vec<f64> = (0..m)
            .map(|j| {
                let eps: f64 = r.sample(StandardNormal);
                let d = f(j) + funcs.noise_sd * eps - preds[j];
                d * d
            })
            .collect();
        let mean = losses.iter().sum::<f64>() / m as f64;
        let var = losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (m - 1) as f64;
        (mean, (var / m as f64).sqrt())
    };
    let mut train_max = f64::NEG_INFINITY;
    let mut train_se = 0.0;
    for e in 0..k {
        let (v, se) = mse_of(&|j| funcs.f[e][j], &mut r);
        if v > train_max {
            train_max = v;
            train_se = se;
        }
    }
    let mut violations = 0;
    let mut mixture_max = f64::NEG_INFINITY;
    for _ in 0..n_mix {
        let q = simplex_point(k, &mut r);
        let (v, se) = mse_of(&|j| (0..k).map(|e| q[e] * funcs.f[e][j]).sum(), &mut r);
        mixture_max = mixture_max.max(v);
        if v > train_max + 2.0 * (se * se + train_se * train_se).sqrt() {
            violations += 1;
        }
    }
    Ok(Prop1Report { n_mix, violations, train_max, mixture_max })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyReport {
    pub n_grid: Vec<usize>,
    /// `excess[i][r]`: population excess max risk at `n_grid[i]`, repetition `r`.
    pub excess: Vec<Vec<f64>>,
    pub medians: Vec<f64>,
    pub non_increasing: bool,
}

fn leaf_stats(tree: &Tree, ds: &EnvDataset) -> LeafEnvStats {
    let rows: Vec<usize> = (0..ds.n()).collect();
    LeafEnvStats::new(ds.k(), &tree.route_stats(ds, &rows))
}

/// Excess population max risk of post-hoc leaf values on the fixed
/// partition of `tree`, fitted on samples of total size `n` drawn from
/// `dgp`, for each `n` in `n_grid`. The population is approximated by
/// `population_per_env` fresh observations per environment, on which the
/// reference values are solved as well.
#[allow(clippy::too_many_arguments)]
pub fn consistency_probe(
    tree: &Tree,
    dgp: &DgpConfig,
    kind: crate::risk::RiskKind,
    solver: &SolverConfig,
    n_grid: &[usize],
    reps: usize,
    population_per_env: usize,
    seed: u64,
) -> Result<ConsistencyReport> {
    use rayon::prelude::*;

    if reps == 0 || n_grid.is_empty() {
        return Err(Error::config("consistency probe needs repetitions and sample sizes"));
    }
    let hp = crate::cart::TreeHyperparams::default();
    let pop_cfg = DgpConfig { n_total: None, n_per_env: population_per_env, seed: derive_seed(seed, &[tags::PROBE]), ..dgp.clone() };
    let pop = simulate(&pop_cfg)?.test;
    let pop_stats = leaf_stats(tree, &pop);
    let pop_offsets = risk_offsets(&pop, kind, &hp)?;
    let init = tree.leaf_values();
    let (best, _) = solve_raw(&init, &pop_stats, &pop_offsets, None, solver)?;

    let mut excess = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let row: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let cfg = DgpConfig { n_total: Some(n), seed: derive_seed(seed, &[tags::REPETITION, n as u64, r as u64]), ..dgp.clone() };
                let sample = simulate(&cfg)?.train;
                let stats = leaf_stats(tree, &sample);
                let offsets = risk_offsets(&sample, kind, &hp)?;
                let (sol, _) = solve_raw(&init, &stats, &offsets, None, solver)?;
                Ok(pop_stats.max_risk(&sol.theta, &pop_offsets) - best.z)
            })
            .collect::<Result<_>>()?;
        excess.push(row);
    }
    let medians: Vec<f64> = excess.iter().map(|v| median(v)).collect();
    let non_increasing = medians.windows(2).all(|w| w[1] <= w[0]);
    Ok(ConsistencyReport { n_grid: n_grid.to_vec(), excess, medians, non_increasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cart::{fit_cart_tree, TreeHyperparams};
    use crate::data::simulate;
    use crate::minimax::SolverMethod;
    use crate::risk::RiskKind;

    fn two_env_test() -> EnvDataset {
        EnvDataset::new(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 3.0, 0.0, 2.0], vec![0, 0, 1, 1], 1, 2).unwrap()
    }

    #[test]
    fn vertices_and_midpoint() {
        let ds = two_env_test();
        let model = Tree::constant(0.0, 1);
        let rep = convexhull_risk_check(&model, &ds, &RiskSpec::mse(2), 200, 1).unwrap();
        assert_eq!(rep.vertex_risks, vec![5.0, 2.0]);
        assert_eq!(rep.violations, 0);
        assert!(rep.max_excess <= 0.0);
        // the midpoint mixture of two equal-size environments averages the risks
        let preds = [0.0; 4];
        let mid: f64 = preds.iter().zip(ds.y()).map(|(p, y)| 0.25 * (y - p) * (y - p)).sum();
        assert_eq!(mid, 3.5);
    }

    #[test]
    fn no_violations_on_the_piecewise_linear_setting() {
        let cfg = DgpConfig { n_total: Some(600), ..DgpConfig::preset(Setting::PiecewiseLinear) };
        let sim = simulate(&cfg).unwrap();
        let tree = fit_cart_tree(&sim.train, &TreeHyperparams::with_min_leaf(15)).unwrap();
        for kind in [RiskKind::Mse, RiskKind::Nrw] {
            let spec = RiskSpec::fit(&sim.test, kind, &TreeHyperparams::default()).unwrap();
            let rep = convexhull_risk_check(&tree, &sim.test, &spec, 1000, 3).unwrap();
            assert_eq!(rep.violations, 0);
        }
        let funcs = HullFunctions::for_config(&cfg, 4000, 5).unwrap();
        let rep = prop1_check(&tree, &funcs, 100, 6).unwrap();
        assert_eq!(rep.violations, 0, "{rep:?}");
    }

    #[test]
    fn shifted_setting_has_no_hull_functions() {
        assert!(HullFunctions::for_config(&DgpConfig::preset(Setting::GpBetaShift), 10, 0).is_err());
    }

    #[test]
    fn population_sized_samples_have_no_excess() {
        let cfg = DgpConfig { n_total: Some(600), ..DgpConfig::preset(Setting::PiecewiseLinear) };
        let tree = fit_cart_tree(&simulate(&cfg).unwrap().train, &TreeHyperparams::with_min_leaf(100)).unwrap();
        let solver = SolverConfig::for_method(SolverMethod::Kkt);
        let rep = consistency_probe(&tree, &cfg, RiskKind::Mse, &solver, &[300, 3000], 5, 3000, 7).unwrap();
        assert!(rep.excess.iter().flatten().all(|&v| v >= -1e-9));
        assert_eq!(rep.medians.len(), 2);
    }

    #[test]
    fn single_leaf_excess_in_closed_form() {
        // one leaf, MSE: R_e(t) = s_e + (m_e - t)^2 with population means
        // m_e and variances s_e, so the excess is explicit
        let cfg = DgpConfig { n_total: Some(300), ..DgpConfig::preset(Setting::PiecewiseLinear) };
        let tree = Tree::constant(0.0, 1);
        let solver = SolverConfig::for_method(SolverMethod::Kkt);
        let rep = consistency_probe(&tree, &cfg, RiskKind::Mse, &solver, &[300], 3, 20_000, 9).unwrap();
        let pop_cfg = DgpConfig { n_total: None, n_per_env: 20_000, seed: derive_seed(9, &[tags::PROBE]), ..cfg.clone() };
        let pop = simulate(&pop_cfg).unwrap().test;
        let moments: Vec<(f64, f64)> = (0..3)
            .map(|e| {
                let ys: Vec<f64> = pop.env_rows(e).iter().map(|&i| pop.y()[i]).collect();
                let m = ys.iter().sum::<f64>() / ys.len() as f64;
                (m, ys.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / ys.len() as f64)
            })
            .collect();
        let risk = |t: f64| moments.iter().map(|(m, s)| s + (m - t) * (m - t)).fold(f64::NEG_INFINITY, f64::max);
        // minimize the convex max of parabolas by golden-section search
        let (mut a, mut b) = (-20.0f64, 20.0f64);
        for _ in 0..200 {
            let c = b - (b - a) / 1.618_033_988_75;
            let d = a + (b - a) / 1.618_033_988_75;
            if risk(c) < risk(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let best = risk(0.5 * (a + b));
        for (r, &ex) in rep.excess[0].iter().enumerate() {
            let s = simulate(&DgpConfig { n_total: Some(300), seed: derive_seed(9, &[tags::REPETITION, 300, r as u64]), ..cfg.clone() })
                .unwrap()
                .train;
            let stats = leaf_stats(&tree, &s);
            let (sol, _) = solve_raw(&[0.0], &stats, &[0.0; 3], None, &solver).unwrap();
            assert!((ex - (risk(sol.theta[0]) - best)).abs() < 1e-6, "{ex} vs {}", risk(sol.theta[0]) - best);
        }
    }
}
