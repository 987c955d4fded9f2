use super::*;
use crate::cart::{fit_cart_tree, fit_random_forest, EnvMoments};
use crate::data::{simulate, DgpConfig, Setting};
use crate::minimax::SolverMethod;

fn pwl(n: usize, seed: u64) -> EnvDataset {
    let cfg = DgpConfig { n_total: Some(n), seed, ..DgpConfig::preset(Setting::PiecewiseLinear) };
    simulate(&cfg).unwrap().train
}

fn kkt() -> SolverConfig {
    SolverConfig::for_method(SolverMethod::Kkt)
}

fn pooled_single_env(ds: &EnvDataset) -> EnvDataset {
    EnvDataset::new(ds.x().to_vec(), ds.y().to_vec(), vec![0; ds.n()], ds.p(), 1).unwrap()
}

#[test]
fn strategy_names() {
    for name in ["posthoc", "local-w", "global", "global-nondfs-w", "weights"] {
        assert_eq!(name.parse::<StrategySpec>().unwrap().to_string(), name);
    }
    let w: StrategySpec = "weights".parse().unwrap();
    assert!(w.reweight);
    assert!("posthoc-x".parse::<StrategySpec>().is_err());
}

#[test]
fn single_leaf_posthoc() {
    let ds = EnvDataset::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 10.0], vec![0, 0, 1], 1, 2).unwrap();
    let tree = fit_cart_tree(&ds, &TreeHyperparams::with_min_leaf(3)).unwrap();
    assert_eq!(tree.n_leaves(), 1);
    for cfg in [kkt(), SolverConfig::default()] {
        let (adj, r) = posthoc_adjust(&tree, &RiskSpec::mse(2), &cfg).unwrap();
        let tol = if cfg.method == SolverMethod::Kkt { 1e-9 } else { 0.05 };
        assert!((adj.leaf_values()[0] - 49.0 / 9.0).abs() < tol, "{:?}", adj.leaf_values());
        assert_eq!(r.theta, adj.leaf_values());
    }
}

#[test]
fn single_environment_posthoc_matches_forest() {
    let ds = pooled_single_env(&pwl(200, 1));
    let hp = TreeHyperparams::with_min_leaf(10);
    let rf = fit_random_forest(&ds, &hp, 6, 5).unwrap();
    for solver in [kkt(), SolverConfig::default()] {
        let m = fit_maxrm_forest(&ds, &"posthoc".parse().unwrap(), &RiskSpec::mse(1), &solver, &hp, 6, 5).unwrap();
        for i in 0..ds.n() {
            let (a, b) = (rf.predict(ds.row(i)), m.predict(ds.row(i)));
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }
}

#[test]
fn single_tree_reports_solver_value() {
    let ds = pwl(300, 2);
    let hp = TreeHyperparams::with_min_leaf(15);
    let spec = RiskSpec::mse(3);
    let m = fit_maxrm_forest(&ds, &"posthoc".parse().unwrap(), &spec, &kkt(), &hp, 1, 9).unwrap();
    let tree = &m.forest.trees[0];
    let stats = LeafEnvStats::from_tree(tree);
    let z = stats.max_risk(&tree.leaf_values(), &spec.offsets);
    assert!((m.diagnostics[0].max_risk - z).abs() < 1e-12);
    assert!(!m.diagnostics[0].active.is_empty());
}

#[test]
fn posthoc_never_increases_tree_risk() {
    let ds = pwl(400, 3);
    let hp = TreeHyperparams::with_min_leaf(15);
    let spec = RiskSpec::mse(3);
    let rf = fit_maxrm_forest(&ds, &"weights".parse().unwrap(), &spec, &kkt(), &hp, 4, 1).unwrap();
    for solver in [kkt(), SolverConfig::default(), SolverConfig::for_method(SolverMethod::Bcd)] {
        for tree in &rf.forest.trees {
            let before = LeafEnvStats::from_tree(tree).max_risk(&tree.leaf_values(), &spec.offsets);
            let (adj, _) = posthoc_adjust(tree, &spec, &solver).unwrap();
            let after = LeafEnvStats::from_tree(&adj).max_risk(&adj.leaf_values(), &spec.offsets);
            assert!(after <= before + 1e-9);
        }
    }
}

#[test]
fn single_environment_local_and_global_are_cart() {
    let ds = pooled_single_env(&pwl(150, 4));
    let hp = TreeHyperparams::with_min_leaf(10);
    let spec = RiskSpec::mse(1);
    let (cart, _) = grow_strategy_tree(&ds, StrategyKind::Weights, &spec, &kkt(), &hp, 3, 0).unwrap();
    let cart_values = cart.leaf_values();
    for kind in [StrategyKind::Local, StrategyKind::Global] {
        let (tree, _) = grow_strategy_tree(&ds, kind, &spec, &kkt(), &hp, 3, 0).unwrap();
        assert_eq!(tree.nodes(), cart.nodes(), "{kind:?}");
        for (a, b) in tree.leaf_values().iter().zip(&cart_values) {
            assert!((a - b).abs() < 1e-9);
        }
    }
    // One covariate, so the best-first order reaches the same partition.
    let (nondfs, d) = grow_strategy_tree(&ds, StrategyKind::GlobalNonDfs, &spec, &kkt(), &hp, 3, 0).unwrap();
    assert_eq!(nondfs.n_leaves(), cart.n_leaves());
    assert!((d.max_risk - diagnostics_of(&cart, &spec, false).max_risk).abs() < 1e-9);
}

#[test]
fn no_useful_split_gives_a_stump() {
    // Each x value holds one row of each environment, so both children of
    // any split have equal environment shares and the maximum cannot drop.
    let n = 40;
    let x: Vec<f64> = (0..n).map(|i| (i / 2) as f64).collect();
    let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let env: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let ds = EnvDataset::new(x, y, env, 1, 2).unwrap();
    let hp = TreeHyperparams::with_min_leaf(4);
    let spec = RiskSpec::mse(2);
    let solver = kkt();
    let mut rng = crate::rng::stream(0, &[]);
    let mut local = LocalPolicy::new(2, &spec.offsets, &solver);
    let tree = Engine::new(&ds, (0..n).collect(), &hp).grow_dfs(&mut local, &mut rng);
    assert_eq!(tree.n_leaves(), 1);
    assert!(tree.leaf_values()[0].abs() < 1e-12);
    let mut global = GlobalPolicy::new(2, &spec.offsets, &solver);
    let tree = Engine::new(&ds, (0..n).collect(), &hp).grow_dfs(&mut global, &mut rng);
    assert_eq!(tree.n_leaves(), 1);
}

#[test]
fn grown_trees_are_feasible_and_improve_on_the_root() {
    let ds = pwl(300, 5);
    let hp = TreeHyperparams::with_min_leaf(15);
    let spec = RiskSpec::mse(3);
    for kind in [StrategyKind::Local, StrategyKind::Global, StrategyKind::GlobalNonDfs] {
        let (tree, d) = grow_strategy_tree(&ds, kind, &spec, &kkt(), &hp, 8, 1).unwrap();
        let stats = LeafEnvStats::from_tree(&tree);
        let risks = stats.env_risks(&tree.leaf_values(), &spec.offsets);
        assert!(risks.iter().all(|&r| r <= d.max_risk + 1e-9));
        let single = LeafEnvStats::with_totals(3, &[tree.leaves().iter().fold(vec![EnvMoments::default(); 3], |acc, l| {
            acc.iter().zip(&l.stats).map(|(a, b)| merge(a, b)).collect()
        })], (0..3).map(|e| stats.env_total(e)).collect());
        let (root_sol, _) = solve_raw(&[0.0], &single, &spec.offsets, None, &kkt()).unwrap();
        assert!(d.max_risk <= root_sol.z + 1e-9, "{kind:?}: {} vs {}", d.max_risk, root_sol.z);
        assert!(tree.n_leaves() > 1);
    }
}

fn merge(a: &EnvMoments, b: &EnvMoments) -> EnvMoments {
    let n = a.count + b.count;
    if n == 0 {
        return EnvMoments::default();
    }
    let mean = (a.count as f64 * a.mean + b.count as f64 * b.mean) / n as f64;
    let ssd = a.ssd + b.ssd + a.count as f64 * (a.mean - mean).powi(2) + b.count as f64 * (b.mean - mean).powi(2);
    EnvMoments { count: n, mean, ssd }
}

#[test]
fn reweighting_does_not_hurt_the_holdout() {
    let ds = pwl(300, 6);
    let hp = TreeHyperparams::with_min_leaf(15);
    let spec = RiskSpec::mse(3);
    let m = fit_maxrm_forest(&ds, &"weights".parse().unwrap(), &spec, &kkt(), &hp, 8, 2).unwrap();
    let (_, hold) = stratified_split(&ds, DEFAULT_HOLDOUT_FRACTION, 2).unwrap();
    let hold = ds.subset(&hold);
    let uniform = Forest::uniform(m.forest.trees.clone());
    let risk = |f: &Forest| {
        let preds = f.predict_dataset(&hold);
        (0..3)
            .map(|e| {
                let rows = hold.env_rows(e);
                rows.iter().map(|&i| (hold.y()[i] - preds[i]).powi(2)).sum::<f64>() / rows.len() as f64
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    assert!(risk(&m.forest) <= risk(&uniform) + 1e-9);
    assert!((m.holdout_max_risk.unwrap() - risk(&m.forest)).abs() < 1e-9);
}

#[test]
fn environment_missing_after_split_is_an_error() {
    let ds = EnvDataset::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0], vec![0, 0, 1], 1, 2).unwrap();
    let r = fit_maxrm_forest(&ds, &"posthoc-w".parse().unwrap(), &RiskSpec::mse(2), &kkt(), &TreeHyperparams::with_min_leaf(1), 2, 0);
    assert!(matches!(r, Err(Error::EnvironmentTooSmall { .. })));
}

#[test]
fn reverting_touches_only_indeterminate_leaves() {
    let cfg = DgpConfig { n_per_env: 150, seed: 3, ..DgpConfig::preset(Setting::GpBetaShift) };
    let ds = simulate(&cfg).unwrap().train;
    let spec = RiskSpec::mse(ds.k());
    let hp = TreeHyperparams::with_min_leaf(5);
    let m = fit_maxrm_forest(&ds, &"posthoc".parse().unwrap(), &spec, &kkt(), &hp, 6, 4).unwrap();
    let mut reverted = m.clone();
    revert_indeterminate(&mut reverted).unwrap();
    let mut changed = 0;
    for ((a, b), d) in m.forest.trees.iter().zip(&reverted.forest.trees).zip(&m.diagnostics) {
        for (t, leaf) in a.leaves().iter().enumerate() {
            let determinate = d.active.iter().any(|&e| leaf.stats[e].count > 0);
            let (va, vb) = (a.leaf_values()[t], b.leaf_values()[t]);
            if determinate {
                assert_eq!(va, vb);
            } else if va != vb {
                changed += 1;
            }
        }
    }
    assert!(changed <= m.diagnostics.iter().map(|d| d.indeterminate).sum::<usize>());
}

#[test]
fn single_tree_uses_every_row() {
    let ds = pwl(200, 8);
    let hp = TreeHyperparams::with_min_leaf(10);
    let spec = RiskSpec::mse(3);
    let (tree, d) = fit_maxrm_tree(&ds, StrategyKind::Posthoc, &spec, &kkt(), &hp).unwrap();
    assert_eq!(tree.env_totals().iter().sum::<usize>(), ds.n());
    let stats = LeafEnvStats::from_tree(&tree);
    assert!((stats.max_risk(&tree.leaf_values(), &spec.offsets) - d.max_risk).abs() < 1e-12);
}
