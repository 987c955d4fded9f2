use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use maxrm_core::cart::{ForestDocument, TreeHyperparams};
use maxrm_core::data::{self, load_csv, write_csv, CsvSchema, DgpConfig, EnvDataset};
use maxrm_core::harness::{evaluate, fit_on, plot, Aggregate, ExperimentConfig, Fitted, MethodConfig, Metrics, ModelKind};
use maxrm_core::minimax::SolverConfig;
use maxrm_core::risk::RiskKind;
use maxrm_core::strategies::TreeDiagnostics;
use maxrm_core::{Error, Result};
use serde::Serialize;

use crate::{BenchmarkArgs, EvalArgs, FitArgs, SimulateArgs, TreeArgs};

fn hyperparams(t: &TreeArgs) -> TreeHyperparams {
    TreeHyperparams { max_depth: t.max_depth, min_leaf_size: t.min_leaf, m_try: t.mtry, seed: 0 }
}

fn summary(name: &str, ds: &EnvDataset) -> String {
    let counts: Vec<String> = ds.env_counts().iter().map(usize::to_string).collect();
    format!("{name}: {} rows, {} covariate(s), {} environments ({})", ds.n(), ds.p(), ds.k(), counts.join("/"))
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = DgpConfig::preset(a.setting).with_seed(a.seed);
    if let Some(n) = a.n_per_env {
        cfg.n_per_env = n;
        cfg.n_total = None;
    }
    if a.n_total.is_some() {
        cfg.n_total = a.n_total;
    }
    cfg.k = a.k.unwrap_or(cfg.k);
    cfg.p = a.p.unwrap_or(cfg.p);
    cfg.noise_sd = a.noise_sd.unwrap_or(cfg.noise_sd);
    cfg.validate()?;
    let sim = data::simulate(&cfg)?;
    fs::create_dir_all(&a.out)?;
    write_csv(&sim.train, a.out.join("train.csv"))?;
    write_csv(&sim.test, a.out.join("test.csv"))?;
    println!("{}", summary("train", &sim.train));
    println!("{}", summary("test", &sim.test));
    Ok(())
}

#[derive(Serialize)]
struct FitReport<'a> {
    method: &'a MethodConfig,
    seed: u64,
    n: usize,
    env_counts: Vec<usize>,
    /// In-sample risks of the saved forest, recomputed by `eval`.
    in_sample_max_risk: f64,
    in_sample_env_risk: Vec<f64>,
    /// Worst-case holdout risk after tree-weight optimization.
    holdout_max_risk: Option<f64>,
    magging_weights: Option<Vec<f64>>,
    trees: Vec<TreeDiagnostics>,
}

fn report_path(model: &Path) -> PathBuf {
    let stem = model.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    model.with_file_name(format!("{stem}.report.json"))
}

pub fn fit(a: FitArgs) -> Result<()> {
    let train = load_csv(&a.train, &CsvSchema::default())?;
    info!("{}", summary("train", &train));
    let hp = hyperparams(&a.tree);
    let method = MethodConfig {
        name: model_label(&a),
        model: a.model,
        strategy: matches!(a.model, ModelKind::Maxrm | ModelKind::MaxrmTree).then(|| a.strategy.clone()),
        risk: a.risk,
        solver: Some(SolverConfig::for_method(a.solver)),
        trees: a.trees,
        hyperparams: hp.clone(),
        env_min_leaf: a.env_min_leaf,
        revert_indeterminate: a.revert_indeterminate,
        holdout_fraction: None,
    };
    let fitted = fit_on(&method, &train, a.seed)?;
    let forest = fitted.to_forest().expect("data-driven models convert to forests");
    let metrics = evaluate(&forest, &train, &[a.risk], &hp)?;
    let risks = metrics.risks.iter().find(|r| r.kind == a.risk).expect("requested kind");
    let (holdout_max_risk, magging_weights, trees) = match &fitted {
        Fitted::MaxRm(m) => (m.holdout_max_risk, None, m.diagnostics.clone()),
        Fitted::Magging(m) => (None, Some(m.q.clone()), Vec::new()),
        _ => (None, None, Vec::new()),
    };
    let report = FitReport {
        method: &method,
        seed: a.seed,
        n: train.n(),
        env_counts: train.env_counts(),
        in_sample_max_risk: risks.max,
        in_sample_env_risk: risks.per_env.clone(),
        holdout_max_risk,
        magging_weights,
        trees,
    };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let doc = ForestDocument::new(method.name.clone(), forest);
    fs::write(&a.out, serde_json::to_string_pretty(&doc)?)?;
    fs::write(report_path(&a.out), serde_json::to_string_pretty(&report)?)?;
    println!("{}: in-sample max {} {:.6}, {} trees", method.name, a.risk, risks.max, doc.forest.n_trees());
    Ok(())
}

fn model_label(a: &FitArgs) -> String {
    match a.model {
        ModelKind::Rf => "rf".into(),
        ModelKind::Magging => "magging".into(),
        ModelKind::MaxrmTree => format!("maxrm-tree-{}-{}", a.strategy, a.risk),
        _ => format!("maxrm-{}-{}", a.strategy, a.risk),
    }
}

fn metrics_csv(m: &Metrics) -> String {
    let mut out = String::from("metric,value\n");
    for r in &m.risks {
        out.push_str(&format!("max_{},{}\n", r.kind, r.max));
        for (e, v) in r.per_env.iter().enumerate() {
            out.push_str(&format!("{}_env{e},{v}\n", r.kind));
        }
    }
    out.push_str(&format!("pooled_mse,{}\n", m.pooled_mse));
    out
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let doc = ForestDocument::from_json(&fs::read_to_string(&a.model)?)?;
    let test = load_csv(&a.test, &CsvSchema::default())?;
    if test.p() != doc.forest.p() {
        return Err(Error::Data(format!(
            "model expects {} covariate(s), {} has {}",
            doc.forest.p(),
            a.test.display(),
            test.p()
        )));
    }
    let mut kinds = vec![RiskKind::Mse];
    for k in a.risk {
        if !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    let metrics = evaluate(&doc.forest, &test, &kinds, &hyperparams(&a.tree))?;
    for w in &metrics.warnings {
        warn!("{w}");
    }
    let csv = metrics_csv(&metrics);
    match &a.out {
        Some(path) => {
            fs::write(path, &csv)?;
            for r in &metrics.risks {
                println!("{}: max {} {:.6}", doc.method, r.kind, r.max);
            }
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn plot_name(table: &str, metric: &str) -> String {
    format!("{table}_{metric}.svg")
}

fn write_plots(dir: &Path, name: &str, aggs: &[Aggregate]) -> Result<Vec<PathBuf>> {
    let mut metrics: Vec<&str> = Vec::new();
    for a in aggs {
        if !metrics.contains(&a.metric.as_str()) {
            metrics.push(&a.metric);
        }
    }
    let mut out = Vec::new();
    for metric in metrics {
        let swept = aggs.iter().any(|a| a.metric == metric && a.method.contains('@'));
        let title = format!("{name}: {metric}");
        let svg = if swept { plot::line_chart(aggs, metric, &title) } else { plot::bar_chart(aggs, metric, &title) };
        let path = dir.join(plot_name(name, metric));
        fs::write(&path, svg)?;
        out.push(path);
    }
    Ok(out)
}

pub fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config)?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.repetitions {
        cfg.repetitions = r;
    }
    cfg.validate()?;
    info!("running {} ({} repetitions, {} methods)", cfg.name, cfg.repetitions, cfg.methods.len());
    let table = maxrm_core::harness::run_experiment(&cfg)?;
    let mut files = table.write(&a.out)?;
    let aggs = table.aggregates();
    files.extend(write_plots(&a.out, &cfg.name, &aggs)?);
    for agg in &aggs {
        match agg.ci_half {
            Some(h) => println!("{:<28} {:<24} {:>10.4} ± {:.4}", agg.method, agg.metric, agg.mean, h),
            None => println!("{:<28} {:<24} {:>10.4}", agg.method, agg.metric, agg.mean),
        }
    }
    if !table.errors.is_empty() {
        warn!("{} cell(s) failed; see {}_runtime.csv", table.errors.len(), cfg.name);
        eprintln!("warning: {} cell(s) failed", table.errors.len());
    }
    for f in files {
        info!("wrote {}", f.display());
    }
    Ok(())
}
