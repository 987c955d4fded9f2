use crate::cart::{Predictor, TreeHyperparams};
use crate::data::{EnvDataset, OracleFn};
use crate::error::Result;
use crate::risk::{risk_offsets, RiskKind};

/// Test risks of one kind.
#[derive(Clone, Debug, PartialEq)]
pub struct KindRisks {
    pub kind: RiskKind,
    /// `NaN` for environments without test rows.
    pub per_env: Vec<f64>,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub risks: Vec<KindRisks>,
    /// Per-environment MSE, `NaN` for empty environments.
    pub env_mse: Vec<f64>,
    pub pooled_mse: f64,
    pub mise: Option<f64>,
    pub warnings: Vec<String>,
}

impl Metrics {
    pub fn max(&self, kind: RiskKind) -> Option<f64> {
        self.risks.iter().find(|r| r.kind == kind).map(|r| r.max)
    }
}

/// Offsets of `kind` on the nonempty environments of `test`, `NaN` elsewhere.
fn test_offsets(test: &EnvDataset, kind: RiskKind, hp: &TreeHyperparams, present: &[usize]) -> Result<Vec<f64>> {
    let mut out = vec![f64::NAN; test.k()];
    if present.len() == test.k() {
        return risk_offsets(test, kind, hp);
    }
    // relabel the nonempty environments 0..m
    let mut rows = Vec::new();
    let mut env = Vec::new();
    for (j, &e) in present.iter().enumerate() {
        let r = test.env_rows(e);
        env.extend(std::iter::repeat_n(j, r.len()));
        rows.extend(r);
    }
    let sub = test.subset(&rows);
    let relabelled = EnvDataset::new(sub.x().to_vec(), sub.y().to_vec(), env, test.p(), present.len())?;
    for (c, &e) in risk_offsets(&relabelled, kind, hp)?.into_iter().zip(present) {
        out[e] = c;
    }
    Ok(out)
}

/// Per-environment test risks of `model` for each of `kinds`, with offsets
/// recomputed on `test`. Environments without test rows are left out of
/// every maximum and reported in `warnings`. `hp` configures the reference
/// trees of the regret.
pub fn evaluate<M: Predictor + ?Sized>(
    model: &M,
    test: &EnvDataset,
    kinds: &[RiskKind],
    hp: &TreeHyperparams,
) -> Result<Metrics> {
    let k = test.k();
    let counts = test.env_counts();
    let present: Vec<usize> = (0..k).filter(|&e| counts[e] > 0).collect();
    let mut warnings: Vec<String> =
        (0..k).filter(|&e| counts[e] == 0).map(|e| format!("environment {e} has no test rows")).collect();
    if present.is_empty() {
        warnings.push("test set is empty".into());
    }

    let preds = model.predict_dataset(test);
    let mut sse = vec![0.0; k];
    for ((&e, &y), p) in test.env().iter().zip(test.y()).zip(&preds) {
        sse[e] += (y - p) * (y - p);
    }
    let env_mse: Vec<f64> =
        (0..k).map(|e| if counts[e] > 0 { sse[e] / counts[e] as f64 } else { f64::NAN }).collect();
    let pooled_mse = sse.iter().sum::<f64>() / test.n().max(1) as f64;

    let mut risks = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let offsets = if present.is_empty() { vec![f64::NAN; k] } else { test_offsets(test, kind, hp, &present)? };
        let per_env: Vec<f64> = env_mse.iter().zip(&offsets).map(|(m, c)| m - c).collect();
        let max = present.iter().map(|&e| per_env[e]).fold(f64::NAN, f64::max);
        risks.push(KindRisks { kind, per_env, max });
    }
    Ok(Metrics { risks, env_mse, pooled_mse, mise: None, warnings })
}

/// Monte Carlo mean integrated squared error against `oracle` over the
/// row-major covariates `x_eval` (`p` columns). `NaN` for an empty sample.
pub fn mise<M: Predictor + ?Sized>(model: &M, oracle: &OracleFn, x_eval: &[f64], p: usize) -> f64 {
    let m = x_eval.len() / p;
    if m == 0 {
        return f64::NAN;
    }
    x_eval
        .chunks_exact(p)
        .map(|x| {
            let d = model.predict(x) - oracle.eval(x);
            d * d
        })
        .sum::<f64>()
        / m as f64
}
