use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::project_simplex_into;
use crate::data::EnvDataset;
use crate::error::{Error, Result};

/// Extragradient settings for tree weights. The step is `1 / (2 L)` with
/// `L` a Lipschitz bound of the saddle operator, so only the stopping rule
/// is configurable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    pub t_max: usize,
    pub delta: f64,
    pub patience: usize,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self { t_max: 5000, delta: 1e-9, patience: 500 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightResult {
    pub w: Vec<f64>,
    pub z: f64,
    /// Environment weights at the last iterate.
    pub p: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Quadratic form of one environment's risk in the tree weights:
/// `R_e(w) = w'Gw - 2 g'w + yy - c_e`.
struct EnvQuadratic {
    g_mat: DMatrix<f64>,
    g_vec: DVector<f64>,
    constant: f64,
}

impl EnvQuadratic {
    fn risk_and_grad(&self, w: &DVector<f64>) -> (f64, DVector<f64>) {
        let gw = &self.g_mat * w;
        let r = w.dot(&gw) - 2.0 * self.g_vec.dot(w) + self.constant;
        (r, 2.0 * (gw - &self.g_vec))
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lam = 0.0;
    for _ in 0..50 {
        let mv = m * &v;
        let norm = mv.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lam = norm;
        v = mv / norm;
    }
    lam
}

/// Minimizes `max_e R_e(sum_b w_b h_b)` over the simplex of tree weights.
///
/// `predictions` is row-major `n × B` (tree `b`'s prediction for row `i` at
/// `i * B + b`), evaluated on `holdout`.
pub fn extragradient_weights(
    predictions: &[f64],
    holdout: &EnvDataset,
    offsets: &[f64],
    cfg: &WeightConfig,
) -> Result<WeightResult> {
    let n = holdout.n();
    let k = holdout.k();
    if n == 0 || predictions.len() % n != 0 || predictions.is_empty() {
        return Err(Error::solver("tree predictions do not match the holdout size"));
    }
    if offsets.len() != k {
        return Err(Error::solver("offset count differs from the environment count"));
    }
    if cfg.t_max == 0 || cfg.patience == 0 || !(cfg.delta > 0.0) {
        return Err(Error::config("weight solver needs t_max, patience and delta positive"));
    }
    let b = predictions.len() / n;
    let counts = holdout.env_counts();
    if let Some(e) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EnvironmentTooSmall { env: e, count: 0, needed: 1 });
    }

    let mut quads = Vec::with_capacity(k);
    for (e, &ne) in counts.iter().enumerate() {
        let rows = holdout.env_rows(e);
        let h = DMatrix::from_fn(rows.len(), b, |i, j| predictions[rows[i] * b + j]);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| holdout.y()[i]));
        let ne = ne as f64;
        quads.push(EnvQuadratic {
            g_mat: h.tr_mul(&h) / ne,
            g_vec: h.tr_mul(&y) / ne,
            constant: y.norm_squared() / ne - offsets[e],
        });
    }

    let eval = |w: &DVector<f64>| -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
        let (r, g): (Vec<f64>, Vec<DVector<f64>>) = quads.iter().map(|q| q.risk_and_grad(w)).unzip();
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::solver("non-finite risk while optimizing tree weights"));
        }
        Ok((r, g))
    };
    let max_of = |r: &[f64]| r.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut w = DVector::from_element(b, 1.0 / b as f64);
    if b == 1 {
        let (r, _) = eval(&w)?;
        return Ok(WeightResult { w: vec![1.0], z: max_of(&r), p: vec![1.0 / k as f64; k], iterations: 0, converged: true });
    }

    let norms: Vec<f64> = quads.iter().map(|q| spectral_norm(&q.g_mat)).collect();
    let l_ww = 2.0 * norms.iter().copied().fold(0.0, f64::max);
    let l_wp = (k as f64).sqrt()
        * quads.iter().zip(&norms).map(|(q, s)| 2.0 * (s + q.g_vec.norm())).fold(0.0, f64::max);
    let lip = l_ww + l_wp;
    if lip == 0.0 {
        let (r, _) = eval(&w)?;
        return Ok(WeightResult { w: w.as_slice().to_vec(), z: max_of(&r), p: vec![1.0 / k as f64; k], iterations: 0, converged: true });
    }
    let gamma = 1.0 / (2.0 * lip);

    let mut p = vec![1.0 / k as f64; k];
    let mut p_half = vec![0.0; k];
    let mut shifted = vec![0.0; k];
    let mut w_buf = vec![0.0; b];
    let mut w_step = vec![0.0; b];

    let (r0, _) = eval(&w)?;
    let mut best = max_of(&r0);
    let mut best_w = w.clone();
    let mut no_improve = 0;
    let mut iterations = 0;
    let mut converged = false;

    let step_w = |w: &DVector<f64>, p: &[f64], grads: &[DVector<f64>], buf: &mut [f64], out: &mut [f64]| {
        for (j, v) in buf.iter_mut().enumerate() {
            let g: f64 = p.iter().zip(grads).map(|(pe, ge)| pe * ge[j]).sum();
            *v = w[j] - gamma * g;
        }
        project_simplex_into(buf, out);
    };

    for _ in 0..cfg.t_max {
        iterations += 1;
        let (r, g) = eval(&w)?;
        step_w(&w, &p, &g, &mut w_buf, &mut w_step);
        let w_half = DVector::from_column_slice(&w_step);
        for e in 0..k {
            shifted[e] = p[e] + gamma * r[e];
        }
        project_simplex_into(&shifted, &mut p_half);

        let (rh, gh) = eval(&w_half)?;
        step_w(&w, &p_half, &gh, &mut w_buf, &mut w_step);
        let w_next = DVector::from_column_slice(&w_step);
        for e in 0..k {
            shifted[e] = p[e] + gamma * rh[e];
        }
        project_simplex_into(&shifted, &mut p);
        w = w_next;

        let (rn, _) = eval(&w)?;
        let l = max_of(&rn);
        if l < best - cfg.delta {
            best = l;
            best_w.copy_from(&w);
            no_improve = 0;
        } else {
            if l < best {
                best = l;
                best_w.copy_from(&w);
            }
            no_improve += 1;
        }
        if no_improve >= cfg.patience {
            converged = true;
            break;
        }
    }
    Ok(WeightResult { w: best_w.as_slice().to_vec(), z: best, p, iterations, converged })
}
