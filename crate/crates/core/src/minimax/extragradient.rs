use super::{check_inputs, finish_result, included_envs, project_simplex_into, SolverConfig, SolverResult};
use crate::error::{Error, Result};
use crate::risk::{LeafEnvStats, RiskSpec};

/// Projected extragradient on `min_theta max_p sum_e p_e R_e(theta)`.
///
/// Both weight updates start from the current `p`, and the returned leaf
/// values are the best iterate seen (the first one counts as an
/// improvement over `+inf`).
pub fn extragradient_posthoc(
    theta0: &[f64],
    stats: &LeafEnvStats,
    spec: &RiskSpec,
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    check_inputs(theta0, stats, spec)?;
    cfg.validate()?;
    extragradient_raw(theta0, stats, &spec.offsets, cfg)
}

struct Workspace<'a> {
    stats: &'a LeafEnvStats,
    offsets: &'a [f64],
    envs: Vec<usize>,
    risks: Vec<f64>,
}

impl Workspace<'_> {
    /// Risks of the included environments at `theta`.
    fn eval(&mut self, theta: &[f64]) -> Result<()> {
        let mut all = vec![0.0; self.stats.n_envs()];
        self.stats.env_risks_into(theta, self.offsets, &mut all);
        for (r, &e) in self.risks.iter_mut().zip(&self.envs) {
            *r = all[e];
            if !r.is_finite() {
                return Err(Error::solver(format!("risk of environment {e} is not finite")));
            }
        }
        Ok(())
    }

    /// `theta - gamma * sum_k p_k grad R_k(at)` written into `out`.
    fn descend(&self, theta: &[f64], at: &[f64], p: &[f64], gamma: f64, out: &mut [f64]) {
        for (t, o) in out.iter_mut().enumerate() {
            let mut g = 0.0;
            for (&pk, &e) in p.iter().zip(&self.envs) {
                let n = self.stats.count(t, e);
                if n > 0.0 {
                    g += pk * 2.0 * n * (at[t] - self.stats.mean(t, e)) / self.stats.env_total(e);
                }
            }
            *o = theta[t] - gamma * g;
        }
    }
}

pub(crate) fn extragradient_raw(
    theta0: &[f64],
    stats: &LeafEnvStats,
    offsets: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    let envs = included_envs(stats)?;
    let kk = envs.len();
    let gamma = cfg.gamma;
    let mut ws = Workspace { stats, offsets, envs, risks: vec![0.0; kk] };

    let t = theta0.len();
    let mut theta = theta0.to_vec();
    let mut p = vec![1.0 / kk as f64; kk];
    let mut theta_half = vec![0.0; t];
    let mut p_half = vec![0.0; kk];
    let mut theta_next = vec![0.0; t];
    let mut p_next = vec![0.0; kk];
    let mut shifted = vec![0.0; kk];

    let mut best_theta = theta0.to_vec();
    let mut best = f64::INFINITY;
    let mut no_improve = 0;
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..cfg.t_max {
        iterations += 1;
        ws.eval(&theta)?;
        ws.descend(&theta, &theta, &p, gamma, &mut theta_half);
        for i in 0..kk {
            shifted[i] = p[i] + gamma * ws.risks[i];
        }
        project_simplex_into(&shifted, &mut p_half);

        ws.eval(&theta_half)?;
        ws.descend(&theta, &theta_half, &p_half, gamma, &mut theta_next);
        for i in 0..kk {
            shifted[i] = p[i] + gamma * ws.risks[i];
        }
        project_simplex_into(&shifted, &mut p_next);

        ws.eval(&theta_next)?;
        let l = ws.risks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        std::mem::swap(&mut theta, &mut theta_next);
        std::mem::swap(&mut p, &mut p_next);
        if l < best - cfg.delta {
            best = l;
            best_theta.copy_from_slice(&theta);
            no_improve = 0;
        } else {
            no_improve += 1;
        }
        if no_improve >= cfg.patience {
            converged = true;
            break;
        }
    }

    let mut p_full = vec![0.0; stats.n_envs()];
    for (&pi, &e) in p.iter().zip(&ws.envs) {
        p_full[e] = pi;
    }
    finish_result(stats, offsets, best_theta, p_full, iterations, converged, false)
}
