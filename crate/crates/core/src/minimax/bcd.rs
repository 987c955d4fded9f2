use super::kkt::kkt_raw;
use super::{check_inputs, finish_result, SolverConfig, SolverResult};
use crate::cart::EnvMoments;
use crate::error::Result;
use crate::risk::{LeafEnvStats, RiskSpec};

/// Cyclic block-coordinate descent over blocks of `cfg.block_size`
/// consecutive leaves. Each block problem, with the other leaves frozen, is
/// solved exactly.
pub fn bcd_posthoc(theta0: &[f64], stats: &LeafEnvStats, spec: &RiskSpec, cfg: &SolverConfig) -> Result<SolverResult> {
    check_inputs(theta0, stats, spec)?;
    cfg.validate()?;
    bcd_raw(theta0, stats, &spec.offsets, cfg)
}

fn leaf_moments(stats: &LeafEnvStats, t: usize) -> Vec<EnvMoments> {
    (0..stats.n_envs())
        .map(|e| EnvMoments { count: stats.count(t, e) as usize, mean: stats.mean(t, e), ssd: stats.ssd(t, e) })
        .collect()
}

pub(crate) fn bcd_raw(theta0: &[f64], stats: &LeafEnvStats, offsets: &[f64], cfg: &SolverConfig) -> Result<SolverResult> {
    let t = stats.n_leaves();
    let k = stats.n_envs();
    let b = cfg.block_size.min(t.max(1));
    let n_blocks = t.div_ceil(b).max(1);
    let totals: Vec<f64> = (0..k).map(|e| stats.env_total(e)).collect();
    let blocks: Vec<LeafEnvStats> = (0..n_blocks)
        .map(|i| {
            let leaves: Vec<Vec<EnvMoments>> = (i * b..((i + 1) * b).min(t)).map(|l| leaf_moments(stats, l)).collect();
            LeafEnvStats::with_totals(k, &leaves, totals.clone())
        })
        .collect();

    let mut theta = theta0.to_vec();
    let mut best_theta = theta0.to_vec();
    let mut best = f64::INFINITY;
    let mut p = vec![0.0; k];
    let mut no_improve = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut any_fallback = false;

    for j in 0..cfg.t_max {
        iterations += 1;
        let blk = j % n_blocks;
        let range = blk * b..((blk + 1) * b).min(t);
        let mut sub_offsets = offsets.to_vec();
        for l in (0..t).filter(|l| !range.contains(l)) {
            for (e, o) in sub_offsets.iter_mut().enumerate() {
                *o -= stats.contribution(l, e, theta[l]);
            }
        }
        let (r, _) = kkt_raw(&theta[range.clone()], &blocks[blk], &sub_offsets, None, cfg)?;
        any_fallback |= r.fallback;
        theta[range].copy_from_slice(&r.theta);
        p = r.p;
        let z = r.z;
        if (z - best).abs() < cfg.delta {
            no_improve += 1;
        } else {
            no_improve = 0;
        }
        if z < best {
            best = z;
            best_theta.copy_from_slice(&theta);
        }
        if no_improve >= cfg.patience {
            converged = true;
            break;
        }
    }
    finish_result(stats, offsets, best_theta, p, iterations, converged, any_fallback)
}
