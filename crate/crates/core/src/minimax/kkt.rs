//! Exact solution of the leaf-value minimax problem through its dual.
//!
//! With `w_te = n_te / n_e`, the dual function
//! `g(lambda) = min_theta sum_e lambda_e R_e(theta)` is concave on the
//! simplex, attained at the weighted leaf means, and `dg/dlambda_e` is
//! `R_e` at that minimizer. A point `lambda` is optimal iff the environments
//! in its support share the same risk `z` and every other environment has
//! risk at most `z`. We enumerate candidate supports (faces of the simplex)
//! by size, maximize `g` on the relative interior of each face with a
//! safeguarded Newton method and stop at the first face that certifies.

use nalgebra::{DMatrix, DVector};

use super::{extragradient_raw, finish_result, included_envs, SolverConfig, SolverResult};
use crate::cart::EnvMoments;
use crate::error::{Error, Result};
use crate::risk::{LeafEnvStats, TIE_TOLERANCE};

/// Faces examined before giving up and falling back to extragradient.
const FACE_CAP: usize = 4096;
const NEWTON_ITERS: usize = 50;
const LAMBDA_FLOOR: f64 = 1e-9;
const EDGE_EPS: f64 = 1e-13;

/// Support and dual weights of a previous solution, tried first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WarmStart {
    pub face: Vec<usize>,
    pub lambda: Vec<f64>,
}

struct Problem<'a> {
    stats: &'a LeafEnvStats,
    t: usize,
    k: usize,
    /// `w[t * k + e]`.
    w: Vec<f64>,
    /// `sum_t ssd_te / n_e - c_e`.
    base: Vec<f64>,
    init: &'a [f64],
}

impl<'a> Problem<'a> {
    fn new(stats: &'a LeafEnvStats, offsets: &[f64], init: &'a [f64]) -> Self {
        let (t, k) = (stats.n_leaves(), stats.n_envs());
        let mut w = vec![0.0; t * k];
        let mut base: Vec<f64> = offsets.iter().map(|c| -c).collect();
        for e in 0..k {
            let n = stats.env_total(e);
            if n <= 0.0 {
                continue;
            }
            for l in 0..t {
                w[l * k + e] = stats.count(l, e) / n;
                base[e] += stats.ssd(l, e) / n;
            }
        }
        Self { stats, t, k, w, base, init }
    }

    #[inline]
    fn mu(&self, l: usize, e: usize) -> f64 {
        self.stats.mean(l, e)
    }

    /// Weighted leaf means for `lambda` on `face`; `b_t = 0` leaves keep
    /// their initial value.
    fn theta(&self, face: &[usize], lambda: &[f64], theta: &mut [f64], b: &mut [f64]) {
        for l in 0..self.t {
            let (mut a, mut s) = (0.0, 0.0);
            for (&e, &lam) in face.iter().zip(lambda) {
                let wl = lam * self.w[l * self.k + e];
                a += wl * self.mu(l, e);
                s += wl;
            }
            b[l] = s;
            theta[l] = if s > 0.0 { a / s } else { self.init[l] };
        }
    }

    fn risk(&self, e: usize, theta: &[f64]) -> f64 {
        let mut r = self.base[e];
        for (l, &th) in theta.iter().enumerate() {
            let w = self.w[l * self.k + e];
            if w > 0.0 {
                let d = self.mu(l, e) - th;
                r += w * d * d;
            }
        }
        r
    }

    /// Hessian of `g` restricted to `face`, `H_ij = -2 sum_t d_ti d_tj / b_t`.
    fn hessian(&self, face: &[usize], theta: &[f64], b: &[f64]) -> DMatrix<f64> {
        let s = face.len();
        let mut h = DMatrix::zeros(s, s);
        let mut d = vec![0.0; s];
        for l in 0..self.t {
            if b[l] <= 0.0 {
                continue;
            }
            for (di, &e) in d.iter_mut().zip(face) {
                *di = self.w[l * self.k + e] * (self.mu(l, e) - theta[l]);
            }
            for i in 0..s {
                if d[i] == 0.0 {
                    continue;
                }
                for j in i..s {
                    let v = -2.0 * d[i] * d[j] / b[l];
                    h[(i, j)] += v;
                    if i != j {
                        h[(j, i)] += v;
                    }
                }
            }
        }
        h
    }
}

/// State of a face solve at a given `lambda`.
struct Point {
    lambda: Vec<f64>,
    theta: Vec<f64>,
    b: Vec<f64>,
    risks: Vec<f64>,
    g: f64,
}

impl Point {
    fn at(pb: &Problem, face: &[usize], lambda: Vec<f64>) -> Self {
        let mut theta = vec![0.0; pb.t];
        let mut b = vec![0.0; pb.t];
        pb.theta(face, &lambda, &mut theta, &mut b);
        let risks: Vec<f64> = face.iter().map(|&e| pb.risk(e, &theta)).collect();
        let g = risks.iter().zip(&lambda).map(|(r, l)| r * l).sum();
        Self { lambda, theta, b, risks, g }
    }
}

fn scale_of(z: f64) -> f64 {
    z.abs().max(1.0)
}

/// Maximizer of `g` on the relative interior of a two-environment face,
/// `None` if it lies on the boundary.
fn solve_edge(pb: &Problem, face: &[usize]) -> Option<Point> {
    let f = |a: f64| {
        let pt = Point::at(pb, face, vec![a, 1.0 - a]);
        let v = pt.risks[0] - pt.risks[1];
        (pt, v)
    };
    let (mut lo, mut hi) = (EDGE_EPS, 1.0 - EDGE_EPS);
    let (_, f_lo) = f(lo);
    let (_, f_hi) = f(hi);
    // f is non-increasing: the derivative of a concave function.
    if f_lo <= 0.0 || f_hi >= 0.0 {
        return None;
    }
    let mut a = 0.5;
    for _ in 0..200 {
        let (pt, v) = f(a);
        let tol = 1e-12 * scale_of(pt.g);
        if v.abs() <= tol || hi - lo < 1e-15 {
            return Some(pt);
        }
        if v > 0.0 {
            lo = a;
        } else {
            hi = a;
        }
        let h = pb.hessian(face, &pt.theta, &pt.b);
        let slope = h[(0, 0)] - 2.0 * h[(0, 1)] + h[(1, 1)];
        let newton = if slope < 0.0 { a - v / slope } else { f64::NAN };
        a = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    let (pt, _) = f(a);
    Some(pt)
}

/// Damped Newton ascent on a face with three or more environments, in the
/// reduced coordinates `lambda_0..lambda_{s-2}`.
fn solve_face(pb: &Problem, face: &[usize], start: Option<&[f64]>) -> Option<Point> {
    let s = face.len();
    let m = s - 1;
    let lambda0 = match start {
        Some(l) if l.len() == s && l.iter().all(|&v| v > LAMBDA_FLOOR) => {
            let sum: f64 = l.iter().sum();
            l.iter().map(|v| v / sum).collect()
        }
        _ => vec![1.0 / s as f64; s],
    };
    let mut pt = Point::at(pb, face, lambda0);
    for _ in 0..NEWTON_ITERS {
        let grad = DVector::from_fn(m, |i, _| pt.risks[i] - pt.risks[m]);
        let tol = 1e-12 * scale_of(pt.g);
        if grad.amax() <= tol {
            return Some(pt);
        }
        let h = pb.hessian(face, &pt.theta, &pt.b);
        let hr = DMatrix::from_fn(m, m, |i, j| h[(i, j)] - h[(i, m)] - h[(m, j)] + h[(m, m)]);
        let mut neg = -hr;
        let ridge = 1e-12 * neg.diagonal().amax().max(1e-300);
        for i in 0..m {
            neg[(i, i)] += ridge;
        }
        let dir = neg.cholesky().map(|c| c.solve(&grad)).unwrap_or_else(|| grad.clone());
        let mut dl = vec![0.0; s];
        for i in 0..m {
            dl[i] = dir[i];
            dl[m] -= dir[i];
        }
        // Stay strictly inside the face.
        let mut alpha: f64 = 1.0;
        for (l, d) in pt.lambda.iter().zip(&dl) {
            if *d < 0.0 {
                alpha = alpha.min(0.99 * l / -d);
            }
        }
        let slope = grad.dot(&dir);
        let mut next = None;
        for _ in 0..60 {
            let lam: Vec<f64> = pt.lambda.iter().zip(&dl).map(|(l, d)| l + alpha * d).collect();
            let cand = Point::at(pb, face, lam);
            if cand.g >= pt.g + 1e-4 * alpha * slope - 1e-15 * scale_of(pt.g) {
                next = Some(cand);
                break;
            }
            alpha *= 0.5;
        }
        pt = next?;
        if pt.lambda.iter().any(|&l| l < LAMBDA_FLOOR) {
            return None;
        }
    }
    let tol = 1e-9 * scale_of(pt.g);
    let spread = pt.risks.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - pt.risks.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    (spread <= tol).then_some(pt)
}

struct Exact {
    theta: Vec<f64>,
    face: Vec<usize>,
    /// Dual weights in the order of `face`.
    lambda: Vec<f64>,
}

/// Checks the optimality conditions for a face solution, repairing leaves
/// that the face leaves undetermined when an excluded environment exceeds
/// the face value.
fn certify(pb: &Problem, envs: &[usize], face: &[usize], pt: Point, depth: usize) -> Option<Exact> {
    let z = pt.risks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOLERANCE * scale_of(z);
    if pt.risks.iter().any(|&r| r < z - tol) {
        return None;
    }
    let excluded: Vec<usize> = envs.iter().copied().filter(|e| !face.contains(e)).collect();
    let violated = excluded.iter().any(|&e| pb.risk(e, &pt.theta) > z + tol);
    if !violated {
        return Some(Exact { theta: pt.theta, face: face.to_vec(), lambda: pt.lambda });
    }
    let free: Vec<usize> = (0..pb.t).filter(|&l| pt.b[l] <= 0.0).collect();
    if free.is_empty() || depth > 8 {
        return None;
    }
    // Re-solve the free leaves against the excluded environments, with the
    // determined leaves frozen.
    let k = pb.k;
    let leaves: Vec<Vec<EnvMoments>> = free
        .iter()
        .map(|&l| {
            (0..k)
                .map(|e| EnvMoments {
                    count: pb.stats.count(l, e) as usize,
                    mean: pb.stats.mean(l, e),
                    ssd: pb.stats.ssd(l, e),
                })
                .collect()
        })
        .collect();
    let totals: Vec<f64> = (0..k).map(|e| pb.stats.env_total(e)).collect();
    let sub_stats = LeafEnvStats::with_totals(k, &leaves, totals);
    let mut sub_offsets = vec![0.0; k];
    for &e in &excluded {
        let mut frozen = pb.base[e];
        for l in 0..pb.t {
            if pt.b[l] > 0.0 {
                let w = pb.w[l * k + e];
                let d = pb.mu(l, e) - pt.theta[l];
                frozen += w * d * d;
            }
        }
        // `Problem::new` adds the free leaves' ssd back.
        for &l in &free {
            frozen -= pb.stats.ssd(l, e) / pb.stats.env_total(e);
        }
        sub_offsets[e] = -frozen;
    }
    let sub_init: Vec<f64> = free.iter().map(|&l| pt.theta[l]).collect();
    let sub = Problem::new(&sub_stats, &sub_offsets, &sub_init);
    let sol = solve_exact(&sub, &excluded, None, excluded.len().min(free.len() + 1), depth + 1)?;
    let mut theta = pt.theta;
    for (i, &l) in free.iter().enumerate() {
        theta[l] = sol.theta[i];
    }
    let ok = envs.iter().all(|&e| pb.risk(e, &theta) <= z + tol);
    ok.then(|| Exact { theta, face: face.to_vec(), lambda: pt.lambda })
}

fn try_face(pb: &Problem, envs: &[usize], face: &[usize], start: Option<&[f64]>, depth: usize) -> Option<Exact> {
    let pt = match face.len() {
        1 => Some(Point::at(pb, face, vec![1.0])),
        2 => solve_edge(pb, face),
        _ => solve_face(pb, face, start),
    }?;
    certify(pb, envs, face, pt, depth)
}

/// Visits the size-`s` subsets of `envs` in lexicographic order until `f`
/// returns a value or `budget` runs out.
fn for_each_subset<T>(
    envs: &[usize],
    s: usize,
    budget: &mut usize,
    mut f: impl FnMut(&[usize]) -> Option<T>,
) -> Option<T> {
    let n = envs.len();
    if s == 0 || s > n {
        return None;
    }
    let mut idx: Vec<usize> = (0..s).collect();
    let mut face = vec![0; s];
    loop {
        if *budget == 0 {
            return None;
        }
        *budget -= 1;
        for (slot, &i) in face.iter_mut().zip(&idx) {
            *slot = envs[i];
        }
        if let Some(v) = f(&face) {
            return Some(v);
        }
        let mut i = s;
        while i > 0 && idx[i - 1] == i - 1 + n - s {
            i -= 1;
        }
        if i == 0 {
            return None;
        }
        idx[i - 1] += 1;
        for j in i..s {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn solve_exact(
    pb: &Problem,
    envs: &[usize],
    warm: Option<&WarmStart>,
    max_active: usize,
    depth: usize,
) -> Option<Exact> {
    if let Some(ws) = warm {
        let valid = !ws.face.is_empty()
            && ws.face.len() <= max_active
            && ws.face.iter().all(|e| envs.contains(e))
            && ws.lambda.len() == ws.face.len();
        if valid {
            if let Some(sol) = try_face(pb, envs, &ws.face, Some(&ws.lambda), depth) {
                return Some(sol);
            }
        }
    }
    let mut budget = FACE_CAP;
    for s in 1..=max_active.min(envs.len()) {
        let found = for_each_subset(envs, s, &mut budget, |face| {
            let skip = warm.is_some_and(|w| w.face == face);
            if skip {
                None
            } else {
                try_face(pb, envs, face, None, depth)
            }
        });
        if found.is_some() {
            return found;
        }
        if budget == 0 {
            return None;
        }
    }
    None
}

/// Exact minimizer of the maximum risk. Returns the solution and a warm
/// start for a nearby problem.
pub(crate) fn kkt_raw(
    theta0: &[f64],
    stats: &LeafEnvStats,
    offsets: &[f64],
    warm: Option<&WarmStart>,
    cfg: &SolverConfig,
) -> Result<(SolverResult, WarmStart)> {
    kkt_limited(theta0, stats, offsets, warm, cfg, usize::MAX)
}

fn kkt_limited(
    theta0: &[f64],
    stats: &LeafEnvStats,
    offsets: &[f64],
    warm: Option<&WarmStart>,
    cfg: &SolverConfig,
    max_active: usize,
) -> Result<(SolverResult, WarmStart)> {
    let envs = included_envs(stats)?;
    if theta0.iter().any(|v| !v.is_finite()) {
        return Err(Error::solver("initial leaf values must be finite"));
    }
    let pb = Problem::new(stats, offsets, theta0);
    let limit = max_active.min(pb.t + 1);
    match solve_exact(&pb, &envs, warm, limit, 0) {
        Some(sol) => {
            let mut p = vec![0.0; stats.n_envs()];
            for (&e, &l) in sol.face.iter().zip(&sol.lambda) {
                p[e] = l;
            }
            let ws = WarmStart { face: sol.face, lambda: sol.lambda };
            Ok((finish_result(stats, offsets, sol.theta, p, 1, true, false)?, ws))
        }
        None => {
            log::debug!("no certified active set on {} leaves; using extragradient", pb.t);
            let mut r = extragradient_raw(theta0, stats, offsets, cfg)?;
            r.fallback = true;
            Ok((r, WarmStart::default()))
        }
    }
}

/// Exact solution of the full leaf-value problem.
pub fn kkt_posthoc(
    theta0: &[f64],
    stats: &LeafEnvStats,
    spec: &crate::risk::RiskSpec,
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    super::check_inputs(theta0, stats, spec)?;
    kkt_raw(theta0, stats, &spec.offsets, None, cfg).map(|(r, _)| r)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalSolution {
    pub theta_l: f64,
    pub theta_r: f64,
    pub z: f64,
    /// Dual weights over environments.
    pub lambda: Vec<f64>,
    pub fallback: bool,
}

/// Values of two sibling leaves minimizing the maximum risk with every
/// other leaf frozen.
///
/// `frozen[e]` is the squared-error contribution of the other leaves to
/// environment `e`, already divided by `env_total[e]`; `offsets` are the
/// risk offsets `c_e`. Environments with `env_total[e] = 0` are ignored.
pub fn kkt_local_solve(
    left: &[EnvMoments],
    right: &[EnvMoments],
    env_total: &[f64],
    frozen: &[f64],
    offsets: &[f64],
    init: (f64, f64),
) -> Result<LocalSolution> {
    let k = env_total.len();
    if left.len() != k || right.len() != k || frozen.len() != k || offsets.len() != k {
        return Err(Error::solver("local solve inputs disagree on the environment count"));
    }
    let stats = LeafEnvStats::with_totals(k, &[left.to_vec(), right.to_vec()], env_total.to_vec());
    let adjusted: Vec<f64> = offsets.iter().zip(frozen).map(|(c, f)| c - f).collect();
    let cfg = SolverConfig::default();
    let (r, _) = kkt_limited(&[init.0, init.1], &stats, &adjusted, None, &cfg, 3)?;
    Ok(LocalSolution { theta_l: r.theta[0], theta_r: r.theta[1], z: r.z, lambda: r.p, fallback: r.fallback })
}
