//! Gaussian-process function draws with a squared-exponential kernel.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Largest joint draw done exactly by Cholesky; larger draws use random
/// Fourier features.
pub const EXACT_LIMIT: usize = 2500;

/// Number of random Fourier features for approximate draws.
pub const RFF_FEATURES: usize = 2048;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Kernel matrix `exp(-|x_i - x_j|^2 / (2 l^2))` for row-major `points` of width `p`.
pub fn gp_kernel_matrix(points: &[f64], p: usize, lengthscale: f64) -> DMatrix<f64> {
    let m = points.len() / p;
    let scale = -0.5 / (lengthscale * lengthscale);
    let mut k = DMatrix::from_element(m, m, 1.0);
    for i in 0..m {
        let xi = &points[i * p..(i + 1) * p];
        for j in 0..i {
            let v = (scale * sq_dist(xi, &points[j * p..(j + 1) * p])).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Exact joint draw at `points` via Cholesky, escalating diagonal jitter
/// from 1e-10 by factors of ten up to 1e-6.
pub fn sample_gp_exact<R: Rng + ?Sized>(
    points: &[f64],
    p: usize,
    lengthscale: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let m = points.len() / p;
    let base = gp_kernel_matrix(points, p, lengthscale);
    let mut jitter = JITTER_START;
    let chol = loop {
        let mut k = base.clone();
        for i in 0..m {
            k[(i, i)] += jitter;
        }
        if let Some(c) = k.cholesky() {
            break c;
        }
        jitter *= 10.0;
        if jitter > JITTER_MAX * 1.000_001 {
            return Err(Error::Generation(format!(
                "kernel matrix of {m} points is not positive definite with jitter up to {JITTER_MAX:e}"
            )));
        }
    };
    let z = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
    Ok((chol.l() * z).iter().copied().collect())
}

/// A random-Fourier-feature approximation of a GP draw, callable anywhere.
#[derive(Clone, Debug)]
pub struct RffFunction {
    omega: Vec<f64>,
    phase: Vec<f64>,
    amp: Vec<f64>,
    p: usize,
}

impl RffFunction {
    pub fn sample<R: Rng + ?Sized>(p: usize, lengthscale: f64, features: usize, rng: &mut R) -> Self {
        let omega = (0..features * p)
            .map(|_| rng.sample::<f64, _>(StandardNormal) / lengthscale)
            .collect();
        let phase = (0..features)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        let amp = (0..features).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        Self { omega, phase, amp, p }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.amp.len();
        let mut s = 0.0;
        for j in 0..d {
            let w = &self.omega[j * self.p..(j + 1) * self.p];
            let arg: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.phase[j];
            s += self.amp[j] * arg.cos();
        }
        s * (2.0 / d as f64).sqrt()
    }
}

/// Draws `f ~ GP(0, k)` at `points`: exactly when there are at most
/// [`EXACT_LIMIT`] points, otherwise with [`RFF_FEATURES`] random features.
pub fn sample_gp<R: Rng + ?Sized>(
    points: &[f64],
    p: usize,
    lengthscale: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let m = points.len() / p;
    if m <= EXACT_LIMIT {
        sample_gp_exact(points, p, lengthscale, rng)
    } else {
        let f = RffFunction::sample(p, lengthscale, RFF_FEATURES, rng);
        Ok(points.chunks_exact(p).map(|x| f.eval(x)).collect())
    }
}
