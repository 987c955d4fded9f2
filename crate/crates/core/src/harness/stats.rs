use rand::Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::rng::{self, tags};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Half-width `t_{0.975, R-1} · sd / sqrt(R)` of the 95% confidence
/// interval for the mean; `None` below two values.
pub fn ci_half_width(values: &[f64]) -> Option<f64> {
    let r = values.len();
    if r < 2 {
        return None;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (r - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (r - 1) as f64).ok()?.inverse_cdf(0.975);
    Some(t * var.sqrt() / (r as f64).sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Two-sided paired sign-flip test of `mean(err_a - err_b) = 0`, with
/// p-value `(b + 1) / (n_perm + 1)` where `b` counts flips at least as
/// extreme as the observed mean.
pub fn permutation_test(err_a: &[f64], err_b: &[f64], n_perm: usize, seed: u64) -> Result<f64> {
    if err_a.len() != err_b.len() {
        return Err(Error::data(format!("paired samples differ in length ({} vs {})", err_a.len(), err_b.len())));
    }
    if err_a.len() < 2 {
        return Err(Error::data("a permutation test needs at least two pairs"));
    }
    if n_perm == 0 {
        return Err(Error::config("n_perm must be positive"));
    }
    let d: Vec<f64> = err_a.iter().zip(err_b).map(|(a, b)| a - b).collect();
    let observed = d.iter().sum::<f64>().abs();
    // tolerance for ties created by summation order
    let tol = 1e-12 * d.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut r = rng::stream(seed, &[tags::PERMUTATION]);
    let mut extreme = 0usize;
    for _ in 0..n_perm {
        let s: f64 = d.iter().map(|&v| if r.random::<bool>() { v } else { -v }).sum();
        if s.abs() >= observed - tol {
            extreme += 1;
        }
    }
    Ok((extreme + 1) as f64 / (n_perm + 1) as f64)
}
