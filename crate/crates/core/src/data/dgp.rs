//! Simulation settings with known regression functions.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::gp::sample_gp;
use super::EnvDataset;
use crate::error::{Error, Result};
use crate::rng::{self, tags, StreamRng};

/// `(left slope, right slope)` per environment of the piecewise-linear setting.
pub const PWL_SLOPES: [(f64, f64); 3] = [(-0.5, 4.0), (3.0, 0.5), (2.5, 1.0)];

/// Per-environment slopes of the two-sided uniform mixture setting.
pub const MIXTURE_SLOPES: [f64; 3] = [3.0, -3.0, 2.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    #[serde(rename = "pwl")]
    PiecewiseLinear,
    #[serde(rename = "gp-noshift")]
    GpNoShift,
    #[serde(rename = "gp-shift")]
    GpBetaShift,
    #[serde(rename = "gp-identical")]
    GpIdentical,
    #[serde(rename = "mixture")]
    MixtureUniform,
}

impl Setting {
    pub const ALL: [Setting; 5] = [
        Setting::PiecewiseLinear,
        Setting::GpNoShift,
        Setting::GpBetaShift,
        Setting::GpIdentical,
        Setting::MixtureUniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Setting::PiecewiseLinear => "pwl",
            Setting::GpNoShift => "gp-noshift",
            Setting::GpBetaShift => "gp-shift",
            Setting::GpIdentical => "gp-identical",
            Setting::MixtureUniform => "mixture",
        }
    }

    pub fn is_gp(self) -> bool {
        matches!(self, Setting::GpNoShift | Setting::GpBetaShift | Setting::GpIdentical)
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Setting::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<_> = Setting::ALL.iter().map(|v| v.name()).collect();
            Error::config(format!("unknown setting `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

/// Generator configuration. Deserialization fills unspecified fields with the
/// defaults of [`DgpConfig::preset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DgpSpec")]
pub struct DgpConfig {
    pub setting: Setting,
    pub n_per_env: usize,
    /// When set, overrides `n_per_env`: the total is split evenly, earlier
    /// environments taking the remainder.
    pub n_total: Option<usize>,
    pub k: usize,
    pub p: usize,
    pub noise_sd: f64,
    pub gp_lengthscale: f64,
    pub seed: u64,
    /// Seed for quantities that stay fixed across repetitions (the Beta
    /// parameters of the covariate-shift setting). Defaults to `seed`.
    pub shift_seed: Option<u64>,
    /// Number of shared probe covariates at which every environment's
    /// regression function is also drawn (GP settings only).
    pub probe_points: usize,
    /// Every environment reuses one draw of covariates (the first `n_e`
    /// of them), separately for training and test data. Piecewise-linear
    /// setting only; on by default there.
    pub shared_covariates: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DgpSpec {
    setting: Setting,
    n_per_env: Option<usize>,
    n_total: Option<usize>,
    k: Option<usize>,
    p: Option<usize>,
    noise_sd: Option<f64>,
    gp_lengthscale: Option<f64>,
    seed: Option<u64>,
    shift_seed: Option<u64>,
    probe_points: Option<usize>,
    shared_covariates: Option<bool>,
}

impl TryFrom<DgpSpec> for DgpConfig {
    type Error = Error;

    fn try_from(s: DgpSpec) -> Result<Self> {
        let base = DgpConfig::preset(s.setting);
        let cfg = DgpConfig {
            setting: s.setting,
            n_per_env: s.n_per_env.unwrap_or(base.n_per_env),
            n_total: s.n_total.or(base.n_total),
            k: s.k.unwrap_or(base.k),
            p: s.p.unwrap_or(base.p),
            noise_sd: s.noise_sd.unwrap_or(base.noise_sd),
            gp_lengthscale: s.gp_lengthscale.unwrap_or(base.gp_lengthscale),
            seed: s.seed.unwrap_or(base.seed),
            shift_seed: s.shift_seed,
            probe_points: s.probe_points.unwrap_or(0),
            shared_covariates: s.shared_covariates.unwrap_or(base.shared_covariates),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl DgpConfig {
    /// Defaults of each setting: three environments and `n = 1000` for the
    /// piecewise-linear setting; `p = 5`, `l = 1/2`, `sigma = 1/4` for the GP
    /// settings; unit noise for the mixture setting.
    pub fn preset(setting: Setting) -> Self {
        let mut cfg = DgpConfig {
            setting,
            n_per_env: 1000,
            n_total: None,
            k: 3,
            p: 1,
            noise_sd: 1.0,
            gp_lengthscale: 0.5,
            seed: 0,
            shift_seed: None,
            probe_points: 0,
            shared_covariates: false,
        };
        match setting {
            Setting::PiecewiseLinear => {
                cfg.n_total = Some(1000);
                cfg.noise_sd = 0.5;
                cfg.shared_covariates = true;
            }
            Setting::GpNoShift | Setting::GpBetaShift | Setting::GpIdentical => {
                cfg.k = 5;
                cfg.p = 5;
                cfg.noise_sd = 0.25;
                cfg.n_per_env = 500;
            }
            Setting::MixtureUniform => {}
        }
        cfg
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::config("noise_sd must be finite and non-negative"));
        }
        if !(self.gp_lengthscale > 0.0 && self.gp_lengthscale.is_finite()) {
            return Err(Error::config("gp_lengthscale must be positive"));
        }
        if self.k == 0 || self.p == 0 {
            return Err(Error::config("k and p must be at least 1"));
        }
        if self.shared_covariates && self.setting != Setting::PiecewiseLinear {
            return Err(Error::config(format!("shared_covariates is not available for setting {}", self.setting)));
        }
        let min_env = self.env_sizes().into_iter().min().unwrap_or(0);
        if min_env == 0 {
            return Err(Error::config("every environment needs at least one observation"));
        }
        match self.setting {
            Setting::PiecewiseLinear | Setting::MixtureUniform if self.k != 3 || self.p != 1 => {
                Err(Error::config(format!(
                    "setting {} requires k = 3 and p = 1 (got k = {}, p = {})",
                    self.setting, self.k, self.p
                )))
            }
            _ => Ok(()),
        }
    }

    /// Per-environment sample sizes (identical for training and test).
    pub fn env_sizes(&self) -> Vec<usize> {
        match self.n_total {
            Some(n) => (0..self.k).map(|e| n / self.k + usize::from(e < n % self.k)).collect(),
            None => vec![self.n_per_env; self.k],
        }
    }

    fn fixed_seed(&self) -> u64 {
        self.shift_seed.unwrap_or(self.seed)
    }
}

/// A known regression function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleFn {
    /// Slope for `x <= 0` and for `x > 0` in the first covariate.
    pub left: f64,
    pub right: f64,
    pub description: String,
}

impl OracleFn {
    pub fn piecewise_linear(left: f64, right: f64, description: impl Into<String>) -> Self {
        Self { left, right, description: description.into() }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = x[0];
        if v <= 0.0 {
            self.left * v
        } else {
            self.right * v
        }
    }
}

/// Values of every environment's regression function at a shared set of
/// covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub x: Vec<f64>,
    pub f: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub train: EnvDataset,
    pub test: EnvDataset,
    /// Minimizer of the population maximum MSE, when known.
    pub oracle: Option<OracleFn>,
    /// Minimizer of the population pooled MSE, when known.
    pub pooled_oracle: Option<OracleFn>,
    pub probe: Option<Probe>,
    /// Beta parameters of each environment in the covariate-shift setting.
    pub beta_params: Option<Vec<(f64, f64)>>,
}

fn normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

fn beta(rng: &mut StreamRng, a: f64, b: f64) -> f64 {
    // valid parameters are drawn from [1/2, 5/2]
    let ga = Gamma::new(a, 1.0).expect("positive shape").sample(rng);
    let gb = Gamma::new(b, 1.0).expect("positive shape").sample(rng);
    ga / (ga + gb)
}

fn beta_params(cfg: &DgpConfig) -> Vec<(f64, f64)> {
    (0..cfg.k)
        .map(|e| {
            let mut r = rng::stream(cfg.fixed_seed(), &[tags::BETA_PARAMS, e as u64]);
            (r.random_range(0.5..2.5), r.random_range(0.5..2.5))
        })
        .collect()
}

/// Draws one covariate vector of environment `e`.
fn draw_x(
    cfg: &DgpConfig,
    e: usize,
    betas: Option<&[(f64, f64)]>,
    rng: &mut StreamRng,
    out: &mut Vec<f64>,
) {
    match cfg.setting {
        Setting::PiecewiseLinear => out.push(rng.random_range(-4.0..4.0)),
        Setting::MixtureUniform => {
            let positive_share = if e == 1 { 0.1 } else { 0.9 };
            let v = if rng.random::<f64>() < positive_share {
                rng.random_range(0.0..4.0)
            } else {
                rng.random_range(-4.0..0.0)
            };
            out.push(v);
        }
        Setting::GpNoShift | Setting::GpIdentical => {
            out.extend((0..cfg.p).map(|_| rng.random_range(-1.0..1.0)))
        }
        Setting::GpBetaShift => {
            let (a, b) = betas.expect("beta parameters")[e];
            out.extend((0..cfg.p).map(|_| 2.0 * beta(rng, a, b) - 1.0))
        }
    }
}

/// `m` covariate vectors from the pooled training covariate distribution
/// (environments equally likely).
pub fn sample_covariates(cfg: &DgpConfig, m: usize, seed: u64) -> Vec<f64> {
    let betas = (cfg.setting == Setting::GpBetaShift).then(|| beta_params(cfg));
    let mut r = rng::stream(seed, &[tags::EVAL]);
    let mut out = Vec::with_capacity(m * cfg.p);
    for _ in 0..m {
        let e = r.random_range(0..cfg.k);
        draw_x(cfg, e, betas.as_deref(), &mut r, &mut out);
    }
    out
}

struct Covariates {
    train: Vec<Vec<f64>>,
    test: Vec<Vec<f64>>,
    train_rng: Vec<StreamRng>,
    test_rng: Vec<StreamRng>,
}

fn draw_covariates(cfg: &DgpConfig, betas: Option<&[(f64, f64)]>) -> Covariates {
    let sizes = cfg.env_sizes();
    let common = |tag: u64| -> Vec<f64> {
        let mut r = rng::stream(cfg.seed, &[tag, tags::SHARED_X]);
        let mut x = Vec::new();
        for _ in 0..sizes.iter().copied().max().unwrap_or(0) {
            draw_x(cfg, 0, betas, &mut r, &mut x);
        }
        x
    };
    let shared = cfg.shared_covariates.then(|| (common(tags::TRAIN), common(tags::TEST)));
    let mut c = Covariates { train: vec![], test: vec![], train_rng: vec![], test_rng: vec![] };
    for (e, &n_e) in sizes.iter().enumerate() {
        for (tag, xs, rngs, pool) in [
            (tags::TRAIN, &mut c.train, &mut c.train_rng, shared.as_ref().map(|s| &s.0)),
            (tags::TEST, &mut c.test, &mut c.test_rng, shared.as_ref().map(|s| &s.1)),
        ] {
            let mut r = rng::stream(cfg.seed, &[tag, e as u64]);
            let x = match pool {
                Some(pool) => pool[..n_e * cfg.p].to_vec(),
                None => {
                    let mut x = Vec::with_capacity(n_e * cfg.p);
                    for _ in 0..n_e {
                        draw_x(cfg, e, betas, &mut r, &mut x);
                    }
                    x
                }
            };
            xs.push(x);
            rngs.push(r);
        }
    }
    c
}

fn assemble(cfg: &DgpConfig, xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>) -> Result<EnvDataset> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut env = Vec::new();
    for (e, (xe, ye)) in xs.into_iter().zip(ys).enumerate() {
        env.extend(std::iter::repeat_n(e, ye.len()));
        x.extend(xe);
        y.extend(ye);
    }
    EnvDataset::new(x, y, env, cfg.p, cfg.k)
}

fn linear_responses(
    cfg: &DgpConfig,
    cov: Covariates,
    f: impl Fn(usize, f64) -> f64,
) -> Result<(EnvDataset, EnvDataset)> {
    let Covariates { train, test, mut train_rng, mut test_rng } = cov;
    let respond = |xs: &[Vec<f64>], rngs: &mut [StreamRng]| -> Vec<Vec<f64>> {
        xs.iter()
            .zip(rngs.iter_mut())
            .enumerate()
            .map(|(e, (x, r))| x.iter().map(|&v| f(e, v) + cfg.noise_sd * normal(r)).collect())
            .collect()
    };
    let ytr = respond(&train, &mut train_rng);
    let yte = respond(&test, &mut test_rng);
    Ok((assemble(cfg, train, ytr)?, assemble(cfg, test, yte)?))
}

/// Piecewise-linear setting with three environments on `U[-4, 4]`.
pub fn gen_piecewise_linear(cfg: &DgpConfig) -> Result<(EnvDataset, EnvDataset, OracleFn, OracleFn)> {
    if cfg.setting != Setting::PiecewiseLinear {
        return Err(Error::config(format!("expected setting pwl, got {}", cfg.setting)));
    }
    cfg.validate()?;
    let cov = draw_covariates(cfg, None);
    let (train, test) = linear_responses(cfg, cov, |e, v| {
        let (a, b) = PWL_SLOPES[e];
        if v <= 0.0 {
            a * v
        } else {
            b * v
        }
    })?;
    Ok((
        train,
        test,
        OracleFn::piecewise_linear(1.25, 2.25, "max-MSE oracle"),
        OracleFn::piecewise_linear(5.0 / 3.0, 11.0 / 6.0, "pooled-MSE oracle"),
    ))
}

/// Two-sided uniform mixtures with environment-specific linear slopes.
pub fn gen_mixture_uniform(cfg: &DgpConfig) -> Result<(EnvDataset, EnvDataset, OracleFn)> {
    if cfg.setting != Setting::MixtureUniform {
        return Err(Error::config(format!("expected setting mixture, got {}", cfg.setting)));
    }
    cfg.validate()?;
    let cov = draw_covariates(cfg, None);
    let (train, test) = linear_responses(cfg, cov, |e, v| MIXTURE_SLOPES[e] * v)?;
    Ok((train, test, OracleFn::piecewise_linear(-2.4, 2.4, "max-MSE oracle")))
}

/// Gaussian-process settings. Each environment's function is drawn jointly
/// at its training and test covariates (and the probe covariates, if any).
pub fn gen_gp_envs(cfg: &DgpConfig) -> Result<(EnvDataset, EnvDataset, Option<Probe>)> {
    if !cfg.setting.is_gp() {
        return Err(Error::config(format!("setting {} is not a GP setting", cfg.setting)));
    }
    cfg.validate()?;
    let betas = (cfg.setting == Setting::GpBetaShift).then(|| beta_params(cfg));
    let Covariates { train, test, mut train_rng, mut test_rng } =
        draw_covariates(cfg, betas.as_deref());
    let probe_x: Vec<f64> = if cfg.probe_points > 0 {
        let mut r = rng::stream(cfg.seed, &[tags::PROBE]);
        (0..cfg.probe_points * cfg.p).map(|_| r.random_range(-1.0..1.0)).collect()
    } else {
        Vec::new()
    };
    let p = cfg.p;
    let sizes = cfg.env_sizes();

    // f values per environment at [train | test | probe]
    let fvals: Vec<Vec<f64>> = if cfg.setting == Setting::GpIdentical {
        let mut pts = Vec::new();
        for e in 0..cfg.k {
            pts.extend_from_slice(&train[e]);
            pts.extend_from_slice(&test[e]);
        }
        pts.extend_from_slice(&probe_x);
        let mut r = rng::stream(cfg.seed, &[tags::GP_FUNCTION, 0]);
        let all = sample_gp(&pts, p, cfg.gp_lengthscale, &mut r)?;
        let mut out = Vec::with_capacity(cfg.k);
        let mut off = 0;
        let probe_vals = all[all.len() - cfg.probe_points..].to_vec();
        for &n_e in &sizes {
            let mut v = all[off..off + 2 * n_e].to_vec();
            v.extend_from_slice(&probe_vals);
            out.push(v);
            off += 2 * n_e;
        }
        out
    } else {
        (0..cfg.k)
            .map(|e| {
                let mut pts = train[e].clone();
                pts.extend_from_slice(&test[e]);
                pts.extend_from_slice(&probe_x);
                let mut r = rng::stream(cfg.seed, &[tags::GP_FUNCTION, e as u64]);
                sample_gp(&pts, p, cfg.gp_lengthscale, &mut r)
            })
            .collect::<Result<_>>()?
    };

    let mut ytr = Vec::with_capacity(cfg.k);
    let mut yte = Vec::with_capacity(cfg.k);
    let mut probe_f = Vec::new();
    for (e, &n_e) in sizes.iter().enumerate() {
        let f = &fvals[e];
        ytr.push((0..n_e).map(|i| f[i] + cfg.noise_sd * normal(&mut train_rng[e])).collect());
        yte.push((0..n_e).map(|i| f[n_e + i] + cfg.noise_sd * normal(&mut test_rng[e])).collect());
        probe_f.push(f[2 * n_e..].to_vec());
    }
    let probe = (cfg.probe_points > 0).then(|| Probe { x: probe_x, f: probe_f });
    Ok((assemble(cfg, train, ytr)?, assemble(cfg, test, yte)?, probe))
}

/// Dispatches to the generator of `cfg.setting`.
pub fn simulate(cfg: &DgpConfig) -> Result<Simulation> {
    match cfg.setting {
        Setting::PiecewiseLinear => {
            let (train, test, oracle, pooled) = gen_piecewise_linear(cfg)?;
            Ok(Simulation {
                train,
                test,
                oracle: Some(oracle),
                pooled_oracle: Some(pooled),
                probe: None,
                beta_params: None,
            })
        }
        Setting::MixtureUniform => {
            let (train, test, oracle) = gen_mixture_uniform(cfg)?;
            Ok(Simulation {
                train,
                test,
                oracle: Some(oracle),
                pooled_oracle: None,
                probe: None,
                beta_params: None,
            })
        }
        _ => {
            let (train, test, probe) = gen_gp_envs(cfg)?;
            Ok(Simulation {
                train,
                test,
                oracle: None,
                pooled_oracle: None,
                probe,
                beta_params: (cfg.setting == Setting::GpBetaShift).then(|| beta_params(cfg)),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_slopes() {
        let cfg = DgpConfig::preset(Setting::PiecewiseLinear);
        let (train, test, o, pooled) = gen_piecewise_linear(&cfg).unwrap();
        assert_eq!((o.left, o.right), (1.25, 2.25));
        assert_eq!((pooled.left, pooled.right), (5.0 / 3.0, 11.0 / 6.0));
        assert_eq!(train.n(), 1000);
        assert_eq!(train.env_counts(), test.env_counts());
        assert_eq!(train.env_counts(), vec![334, 333, 333]);
    }

    #[test]
    fn noiseless_line() {
        let mut cfg = DgpConfig::preset(Setting::PiecewiseLinear);
        cfg.noise_sd = 0.0;
        let (train, ..) = gen_piecewise_linear(&cfg).unwrap();
        for i in 0..train.n() {
            let (a, b) = PWL_SLOPES[train.env()[i]];
            let x = train.value(i, 0);
            let f = if x <= 0.0 { a * x } else { b * x };
            assert_eq!(train.y()[i], f);
        }
        // env 1 at x = 2 gives slope 4 times 2
        assert_eq!(PWL_SLOPES[0].1 * 2.0, 8.0);
    }

    #[test]
    fn pwl_environments_share_covariates() {
        let cfg = DgpConfig::preset(Setting::PiecewiseLinear).with_seed(9);
        assert!(cfg.shared_covariates);
        let (train, test, ..) = gen_piecewise_linear(&cfg).unwrap();
        for ds in [&train, &test] {
            let x = |e: usize| -> Vec<f64> { ds.env_rows(e).iter().map(|&i| ds.value(i, 0)).collect() };
            let (a, b, c) = (x(0), x(1), x(2));
            assert_eq!(&a[..b.len()], &b[..]);
            assert_eq!(b, c);
        }
        assert_ne!(train.value(0, 0), test.value(0, 0));

        let mut indep = cfg.clone();
        indep.shared_covariates = false;
        let (train, ..) = gen_piecewise_linear(&indep).unwrap();
        assert_ne!(train.value(train.env_rows(0)[0], 0), train.value(train.env_rows(1)[0], 0));

        let mut gp = DgpConfig::preset(Setting::GpBetaShift);
        gp.shared_covariates = true;
        assert!(gp.validate().is_err());
    }

    #[test]
    fn rejects_wrong_shape() {
        let mut cfg = DgpConfig::preset(Setting::PiecewiseLinear);
        cfg.k = 4;
        assert!(gen_piecewise_linear(&cfg).is_err());
        let mut cfg = DgpConfig::preset(Setting::MixtureUniform);
        cfg.p = 2;
        assert!(gen_mixture_uniform(&cfg).is_err());
    }

    #[test]
    fn reproducible() {
        let cfg = DgpConfig::preset(Setting::GpBetaShift).with_seed(4);
        let mut small = cfg.clone();
        small.n_per_env = 50;
        let a = gen_gp_envs(&small).unwrap();
        let b = gen_gp_envs(&small).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn beta_shift_support_and_fixed_parameters() {
        let mut cfg = DgpConfig::preset(Setting::GpBetaShift);
        cfg.n_per_env = 200;
        cfg.shift_seed = Some(99);
        let (train, test, _) = gen_gp_envs(&cfg).unwrap();
        assert!(train.x().iter().chain(test.x()).all(|v| (-1.0..=1.0).contains(v)));
        let s1 = simulate(&cfg.clone().with_seed(1)).unwrap().beta_params;
        let s2 = simulate(&cfg.clone().with_seed(2)).unwrap().beta_params;
        assert_eq!(s1, s2);
        assert!(s1.unwrap().iter().all(|&(a, b)| (0.5..2.5).contains(&a) && (0.5..2.5).contains(&b)));
    }

    #[test]
    fn identical_setting_shares_one_function() {
        let mut cfg = DgpConfig::preset(Setting::GpIdentical);
        cfg.n_per_env = 40;
        cfg.probe_points = 25;
        let (_, _, probe) = gen_gp_envs(&cfg).unwrap();
        let probe = probe.unwrap();
        for e in 1..cfg.k {
            assert_eq!(probe.f[0], probe.f[e]);
        }
        cfg.setting = Setting::GpNoShift;
        let probe = gen_gp_envs(&cfg).unwrap().2.unwrap();
        assert_ne!(probe.f[0], probe.f[1]);
    }

    #[test]
    fn gp_responses_have_unit_signal_variance() {
        let mut cfg = DgpConfig::preset(Setting::GpNoShift);
        cfg.n_per_env = 1000;
        cfg.k = 2;
        cfg.noise_sd = 0.0;
        let (train, ..) = gen_gp_envs(&cfg).unwrap();
        // Each environment's function has prior variance 1 at every point;
        // with two independent draws the pooled second moment is within
        // a generous MC band of 1.
        let m2 = train.y().iter().map(|v| v * v).sum::<f64>() / train.n() as f64;
        assert!(m2 > 0.2 && m2 < 3.0, "second moment {m2}");
    }

    #[test]
    fn mixture_sign_frequencies() {
        let mut cfg = DgpConfig::preset(Setting::MixtureUniform);
        cfg.n_per_env = 10_000;
        let (train, _, oracle) = gen_mixture_uniform(&cfg).unwrap();
        assert_eq!((oracle.right, oracle.left), (2.4, -2.4));
        let se = (0.9f64 * 0.1 / 10_000.0).sqrt();
        for e in 0..3 {
            let rows = train.env_rows(e);
            let pos = rows.iter().filter(|&&i| train.value(i, 0) > 0.0).count() as f64
                / rows.len() as f64;
            let expect = if e == 1 { 0.1 } else { 0.9 };
            assert!((pos - expect).abs() < 3.0 * se, "env {e}: {pos}");
        }
    }

    #[test]
    fn config_json_defaults_and_unknown_keys() {
        let cfg: DgpConfig = serde_json::from_str(r#"{"setting":"gp-shift","k":3}"#).unwrap();
        assert_eq!((cfg.k, cfg.p, cfg.noise_sd), (3, 5, 0.25));
        assert!(serde_json::from_str::<DgpConfig>(r#"{"setting":"pwl","bogus":1}"#).is_err());
        assert!(serde_json::from_str::<DgpConfig>(r#"{"setting":"unknown"}"#).is_err());
        let back: DgpConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
