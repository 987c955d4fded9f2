//! Split scoring by reduction of the maximum risk.

use crate::cart::grow::{Policy, Side};
use crate::cart::EnvMoments;
use crate::error::Error;
use crate::minimax::{extragradient_raw, kkt_local_solve, kkt_raw, solve_raw, SolverConfig, WarmStart};
use crate::risk::{LeafEnvStats, TIE_TOLERANCE};

/// Largest number of environments solved exactly in the local strategy.
pub(crate) const LOCAL_EXACT_MAX_ENVS: usize = 3;

/// State shared by the local and global policies: leaf values and
/// statistics of the current partition.
struct State<'a> {
    k: usize,
    totals: Vec<f64>,
    offsets: &'a [f64],
    solver: &'a SolverConfig,
    theta: Vec<f64>,
    stats: Vec<Vec<EnvMoments>>,
    z: f64,
    error: Option<Error>,
}

impl<'a> State<'a> {
    fn new(k: usize, offsets: &'a [f64], solver: &'a SolverConfig) -> Self {
        Self {
            k,
            totals: vec![0.0; k],
            offsets,
            solver,
            theta: Vec::new(),
            stats: Vec::new(),
            z: f64::INFINITY,
            error: None,
        }
    }

    /// The single-leaf tree: its value minimizes the maximum risk exactly.
    fn init_root(&mut self, stats: &[EnvMoments]) -> Option<WarmStart> {
        self.totals = stats.iter().map(|m| m.count as f64).collect();
        self.stats = vec![stats.to_vec()];
        let ls = LeafEnvStats::with_totals(self.k, &self.stats, self.totals.clone());
        let init = ls.pooled_means(&[0.0]);
        match kkt_raw(&init, &ls, self.offsets, None, self.solver) {
            Ok((r, ws)) => {
                self.theta = r.theta;
                self.z = r.z;
                Some(ws)
            }
            Err(e) => {
                self.theta = init;
                self.error.get_or_insert(e);
                None
            }
        }
    }

    fn min_gain(&self) -> f64 {
        TIE_TOLERANCE * self.z.abs().max(1.0)
    }

    fn record(&mut self, e: Error) {
        self.error.get_or_insert(e);
    }

    fn contribution(&self, t: usize, e: usize) -> f64 {
        let m = &self.stats[t][e];
        if m.count == 0 || self.totals[e] <= 0.0 {
            return 0.0;
        }
        let d = m.mean - self.theta[t];
        (m.ssd + m.count as f64 * d * d) / self.totals[e]
    }

    fn split(&mut self, region: usize, new_region: usize, left: &[EnvMoments], right: &[EnvMoments]) {
        debug_assert_eq!(new_region, self.stats.len());
        self.stats[region] = left.to_vec();
        self.stats.push(right.to_vec());
    }
}

/// Only the two children of the split region are re-optimized.
pub(crate) struct LocalPolicy<'a> {
    state: State<'a>,
    frozen: Vec<f64>,
    left: Vec<EnvMoments>,
    right: Vec<EnvMoments>,
}

impl<'a> LocalPolicy<'a> {
    pub fn new(k: usize, offsets: &'a [f64], solver: &'a SolverConfig) -> Self {
        Self { state: State::new(k, offsets, solver), frozen: vec![0.0; k], left: Vec::new(), right: Vec::new() }
    }

    pub fn take_error(&mut self) -> Option<Error> {
        self.state.error.take()
    }
}

impl Policy for LocalPolicy<'_> {
    type Payload = (f64, f64, f64);

    fn init_root(&mut self, stats: &[EnvMoments]) {
        self.state.init_root(stats);
    }

    fn begin(&mut self, region: usize) {
        let k = self.state.k;
        for e in 0..k {
            self.frozen[e] = (0..self.state.stats.len())
                .filter(|&t| t != region)
                .map(|t| self.state.contribution(t, e))
                .sum();
        }
    }

    fn score(&mut self, region: usize, left: &Side, right: &Side) -> Option<(f64, Self::Payload)> {
        left.moments(&mut self.left);
        right.moments(&mut self.right);
        let st = &self.state;
        let init = st.theta[region];
        let included = st.totals.iter().filter(|&&n| n > 0.0).count();
        let solved = if included <= LOCAL_EXACT_MAX_ENVS {
            kkt_local_solve(&self.left, &self.right, &st.totals, &self.frozen, st.offsets, (init, init))
                .map(|s| (s.theta_l, s.theta_r, s.z))
        } else {
            let ls = LeafEnvStats::with_totals(st.k, &[self.left.clone(), self.right.clone()], st.totals.clone());
            let adjusted: Vec<f64> = st.offsets.iter().zip(&self.frozen).map(|(c, f)| c - f).collect();
            extragradient_raw(&[init, init], &ls, &adjusted, st.solver).map(|r| (r.theta[0], r.theta[1], r.z))
        };
        match solved {
            Ok(sol) => Some((st.z - sol.2, sol)),
            Err(e) => {
                self.state.record(e);
                None
            }
        }
    }

    fn min_gain(&self, _: usize) -> f64 {
        self.state.min_gain()
    }

    fn accept(&mut self, region: usize, new_region: usize, left: &[EnvMoments], right: &[EnvMoments], payload: Self::Payload) {
        self.state.split(region, new_region, left, right);
        self.state.theta[region] = payload.0;
        self.state.theta.push(payload.1);
        self.state.z = payload.2;
    }

    fn values(&self, _: &[Vec<EnvMoments>]) -> Vec<f64> {
        self.state.theta.clone()
    }
}

pub(crate) struct GlobalPayload {
    theta: Vec<f64>,
    z: f64,
    warm: Option<WarmStart>,
}

/// Every candidate re-solves the leaf values of the whole partition.
pub(crate) struct GlobalPolicy<'a> {
    state: State<'a>,
    warm: Option<WarmStart>,
    leaves: Vec<Vec<EnvMoments>>,
    init: Vec<f64>,
}

impl<'a> GlobalPolicy<'a> {
    pub fn new(k: usize, offsets: &'a [f64], solver: &'a SolverConfig) -> Self {
        Self { state: State::new(k, offsets, solver), warm: None, leaves: Vec::new(), init: Vec::new() }
    }

    pub fn take_error(&mut self) -> Option<Error> {
        self.state.error.take()
    }
}

impl Policy for GlobalPolicy<'_> {
    type Payload = GlobalPayload;

    fn init_root(&mut self, stats: &[EnvMoments]) {
        self.warm = self.state.init_root(stats);
    }

    fn begin(&mut self, _: usize) {}

    fn score(&mut self, region: usize, left: &Side, right: &Side) -> Option<(f64, GlobalPayload)> {
        let st = &self.state;
        self.leaves.clone_from(&st.stats);
        left.moments(&mut self.leaves[region]);
        let mut r = Vec::new();
        right.moments(&mut r);
        self.leaves.push(r);
        self.init.clone_from(&st.theta);
        self.init.push(st.theta[region]);
        let ls = LeafEnvStats::with_totals(st.k, &self.leaves, st.totals.clone());
        match solve_raw(&self.init, &ls, st.offsets, self.warm.as_ref(), st.solver) {
            Ok((res, warm)) => Some((st.z - res.z, GlobalPayload { theta: res.theta, z: res.z, warm })),
            Err(e) => {
                self.state.record(e);
                None
            }
        }
    }

    fn min_gain(&self, _: usize) -> f64 {
        self.state.min_gain()
    }

    fn accept(&mut self, region: usize, new_region: usize, left: &[EnvMoments], right: &[EnvMoments], payload: GlobalPayload) {
        self.state.split(region, new_region, left, right);
        self.state.theta = payload.theta;
        self.state.z = payload.z;
        if payload.warm.is_some() {
            self.warm = payload.warm;
        }
    }

    fn values(&self, _: &[Vec<EnvMoments>]) -> Vec<f64> {
        self.state.theta.clone()
    }
}
