//! Greedy split search over midpoint thresholds with pluggable scoring.
//!
//! The engine owns the partition (rows per region, tree nodes) and asks a
//! [`Policy`] to score candidate splits and to keep leaf values. Regions are
//! numbered in creation order; splitting region `r` keeps the left child as
//! `r` and appends the right child, so region numbers become leaf numbers.

use rand::seq::index;
use rand::Rng;

use super::{EnvMoments, Leaf, Node, Tree, TreeHyperparams};
use crate::data::EnvDataset;

/// Shifted running sums of responses.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Acc {
    pub n: f64,
    pub s: f64,
    pub ss: f64,
}

impl Acc {
    #[inline]
    fn add(&mut self, v: f64) {
        self.n += 1.0;
        self.s += v;
        self.ss += v * v;
    }

    #[inline]
    fn minus(&self, o: &Acc) -> Acc {
        Acc { n: self.n - o.n, s: self.s - o.s, ss: self.ss - o.ss }
    }

    /// Sum of squared deviations from the mean.
    #[inline]
    pub fn sse(&self) -> f64 {
        if self.n > 0.0 {
            (self.ss - self.s * self.s / self.n).max(0.0)
        } else {
            0.0
        }
    }

    #[inline]
    pub fn moments(&self, shift: f64) -> EnvMoments {
        if self.n > 0.0 {
            EnvMoments { count: self.n as usize, mean: shift + self.s / self.n, ssd: self.sse() }
        } else {
            EnvMoments::default()
        }
    }
}

/// One side of a candidate split.
pub struct Side<'a> {
    pub per_env: &'a [Acc],
    pub pooled: Acc,
    pub shift: f64,
}

impl Side<'_> {
    pub fn moments(&self, out: &mut Vec<EnvMoments>) {
        out.clear();
        out.extend(self.per_env.iter().map(|a| a.moments(self.shift)));
    }
}

pub(crate) trait Policy {
    type Payload;

    /// Called once with the statistics of the root region.
    fn init_root(&mut self, stats: &[EnvMoments]);

    /// Called before the candidates of `region` are scored.
    fn begin(&mut self, region: usize);

    /// Improvement achieved by splitting `region` into `left` and `right`,
    /// or `None` if the candidate is unusable.
    fn score(&mut self, region: usize, left: &Side, right: &Side) -> Option<(f64, Self::Payload)>;

    /// Smallest improvement that justifies a split of `region`.
    fn min_gain(&self, region: usize) -> f64;

    fn accept(
        &mut self,
        region: usize,
        new_region: usize,
        left: &[EnvMoments],
        right: &[EnvMoments],
        payload: Self::Payload,
    );

    /// Final leaf values, one per region.
    fn values(&self, stats: &[Vec<EnvMoments>]) -> Vec<f64>;
}

struct Region {
    rows: Vec<usize>,
    depth: usize,
    node: usize,
    features: Vec<usize>,
    terminal: bool,
}

struct Best<P> {
    gain: f64,
    feature: usize,
    threshold: f64,
    payload: P,
}

pub(crate) struct Engine<'a> {
    ds: &'a EnvDataset,
    hp: &'a TreeHyperparams,
    k: usize,
    regions: Vec<Region>,
    nodes: Vec<Node>,
    keyed: Vec<(f64, usize)>,
    left_acc: Vec<Acc>,
    right_acc: Vec<Acc>,
    total_acc: Vec<Acc>,
}

fn moments_of(ds: &EnvDataset, rows: &[usize], k: usize) -> Vec<EnvMoments> {
    let mut per_env: Vec<Vec<f64>> = vec![Vec::new(); k];
    for &i in rows {
        per_env[ds.env()[i]].push(ds.y()[i]);
    }
    per_env.iter().map(|v| EnvMoments::from_values(v)).collect()
}

/// Number of distinct rows; a bootstrap sample repeats some.
fn distinct(rows: &[usize]) -> usize {
    let mut r = rows.to_vec();
    r.sort_unstable();
    r.dedup();
    r.len()
}

fn sample_features<R: Rng + ?Sized>(p: usize, m: usize, rng: &mut R) -> Vec<usize> {
    if m >= p {
        return (0..p).collect();
    }
    let mut f = index::sample(rng, p, m).into_vec();
    f.sort_unstable();
    f
}

impl<'a> Engine<'a> {
    pub fn new(ds: &'a EnvDataset, rows: Vec<usize>, hp: &'a TreeHyperparams) -> Self {
        let k = ds.k();
        Engine {
            ds,
            hp,
            k,
            regions: vec![Region { rows, depth: 0, node: 0, features: Vec::new(), terminal: false }],
            nodes: vec![Node::Leaf { leaf: 0 }],
            keyed: Vec::new(),
            left_acc: vec![Acc::default(); k],
            right_acc: vec![Acc::default(); k],
            total_acc: vec![Acc::default(); k],
        }
    }

    fn splittable(&self, r: usize) -> bool {
        let reg = &self.regions[r];
        !reg.terminal
            && distinct(&reg.rows) >= 2 * self.hp.min_leaf_size
            && self.hp.max_depth.is_none_or(|d| reg.depth < d)
    }

    /// Best split of region `r` over its sampled features.
    fn search<P: Policy>(&mut self, r: usize, policy: &mut P) -> Option<Best<P::Payload>> {
        let ds = self.ds;
        let min_leaf = self.hp.min_leaf_size;
        let rows = &self.regions[r].rows;
        let m = rows.len();
        let shift = rows.iter().map(|&i| ds.y()[i]).sum::<f64>() / m as f64;
        self.total_acc.iter_mut().for_each(|a| *a = Acc::default());
        let mut total_pooled = Acc::default();
        for &i in rows {
            let v = ds.y()[i] - shift;
            self.total_acc[ds.env()[i]].add(v);
            total_pooled.add(v);
        }
        policy.begin(r);
        let mut best: Option<Best<P::Payload>> = None;
        for &f in &self.regions[r].features {
            self.keyed.clear();
            self.keyed.extend(rows.iter().map(|&i| (ds.value(i, f), i)));
            self.keyed
                .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            // bootstrap duplicates are adjacent after the sort and count once
            let d_total = 1 + self.keyed.windows(2).filter(|w| w[0].1 != w[1].1).count();
            self.left_acc.iter_mut().for_each(|a| *a = Acc::default());
            let mut left_pooled = Acc::default();
            let mut d_left = 0;
            for j in 0..m - 1 {
                let (v, i) = self.keyed[j];
                let y = ds.y()[i] - shift;
                self.left_acc[ds.env()[i]].add(y);
                left_pooled.add(y);
                if j == 0 || self.keyed[j - 1].1 != i {
                    d_left += 1;
                }
                if d_left < min_leaf {
                    continue;
                }
                if d_total - d_left < min_leaf {
                    break;
                }
                let next = self.keyed[j + 1].0;
                if next <= v {
                    continue;
                }
                let mut threshold = 0.5 * (v + next);
                if threshold >= next {
                    threshold = v;
                }
                for e in 0..self.k {
                    self.right_acc[e] = self.total_acc[e].minus(&self.left_acc[e]);
                }
                let left = Side { per_env: &self.left_acc, pooled: left_pooled, shift };
                let right = Side {
                    per_env: &self.right_acc,
                    pooled: total_pooled.minus(&left_pooled),
                    shift,
                };
                if let Some((gain, payload)) = policy.score(r, &left, &right) {
                    if best.as_ref().is_none_or(|b| gain > b.gain) {
                        best = Some(Best { gain, feature: f, threshold, payload });
                    }
                }
            }
        }
        best
    }

    fn apply<P: Policy>(&mut self, r: usize, best: Best<P::Payload>, policy: &mut P) -> usize {
        let ds = self.ds;
        let rows = std::mem::take(&mut self.regions[r].rows);
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| ds.value(i, best.feature) <= best.threshold);
        let new_r = self.regions.len();
        let (l_node, r_node) = (self.nodes.len(), self.nodes.len() + 1);
        let parent = self.regions[r].node;
        self.nodes[parent] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l_node,
            right: r_node,
        };
        self.nodes.push(Node::Leaf { leaf: r });
        self.nodes.push(Node::Leaf { leaf: new_r });
        let depth = self.regions[r].depth + 1;
        let lm = moments_of(ds, &left, self.k);
        let rm = moments_of(ds, &right, self.k);
        self.regions[r] = Region { rows: left, depth, node: l_node, features: Vec::new(), terminal: false };
        self.regions.push(Region { rows: right, depth, node: r_node, features: Vec::new(), terminal: false });
        policy.accept(r, new_r, &lm, &rm, best.payload);
        new_r
    }

    /// Depth-first growth: left child before right child.
    pub fn grow_dfs<P: Policy, R: Rng + ?Sized>(mut self, policy: &mut P, rng: &mut R) -> Tree {
        let root = moments_of(self.ds, &self.regions[0].rows, self.k);
        policy.init_root(&root);
        let p = self.ds.p();
        let m_try = self.hp.m_try_for(p);
        let mut stack = vec![0usize];
        while let Some(r) = stack.pop() {
            if !self.splittable(r) {
                continue;
            }
            self.regions[r].features = sample_features(p, m_try, rng);
            let Some(best) = self.search(r, policy) else { continue };
            if best.gain <= policy.min_gain(r) {
                continue;
            }
            let new_r = self.apply(r, best, policy);
            stack.push(new_r);
            stack.push(r);
        }
        self.finish(policy)
    }

    /// Best-improvement growth: every round scores all regions and executes
    /// the single best split; stops at the first round without improvement.
    pub fn grow_best_first<P: Policy, R: Rng + ?Sized>(mut self, policy: &mut P, rng: &mut R) -> Tree {
        let root = moments_of(self.ds, &self.regions[0].rows, self.k);
        policy.init_root(&root);
        let p = self.ds.p();
        let m_try = self.hp.m_try_for(p);
        self.regions[0].features = sample_features(p, m_try, rng);
        loop {
            let mut chosen: Option<(usize, Best<P::Payload>)> = None;
            for r in 0..self.regions.len() {
                if !self.splittable(r) {
                    continue;
                }
                match self.search(r, policy) {
                    None => self.regions[r].terminal = true,
                    Some(b) => {
                        if b.gain > policy.min_gain(r)
                            && chosen.as_ref().is_none_or(|(_, c)| b.gain > c.gain)
                        {
                            chosen = Some((r, b));
                        }
                    }
                }
            }
            let Some((r, best)) = chosen else { break };
            let new_r = self.apply(r, best, policy);
            self.regions[r].features = sample_features(p, m_try, rng);
            self.regions[new_r].features = sample_features(p, m_try, rng);
        }
        self.finish(policy)
    }

    fn finish<P: Policy>(self, policy: &P) -> Tree {
        let stats: Vec<Vec<EnvMoments>> =
            self.regions.iter().map(|r| moments_of(self.ds, &r.rows, self.k)).collect();
        let values = policy.values(&stats);
        let mut env_totals = vec![0usize; self.k];
        for s in &stats {
            for (e, m) in s.iter().enumerate() {
                env_totals[e] += m.count;
            }
        }
        let leaves = stats
            .into_iter()
            .zip(values)
            .map(|(stats, value)| Leaf { value, stats })
            .collect();
        Tree::from_parts(self.nodes, leaves, self.ds.p(), self.k, env_totals)
    }
}

/// Pooled-SSE scoring with pooled leaf means.
pub(crate) struct CartPolicy;

impl Policy for CartPolicy {
    type Payload = ();

    fn init_root(&mut self, _: &[EnvMoments]) {}

    fn begin(&mut self, _: usize) {}

    fn score(&mut self, _: usize, left: &Side, right: &Side) -> Option<(f64, ())> {
        let parent = Acc {
            n: left.pooled.n + right.pooled.n,
            s: left.pooled.s + right.pooled.s,
            ss: left.pooled.ss + right.pooled.ss,
        };
        Some((parent.sse() - left.pooled.sse() - right.pooled.sse(), ()))
    }

    fn min_gain(&self, _: usize) -> f64 {
        1e-12
    }

    fn accept(&mut self, _: usize, _: usize, _: &[EnvMoments], _: &[EnvMoments], _: ()) {}

    fn values(&self, stats: &[Vec<EnvMoments>]) -> Vec<f64> {
        stats
            .iter()
            .map(|s| {
                let n: usize = s.iter().map(|m| m.count).sum();
                if n == 0 {
                    0.0
                } else {
                    s.iter().map(|m| m.count as f64 * m.mean).sum::<f64>() / n as f64
                }
            })
            .collect()
    }
}
