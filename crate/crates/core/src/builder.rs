//! Growing single (α, k, m)-valid trees.
//!
//! A node holding `n ≥ m` points is split on an axis drawn from `rho`. Split
//! positions are restricted to ranks `r` (left child size) with
//! `r ≥ max(k, ⌈αn⌉)` and `n − r ≥ max(k, ⌈αn⌉)`, and thresholds sit at the
//! midpoint of the two order statistics they separate. Nodes for which no
//! axis admits such a split become leaves flagged infeasible.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nlar::Dataset;
use crate::partition::{Split, Tree};
use crate::rng::RandomStream;
use crate::util::ceil_fraction;

pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Uniform random threshold over the admissible coordinate range.
    #[default]
    ExtraTrees,
    /// Threshold minimizing the children's total within sum of squares.
    VarianceReduction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Minimum leaf size.
    pub k: usize,
    /// Nodes with at least `m` points are split whenever possible.
    pub m: usize,
    /// Minimum child fraction, in (0, 1/2).
    pub alpha: f64,
    /// Split-axis probabilities.
    pub rho: Vec<f64>,
    pub split_rule: SplitRule,
    pub seed: u64,
}

impl BuildConfig {
    /// Defaults: `m = 2k`, `alpha = 0.1`, uniform `rho`, extra-trees splits.
    pub fn new(p: usize, k: usize) -> Self {
        Self {
            k,
            m: 2 * k,
            alpha: DEFAULT_ALPHA,
            rho: vec![1.0 / p as f64; p],
            split_rule: SplitRule::ExtraTrees,
            seed: 0,
        }
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_rho(mut self, rho: Vec<f64>) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_rule(mut self, rule: SplitRule) -> Self {
        self.split_rule = rule;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if self.m < 2 * self.k {
            return Err(Error::Config(format!(
                "m = {} must be at least 2k = {}",
                self.m,
                2 * self.k
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1/2), got {}",
                self.alpha
            )));
        }
        if self.rho.len() != p {
            return Err(Error::Shape {
                expected: p,
                got: self.rho.len(),
                context: "rho",
            });
        }
        if self.rho.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::Config(format!(
                "every split-axis probability must be positive, got {:?}",
                self.rho
            )));
        }
        let total: f64 = self.rho.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split-axis probabilities must sum to 1, got {total}"
            )));
        }
        Ok(())
    }
}

/// Smallest admissible child size for a node of `n` points.
fn min_child(n: usize, alpha: f64, k: usize) -> usize {
    k.max(ceil_fraction(alpha, n))
}

/// Admissible rank band `[lo, hi]` over sorted coordinates, or `None` when
/// the band is empty or every coordinate in it is tied. Inside a band with
/// ties, rank `r` is usable only if `sorted[r−1] < sorted[r]`.
pub fn admissible_band(sorted: &[f64], alpha: f64, k: usize) -> Option<(usize, usize)> {
    let n = sorted.len();
    let lo = min_child(n, alpha, k);
    if lo == 0 || 2 * lo > n {
        return None;
    }
    let hi = n - lo;
    (sorted[lo - 1] < sorted[hi]).then_some((lo, hi))
}

fn sorted_by_axis(samples: &[u32], data: &Dataset, axis: usize) -> Vec<(f64, u32)> {
    let mut v: Vec<(f64, u32)> = samples
        .iter()
        .map(|&i| (data.coord(i as usize, axis), i))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    v
}

/// Admissible rank band of a node's points along `axis`.
pub fn admissible_interval(
    samples: &[u32],
    axis: usize,
    data: &Dataset,
    config: &BuildConfig,
) -> Option<(usize, usize)> {
    let coords: Vec<f64> = sorted_by_axis(samples, data, axis)
        .into_iter()
        .map(|(c, _)| c)
        .collect();
    admissible_band(&coords, config.alpha, config.k)
}

/// True if some axis admits a split of `samples` under `(alpha, k)`.
pub fn has_admissible_split(samples: &[u32], data: &Dataset, alpha: f64, k: usize) -> bool {
    (0..data.p()).any(|axis| {
        let coords: Vec<f64> = sorted_by_axis(samples, data, axis)
            .into_iter()
            .map(|(c, _)| c)
            .collect();
        admissible_band(&coords, alpha, k).is_some()
    })
}

/// Threshold separating `a < b`: their midpoint, pulled back to `a` if
/// rounding lands it on `b`.
fn separating_midpoint(a: f64, b: f64) -> f64 {
    let mid = a + (b - a) / 2.0;
    if mid < b {
        mid
    } else {
        a
    }
}

/// Within-child sum of squares of a split at rank `r`, by direct two-pass
/// computation.
pub fn split_sse(ys_sorted: &[f64], r: usize) -> f64 {
    let sse = |s: &[f64]| {
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        s.iter().map(|y| (y - mean).powi(2)).sum::<f64>()
    };
    sse(&ys_sorted[..r]) + sse(&ys_sorted[r..])
}

/// A chosen split and the size of its left child.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChosenSplit {
    pub split: Split,
    pub rank: usize,
}

fn extra_trees_rank(coords: &[f64], lo: usize, hi: usize, rng: &mut RandomStream) -> usize {
    let (c_lo, c_hi) = (coords[lo - 1], coords[hi]);
    let u = c_lo + (c_hi - c_lo) * rng.open01();
    // any u in (c_lo, c_hi] yields a rank inside the band
    let u = if u > c_lo { u.min(c_hi) } else { c_hi };
    coords.partition_point(|&c| c < u)
}

fn variance_reduction_rank(coords: &[f64], ys: &[f64], lo: usize, hi: usize) -> usize {
    let n = ys.len();
    let center = ys.iter().sum::<f64>() / n as f64;
    let mut sum = Vec::with_capacity(n + 1);
    let mut sq = Vec::with_capacity(n + 1);
    sum.push(0.0);
    sq.push(0.0);
    for &y in ys {
        let d = y - center;
        sum.push(sum.last().unwrap() + d);
        sq.push(sq.last().unwrap() + d * d);
    }
    let (tot, tot_sq) = (sum[n], sq[n]);
    let mut best = (f64::INFINITY, lo);
    for r in lo..=hi {
        if coords[r - 1] >= coords[r] {
            continue;
        }
        let (ls, lq) = (sum[r], sq[r]);
        let (rs, rq) = (tot - ls, tot_sq - lq);
        let sse = (lq - ls * ls / r as f64) + (rq - rs * rs / (n - r) as f64);
        if sse < best.0 {
            best = (sse, r);
        }
    }
    best.1
}

/// Picks an axis from `rho` (dropping axes without an admissible band and
/// renormalizing) and a split position on it. `None` means no axis admits a
/// split.
pub fn choose_split(
    samples: &[u32],
    data: &Dataset,
    config: &BuildConfig,
    rng: &mut RandomStream,
) -> Option<ChosenSplit> {
    let mut axes: Vec<usize> = (0..data.p()).collect();
    while !axes.is_empty() {
        let total: f64 = axes.iter().map(|&a| config.rho[a]).sum();
        let mut u = rng.unit() * total;
        let mut pick = axes.len() - 1;
        for (i, &a) in axes.iter().enumerate() {
            if u < config.rho[a] {
                pick = i;
                break;
            }
            u -= config.rho[a];
        }
        let axis = axes[pick];
        let sorted = sorted_by_axis(samples, data, axis);
        let coords: Vec<f64> = sorted.iter().map(|&(c, _)| c).collect();
        let Some((lo, hi)) = admissible_band(&coords, config.alpha, config.k) else {
            axes.remove(pick);
            continue;
        };
        let rank = match config.split_rule {
            SplitRule::ExtraTrees => extra_trees_rank(&coords, lo, hi, rng),
            SplitRule::VarianceReduction => {
                let ys: Vec<f64> = sorted.iter().map(|&(_, i)| data.y(i as usize)).collect();
                variance_reduction_rank(&coords, &ys, lo, hi)
            }
        };
        let threshold = separating_midpoint(coords[rank - 1], coords[rank]);
        return Some(ChosenSplit {
            split: Split { axis, threshold },
            rank,
        });
    }
    None
}

/// Breadth-first growth: every node with at least `m` points is offered to
/// [`choose_split`]; nodes that cannot be split become flagged leaves.
pub fn grow_tree(data: &Dataset, config: &BuildConfig, rng: &mut RandomStream) -> Result<Tree> {
    config.validate(data.p())?;
    if data.len() < config.k {
        return Err(Error::Config(format!(
            "T = {} is below k = {}: even the root violates the minimum leaf size",
            data.len(),
            config.k
        )));
    }
    let mut tree = Tree::root(data, config.clone());
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        let node = tree.node(id);
        if node.count < config.m {
            continue;
        }
        match choose_split(&node.samples, data, config, rng) {
            Some(chosen) => {
                let (l, r) = tree.split_leaf(id, chosen.split, data)?;
                debug_assert_eq!(tree.node(l).count, chosen.rank);
                queue.push_back(l);
                queue.push_back(r);
            }
            None => tree.mark_infeasible(id),
        }
    }
    Ok(tree)
}
