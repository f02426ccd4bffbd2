//! Recursive axis-aligned partitions of ℝ^p.
//!
//! A split on axis `i` at threshold `τ` sends `{x : x_i ≤ τ}` to the left
//! child and `{x : x_i > τ}` to the right child. Regions are products of
//! half-open intervals `(lo, hi]` with infinite bounds allowed, so the root
//! region is all of ℝ^p.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::builder::{has_admissible_split, BuildConfig};
use crate::error::{Error, Result};
use crate::nlar::Dataset;
use crate::util::{ceil_fraction, fmt_real};

/// Axis-aligned split. `axis` is 0-based here; the text format writes it
/// 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Split {
    pub axis: usize,
    pub threshold: f64,
}

/// Product of intervals `(lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub bounds: Vec<(f64, f64)>,
}

impl Region {
    pub fn full(p: usize) -> Self {
        Self {
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); p],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.bounds
            .iter()
            .zip(x)
            .all(|(&(lo, hi), &v)| lo < v && v <= hi)
    }

    fn children(&self, split: Split) -> (Region, Region) {
        let mut left = self.clone();
        let mut right = self.clone();
        left.bounds[split.axis].1 = split.threshold;
        right.bounds[split.axis].0 = split.threshold;
        (left, right)
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub region: Region,
    pub split: Option<Split>,
    /// `(left, right)` node ids.
    pub children: Option<(usize, usize)>,
    /// Number of training points in the region.
    pub count: usize,
    /// Sorted 0-based sample indices; kept for leaves only.
    pub samples: Vec<u32>,
    /// Mean of `Y` over `samples` for leaves, NaN for internal nodes.
    pub value: f64,
    /// Set when a leaf holds at least `m` points but no admissible split
    /// exists on any axis.
    pub infeasible: bool,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
    p: usize,
    config: BuildConfig,
    /// Index of this tree within its forest (0 for standalone trees).
    pub index: usize,
}

fn leaf_mean(samples: &[u32], data: &Dataset) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    samples.iter().map(|&i| data.y(i as usize)).sum::<f64>() / samples.len() as f64
}

impl Tree {
    /// A single leaf covering ℝ^p and holding every training point.
    pub fn root(data: &Dataset, config: BuildConfig) -> Self {
        let samples: Vec<u32> = (0..data.len() as u32).collect();
        let value = leaf_mean(&samples, data);
        let root = Node {
            id: 0,
            parent: None,
            depth: 0,
            region: Region::full(data.p()),
            split: None,
            children: None,
            count: samples.len(),
            samples,
            value,
            infeasible: false,
        };
        Self {
            nodes: vec![root],
            p: data.p(),
            config,
            index: 0,
        }
    }

    /// Splits leaf `id`, routing its samples by `x_axis ≤ threshold`.
    /// Returns the new `(left, right)` ids.
    pub fn split_leaf(
        &mut self,
        id: usize,
        split: Split,
        data: &Dataset,
    ) -> Result<(usize, usize)> {
        if split.axis >= self.p {
            return Err(Error::Shape {
                expected: self.p,
                got: split.axis + 1,
                context: "split axis",
            });
        }
        let left = self.nodes.len();
        let right = left + 1;
        let node = self
            .nodes
            .get_mut(id)
            .ok_or_else(|| Error::Invariant(format!("no node {id}")))?;
        if !node.is_leaf() {
            return Err(Error::Invariant(format!("node {id} is already split")));
        }
        let samples = std::mem::take(&mut node.samples);
        let (ls, rs): (Vec<u32>, Vec<u32>) = samples
            .iter()
            .partition(|&&i| data.coord(i as usize, split.axis) <= split.threshold);
        let (lreg, rreg) = node.region.children(split);
        let depth = node.depth + 1;
        node.split = Some(split);
        node.value = f64::NAN;
        node.infeasible = false;
        node.children = Some((left, right));
        for (nid, region, samples) in [(left, lreg, ls), (right, rreg, rs)] {
            let value = leaf_mean(&samples, data);
            self.nodes.push(Node {
                id: nid,
                parent: Some(id),
                depth,
                region,
                split: None,
                children: None,
                count: samples.len(),
                samples,
                value,
                infeasible: false,
            });
        }
        Ok((left, right))
    }

    pub(crate) fn mark_infeasible(&mut self, id: usize) {
        self.nodes[id].infeasible = true;
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn config(&self) -> &BuildConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Id of the leaf containing `x`; no dimension check.
    #[inline]
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            let node = &self.nodes[id];
            match (node.split, node.children) {
                (Some(s), Some((l, r))) => id = if x[s.axis] <= s.threshold { l } else { r },
                _ => return id,
            }
        }
    }

    /// The leaf whose region contains `x`.
    pub fn leaf_of(&self, x: &[f64]) -> Result<&Node> {
        self.check_dim(x)?;
        Ok(&self.nodes[self.leaf_index(x)])
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.p {
            return Err(Error::Shape {
                expected: self.p,
                got: x.len(),
                context: "query point",
            });
        }
        Ok(())
    }

    /// Cached leaf mean at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let leaf = self.leaf_of(x)?;
        if leaf.count == 0 {
            return Err(Error::Invariant(format!(
                "leaf {} holds no samples",
                leaf.id
            )));
        }
        Ok(leaf.value)
    }

    /// Number of training points reaching each node, recomputed by routing
    /// every row of `data` from the root.
    pub fn route_counts(&self, data: &Dataset) -> Result<Vec<usize>> {
        if data.p() != self.p {
            return Err(Error::Shape {
                expected: self.p,
                got: data.p(),
                context: "dataset dimension",
            });
        }
        let mut counts = vec![0usize; self.nodes.len()];
        for i in 0..data.len() {
            let x = data.x(i);
            let mut id = 0;
            loop {
                counts[id] += 1;
                let node = &self.nodes[id];
                match (node.split, node.children) {
                    (Some(s), Some((l, r))) => id = if x[s.axis] <= s.threshold { l } else { r },
                    _ => break,
                }
            }
        }
        Ok(counts)
    }

    /// Line-oriented text form: one `node_id,parent_id,axis,threshold,count`
    /// line per node in id order. Leaves write axis `-1` and threshold `nan`;
    /// axes are 1-based; thresholds carry 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# rfnlar tree v1 p={}", self.p);
        out.push_str("node_id,parent_id,axis,threshold,count\n");
        for n in &self.nodes {
            let parent = n.parent.map_or(-1, |p| p as i64);
            let (axis, thr) = match n.split {
                Some(s) => ((s.axis + 1) as i64, fmt_real(s.threshold)),
                None => (-1, "nan".to_string()),
            };
            let _ = writeln!(out, "{},{},{},{},{}", n.id, parent, axis, thr, n.count);
        }
        out
    }

    /// Rebuilds a tree from [`to_text`](Self::to_text) output, re-routing
    /// `data` to recover leaf samples. Recorded counts must match. Leaves
    /// with at least `config.m` points are flagged infeasible, which is the
    /// only way the builder leaves such nodes unsplit.
    pub fn from_text(
        text: &str,
        data: &Dataset,
        config: BuildConfig,
        source: &str,
    ) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: source.to_string(),
            line,
            msg,
        };
        let mut rows = Vec::new();
        let mut saw_header = false;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != "node_id,parent_id,axis,threshold,count" {
                    return Err(perr(idx + 1, format!("unexpected header '{line}'")));
                }
                saw_header = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(perr(idx + 1, format!("expected 5 fields, got {}", f.len())));
            }
            let id: usize = f[0]
                .parse()
                .map_err(|_| perr(idx + 1, "bad node_id".into()))?;
            let parent: i64 = f[1]
                .parse()
                .map_err(|_| perr(idx + 1, "bad parent_id".into()))?;
            let axis: i64 = f[2].parse().map_err(|_| perr(idx + 1, "bad axis".into()))?;
            let thr: f64 = f[3]
                .parse()
                .map_err(|_| perr(idx + 1, "bad threshold".into()))?;
            let count: usize = f[4]
                .parse()
                .map_err(|_| perr(idx + 1, "bad count".into()))?;
            rows.push((idx + 1, id, parent, axis, thr, count));
        }
        if rows.is_empty() {
            return Err(perr(1, "no nodes".into()));
        }

        let mut tree = Tree::root(data, config);
        let mut seen_children = vec![0usize; rows.len()];
        for &(line, id, parent, axis, thr, _) in &rows {
            if id >= rows.len() || rows[id].1 != id {
                return Err(perr(
                    line,
                    format!("node ids must be 0..{} in order", rows.len()),
                ));
            }
            if id == 0 {
                if parent != -1 {
                    return Err(perr(line, "root must have parent -1".into()));
                }
            } else {
                let par = usize::try_from(parent)
                    .ok()
                    .filter(|&p| p < id)
                    .ok_or_else(|| perr(line, format!("bad parent {parent} for node {id}")))?;
                seen_children[par] += 1;
                if seen_children[par] > 2 {
                    return Err(perr(line, format!("node {par} has more than two children")));
                }
            }
            if axis != -1 {
                let a = usize::try_from(axis)
                    .ok()
                    .filter(|&a| a >= 1 && a <= tree.p)
                    .ok_or_else(|| perr(line, format!("axis {axis} outside 1..={}", tree.p)))?;
                if thr.is_nan() {
                    return Err(perr(line, "split node with nan threshold".into()));
                }
                let split = Split {
                    axis: a - 1,
                    threshold: thr,
                };
                // children get ids in creation order, matching a breadth-first file
                let (l, r) = tree.split_leaf(id, split, data)?;
                let expect: Vec<usize> = rows
                    .iter()
                    .filter(|row| row.2 == id as i64)
                    .map(|row| row.1)
                    .collect();
                if expect != [l, r] {
                    return Err(perr(line, format!("children of node {id} must be {l},{r}")));
                }
            }
        }
        if tree.nodes.len() != rows.len() {
            return Err(perr(
                rows[0].0,
                "node count does not match the split structure".into(),
            ));
        }
        for &(line, id, _, _, _, count) in &rows {
            if tree.nodes[id].count != count {
                return Err(perr(
                    line,
                    format!(
                        "node {id}: recorded count {count} but data routes {} points",
                        tree.nodes[id].count
                    ),
                ));
            }
        }
        let m = tree.config.m;
        for n in tree.nodes.iter_mut() {
            n.infeasible = n.is_leaf() && n.count >= m;
        }
        Ok(tree)
    }
}

/// Result of a k-validity check.
#[derive(Debug, Clone, Serialize)]
pub struct KValidReport {
    pub ok: bool,
    pub k: usize,
    /// Leaves with fewer than `k` routed points.
    pub offending_leaves: Vec<usize>,
}

pub fn validate_k_valid(tree: &Tree, data: &Dataset, k: usize) -> Result<KValidReport> {
    let counts = tree.route_counts(data)?;
    let offending_leaves: Vec<usize> = tree
        .leaves()
        .filter(|n| counts[n.id] < k)
        .map(|n| n.id)
        .collect();
    Ok(KValidReport {
        ok: offending_leaves.is_empty(),
        k,
        offending_leaves,
    })
}

/// Result of an (α, k, m)-validity check. The requirement that every axis be
/// drawn with positive probability is a property of the configuration and
/// is checked there, not here.
#[derive(Debug, Clone, Serialize)]
pub struct AkmReport {
    pub ok: bool,
    /// Leaves with at least `m` points and no infeasibility flag.
    pub unflagged_oversize: Vec<usize>,
    /// Internal nodes with a child below `⌈α·parent⌉` points.
    pub unbalanced_splits: Vec<usize>,
    /// Leaves with fewer than `k` points.
    pub small_leaves: Vec<usize>,
    /// Flagged leaves that do admit a split under (α, k).
    pub spurious_flags: Vec<usize>,
    /// Nodes whose stored count disagrees with routing the data.
    pub count_mismatches: Vec<usize>,
    pub infeasible_leaves: usize,
}

pub fn validate_akm(
    tree: &Tree,
    data: &Dataset,
    alpha: f64,
    k: usize,
    m: usize,
) -> Result<AkmReport> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1/2), got {alpha}"
        )));
    }
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if m < 2 * k {
        return Err(Error::Config(format!(
            "m = {m} must be at least 2k = {}",
            2 * k
        )));
    }
    let counts = tree.route_counts(data)?;
    let mut report = AkmReport {
        ok: true,
        unflagged_oversize: vec![],
        unbalanced_splits: vec![],
        small_leaves: vec![],
        spurious_flags: vec![],
        count_mismatches: vec![],
        infeasible_leaves: 0,
    };
    for n in tree.nodes() {
        let c = counts[n.id];
        if c != n.count {
            report.count_mismatches.push(n.id);
        }
        match n.children {
            Some((l, r)) => {
                let need = ceil_fraction(alpha, c);
                if counts[l] < need || counts[r] < need {
                    report.unbalanced_splits.push(n.id);
                }
            }
            None => {
                if c < k {
                    report.small_leaves.push(n.id);
                }
                if n.infeasible {
                    report.infeasible_leaves += 1;
                    if has_admissible_split(&n.samples, data, alpha, k) {
                        report.spurious_flags.push(n.id);
                    }
                } else if c >= m {
                    report.unflagged_oversize.push(n.id);
                }
            }
        }
    }
    report.ok = report.unflagged_oversize.is_empty()
        && report.unbalanced_splits.is_empty()
        && report.small_leaves.is_empty()
        && report.spurious_flags.is_empty()
        && report.count_mismatches.is_empty();
    Ok(report)
}

/// Ids of leaves reached by any of `points`; used by tiling checks.
pub fn leaves_hit(tree: &Tree, points: &[Vec<f64>]) -> BTreeSet<usize> {
    points.iter().map(|x| tree.leaf_index(x)).collect()
}
