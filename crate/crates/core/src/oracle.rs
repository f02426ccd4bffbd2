//! Monte-Carlo oracles for partition-optimal trees, leaf deviations, and the
//! CDF transform with its density-bound diagnostic.
//!
//! The partition-optimal value of a leaf `L` is `E[Y | X ∈ L]` under the
//! stationary law. It is estimated by averaging `Y` over the pairs of an
//! independent simulated path that fall in `L`. A report's supremum only
//! covers leaves of the trees actually grown, not every k-valid partition.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builder::BuildConfig;
use crate::error::{Error, Result};
use crate::forest::{fit_forest, Forest};
use crate::nlar::{make_dataset, simulate, simulate_on_stream, Dataset, SimulationSpec};
use crate::noise::NoiseModel;
use crate::partition::Tree;
use crate::rng::ORACLE_STREAM;
use crate::util::fmt_real;

pub const DEFAULT_N_MC: usize = 1_000_000;
pub const MIN_N_MC: usize = 10_000;

/// Caveat attached to every deviation report.
pub const SUP_NOTE: &str = "sup_dev is the maximum over leaves of the grown trees only; \
the supremum over all k-valid partitions is not computable";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub n_mc: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n_mc: DEFAULT_N_MC,
            burn_in: crate::nlar::DEFAULT_BURN_IN,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mc < MIN_N_MC {
            return Err(Error::Config(format!(
                "n_mc = {} is below the minimum {MIN_N_MC}",
                self.n_mc
            )));
        }
        Ok(())
    }
}

/// Simulates the evaluation path: same process as `sim`, its own seed and
/// stream, length `n_mc`.
pub fn monte_carlo_path(sim: &SimulationSpec, ocfg: &OracleConfig) -> Result<Dataset> {
    ocfg.validate()?;
    let spec = sim
        .clone()
        .with_length(ocfg.n_mc)
        .with_burn_in(ocfg.burn_in)
        .with_seed(ocfg.seed);
    let path = simulate_on_stream(&spec, ORACLE_STREAM)?;
    make_dataset(&path.values, spec.p(), &path.warm_start)
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    #[inline]
    fn push(&mut self, y: f64) {
        self.n += 1;
        let d = y - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (y - self.mean);
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then_some(self.mean)
    }

    fn se(&self) -> Option<f64> {
        (self.n >= 2).then(|| (self.m2 / (self.n - 1) as f64).sqrt() / (self.n as f64).sqrt())
    }
}

fn scan_tree(tree: &Tree, mc: &Dataset) -> Vec<Welford> {
    let mut acc = vec![Welford::default(); tree.nodes().len()];
    for i in 0..mc.len() {
        acc[tree.leaf_index(mc.x(i))].push(mc.y(i));
    }
    acc
}

/// Monte-Carlo estimate of a partition-optimal value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue {
    pub estimate: f64,
    pub se: f64,
    pub hits: usize,
}

/// `E[Y | X ∈ A(x)]` estimated over the pairs of `mc`.
pub fn oracle_tree_value_on(tree: &Tree, x: &[f64], mc: &Dataset) -> Result<OracleValue> {
    let leaf = tree.leaf_of(x)?;
    let mut w = Welford::default();
    for i in 0..mc.len() {
        if tree.leaf_index(mc.x(i)) == leaf.id {
            w.push(mc.y(i));
        }
    }
    match w.mean() {
        Some(estimate) => Ok(OracleValue {
            estimate,
            se: w.se().unwrap_or(f64::NAN),
            hits: w.n,
        }),
        None => Err(Error::Estimation(format!(
            "no Monte-Carlo points in leaf {} with region {:?}; increase n_mc",
            leaf.id, leaf.region.bounds
        ))),
    }
}

/// Partition-optimal tree value at `x`, on a freshly simulated path.
pub fn oracle_tree_value(
    tree: &Tree,
    x: &[f64],
    sim: &SimulationSpec,
    ocfg: &OracleConfig,
) -> Result<OracleValue> {
    let mc = monte_carlo_path(sim, ocfg)?;
    oracle_tree_value_on(tree, x, &mc)
}

/// Partition-optimal forest value: mean over trees of the per-tree oracle.
pub fn oracle_forest_value_on(forest: &Forest, x: &[f64], mc: &Dataset) -> Result<f64> {
    let vals = forest
        .trees()
        .par_iter()
        .map(|t| oracle_tree_value_on(t, x, mc).map(|v| v.estimate))
        .collect::<Result<Vec<_>>>()?;
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeafReport {
    pub tree_id: usize,
    pub leaf_id: usize,
    /// Training points in the leaf.
    pub count: usize,
    pub sample_mean: f64,
    pub oracle_mean: Option<f64>,
    pub oracle_hits: usize,
    pub oracle_se: Option<f64>,
    /// `sample_mean − oracle_mean`.
    pub deviation: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviationReport {
    pub leaves: Vec<LeafReport>,
    pub sup_deviation: f64,
    /// Leaves without any Monte-Carlo hit, excluded from the supremum.
    pub zero_hit_leaves: usize,
    pub n_mc: usize,
    pub note: &'static str,
}

impl DeviationReport {
    pub const CSV_HEADER: &'static str =
        "tree_id,leaf_id,count,sample_mean,oracle_mean,oracle_hits,oracle_se,deviation";

    pub fn to_csv_string(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), fmt_real);
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for l in &self.leaves {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                l.tree_id,
                l.leaf_id,
                l.count,
                fmt_real(l.sample_mean),
                opt(l.oracle_mean),
                l.oracle_hits,
                opt(l.oracle_se),
                opt(l.deviation)
            ));
        }
        out
    }

    pub fn abs_deviations(&self) -> Vec<f64> {
        self.leaves
            .iter()
            .filter_map(|l| l.deviation)
            .map(f64::abs)
            .collect()
    }

    /// Median oracle standard error over leaves that have one.
    pub fn median_oracle_se(&self) -> f64 {
        let ses: Vec<f64> = self.leaves.iter().filter_map(|l| l.oracle_se).collect();
        crate::util::median(&ses)
    }
}

/// Scores every leaf of `trees` against one evaluation sample `mc`.
pub fn leaf_reports_on(trees: &[Tree], mc: &Dataset) -> DeviationReport {
    let per_tree: Vec<Vec<LeafReport>> = trees
        .par_iter()
        .map(|t| {
            let acc = scan_tree(t, mc);
            t.leaves()
                .map(|leaf| {
                    let w = acc[leaf.id];
                    let oracle_mean = w.mean();
                    LeafReport {
                        tree_id: t.index,
                        leaf_id: leaf.id,
                        count: leaf.count,
                        sample_mean: leaf.value,
                        oracle_mean,
                        oracle_hits: w.n,
                        oracle_se: w.se(),
                        deviation: oracle_mean.map(|m| leaf.value - m),
                    }
                })
                .collect()
        })
        .collect();
    let leaves: Vec<LeafReport> = per_tree.into_iter().flatten().collect();
    let zero_hit_leaves = leaves.iter().filter(|l| l.oracle_hits == 0).count();
    let sup_deviation = leaves
        .iter()
        .filter_map(|l| l.deviation)
        .fold(0.0_f64, |a, d| a.max(d.abs()));
    DeviationReport {
        leaves,
        sup_deviation,
        zero_hit_leaves,
        n_mc: mc.len(),
        note: SUP_NOTE,
    }
}

/// Deviation of every leaf of `forest` from its Monte-Carlo oracle, using a
/// single shared evaluation path.
pub fn leaf_deviation_report(
    forest: &Forest,
    sim: &SimulationSpec,
    ocfg: &OracleConfig,
) -> Result<DeviationReport> {
    let mc = monte_carlo_path(sim, ocfg)?;
    Ok(leaf_reports_on(forest.trees(), &mc))
}

/// Forest settings shared by the studies; `k` comes from a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestSettings {
    #[serde(rename = "B")]
    pub b: usize,
    pub alpha: f64,
    pub rho: Option<Vec<f64>>,
    pub split_rule: crate::builder::SplitRule,
}

impl ForestSettings {
    pub fn build_config(&self, p: usize, k: usize) -> BuildConfig {
        let mut cfg = BuildConfig::new(p, k)
            .with_alpha(self.alpha)
            .with_rule(self.split_rule);
        if let Some(rho) = &self.rho {
            cfg = cfg.with_rho(rho.clone());
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationRow {
    #[serde(rename = "T")]
    pub t: usize,
    pub k: usize,
    pub sup_dev: f64,
    pub ratio: f64,
    pub seed: u64,
}

pub const CONCENTRATION_HEADER: &str = "T,k,sup_dev,ratio,seed";

impl ConcentrationRow {
    /// `sup_dev·√k / (ln T)²`.
    pub fn ratio_for(sup_dev: f64, k: usize, t: usize) -> f64 {
        sup_dev * (k as f64).sqrt() / (t as f64).ln().powi(2)
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.t,
            self.k,
            fmt_real(self.sup_dev),
            fmt_real(self.ratio),
            self.seed
        )
    }
}

/// For each `T`: simulate `T` points with `sim` (seed `sim.seed`), fit a
/// forest with `k = k_of(T)`, and score its leaves on an independent path.
pub fn concentration_study(
    ts: &[usize],
    k_of: impl Fn(usize) -> Result<usize>,
    sim: &SimulationSpec,
    settings: &ForestSettings,
    ocfg: &OracleConfig,
) -> Result<Vec<ConcentrationRow>> {
    if ts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "sample sizes must be increasing, got {ts:?}"
        )));
    }
    let mc = monte_carlo_path(sim, ocfg)?;
    ts.iter()
        .map(|&t| {
            let k = k_of(t)?;
            let spec = sim.clone().with_length(t);
            let path = simulate(&spec)?;
            let data = std::sync::Arc::new(make_dataset(&path.values, spec.p(), &path.warm_start)?);
            let forest = fit_forest(
                data,
                &settings.build_config(spec.p(), k),
                settings.b,
                sim.seed,
            )?;
            let sup_dev = leaf_reports_on(forest.trees(), &mc).sup_deviation;
            Ok(ConcentrationRow {
                t,
                k,
                sup_dev,
                ratio: ConcentrationRow::ratio_for(sup_dev, k, t),
                seed: sim.seed,
            })
        })
        .collect()
}

/// `ζ̄ = sup_x F(x+M)/F(x−M)`.
///
/// The left-tail limit of the ratio is taken from the noise law's analytic
/// tail bound and combined with a golden-section search over
/// `[−40σ − M, 40σ + M]`. Laws without a finite tail bound are rejected.
pub fn zeta_bar(noise: &NoiseModel, m: f64) -> Result<f64> {
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::Config(format!(
            "M must be a finite nonnegative real, got {m}"
        )));
    }
    if m == 0.0 {
        return Ok(1.0);
    }
    let limit = noise.tail_ratio_sup(2.0 * m).ok_or_else(|| {
        Error::Model(format!(
            "{:?} noise: F(x+M)/F(x−M) is unbounded as x → −∞",
            noise.kind()
        ))
    })?;
    let ratio = |x: f64| {
        let den = noise.cdf(x - m);
        if den > 0.0 {
            noise.cdf(x + m) / den
        } else {
            limit
        }
    };
    let span = 40.0 * noise.scale() + m;
    let numeric = golden_max(ratio, -span, span, 200);
    let sup = limit.max(numeric);
    if !sup.is_finite() {
        return Err(Error::Model(format!("non-finite ζ̄ for M = {m}")));
    }
    Ok(sup)
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut best = f(a).max(f(b)).max(fc).max(fd);
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
            best = best.max(fc);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
            best = best.max(fd);
        }
    }
    best
}

/// The two-component shifted mixture
/// `h(y) = h_ε(y+M)/(ζ̄+1) + ζ̄·h_ε(y−M)/(ζ̄+1)`, whose CDF `F_h` maps inputs
/// into [0, 1].
#[derive(Debug, Clone, Copy)]
pub struct MixtureDensity {
    noise: NoiseModel,
    m: f64,
    zeta_bar: f64,
    w_left: f64,
    w_right: f64,
}

/// Builds the mixture for noise law `noise` and bound `m`.
pub fn mixture_density(noise: &NoiseModel, m: f64) -> Result<MixtureDensity> {
    let zeta_bar = zeta_bar(noise, m)?;
    Ok(MixtureDensity {
        noise: *noise,
        m,
        zeta_bar,
        // (1 − ζ̄⁻¹)/(ζ̄ − ζ̄⁻¹) and (ζ̄ − 1)/(ζ̄ − ζ̄⁻¹), simplified
        w_left: 1.0 / (zeta_bar + 1.0),
        w_right: zeta_bar / (zeta_bar + 1.0),
    })
}

impl MixtureDensity {
    pub fn zeta_bar(&self) -> f64 {
        self.zeta_bar
    }

    pub fn weights(&self) -> (f64, f64) {
        (self.w_left, self.w_right)
    }

    pub fn density(&self, y: f64) -> f64 {
        self.w_left * self.noise.density(y + self.m) + self.w_right * self.noise.density(y - self.m)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.w_left * self.noise.cdf(x + self.m) + self.w_right * self.noise.cdf(x - self.m)
    }

    pub fn sf(&self, x: f64) -> f64 {
        self.w_left * self.noise.sf(x + self.m) + self.w_right * self.noise.sf(x - self.m)
    }

    /// Inverse of [`cdf`](Self::cdf) by bisection; the root lies within `M`
    /// of the noise quantile since `F_ε(x−M) ≤ F_h(x) ≤ F_ε(x+M)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        let q = self.noise.quantile(u)?;
        let (mut lo, mut hi) = (q - self.m, q + self.m);
        let upper = u > 0.5;
        let target = if upper { 1.0 - u } else { u };
        // g increasing in x; zero at the root
        let g = |x: f64| {
            if upper {
                target - self.sf(x)
            } else {
                self.cdf(x) - target
            }
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Applies `F_h` to every input coordinate; responses are kept.
pub fn transform_inputs(data: &Dataset, h: &MixtureDensity) -> Result<Dataset> {
    let rows: Vec<Vec<f64>> = (0..data.len())
        .map(|i| data.x(i).iter().map(|&v| h.cdf(v)).collect())
        .collect();
    Dataset::from_rows(data.p(), &rows, data.ys().to_vec())
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityBoundReport {
    pub zeta_bar: f64,
    /// `ζ̄^p`.
    pub zeta: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_samples: usize,
    pub n_bins: usize,
    pub bins_in_bounds: usize,
    pub fraction_in_bounds: f64,
    pub min_density: f64,
    pub max_density: f64,
}

/// Histograms `Z = ι_h(X)` on a regular grid over `[0,1]^p` and reports the
/// fraction of bins with density in `[ζ⁻¹/2, 2ζ]`, `ζ = ζ̄^p`, where `h` is
/// the mixture built from the noise law and the bound of `f`.
pub fn density_bound_check(
    sim: &SimulationSpec,
    n_samples: usize,
    n_bins_per_axis: usize,
) -> Result<DensityBoundReport> {
    let p = sim.p();
    if !(1..=2).contains(&p) {
        return Err(Error::Config(format!(
            "density check supports p ∈ {{1, 2}}, got {p}"
        )));
    }
    if n_bins_per_axis == 0 || n_samples == 0 {
        return Err(Error::Config("need at least one bin and one sample".into()));
    }
    let h = mixture_density(&sim.noise, sim.f.bound_m())?;
    let spec = sim.clone().with_length(n_samples.max(p + 1));
    let path = simulate(&spec)?;
    let data = make_dataset(&path.values, p, &path.warm_start)?;
    let n_bins = n_bins_per_axis.pow(p as u32);
    let mut counts = vec![0usize; n_bins];
    let bin = |z: f64| ((z * n_bins_per_axis as f64) as usize).min(n_bins_per_axis - 1);
    for i in 0..data.len() {
        let idx = data
            .x(i)
            .iter()
            .fold(0usize, |acc, &v| acc * n_bins_per_axis + bin(h.cdf(v)));
        counts[idx] += 1;
    }
    let zeta = h.zeta_bar().powi(p as i32);
    let (lower, upper) = (0.5 / zeta, 2.0 * zeta);
    let vol = (1.0 / n_bins_per_axis as f64).powi(p as i32);
    let dens: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / (data.len() as f64 * vol))
        .collect();
    let bins_in_bounds = dens.iter().filter(|&&d| d >= lower && d <= upper).count();
    Ok(DensityBoundReport {
        zeta_bar: h.zeta_bar(),
        zeta,
        lower,
        upper,
        n_samples: data.len(),
        n_bins,
        bins_in_bounds,
        fraction_in_bounds: bins_in_bounds as f64 / n_bins as f64,
        min_density: dens.iter().copied().fold(f64::INFINITY, f64::min),
        max_density: dens.iter().copied().fold(0.0, f64::max),
    })
}
