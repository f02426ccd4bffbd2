//! Experiment harness: configuration, the k schedule, and the runs behind the
//! curve, sweep, MSE, concentration and density studies.
//!
//! Every run fans out over independent units, usually `(T, seed)` pairs,
//! collects their rows in a fixed order, and writes each output file
//! atomically next to a `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builder::{BuildConfig, SplitRule, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::forest::fit_forest;
use crate::nlar::{simulate_dataset, Dataset, RegressionFunction, SimulationSpec, DEFAULT_BURN_IN};
use crate::noise::NoiseModel;
use crate::oracle::{
    concentration_study, density_bound_check, ConcentrationRow, DensityBoundReport, ForestSettings,
    OracleConfig, CONCENTRATION_HEADER, DEFAULT_N_MC, SUP_NOTE,
};
use crate::util::{fmt_real, median};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    EstimationCurves,
    KSweep,
    MseCurve,
    Concentration,
    DensityCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::EstimationCurves => "estimation_curves",
            Self::KSweep => "k_sweep",
            Self::MseCurve => "mse_curve",
            Self::Concentration => "concentration",
            Self::DensityCheck => "density_check",
        }
    }

    fn default_ts(self) -> Vec<usize> {
        match self {
            Self::Simulate => vec![400],
            Self::EstimationCurves | Self::Concentration => vec![400, 1600, 6400],
            Self::KSweep => vec![1600],
            Self::MseCurve => vec![2500, 5000, 10_000, 20_000, 40_000],
            Self::DensityCheck => vec![1_000_000],
        }
    }
}

fn default_b() -> usize {
    500
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_seeds() -> Vec<u64> {
    (1..=5).collect()
}
fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}
fn default_n_mc() -> usize {
    DEFAULT_N_MC
}
fn default_n_bins() -> usize {
    50
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Configuration of one experiment run, read from a flat JSON document.
///
/// For `density_check`, `Ts` holds the number of simulated inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub f_name: String,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(rename = "Ts", default)]
    pub ts: Vec<usize>,
    #[serde(rename = "B", default = "default_b")]
    pub b: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub rho: Option<Vec<f64>>,
    #[serde(default)]
    pub k_override: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// k values of the sweep; defaults to 40, 160, 640.
    #[serde(default)]
    pub k_values: Option<Vec<usize>>,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    #[serde(default = "default_n_bins")]
    pub n_bins: usize,
    /// Worker threads; all available cores when absent.
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub split_rule: SplitRule,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, f_name: &str, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            experiment,
            f_name: f_name.to_string(),
            noise: NoiseModel::default(),
            ts: experiment.default_ts(),
            b: default_b(),
            alpha: default_alpha(),
            rho: None,
            k_override: None,
            seeds: default_seeds(),
            output_dir: output_dir.into(),
            burn_in: default_burn_in(),
            k_values: None,
            n_mc: default_n_mc(),
            n_bins: default_n_bins(),
            jobs: None,
            split_rule: SplitRule::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        if cfg.ts.is_empty() {
            cfg.ts = cfg.experiment.default_ts();
        }
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn function(&self) -> Result<RegressionFunction> {
        RegressionFunction::by_name(&self.f_name)
    }

    pub fn k_values(&self) -> Vec<usize> {
        self.k_values.clone().unwrap_or_else(|| vec![40, 160, 640])
    }

    /// `k` for sample size `t`: the override if set, else the schedule.
    pub fn k_for(&self, t: usize) -> Result<usize> {
        match self.k_override {
            Some(k) => Ok(k),
            None => k_schedule(t),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.function()?;
        if self.ts.is_empty() {
            return Err(Error::Config("Ts must be nonempty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        if self.ts.iter().any(|&t| t <= f.p()) {
            return Err(Error::Config(format!("every T must exceed p = {}", f.p())));
        }
        if self.b == 0 {
            return Err(Error::Config("B must be at least 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if self.k_override == Some(0) || self.k_values().contains(&0) {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let needs_p = |p: usize| -> Result<()> {
            if f.p() != p {
                return Err(Error::Config(format!(
                    "{} needs a function with p = {p}, {} has p = {}",
                    self.experiment.name(),
                    self.f_name,
                    f.p()
                )));
            }
            Ok(())
        };
        match self.experiment {
            ExperimentKind::EstimationCurves | ExperimentKind::KSweep => needs_p(1)?,
            ExperimentKind::MseCurve => needs_p(2)?,
            ExperimentKind::Concentration => {
                if self.ts.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config("Ts must be increasing".into()));
                }
                OracleConfig {
                    n_mc: self.n_mc,
                    burn_in: self.burn_in,
                    seed: 0,
                }
                .validate()?;
            }
            ExperimentKind::DensityCheck => {
                if !(1..=2).contains(&f.p()) {
                    return Err(Error::Config("density_check supports p ∈ {1, 2}".into()));
                }
                if self.n_bins == 0 {
                    return Err(Error::Config("n_bins must be at least 1".into()));
                }
            }
            ExperimentKind::Simulate => {}
        }
        if self.uses_forest() {
            for &t in &self.ts {
                self.k_for(t)?;
            }
            self.build_config(f.p(), 1).validate(f.p())?;
        }
        Ok(())
    }

    fn uses_forest(&self) -> bool {
        matches!(
            self.experiment,
            ExperimentKind::EstimationCurves
                | ExperimentKind::KSweep
                | ExperimentKind::MseCurve
                | ExperimentKind::Concentration
        )
    }

    fn rho_for(&self, p: usize) -> Option<Vec<f64>> {
        match (&self.rho, self.experiment) {
            (Some(r), _) => Some(r.clone()),
            (None, ExperimentKind::MseCurve) => Some(vec![1.0 / p as f64; p]),
            (None, _) => None,
        }
    }

    fn build_config(&self, p: usize, k: usize) -> BuildConfig {
        let mut cfg = BuildConfig::new(p, k)
            .with_alpha(self.alpha)
            .with_rule(self.split_rule);
        if let Some(rho) = self.rho_for(p) {
            cfg = cfg.with_rho(rho);
        }
        cfg
    }

    fn sim(&self, t: usize, seed: u64) -> Result<SimulationSpec> {
        Ok(SimulationSpec::new(self.function()?, self.noise, t, seed).with_burn_in(self.burn_in))
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            b = b.num_threads(j);
        }
        b.build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
    }
}

/// `⌊0.04·(ln T)⁴·ln ln T⌋`, at least 1.
pub fn k_schedule(t: usize) -> Result<usize> {
    if t < 16 {
        return Err(Error::Config(format!("k schedule needs T ≥ 16, got {t}")));
    }
    let l = (t as f64).ln();
    Ok(((0.04 * l.powi(4) * l.ln()).floor() as usize).max(1))
}

/// `{−2.00, −1.99, …, 2.00}`.
pub fn curve_grid() -> Vec<f64> {
    (0..=400).map(|i| (i as f64 - 200.0) / 100.0).collect()
}

/// `{−2, −1.75, …, 2}²`, first coordinate varying slowest.
pub fn mse_grid() -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..=16).map(|i| -2.0 + 0.25 * i as f64).collect();
    axis.iter()
        .flat_map(|&a| axis.iter().map(move |&b| vec![a, b]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub x: f64,
    pub f_true: f64,
    pub f_hat: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub seed: u64,
    /// Set by the k sweep only.
    pub k: Option<usize>,
}

pub const CURVE_HEADER: &str = "x,f_true,f_hat,T,seed";
pub const SWEEP_HEADER: &str = "x,f_true,f_hat,T,seed,k";
pub const MSE_HEADER: &str = "T,mse,seed";
pub const DENSITY_HEADER: &str =
    "T,seed,zeta_bar,zeta,lower,upper,n_bins,bins_in_bounds,fraction_in_bounds,min_density,max_density";

impl CurveRow {
    fn csv_line(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{}",
            fmt_real(self.x),
            fmt_real(self.f_true),
            fmt_real(self.f_hat),
            self.t,
            self.seed
        );
        if let Some(k) = self.k {
            s.push_str(&format!(",{k}"));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseRow {
    #[serde(rename = "T")]
    pub t: usize,
    pub mse: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityRow {
    #[serde(rename = "T")]
    pub t: usize,
    pub seed: u64,
    pub report: DensityBoundReport,
}

fn units(cfg: &ExperimentConfig) -> Vec<(usize, u64)> {
    cfg.ts
        .iter()
        .flat_map(|&t| cfg.seeds.iter().map(move |&s| (t, s)))
        .collect()
}

fn fit_and_curve(
    cfg: &ExperimentConfig,
    data: Arc<Dataset>,
    k: usize,
    t: usize,
    seed: u64,
    sweep: bool,
) -> Result<Vec<CurveRow>> {
    let f = cfg.function()?;
    let forest = fit_forest(data, &cfg.build_config(1, k), cfg.b, seed)?;
    let grid = curve_grid();
    let xs: Vec<Vec<f64>> = grid.iter().map(|&x| vec![x]).collect();
    let fhat = forest.predict_batch(&xs)?;
    Ok(grid
        .iter()
        .zip(fhat)
        .map(|(&x, f_hat)| CurveRow {
            x,
            f_true: f.eval(&[x]),
            f_hat,
            t,
            seed,
            k: sweep.then_some(k),
        })
        .collect())
}

/// Rows of the estimation-curve experiment, ordered by `T`, then seed, then `x`.
pub fn estimation_curves(cfg: &ExperimentConfig) -> Result<Vec<CurveRow>> {
    cfg.validate()?;
    let rows = cfg.pool()?.install(|| {
        units(cfg)
            .into_par_iter()
            .map(|(t, seed)| {
                let data = Arc::new(simulate_dataset(&cfg.sim(t, seed)?)?);
                fit_and_curve(cfg, data, cfg.k_for(t)?, t, seed, false)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(rows.into_iter().flatten().collect())
}

/// Rows of the k sweep, ordered by `T`, seed, `k`, then `x`.
pub fn k_sweep(cfg: &ExperimentConfig) -> Result<Vec<CurveRow>> {
    cfg.validate()?;
    let ks = cfg.k_values();
    let rows = cfg.pool()?.install(|| {
        units(cfg)
            .into_par_iter()
            .flat_map(|(t, seed)| ks.par_iter().map(move |&k| (t, seed, k)))
            .map(|(t, seed, k)| {
                let data = Arc::new(simulate_dataset(&cfg.sim(t, seed)?)?);
                fit_and_curve(cfg, data, k, t, seed, true)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(rows.into_iter().flatten().collect())
}

/// Mean squared error of the forest over the 17 × 17 grid, per `(T, seed)`.
pub fn mse_curve(cfg: &ExperimentConfig) -> Result<Vec<MseRow>> {
    cfg.validate()?;
    let f = cfg.function()?;
    let grid = mse_grid();
    cfg.pool()?.install(|| {
        units(cfg)
            .into_par_iter()
            .map(|(t, seed)| {
                let data = Arc::new(simulate_dataset(&cfg.sim(t, seed)?)?);
                let forest = fit_forest(data, &cfg.build_config(2, cfg.k_for(t)?), cfg.b, seed)?;
                let fhat = forest.predict_batch(&grid)?;
                let sse: f64 = grid
                    .iter()
                    .zip(&fhat)
                    .map(|(x, h)| (h - f.eval(x)).powi(2))
                    .sum();
                Ok(MseRow {
                    t,
                    mse: sse / grid.len() as f64,
                    seed,
                })
            })
            .collect()
    })
}

/// Concentration table, ordered by seed, then `T`. The oracle path for
/// seed `s` uses the oracle stream of seed `s`.
pub fn concentration(cfg: &ExperimentConfig) -> Result<Vec<ConcentrationRow>> {
    cfg.validate()?;
    let p = cfg.function()?.p();
    let settings = ForestSettings {
        b: cfg.b,
        alpha: cfg.alpha,
        rho: cfg.rho_for(p),
        split_rule: cfg.split_rule,
    };
    let rows = cfg.pool()?.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let ocfg = OracleConfig {
                    n_mc: cfg.n_mc,
                    burn_in: cfg.burn_in,
                    seed,
                };
                concentration_study(
                    &cfg.ts,
                    |t| cfg.k_for(t),
                    &cfg.sim(cfg.ts[0], seed)?,
                    &settings,
                    &ocfg,
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(rows.into_iter().flatten().collect())
}

/// Density-bound check per `(n_samples, seed)`.
pub fn density_check(cfg: &ExperimentConfig) -> Result<Vec<DensityRow>> {
    cfg.validate()?;
    cfg.pool()?.install(|| {
        units(cfg)
            .into_par_iter()
            .map(|(t, seed)| {
                let report = density_bound_check(&cfg.sim(t, seed)?, t, cfg.n_bins)?;
                Ok(DensityRow { t, seed, report })
            })
            .collect()
    })
}

/// Mean absolute successive difference of a curve.
pub fn roughness(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (values.len() - 1) as f64
}

/// Mean `|f_hat − f_true|` per `(T, seed)`, then the median over seeds, per `T`.
pub fn median_abs_error_by_t(rows: &[CurveRow]) -> Vec<(usize, f64)> {
    let mut ts: Vec<usize> = rows.iter().map(|r| r.t).collect();
    ts.dedup();
    ts.sort_unstable();
    ts.dedup();
    ts.into_iter()
        .map(|t| {
            let mut seeds: Vec<u64> = rows.iter().filter(|r| r.t == t).map(|r| r.seed).collect();
            seeds.sort_unstable();
            seeds.dedup();
            let per_seed: Vec<f64> = seeds
                .iter()
                .map(|&s| {
                    let errs: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.t == t && r.seed == s)
                        .map(|r| (r.f_hat - r.f_true).abs())
                        .collect();
                    errs.iter().sum::<f64>() / errs.len() as f64
                })
                .collect();
            (t, median(&per_seed))
        })
        .collect()
}

/// Files written by a run plus the manifest path.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    config: &'a ExperimentConfig,
    seeds: &'a [u64],
    library_version: &'a str,
    wall_time_seconds: f64,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'a str>,
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn csv(header: &str, lines: impl Iterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}

/// Runs the experiment named in `cfg` and writes its CSV outputs and
/// manifest into `cfg.output_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(String, String)> = Vec::new();
    let mut note = None;
    match cfg.experiment {
        ExperimentKind::Simulate => {
            let sets = cfg.pool()?.install(|| {
                units(cfg)
                    .into_par_iter()
                    .map(|(t, seed)| {
                        Ok((
                            format!("simulate_T{t}_seed{seed}.csv"),
                            simulate_dataset(&cfg.sim(t, seed)?)?.to_csv_string(),
                        ))
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            files.extend(sets);
        }
        ExperimentKind::EstimationCurves => {
            let rows = estimation_curves(cfg)?;
            files.push((
                "estimation_curves.csv".into(),
                csv(CURVE_HEADER, rows.iter().map(CurveRow::csv_line)),
            ));
        }
        ExperimentKind::KSweep => {
            let rows = k_sweep(cfg)?;
            files.push((
                "k_sweep.csv".into(),
                csv(SWEEP_HEADER, rows.iter().map(CurveRow::csv_line)),
            ));
        }
        ExperimentKind::MseCurve => {
            let rows = mse_curve(cfg)?;
            let lines = rows
                .iter()
                .map(|r| format!("{},{},{}", r.t, fmt_real(r.mse), r.seed));
            files.push(("mse_curve.csv".into(), csv(MSE_HEADER, lines)));
        }
        ExperimentKind::Concentration => {
            let rows = concentration(cfg)?;
            files.push((
                "concentration.csv".into(),
                csv(
                    CONCENTRATION_HEADER,
                    rows.iter().map(ConcentrationRow::csv_line),
                ),
            ));
            note = Some(SUP_NOTE);
        }
        ExperimentKind::DensityCheck => {
            let rows = density_check(cfg)?;
            let lines = rows.iter().map(|r| {
                let d = &r.report;
                format!(
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    r.t,
                    r.seed,
                    fmt_real(d.zeta_bar),
                    fmt_real(d.zeta),
                    fmt_real(d.lower),
                    fmt_real(d.upper),
                    d.n_bins,
                    d.bins_in_bounds,
                    fmt_real(d.fraction_in_bounds),
                    fmt_real(d.min_density),
                    fmt_real(d.max_density)
                )
            });
            files.push(("density_check.csv".into(), csv(DENSITY_HEADER, lines)));
        }
    }
    let mut outputs = Vec::with_capacity(files.len());
    for (name, body) in &files {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes())?;
        outputs.push(path);
    }
    let manifest = Manifest {
        experiment: cfg.experiment.name(),
        config: cfg,
        seeds: &cfg.seeds,
        library_version: crate::VERSION,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs: files.iter().map(|(n, _)| n.clone()).collect(),
        note,
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let body = serde_json::to_string_pretty(&manifest)?;
    write_atomic(&manifest_path, body.as_bytes())?;
    Ok(RunSummary {
        outputs,
        manifest: manifest_path,
    })
}

/// Reads the configuration recorded in a manifest, for re-running.
pub fn config_from_manifest(path: &Path) -> Result<ExperimentConfig> {
    #[derive(Deserialize)]
    struct Stored {
        config: ExperimentConfig,
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stored: Stored = serde_json::from_str(&text)?;
    Ok(stored.config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        assert_eq!(k_schedule(1600).unwrap(), 236);
        assert_eq!(k_schedule(400).unwrap(), 92);
        assert_eq!(k_schedule(6400).unwrap(), 512);
        assert_eq!(k_schedule(2500).unwrap(), 308);
        assert!(matches!(k_schedule(15), Err(Error::Config(_))));
        assert!(k_schedule(16).unwrap() >= 1);
    }

    #[test]
    fn schedule_matches_direct_formula() {
        for t in [16usize, 17, 100, 999, 10_000, 40_000, 1_000_000] {
            let l = (t as f64).ln();
            let direct = (0.04 * l * l * l * l * l.ln()).floor().max(1.0) as usize;
            assert_eq!(k_schedule(t).unwrap(), direct, "T={t}");
        }
    }

    #[test]
    fn grids() {
        let g = curve_grid();
        assert_eq!(g.len(), 401);
        assert_eq!(g[0], -2.0);
        assert_eq!(g[200], 0.0);
        assert_eq!(g[400], 2.0);
        let m = mse_grid();
        assert_eq!(m.len(), 289);
        assert_eq!(m[0], vec![-2.0, -2.0]);
        assert_eq!(m[288], vec![2.0, 2.0]);
        assert_eq!(m[1], vec![-2.0, -1.75]);
    }

    #[test]
    fn config_json_defaults_and_round_trip() {
        let cfg = ExperimentConfig::from_json(
            r#"{"experiment":"estimation_curves","f_name":"f3","output_dir":"x"}"#,
        )
        .unwrap();
        assert_eq!(cfg.ts, vec![400, 1600, 6400]);
        assert_eq!(cfg.b, 500);
        assert_eq!(cfg.alpha, 0.1);
        assert_eq!(cfg.seeds, vec![1, 2, 3, 4, 5]);
        assert_eq!(cfg.noise, NoiseModel::laplace(1.0).unwrap());
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        let j: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
        assert!(j.get("Ts").is_some() && j.get("B").is_some());
    }

    #[test]
    fn config_rejects_unknown_fields_and_bad_values() {
        assert!(
            ExperimentConfig::from_json(r#"{"experiment":"k_sweep","f_name":"f2","bogus":1}"#)
                .is_err()
        );
        let mut cfg = ExperimentConfig::new(ExperimentKind::MseCurve, "f3", "x");
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.f_name = "f5".into();
        cfg.validate().unwrap();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::new(ExperimentKind::EstimationCurves, "f1", "x");
        cfg.ts = vec![10];
        assert!(cfg.validate().is_err());
        cfg.k_override = Some(5);
        cfg.validate().unwrap();
        cfg.f_name = "nope".into();
        assert!(cfg.validate().unwrap_err().is_config());
    }

    fn small(kind: ExperimentKind, f: &str, dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(kind, f, dir);
        cfg.b = 5;
        cfg.seeds = vec![1, 2];
        cfg
    }

    #[test]
    fn estimation_curve_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(ExperimentKind::EstimationCurves, "f3", dir.path());
        cfg.ts = vec![400];
        let rows = estimation_curves(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 401);
        assert_eq!(rows[200].x, 0.0);
        assert_eq!(rows[200].f_true, 1.0);
        let summary = run(&cfg).unwrap();
        let text = fs::read_to_string(&summary.outputs[0]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CURVE_HEADER));
        let first: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(first[1], rows[0].f_true);
        assert_eq!(first[2], rows[0].f_hat);
        assert!(summary.manifest.exists());
    }

    #[test]
    fn k_sweep_shape_and_range() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(ExperimentKind::KSweep, "f2", dir.path());
        cfg.seeds = vec![3];
        let rows = k_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 3 * 401);
        let data = simulate_dataset(&cfg.sim(1600, 3).unwrap()).unwrap();
        let (lo, hi) = data
            .ys()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| {
                (a.min(y), b.max(y))
            });
        for r in rows.iter().filter(|r| r.k == Some(640)) {
            assert!(r.f_hat >= lo && r.f_hat <= hi);
        }
    }

    #[test]
    fn sweep_roughness_decreases_in_k() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(ExperimentKind::KSweep, "f2", dir.path());
        cfg.b = 100;
        let rows = k_sweep(&cfg).unwrap();
        let med: Vec<f64> = cfg
            .k_values()
            .iter()
            .map(|&k| {
                let per_seed: Vec<f64> = cfg
                    .seeds
                    .iter()
                    .map(|&s| {
                        let curve: Vec<f64> = rows
                            .iter()
                            .filter(|r| r.k == Some(k) && r.seed == s)
                            .map(|r| r.f_hat)
                            .collect();
                        roughness(&curve)
                    })
                    .collect();
                median(&per_seed)
            })
            .collect();
        assert!(med.windows(2).all(|w| w[1] < w[0]), "{med:?}");
    }

    #[test]
    fn mse_zero_function() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(ExperimentKind::MseCurve, "zero:2", dir.path());
        cfg.ts = vec![10_000];
        cfg.seeds = vec![1];
        cfg.b = 20;
        let rows = mse_curve(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].mse <= 0.1, "{}", rows[0].mse);
    }

    #[test]
    fn concentration_rows_per_t_and_seed() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(ExperimentKind::Concentration, "f3", dir.path());
        cfg.ts = vec![400, 800];
        cfg.n_mc = 20_000;
        let rows = concentration(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            let again = r.sup_dev * (r.k as f64).sqrt() / (r.t as f64).ln().powi(2);
            assert!((again - r.ratio).abs() <= 1e-12);
        }
    }

    #[test]
    fn outputs_independent_of_jobs() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut cfg = small(ExperimentKind::EstimationCurves, "f1", a.path());
        cfg.ts = vec![400, 800];
        cfg.jobs = Some(1);
        let ra = run(&cfg).unwrap();
        cfg.output_dir = b.path().to_path_buf();
        cfg.jobs = Some(4);
        let rb = run(&cfg).unwrap();
        assert_eq!(
            fs::read(&ra.outputs[0]).unwrap(),
            fs::read(&rb.outputs[0]).unwrap()
        );
    }

    #[test]
    fn manifest_reproduces_run() {
        let a = tempfile::tempdir().unwrap();
        let mut cfg = small(ExperimentKind::Simulate, "f1", a.path());
        cfg.ts = vec![50];
        let first = run(&cfg).unwrap();
        let mut again = config_from_manifest(&first.manifest).unwrap();
        assert_eq!(again, cfg);
        let b = tempfile::tempdir().unwrap();
        again.output_dir = b.path().to_path_buf();
        let second = run(&again).unwrap();
        for (x, y) in first.outputs.iter().zip(&second.outputs) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
    }

    #[test]
    fn density_check_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(ExperimentKind::DensityCheck, "f1", dir.path());
        cfg.ts = vec![100_000];
        cfg.seeds = vec![1];
        cfg.n_bins = 20;
        let rows = density_check(&cfg).unwrap();
        assert!(rows[0].report.fraction_in_bounds >= 0.95);
    }

    #[test]
    fn roughness_and_error_summary() {
        assert_eq!(roughness(&[0.0, 1.0, 0.0]), 1.0);
        assert_eq!(roughness(&[2.0]), 0.0);
        let row = |t, seed, e: f64| CurveRow {
            x: 0.0,
            f_true: 0.0,
            f_hat: e,
            t,
            seed,
            k: None,
        };
        let rows = vec![
            row(400, 1, 1.0),
            row(400, 2, 3.0),
            row(400, 3, 2.0),
            row(1600, 1, 0.5),
        ];
        assert_eq!(median_abs_error_by_t(&rows), vec![(400, 2.0), (1600, 0.5)]);
    }
}
