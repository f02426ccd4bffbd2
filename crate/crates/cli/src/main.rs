//! `rfnlar` command-line tool.
//!
//! Exit codes: 0 on success, 1 on configuration or usage errors, 2 on
//! runtime failures (including a failed `validate`).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rfnlar::experiments::{run, write_atomic, ExperimentConfig, ExperimentKind, MANIFEST_FILE};
use rfnlar::partition::validate_k_valid;
use rfnlar::{
    fit_forest, validate_akm, BuildConfig, Dataset, Error, Forest, NoiseKind, NoiseModel, SplitRule,
};

#[derive(Parser)]
#[command(
    name = "rfnlar",
    version,
    about = "Random forests for nonlinear autoregressive time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate NLAR paths and write them as datasets
    Simulate(ExperimentArgs),
    /// Fit a forest on a dataset CSV and save it to a directory
    Fit(FitArgs),
    /// Predict with a saved forest
    Predict(PredictArgs),
    /// Forest estimates of f on [-2, 2] for each T and seed
    EstimationCurves(ExperimentArgs),
    /// Forest estimates at fixed T for several leaf sizes k
    KSweep(ExperimentArgs),
    /// Grid MSE of a two-lag forest for each T and seed
    MseCurve(ExperimentArgs),
    /// Leaf deviation from Monte-Carlo oracles, normalized by (ln T)^2 / sqrt(k)
    Concentration(ExperimentArgs),
    /// Histogram check of the transformed input density
    DensityCheck(ExperimentArgs),
    /// Check a saved forest for (alpha, k, m)-validity
    Validate(ValidateArgs),
}

/// Overrides for fields of the JSON experiment configuration.
#[derive(Args, Debug, Default)]
struct ExperimentArgs {
    /// JSON configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Regression function: f1..f5, zero or zero:<p>
    #[arg(long = "f-name", alias = "f")]
    f_name: Option<String>,
    /// Noise law as kind[:scale], e.g. laplace:1 or gaussian:0.5
    #[arg(long)]
    noise: Option<String>,
    /// Sample sizes, comma separated
    #[arg(long = "ts", alias = "T", value_delimiter = ',')]
    ts: Option<Vec<usize>>,
    /// Number of trees
    #[arg(long = "b", alias = "B")]
    b: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Split-axis probabilities, comma separated
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
    /// Leaf size used instead of the schedule
    #[arg(long = "k-override", alias = "k")]
    k_override: Option<usize>,
    /// Seeds, comma separated
    #[arg(long, alias = "seed", value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long = "output-dir")]
    output_dir: Option<PathBuf>,
    #[arg(long = "burn-in")]
    burn_in: Option<usize>,
    #[arg(long = "k-values", value_delimiter = ',')]
    k_values: Option<Vec<usize>>,
    #[arg(long = "n-mc")]
    n_mc: Option<usize>,
    #[arg(long = "n-bins")]
    n_bins: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    /// extra_trees or variance_reduction
    #[arg(long = "split-rule", value_parser = parse_rule)]
    split_rule: Option<SplitRule>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Dataset CSV with columns t,y,x1..xp
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    k: usize,
    /// Split-forcing size; defaults to 2k
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = rfnlar::builder::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
    #[arg(long = "b", alias = "B", default_value_t = 500)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "split-rule", value_parser = parse_rule, default_value = "extra_trees")]
    split_rule: SplitRule,
    /// Directory for the saved forest
    #[arg(long = "output-dir", alias = "out")]
    output_dir: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Directory written by `fit`
    #[arg(long)]
    forest: PathBuf,
    /// CSV whose columns x1..xp hold the query points
    #[arg(long, conflicts_with = "x")]
    queries: Option<PathBuf>,
    /// One query point, comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    x: Option<Vec<f64>>,
    /// Output CSV; standard output when absent
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    forest: PathBuf,
    /// Training data; the copy saved with the forest when absent
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    m: usize,
}

fn parse_rule(s: &str) -> Result<SplitRule, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| {
        format!("unknown split rule '{s}' (expected extra_trees or variance_reduction)")
    })
}

fn parse_noise(s: &str) -> rfnlar::Result<NoiseModel> {
    let (kind, scale) = match s.split_once(':') {
        Some((k, v)) => (
            k,
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad noise scale in '{s}'")))?,
        ),
        None => (s, 1.0),
    };
    let kind = match kind {
        "laplace" => NoiseKind::Laplace,
        "gaussian" => NoiseKind::Gaussian,
        other => return Err(Error::Config(format!("unknown noise kind '{other}'"))),
    };
    NoiseModel::new(kind, scale)
}

fn experiment_config(kind: ExperimentKind, a: ExperimentArgs) -> rfnlar::Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            // the subcommand names the experiment
            let mut c = ExperimentConfig::read(path)?;
            c.experiment = kind;
            c
        }
        None => {
            let f = a
                .f_name
                .as_deref()
                .ok_or_else(|| Error::Config("--f-name is required without --config".into()))?;
            ExperimentConfig::new(kind, f, "out")
        }
    };
    if let Some(v) = a.f_name {
        cfg.f_name = v;
    }
    if let Some(v) = a.noise {
        cfg.noise = parse_noise(&v)?;
    }
    if let Some(v) = a.ts {
        cfg.ts = v;
    }
    if let Some(v) = a.b {
        cfg.b = v;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.rho {
        cfg.rho = Some(v);
    }
    if let Some(v) = a.k_override {
        cfg.k_override = Some(v);
    }
    if let Some(v) = a.seeds {
        cfg.seeds = v;
    }
    if let Some(v) = a.output_dir {
        cfg.output_dir = v;
    }
    if let Some(v) = a.burn_in {
        cfg.burn_in = v;
    }
    if let Some(v) = a.k_values {
        cfg.k_values = Some(v);
    }
    if let Some(v) = a.n_mc {
        cfg.n_mc = v;
    }
    if let Some(v) = a.n_bins {
        cfg.n_bins = v;
    }
    if let Some(v) = a.jobs {
        cfg.jobs = Some(v);
    }
    if let Some(v) = a.split_rule {
        cfg.split_rule = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct FitManifest<'a> {
    command: &'static str,
    data: &'a Path,
    #[serde(rename = "B")]
    b: usize,
    seed: u64,
    config: &'a BuildConfig,
    library_version: &'static str,
    wall_time_seconds: f64,
}

fn fit(a: FitArgs) -> rfnlar::Result<()> {
    let start = Instant::now();
    let data = Arc::new(Dataset::read_csv(&a.data)?);
    let mut cfg = BuildConfig::new(data.p(), a.k)
        .with_alpha(a.alpha)
        .with_rule(a.split_rule);
    if let Some(m) = a.m {
        cfg = cfg.with_m(m);
    }
    if let Some(rho) = a.rho {
        cfg = cfg.with_rho(rho);
    }
    cfg.validate(data.p())?;
    let forest = with_jobs(a.jobs, || fit_forest(data, &cfg, a.b, a.seed))?;
    forest.save(&a.output_dir)?;
    let manifest = FitManifest {
        command: "fit",
        data: &a.data,
        b: a.b,
        seed: a.seed,
        config: forest.config(),
        library_version: rfnlar::VERSION,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    let body = serde_json::to_string_pretty(&manifest)?;
    write_atomic(&a.output_dir.join(MANIFEST_FILE), body.as_bytes())?;
    eprintln!("saved {} trees to {}", forest.len(), a.output_dir.display());
    Ok(())
}

fn with_jobs<T: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> rfnlar::Result<T> + Send,
) -> rfnlar::Result<T> {
    match jobs {
        Some(0) => Err(Error::Config("jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
            .install(f),
        None => f(),
    }
}

fn read_queries(path: &Path, p: usize) -> rfnlar::Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .unwrap_or("")
        .split(',')
        .map(str::trim)
        .collect();
    let cols: Vec<usize> = (1..=p)
        .map(|j| {
            let name = format!("x{j}");
            header
                .iter()
                .position(|h| *h == name)
                .ok_or_else(|| parse_err(1, format!("missing column {name}")))
        })
        .collect::<rfnlar::Result<_>>()?;
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let fields: Vec<&str> = l.split(',').collect();
            cols.iter()
                .map(|&c| {
                    fields
                        .get(c)
                        .and_then(|v| v.trim().parse::<f64>().ok())
                        .ok_or_else(|| parse_err(i + 2, format!("bad value in column {}", c + 1)))
                })
                .collect()
        })
        .collect()
}

fn predict(a: PredictArgs) -> rfnlar::Result<()> {
    let forest = Forest::load(&a.forest)?;
    let p = forest.p();
    let queries = match (a.queries, a.x) {
        (Some(path), _) => read_queries(&path, p)?,
        (None, Some(x)) => vec![x],
        (None, None) => return Err(Error::Config("give --queries or --x".into())),
    };
    let preds = forest.predict_batch(&queries)?;
    let mut out = (1..=p).map(|j| format!("x{j},")).collect::<String>() + "f_hat\n";
    for (q, y) in queries.iter().zip(preds) {
        for v in q {
            out.push_str(&rfnlar::util::fmt_real(*v));
            out.push(',');
        }
        out.push_str(&rfnlar::util::fmt_real(y));
        out.push('\n');
    }
    match a.output {
        Some(path) => write_atomic(&path, out.as_bytes()),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ValidationSummary {
    ok: bool,
    trees: usize,
    alpha: f64,
    k: usize,
    m: usize,
    failing_trees: Vec<usize>,
    infeasible_leaves: usize,
}

/// Returns whether every tree passed.
fn validate(a: ValidateArgs) -> rfnlar::Result<bool> {
    let forest = match &a.data {
        Some(path) => Forest::load_with_data(&a.forest, Arc::new(Dataset::read_csv(path)?))?,
        None => Forest::load(&a.forest)?,
    };
    let data = forest.data().clone();
    let mut failing_trees = Vec::new();
    let mut infeasible_leaves = 0;
    for t in forest.trees() {
        let akm = validate_akm(t, &data, a.alpha, a.k, a.m)?;
        let kv = validate_k_valid(t, &data, a.k)?;
        infeasible_leaves += akm.infeasible_leaves;
        if !(akm.ok && kv.ok) {
            failing_trees.push(t.index);
        }
    }
    let summary = ValidationSummary {
        ok: failing_trees.is_empty(),
        trees: forest.len(),
        alpha: a.alpha,
        k: a.k,
        m: a.m,
        failing_trees,
        infeasible_leaves,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(summary.ok)
}

fn experiment(kind: ExperimentKind, a: ExperimentArgs) -> rfnlar::Result<()> {
    let cfg = experiment_config(kind, a)?;
    let summary = run(&cfg)?;
    for p in &summary.outputs {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => experiment(ExperimentKind::Simulate, a),
        Command::EstimationCurves(a) => experiment(ExperimentKind::EstimationCurves, a),
        Command::KSweep(a) => experiment(ExperimentKind::KSweep, a),
        Command::MseCurve(a) => experiment(ExperimentKind::MseCurve, a),
        Command::Concentration(a) => experiment(ExperimentKind::Concentration, a),
        Command::DensityCheck(a) => experiment(ExperimentKind::DensityCheck, a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Validate(a) => match validate(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(2),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
