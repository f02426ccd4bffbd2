//! Nonlinear autoregressive processes `Y_t = f(X_t) + ε_t` with
//! `X_t = (Y_{t−1}, …, Y_{t−p})`, and the input-output datasets built from
//! their paths.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::rng::{RandomStream, PROBE_STREAM, SIMULATION_STREAM};
use crate::util::fmt_real;

pub const DEFAULT_BURN_IN: usize = 1000;

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A bounded regression function `f: ℝ^p → ℝ` with its declared sup-norm
/// bound and (optionally) a Lipschitz constant.
#[derive(Clone)]
pub struct RegressionFunction {
    id: String,
    p: usize,
    evaluator: Evaluator,
    bound_m: f64,
    lipschitz_c: Option<f64>,
}

impl fmt::Debug for RegressionFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegressionFunction")
            .field("id", &self.id)
            .field("p", &self.p)
            .field("bound_m", &self.bound_m)
            .field("lipschitz_c", &self.lipschitz_c)
            .finish()
    }
}

/// Functions shipped with the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    /// `0.5·sign(x)·min(|x|, 10)`
    F1ClippedLinear,
    /// `−2x·e^(−0.7x²) + 3x²·e^(−0.95x²)`
    F2Expar,
    /// `cos(5x)·e^(−x²)`
    F3Cosine,
    /// `min(|x|, 0.75)·min(|x|, 10)`
    F4Spline,
    /// `x₁e^(−0.6x₁²) − 2(x₁²e^(−0.3x₁²) + x₂e^(−0.7x₂²)) + 3x₂²e^(−0.95x₂²)`
    F5TwoDim,
    /// `f ≡ 0` on ℝ^p.
    Zero(usize),
}

impl Builtin {
    /// Accepts `f1`..`f5`, the long names (`f1_clipped_linear`, …), `zero`
    /// (p = 1) and `zero:<p>`.
    pub fn parse(name: &str) -> Result<Self> {
        let b = match name {
            "f1" | "f1_clipped_linear" => Builtin::F1ClippedLinear,
            "f2" | "f2_expar" => Builtin::F2Expar,
            "f3" | "f3_cosine" => Builtin::F3Cosine,
            "f4" | "f4_spline" => Builtin::F4Spline,
            "f5" | "f5_twodim" => Builtin::F5TwoDim,
            "zero" => Builtin::Zero(1),
            other => match other.strip_prefix("zero:").map(str::parse::<usize>) {
                Some(Ok(p)) if p >= 1 => Builtin::Zero(p),
                _ => {
                    return Err(Error::Config(format!(
                        "unknown regression function '{name}' (expected f1..f5, zero or zero:<p>)"
                    )))
                }
            },
        };
        Ok(b)
    }

    pub fn name(&self) -> String {
        match self {
            Builtin::F1ClippedLinear => "f1_clipped_linear".into(),
            Builtin::F2Expar => "f2_expar".into(),
            Builtin::F3Cosine => "f3_cosine".into(),
            Builtin::F4Spline => "f4_spline".into(),
            Builtin::F5TwoDim => "f5_twodim".into(),
            Builtin::Zero(1) => "zero".into(),
            Builtin::Zero(p) => format!("zero:{p}"),
        }
    }

    pub fn p(&self) -> usize {
        match self {
            Builtin::F5TwoDim => 2,
            Builtin::Zero(p) => *p,
            _ => 1,
        }
    }
}

fn f1(x: f64) -> f64 {
    0.5 * x.clamp(-10.0, 10.0)
}

fn f2(x: f64) -> f64 {
    -2.0 * x * (-0.7 * x * x).exp() + 3.0 * x * x * (-0.95 * x * x).exp()
}

fn f3(x: f64) -> f64 {
    (5.0 * x).cos() * (-x * x).exp()
}

fn f4(x: f64) -> f64 {
    x.abs().min(0.75) * x.abs().min(10.0)
}

// f5 separates as g1(x₁) + g2(x₂).
fn f5_first(x: f64) -> f64 {
    x * (-0.6 * x * x).exp() - 2.0 * x * x * (-0.3 * x * x).exp()
}

fn f5_second(x: f64) -> f64 {
    -2.0 * x * (-0.7 * x * x).exp() + 3.0 * x * x * (-0.95 * x * x).exp()
}

fn f5(x1: f64, x2: f64) -> f64 {
    f5_first(x1) + f5_second(x2)
}

/// Grid statistics of a smooth 1-d function on [−10, 10] (outside this range
/// every shipped function is flat or decays to zero).
struct GridStats {
    min: f64,
    max: f64,
    max_slope: f64,
}

fn grid_stats(g: impl Fn(f64) -> f64) -> GridStats {
    const N: usize = 400_000;
    let h = 20.0 / N as f64;
    let mut prev = g(-10.0);
    let mut out = GridStats {
        min: prev,
        max: prev,
        max_slope: 0.0,
    };
    for i in 1..=N {
        let v = g(-10.0 + i as f64 * h);
        out.min = out.min.min(v);
        out.max = out.max.max(v);
        out.max_slope = out.max_slope.max((v - prev).abs() / h);
        prev = v;
    }
    out
}

// Margin added to grid suprema: the grid spacing is 5e-5, so the true
// supremum exceeds the grid value by at most ~|f''|·1.3e-9.
const GRID_MARGIN: f64 = 1e-6;

struct Metadata {
    bound: f64,
    lipschitz: f64,
}

fn grid_metadata(which: Builtin) -> &'static Metadata {
    static F2: OnceLock<Metadata> = OnceLock::new();
    static F3: OnceLock<Metadata> = OnceLock::new();
    static F5: OnceLock<Metadata> = OnceLock::new();
    let one_d = |g: fn(f64) -> f64| {
        let s = grid_stats(g);
        Metadata {
            bound: s.min.abs().max(s.max.abs()) + GRID_MARGIN,
            lipschitz: s.max_slope + GRID_MARGIN,
        }
    };
    match which {
        Builtin::F2Expar => F2.get_or_init(|| one_d(f2)),
        Builtin::F3Cosine => F3.get_or_init(|| one_d(f3)),
        Builtin::F5TwoDim => F5.get_or_init(|| {
            let a = grid_stats(f5_first);
            let b = grid_stats(f5_second);
            let bound = (a.max + b.max).abs().max((a.min + b.min).abs());
            Metadata {
                bound: bound + GRID_MARGIN,
                // Euclidean norm of the gradient
                lipschitz: a.max_slope.hypot(b.max_slope) + GRID_MARGIN,
            }
        }),
        _ => unreachable!("closed-form metadata for {which:?}"),
    }
}

impl RegressionFunction {
    pub fn builtin(which: Builtin) -> Self {
        let (evaluator, bound_m, lipschitz_c): (Evaluator, f64, Option<f64>) = match which {
            Builtin::F1ClippedLinear => (Arc::new(|x: &[f64]| f1(x[0])), 5.0, Some(0.5)),
            Builtin::F2Expar => {
                let m = grid_metadata(which);
                (Arc::new(|x: &[f64]| f2(x[0])), m.bound, Some(m.lipschitz))
            }
            Builtin::F3Cosine => {
                let m = grid_metadata(which);
                (Arc::new(|x: &[f64]| f3(x[0])), 1.0, Some(m.lipschitz))
            }
            Builtin::F4Spline => (Arc::new(|x: &[f64]| f4(x[0])), 7.5, Some(1.5)),
            Builtin::F5TwoDim => {
                let m = grid_metadata(which);
                (
                    Arc::new(|x: &[f64]| f5(x[0], x[1])),
                    m.bound,
                    Some(m.lipschitz),
                )
            }
            Builtin::Zero(_) => (Arc::new(|_: &[f64]| 0.0), 0.0, Some(0.0)),
        };
        Self {
            id: which.name(),
            p: which.p(),
            evaluator,
            bound_m,
            lipschitz_c,
        }
    }

    /// Looks up a builtin by name (see [`Builtin::parse`]).
    pub fn by_name(name: &str) -> Result<Self> {
        Builtin::parse(name).map(Self::builtin)
    }

    /// A user-supplied function. The declared bound is probed at `10⁵`
    /// uniform points of `[−50, 50]^p` and rejected if any probe exceeds it.
    pub fn custom(
        id: impl Into<String>,
        p: usize,
        bound_m: f64,
        lipschitz_c: Option<f64>,
        evaluator: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if p == 0 {
            return Err(Error::Config("input dimension p must be positive".into()));
        }
        if !(bound_m.is_finite() && bound_m >= 0.0) {
            return Err(Error::Config(format!(
                "declared bound must be a finite nonnegative real, got {bound_m}"
            )));
        }
        let f = Self {
            id: id.into(),
            p,
            evaluator: Arc::new(evaluator),
            bound_m,
            lipschitz_c,
        };
        f.probe_bound(100_000, 0x5eed)?;
        Ok(f)
    }

    /// Checks `|f(x)| ≤ M` at `n` random points of `[−50, 50]^p`.
    pub fn probe_bound(&self, n: usize, seed: u64) -> Result<()> {
        let mut rng = RandomStream::derive(seed, PROBE_STREAM);
        let mut x = vec![0.0; self.p];
        for _ in 0..n {
            for xi in x.iter_mut() {
                *xi = rng.uniform(-50.0, 50.0);
            }
            let v = self.eval(&x);
            if v.is_nan() || v.abs() > self.bound_m {
                return Err(Error::Config(format!(
                    "function '{}' violates its declared bound {} at {:?} (value {v})",
                    self.id, self.bound_m, x
                )));
            }
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn bound_m(&self) -> f64 {
        self.bound_m
    }

    pub fn lipschitz_c(&self) -> Option<f64> {
        self.lipschitz_c
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.p);
        (self.evaluator)(x)
    }
}

/// Everything needed to reproduce a simulated path.
#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub f: RegressionFunction,
    pub noise: NoiseModel,
    /// Retained length `T`.
    pub t: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Initial data `(Y_0, Y_{−1}, …, Y_{1−p})`, most recent first.
    pub initial_data: Vec<f64>,
}

impl SimulationSpec {
    /// Zero initial data and the default burn-in.
    pub fn new(f: RegressionFunction, noise: NoiseModel, t: usize, seed: u64) -> Self {
        let p = f.p();
        Self {
            f,
            noise,
            t,
            burn_in: DEFAULT_BURN_IN,
            seed,
            initial_data: vec![0.0; p],
        }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_length(mut self, t: usize) -> Self {
        self.t = t;
        self
    }

    pub fn p(&self) -> usize {
        self.f.p()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if self.initial_data.len() != p {
            return Err(Error::Shape {
                expected: p,
                got: self.initial_data.len(),
                context: "initial data",
            });
        }
        if self.t < p + 1 {
            return Err(Error::Config(format!(
                "retained length T = {} must be at least p + 1 = {}",
                self.t,
                p + 1
            )));
        }
        Ok(())
    }
}

/// A simulated path together with the `p` values preceding it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    /// `Y_1, …, Y_T`.
    pub values: Vec<f64>,
    /// `(Y_0, …, Y_{1−p})`, most recent first.
    pub warm_start: Vec<f64>,
    /// The noise draws `ε_1, …, ε_T` of the retained segment, when recorded.
    pub noise: Option<Vec<f64>>,
}

fn run_recursion(spec: &SimulationSpec, stream: u64, record_noise: bool) -> Result<SimulatedPath> {
    spec.validate()?;
    let p = spec.p();
    let total = spec.burn_in + spec.t;
    let mut rng = RandomStream::derive(spec.seed, stream);
    let mut hist = Vec::with_capacity(p + total);
    hist.extend(spec.initial_data.iter().rev());
    let mut x = vec![0.0; p];
    let mut noise = if record_noise {
        Some(Vec::with_capacity(spec.t))
    } else {
        None
    };
    for step in 0..total {
        let n = hist.len();
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = hist[n - 1 - j];
        }
        let eps = spec.noise.sample(&mut rng);
        let y = spec.f.eval(&x) + eps;
        if !y.is_finite() {
            return Err(Error::Simulation {
                step: step + 1,
                value: y,
            });
        }
        if step >= spec.burn_in {
            if let Some(ns) = noise.as_mut() {
                ns.push(eps);
            }
        }
        hist.push(y);
    }
    let start = p + spec.burn_in;
    let warm_start = (0..p).map(|j| hist[start - 1 - j]).collect();
    Ok(SimulatedPath {
        values: hist.split_off(start),
        warm_start,
        noise,
    })
}

/// Iterates the recursion for `burn_in + T` steps and keeps the last `T`.
pub fn simulate(spec: &SimulationSpec) -> Result<SimulatedPath> {
    run_recursion(spec, SIMULATION_STREAM, false)
}

/// Like [`simulate`] but drawing noise from another stream of the same
/// seed, giving a path independent of the one [`simulate`] produces.
pub fn simulate_on_stream(spec: &SimulationSpec, stream: u64) -> Result<SimulatedPath> {
    run_recursion(spec, stream, false)
}

/// Like [`simulate`], additionally recording the noise draws.
pub fn simulate_with_noise(spec: &SimulationSpec) -> Result<SimulatedPath> {
    run_recursion(spec, SIMULATION_STREAM, true)
}

/// Input-output pairs `(X_t, Y_t)`, `t = 1..T`, with inputs stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    p: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from explicit rows.
    pub fn from_rows(p: usize, rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::Config("input dimension p must be positive".into()));
        }
        if rows.len() != y.len() {
            return Err(Error::Shape {
                expected: y.len(),
                got: rows.len(),
                context: "number of input rows",
            });
        }
        let mut x = Vec::with_capacity(rows.len() * p);
        for r in rows {
            if r.len() != p {
                return Err(Error::Shape {
                    expected: p,
                    got: r.len(),
                    context: "input row",
                });
            }
            x.extend_from_slice(r);
        }
        Ok(Self { p, x, y })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Input of pair `i` (0-based; pair `i` is `t = i + 1`).
    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn coord(&self, i: usize, axis: usize) -> f64 {
        self.x[i * self.p + axis]
    }

    #[inline]
    pub fn y(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    /// SHA-256 over `p`, `T` and the bit patterns of every stored value.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.p as u64).to_le_bytes());
        h.update((self.len() as u64).to_le_bytes());
        for v in self.x.iter().chain(&self.y) {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.len() * (self.p + 2) * 24);
        out.push_str("t,y");
        for j in 1..=self.p {
            out.push_str(&format!(",x{j}"));
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&(i + 1).to_string());
            out.push(',');
            out.push_str(&fmt_real(self.y[i]));
            for &v in self.x(i) {
                out.push(',');
                out.push_str(&fmt_real(v));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv_string().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn parse_csv(text: &str, source: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: source.to_string(),
            line,
            msg,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 3 || cols[0] != "t" || cols[1] != "y" {
            return Err(perr(
                1,
                format!("expected header t,y,x1,...,xp, got '{header}'"),
            ));
        }
        let p = cols.len() - 2;
        for (j, c) in cols[2..].iter().enumerate() {
            if *c != format!("x{}", j + 1) {
                return Err(perr(1, format!("unexpected column '{c}'")));
            }
        }
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (idx, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != p + 2 {
                return Err(perr(
                    idx + 1,
                    format!("expected {} fields, got {}", p + 2, fields.len()),
                ));
            }
            let t: usize = fields[0]
                .parse()
                .map_err(|_| perr(idx + 1, format!("bad index '{}'", fields[0])))?;
            if t != y.len() + 1 {
                return Err(perr(
                    idx + 1,
                    format!("expected t = {}, got {t}", y.len() + 1),
                ));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| perr(idx + 1, format!("bad number '{s}'")))
            };
            y.push(num(fields[1])?);
            for f in &fields[2..] {
                x.push(num(f)?);
            }
        }
        Ok(Self { p, x, y })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }
}

/// Groups a path into `T = path.len()` pairs `X_t = (Y_{t−1}, …, Y_{t−p})`,
/// taking the first lags from `warm_start` (most recent first).
pub fn make_dataset(path: &[f64], p: usize, warm_start: &[f64]) -> Result<Dataset> {
    if p == 0 {
        return Err(Error::Config("input dimension p must be positive".into()));
    }
    if warm_start.len() != p {
        return Err(Error::Shape {
            expected: p,
            got: warm_start.len(),
            context: "warm start",
        });
    }
    if path.is_empty() {
        return Err(Error::Config("path must contain at least one value".into()));
    }
    // chronological history Y_{1−p}, …, Y_0, Y_1, …, Y_T
    let mut hist: Vec<f64> = warm_start.iter().rev().copied().collect();
    hist.extend_from_slice(path);
    let mut x = Vec::with_capacity(path.len() * p);
    for i in 0..path.len() {
        let now = p + i;
        x.extend((1..=p).map(|lag| hist[now - lag]));
    }
    Ok(Dataset {
        p,
        x,
        y: path.to_vec(),
    })
}

/// Simulates and assembles the dataset in one step.
pub fn simulate_dataset(spec: &SimulationSpec) -> Result<Dataset> {
    let path = simulate(spec)?;
    make_dataset(&path.values, spec.p(), &path.warm_start)
}

/// Compares the means of the two halves of a path against
/// `4·sd/√(T/2)`. Failures are diagnostic, not errors.
#[derive(Debug, Clone, Copy)]
pub struct StationarityCheck {
    pub first_mean: f64,
    pub second_mean: f64,
    pub threshold: f64,
    pub ok: bool,
}

pub fn stationarity_check(path: &[f64]) -> StationarityCheck {
    let half = path.len() / 2;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let all = mean(path);
    let sd =
        (path.iter().map(|v| (v - all).powi(2)).sum::<f64>() / (path.len() as f64 - 1.0)).sqrt();
    let first_mean = mean(&path[..half]);
    let second_mean = mean(&path[half..]);
    let threshold = 4.0 * sd / (half as f64).sqrt();
    StationarityCheck {
        first_mean,
        second_mean,
        threshold,
        ok: (first_mean - second_mean).abs() <= threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace() -> NoiseModel {
        NoiseModel::laplace(1.0).unwrap()
    }

    #[test]
    fn builtin_values() {
        let f1 = RegressionFunction::builtin(Builtin::F1ClippedLinear);
        assert_eq!(f1.eval(&[0.5]), 0.25);
        assert_eq!(f1.eval(&[-30.0]), -5.0);
        assert_eq!(f1.eval(&[0.0]), 0.0);
        assert_eq!(f1.bound_m(), 5.0);
        let f3 = RegressionFunction::by_name("f3").unwrap();
        assert_eq!(f3.eval(&[0.0]), 1.0);
        let f5 = RegressionFunction::by_name("f5_twodim").unwrap();
        assert_eq!(f5.p(), 2);
        assert_eq!(f5.eval(&[0.0, 0.0]), 0.0);
        let f4 = RegressionFunction::by_name("f4").unwrap();
        assert_eq!(f4.eval(&[-2.0]), 1.5);
        assert_eq!(f4.eval(&[20.0]), 7.5);
    }

    #[test]
    fn unknown_name_is_config_error() {
        assert!(matches!(
            RegressionFunction::by_name("f9"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RegressionFunction::by_name("zero:0"),
            Err(Error::Config(_))
        ));
        assert_eq!(RegressionFunction::by_name("zero:3").unwrap().p(), 3);
    }

    #[test]
    fn builtin_bounds_hold_under_probing() {
        for name in ["f1", "f2", "f3", "f4", "f5", "zero"] {
            let f = RegressionFunction::by_name(name).unwrap();
            f.probe_bound(100_000, 11).unwrap();
            assert!(f.lipschitz_c().unwrap() >= 0.0);
        }
    }

    #[test]
    fn f2_bound_is_tight() {
        let f = RegressionFunction::by_name("f2").unwrap();
        let dense = (0..2_000_001)
            .map(|i| f2(-10.0 + i as f64 * 1e-5).abs())
            .fold(0.0, f64::max);
        assert!(f.bound_m() >= dense);
        assert!(f.bound_m() - dense < 1e-5);
    }

    #[test]
    fn custom_bound_rejected() {
        let bad = RegressionFunction::custom("lin", 1, 3.0, None, |x| x[0]);
        assert!(matches!(bad, Err(Error::Config(_))));
        let ok = RegressionFunction::custom("tanh", 1, 1.0, Some(1.0), |x| x[0].tanh());
        assert!(ok.is_ok());
    }

    #[test]
    fn zero_function_path_is_noise() {
        let spec = SimulationSpec::new(
            RegressionFunction::by_name("zero").unwrap(),
            laplace(),
            500,
            3,
        )
        .with_burn_in(10);
        let sim = simulate_with_noise(&spec).unwrap();
        assert_eq!(sim.values, sim.noise.unwrap());
    }

    #[test]
    fn boundedness_and_residual_roundtrip() {
        for name in ["f1", "f2", "f5"] {
            let f = RegressionFunction::by_name(name).unwrap();
            let p = f.p();
            let spec = SimulationSpec::new(f.clone(), laplace(), 400, 17);
            let sim = simulate_with_noise(&spec).unwrap();
            let noise = sim.noise.clone().unwrap();
            let data = make_dataset(&sim.values, p, &sim.warm_start).unwrap();
            assert_eq!(data.len(), 400);
            let max_eps = noise.iter().fold(0.0_f64, |a, e| a.max(e.abs()));
            for (i, &eps) in noise.iter().enumerate() {
                let fx = f.eval(data.x(i));
                // the recursion computed exactly this sum
                assert_eq!(data.y(i), fx + eps);
                assert!((data.y(i) - eps).abs() <= f.bound_m() + 1e-12);
                assert!(data.y(i).abs() <= f.bound_m() + max_eps);
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let f = RegressionFunction::by_name("f3").unwrap();
        let spec = SimulationSpec::new(f, laplace(), 1000, 99);
        assert_eq!(
            simulate_dataset(&spec).unwrap(),
            simulate_dataset(&spec).unwrap()
        );
        let other = simulate_dataset(&spec.clone().with_seed(100)).unwrap();
        assert_ne!(simulate_dataset(&spec).unwrap(), other);
    }

    #[test]
    fn burn_in_zero_uses_initial_data() {
        let f = RegressionFunction::by_name("f5").unwrap();
        let mut spec = SimulationSpec::new(f, laplace(), 10, 1).with_burn_in(0);
        spec.initial_data = vec![1.5, -0.5];
        let sim = simulate(&spec).unwrap();
        assert_eq!(sim.warm_start, vec![1.5, -0.5]);
    }

    #[test]
    fn nonfinite_value_reports_step() {
        let f = RegressionFunction {
            id: "blowup".into(),
            p: 1,
            evaluator: Arc::new(|x: &[f64]| if x[0].abs() > 0.0 { f64::INFINITY } else { 0.0 }),
            bound_m: 1.0,
            lipschitz_c: None,
        };
        let spec = SimulationSpec::new(f, laplace(), 10, 1).with_burn_in(5);
        match simulate(&spec) {
            Err(Error::Simulation { step, .. }) => assert_eq!(step, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spec_validation() {
        let f = RegressionFunction::by_name("f5").unwrap();
        let spec = SimulationSpec::new(f, laplace(), 2, 1);
        assert!(matches!(simulate(&spec), Err(Error::Config(_))));
        let mut spec = spec.with_length(10);
        spec.initial_data = vec![0.0];
        assert!(matches!(simulate(&spec), Err(Error::Shape { .. })));
    }

    #[test]
    fn make_dataset_examples() {
        let d = make_dataset(&[1.0, 2.0], 1, &[0.5]).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.x(0), &[0.5]);
        assert_eq!(d.y(0), 1.0);
        assert_eq!(d.x(1), &[1.0]);
        assert_eq!(d.y(1), 2.0);

        let d = make_dataset(&[1.0, 2.0, 3.0], 2, &[0.0, -1.0]).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.x(0), &[0.0, -1.0]);
        assert_eq!(d.x(1), &[1.0, 0.0]);
        assert_eq!(d.x(2), &[2.0, 1.0]);
        for i in 1..3 {
            assert_eq!(d.x(i)[1], d.x(i - 1)[0]);
        }

        assert!(matches!(
            make_dataset(&[1.0], 2, &[0.0]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn csv_roundtrip_is_lossless() {
        let f = RegressionFunction::by_name("f5").unwrap();
        let spec = SimulationSpec::new(f, laplace(), 50, 4);
        let d = simulate_dataset(&spec).unwrap();
        let text = d.to_csv_string();
        assert!(text.starts_with("t,y,x1,x2\n"));
        let back = Dataset::parse_csv(&text, "mem").unwrap();
        assert_eq!(back, d);
        assert_eq!(back.fingerprint(), d.fingerprint());
        assert!(Dataset::parse_csv("t,y\n", "mem").is_err());
        assert!(Dataset::parse_csv("t,y,x1\n1,2\n", "mem").is_err());
    }

    fn lag1_autocorrelation(y: &[f64]) -> f64 {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let cov: f64 = y.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        cov / var
    }

    #[test]
    fn f1_behaves_like_ar1() {
        let f = RegressionFunction::by_name("f1").unwrap();
        let spec = SimulationSpec::new(f, laplace(), 100_000, 8);
        let path = simulate(&spec).unwrap().values;
        let rho = lag1_autocorrelation(&path);

        // linear AR(1) with coefficient 0.5 driven by the same law
        let mut rng = RandomStream::new(1234);
        let noise = laplace();
        let mut y = 0.0;
        let mut lin = Vec::with_capacity(100_000);
        for _ in 0..101_000 {
            y = 0.5 * y + noise.sample(&mut rng);
            lin.push(y);
        }
        let rho_lin = lag1_autocorrelation(&lin[1000..]);
        assert!((rho - 0.5).abs() < 0.02, "{rho}");
        assert!((rho_lin - 0.5).abs() < 0.02, "{rho_lin}");
    }

    #[test]
    fn stationarity_diagnostic_over_seeds() {
        let f = RegressionFunction::by_name("f1").unwrap();
        let passes = (1..=5)
            .filter(|&seed| {
                let spec = SimulationSpec::new(f.clone(), laplace(), 100_000, seed);
                stationarity_check(&simulate(&spec).unwrap().values).ok
            })
            .count();
        // 4·sd/√(T/2) ignores autocorrelation, so an occasional flag is expected
        assert!(passes >= 4, "{passes}/5");
    }
}
