//! Mean-zero noise laws with densities positive on all of ℝ.
//!
//! Both shipped laws satisfy the moment-growth (Bernstein) condition
//! `E|ε|^m ≤ m!·c^(m−2)` for `m ≥ 3` with the stored witness `c`.
//!
//! Left-tail ratio condition `sup_x F(x+τ)/F(x) < ∞`:
//! * Laplace(b): for `x ≤ −τ` the ratio equals `e^(τ/b)`, for larger `x` it is
//!   smaller, so the supremum is `e^(τ/b)`.
//! * Gaussian(σ): `φ(x)/φ(x+τ) → 0` as `x → −∞` and the ratio grows without
//!   bound; the condition fails. The law is shipped for the moment and
//!   regression experiments, but [`NoiseModel::tail_ratio_sup`] returns `None`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Laplace,
    Gaussian,
}

/// Serialized form of a [`NoiseModel`]; `bernstein_c` falls back to the
/// law's default witness when omitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bernstein_c: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseSpec", into = "NoiseSpec")]
pub struct NoiseModel {
    kind: NoiseKind,
    scale: f64,
    bernstein_c: f64,
}

impl TryFrom<NoiseSpec> for NoiseModel {
    type Error = Error;

    fn try_from(spec: NoiseSpec) -> Result<Self> {
        let model = NoiseModel::new(spec.kind, spec.scale)?;
        match spec.bernstein_c {
            Some(c) => model.with_bernstein_c(c),
            None => Ok(model),
        }
    }
}

impl From<NoiseModel> for NoiseSpec {
    fn from(m: NoiseModel) -> Self {
        NoiseSpec {
            kind: m.kind,
            scale: m.scale,
            bernstein_c: Some(m.bernstein_c),
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::laplace(1.0).expect("unit scale is valid")
    }
}

/// One row of a Bernstein-condition report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernsteinRow {
    pub m: u32,
    pub abs_moment: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BernsteinReport {
    pub c: f64,
    pub rows: Vec<BernsteinRow>,
}

impl BernsteinReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }

    pub fn failures(&self) -> impl Iterator<Item = &BernsteinRow> {
        self.rows.iter().filter(|r| !r.holds)
    }
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(f64::from).product()
}

fn double_factorial(m: u32) -> f64 {
    let mut acc = 1.0;
    let mut i = m;
    while i > 1 {
        acc *= f64::from(i);
        i -= 2;
    }
    acc
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!(
                "noise scale must be a positive finite real, got {scale}"
            )));
        }
        // Minimal witness over m ≥ 3 is attained at m = 3 for scale > 1 and
        // approached as m → ∞ for scale ≤ 1; see the moment check in tests.
        let bernstein_c = match kind {
            NoiseKind::Laplace => scale.max(scale.powi(3)),
            NoiseKind::Gaussian => (2.0 * scale).max(scale.powi(3)),
        };
        Ok(Self {
            kind,
            scale,
            bernstein_c,
        })
    }

    pub fn laplace(b: f64) -> Result<Self> {
        Self::new(NoiseKind::Laplace, b)
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(NoiseKind::Gaussian, sigma)
    }

    /// Replaces the stored Bernstein constant.
    pub fn with_bernstein_c(mut self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Config(format!(
                "bernstein_c must be a positive finite real, got {c}"
            )));
        }
        self.bernstein_c = c;
        Ok(self)
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn bernstein_c(&self) -> f64 {
        self.bernstein_c
    }

    pub fn variance(&self) -> f64 {
        match self.kind {
            NoiseKind::Laplace => 2.0 * self.scale * self.scale,
            NoiseKind::Gaussian => self.scale * self.scale,
        }
    }

    fn normal(&self) -> Normal {
        Normal::new(0.0, self.scale).expect("scale validated at construction")
    }

    pub fn density(&self, x: f64) -> f64 {
        match self.kind {
            NoiseKind::Laplace => (-x.abs() / self.scale).exp() / (2.0 * self.scale),
            NoiseKind::Gaussian => {
                let z = x / self.scale;
                (-0.5 * z * z).exp() / (self.scale * (2.0 * std::f64::consts::PI).sqrt())
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.kind {
            NoiseKind::Laplace => {
                if x <= 0.0 {
                    0.5 * (x / self.scale).exp()
                } else {
                    1.0 - 0.5 * (-x / self.scale).exp()
                }
            }
            NoiseKind::Gaussian => self.normal().cdf(x),
        }
    }

    /// Survival function `1 − F(x)`, accurate in the right tail.
    pub fn sf(&self, x: f64) -> f64 {
        match self.kind {
            NoiseKind::Laplace => {
                if x >= 0.0 {
                    0.5 * (-x / self.scale).exp()
                } else {
                    1.0 - 0.5 * (x / self.scale).exp()
                }
            }
            NoiseKind::Gaussian => self.normal().sf(x),
        }
    }

    fn check_unit(u: f64) -> Result<()> {
        if u > 0.0 && u < 1.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "probability must lie in (0, 1), got {u}"
            )))
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        Self::check_unit(u)?;
        Ok(self.quantile_unchecked(u))
    }

    /// Inverse of [`sf`](Self::sf): the `x` with `1 − F(x) = s`.
    pub fn inverse_sf(&self, s: f64) -> Result<f64> {
        Self::check_unit(s)?;
        Ok(-self.quantile_unchecked(s))
    }

    fn quantile_unchecked(&self, u: f64) -> f64 {
        match self.kind {
            NoiseKind::Laplace => {
                if u <= 0.5 {
                    self.scale * (2.0 * u).ln()
                } else {
                    -self.scale * (2.0 * (1.0 - u)).ln()
                }
            }
            NoiseKind::Gaussian => self.normal().inverse_cdf(u),
        }
    }

    /// One draw by inverse-CDF transform of an open-unit uniform.
    pub fn sample(&self, rng: &mut RandomStream) -> f64 {
        self.quantile_unchecked(rng.open01())
    }

    /// Closed-form `E|ε|^m`.
    pub fn abs_moment(&self, m: u32) -> f64 {
        let s = self.scale.powi(m as i32);
        match self.kind {
            NoiseKind::Laplace => factorial(m) * s,
            NoiseKind::Gaussian => {
                let base = if m == 0 { 1.0 } else { double_factorial(m - 1) };
                let odd = if m % 2 == 1 {
                    (2.0 / std::f64::consts::PI).sqrt()
                } else {
                    1.0
                };
                base * odd * s
            }
        }
    }

    /// Compares `E|ε|^m` with `m!·c^(m−2)` for `m = 3..=m_max`.
    pub fn bernstein_report(&self, m_max: u32) -> Result<BernsteinReport> {
        if !(3..=20).contains(&m_max) {
            return Err(Error::Config(format!(
                "m_max must lie in 3..=20, got {m_max}"
            )));
        }
        let c = self.bernstein_c;
        let rows = (3..=m_max)
            .map(|m| {
                let abs_moment = self.abs_moment(m);
                let bound = factorial(m) * c.powi(m as i32 - 2);
                // Relative slack for rounding when the bound is attained exactly.
                let holds = abs_moment <= bound * (1.0 + 1e-12);
                BernsteinRow {
                    m,
                    abs_moment,
                    bound,
                    holds,
                }
            })
            .collect();
        Ok(BernsteinReport { c, rows })
    }

    /// `sup_x F(x+τ)/F(x)` when it is finite.
    pub fn tail_ratio_sup(&self, tau: f64) -> Option<f64> {
        match self.kind {
            NoiseKind::Laplace => Some((tau / self.scale).exp()),
            NoiseKind::Gaussian => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap() -> NoiseModel {
        NoiseModel::laplace(1.0).unwrap()
    }

    fn gauss(s: f64) -> NoiseModel {
        NoiseModel::gaussian(s).unwrap()
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn density_examples() {
        assert_eq!(lap().density(0.0), 0.5);
        for a in [0.1, 1.0, 3.7, 12.0] {
            assert_eq!(lap().density(-a), lap().density(a));
        }
        let expect = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((gauss(1.0).density(0.0) - expect).abs() < 1e-15);
        assert!((gauss(1.0).density(0.0) - 0.3989422804).abs() < 1e-10);
    }

    #[test]
    fn density_integrates_to_one() {
        for m in [
            lap(),
            gauss(1.0),
            gauss(2.0),
            NoiseModel::laplace(0.5).unwrap(),
        ] {
            // the Laplace kink sits on a grid node, so Simpson stays accurate
            let total = simpson(|x| m.density(x), -50.0, 50.0, 200_000);
            assert!((total - 1.0).abs() < 1e-6, "{m:?}: {total}");
        }
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(lap().cdf(0.0), 0.5);
        assert!((lap().cdf(-std::f64::consts::LN_2) - 0.25).abs() < 1e-15);
        assert!((gauss(1.0).cdf(40.0) - 1.0).abs() < 1e-12);
        assert!(gauss(1.0).cdf(-40.0) < 1e-12);
        for x in [-5.0, -1.0, -0.1] {
            assert!((lap().cdf(x) - x.exp() / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(lap().quantile(0.5).unwrap(), 0.0);
        assert!((lap().quantile(0.25).unwrap() + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(gauss(2.0).quantile(0.5).unwrap().abs() < 1e-12);
        for u in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(lap().quantile(u), Err(Error::Domain(_))));
            assert!(matches!(gauss(1.0).quantile(u), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn cdf_of_quantile_is_identity() {
        for m in [lap(), gauss(1.0), gauss(2.0)] {
            for i in 1..1000 {
                let u = i as f64 / 1000.0;
                assert!((m.cdf(m.quantile(u).unwrap()) - u).abs() < 1e-9);
            }
        }
    }

    // F(x) near 1 carries only ~1e-16 absolute precision, so the right half
    // of the grid goes through the survival function instead.
    #[test]
    fn quantile_of_cdf_is_identity_on_grid() {
        for m in [lap(), gauss(1.0)] {
            for i in 0..1000 {
                let x = -20.0 + 40.0 * i as f64 / 999.0;
                let back = if x <= 0.0 {
                    m.quantile(m.cdf(x)).unwrap()
                } else {
                    m.inverse_sf(m.sf(x)).unwrap()
                };
                assert!((back - x).abs() < 1e-9, "{m:?} x={x} back={back}");
            }
        }
    }

    #[test]
    fn sampling_moments_and_ks() {
        let m = lap();
        let mut rng = RandomStream::new(2024);
        let n = 1_000_000;
        let mut xs: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 2.0).abs() < 0.05, "var {var}");

        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = m.cdf(x);
                (f - i as f64 / n as f64)
                    .abs()
                    .max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks <= 0.002, "ks {ks}");
    }

    #[test]
    fn gaussian_ks() {
        let m = gauss(1.0);
        let mut rng = RandomStream::new(5);
        let n = 1_000_000;
        let mut xs: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = m.cdf(x);
                (f - i as f64 / n as f64)
                    .abs()
                    .max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks <= 0.002, "ks {ks}");
    }

    #[test]
    fn seeded_draws_repeat() {
        let m = lap();
        let mut a = RandomStream::new(9);
        let mut b = RandomStream::new(9);
        for _ in 0..100 {
            assert_eq!(m.sample(&mut a).to_bits(), m.sample(&mut b).to_bits());
        }
    }

    #[test]
    fn bernstein_defaults() {
        let r = lap().bernstein_report(20).unwrap();
        assert_eq!(r.c, 1.0);
        assert!(r.all_hold());
        assert_eq!(r.rows[0].m, 3);
        assert!((r.rows[0].abs_moment - 6.0).abs() < 1e-12);

        let g = gauss(1.0).bernstein_report(20).unwrap();
        assert_eq!(g.c, 2.0);
        assert!(g.all_hold());
        assert!(g.rows.iter().take(8).all(|r| r.holds));

        // defaults remain valid witnesses away from unit scale
        for s in [0.3, 2.0, 5.0] {
            assert!(NoiseModel::laplace(s)
                .unwrap()
                .bernstein_report(20)
                .unwrap()
                .all_hold());
            assert!(NoiseModel::gaussian(s)
                .unwrap()
                .bernstein_report(20)
                .unwrap()
                .all_hold());
        }
    }

    #[test]
    fn bernstein_flags_bad_witness() {
        let m = NoiseModel::laplace(2.0)
            .unwrap()
            .with_bernstein_c(2.0)
            .unwrap();
        let r = m.bernstein_report(10).unwrap();
        assert!(!r.all_hold());
        assert_eq!(r.failures().count(), 8);
        assert!(lap().bernstein_report(2).is_err());
        assert!(lap().bernstein_report(21).is_err());
    }

    #[test]
    fn gaussian_moments_match_quadrature() {
        let g = gauss(1.0);
        for m in 1..=8u32 {
            let q = simpson(
                |x| x.abs().powi(m as i32) * g.density(x),
                -40.0,
                40.0,
                100_000,
            );
            assert!((q - g.abs_moment(m)).abs() < 1e-8 * q.max(1.0), "m={m}");
        }
    }

    #[test]
    fn rejects_bad_scale() {
        assert!(NoiseModel::laplace(0.0).is_err());
        assert!(NoiseModel::gaussian(-1.0).is_err());
        assert!(NoiseModel::laplace(f64::INFINITY).is_err());
    }

    #[test]
    fn serde_roundtrip_and_default_c() {
        let m: NoiseModel = serde_json::from_str(r#"{"kind":"laplace","scale":1.0}"#).unwrap();
        assert_eq!(m, lap());
        let s = serde_json::to_string(&gauss(1.0)).unwrap();
        let back: NoiseModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, gauss(1.0));
        assert!(serde_json::from_str::<NoiseModel>(r#"{"kind":"laplace","scale":-1}"#).is_err());
    }

    #[test]
    fn tail_ratio() {
        assert!((lap().tail_ratio_sup(2.0).unwrap() - 2f64.exp()).abs() < 1e-12);
        assert!(gauss(1.0).tail_ratio_sup(1.0).is_none());
    }
}
