//! Small numeric helpers shared across modules.

/// Formats a real with 17 significant digits, enough to round-trip any f64.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Median of a slice; the mean of the two central values for even lengths.
/// Returns NaN on empty input.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `⌈α·n⌉`, robust to α·n landing a rounding error above an integer.
pub fn ceil_fraction(alpha: f64, n: usize) -> usize {
    let raw = alpha * n as f64;
    let nearest = raw.round();
    if (raw - nearest).abs() <= 1e-9 * raw.abs().max(1.0) {
        nearest as usize
    } else {
        raw.ceil() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_roundtrips() {
        for x in [
            0.25,
            -2.0,
            1e-300,
            std::f64::consts::PI,
            123456.789e10,
            -0.0,
        ] {
            let s = fmt_real(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt_real(f64::NAN), "nan");
    }

    #[test]
    fn compensated_beats_naive() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn ceil_fraction_cases() {
        assert_eq!(ceil_fraction(0.3, 100), 30);
        assert_eq!(ceil_fraction(0.1, 40), 4);
        assert_eq!(ceil_fraction(0.1, 41), 5);
        assert_eq!(ceil_fraction(0.3, 10), 3);
        assert_eq!(ceil_fraction(0.49, 3), 2);
    }
}
