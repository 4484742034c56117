//! Small numeric helpers shared across the crate.

use crate::error::{Error, Result};

/// Arithmetic mean. Empty input returns NaN; callers validate emptiness.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divides by n).
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Type-7 (linear interpolation) quantile of an unsorted sample.
/// `q` must lie in [0, 1].
pub fn quantile(xs: &[f64], q: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("quantile of empty sample"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "quantile level {q} outside [0, 1]"
        )));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Least-squares slope of ln(y) against ln(x).
///
/// Returns None when any coordinate is non-positive (the log is undefined),
/// which callers treat as "rate not identifiable" rather than an error.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    if xs.iter().chain(ys.iter()).any(|&v| v <= 0.0) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = mean(&lx);
    let my = mean(&ly);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Piecewise-linear interpolation of `(xs, ys)` at `x`, clamping to the end
/// values outside the x-range. `xs` must be sorted nondecreasing.
pub fn interp_clamped(xs: &[f64], ys: &[f64], x: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("interpolation over empty table"));
    }
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            left: xs.len(),
            right: ys.len(),
            context: "interpolation coordinates",
        });
    }
    if x <= xs[0] {
        return Ok(ys[0]);
    }
    if x >= xs[xs.len() - 1] {
        return Ok(ys[ys.len() - 1]);
    }
    // First index with xs[i] >= x; i >= 1 because x > xs[0].
    let i = xs.partition_point(|&v| v < x);
    let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
    if x1 == x0 {
        return Ok(y1);
    }
    Ok(y0 + (x - x0) / (x1 - x0) * (y1 - y0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_variance() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert!((variance(&[1.0, 2.0, 3.0]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(variance(&[4.0, 4.0]), 0.0);
    }

    #[test]
    fn quantile_matches_linear_interpolation() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&xs, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&xs, 1.0).unwrap(), 4.0);
        assert_eq!(quantile(&xs, 0.5).unwrap(), 2.5);
        assert!((quantile(&xs, 0.25).unwrap() - 1.75).abs() < 1e-15);
    }

    #[test]
    fn quantile_rejects_bad_level() {
        assert!(quantile(&[1.0], 1.5).is_err());
        assert!(quantile(&[], 0.5).is_err());
    }

    #[test]
    fn slope_of_exact_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        let s = log_log_slope(&xs, &ys).unwrap();
        assert!((s + 0.5).abs() < 1e-12);
    }

    #[test]
    fn slope_undefined_on_zeros() {
        assert_eq!(log_log_slope(&[1.0, 2.0], &[0.0, 1.0]), None);
    }

    #[test]
    fn interp_clamps_and_interpolates() {
        let xs = [0.0, 1.0, 3.0];
        let ys = [0.0, 10.0, 30.0];
        assert_eq!(interp_clamped(&xs, &ys, -1.0).unwrap(), 0.0);
        assert_eq!(interp_clamped(&xs, &ys, 5.0).unwrap(), 30.0);
        assert_eq!(interp_clamped(&xs, &ys, 2.0).unwrap(), 20.0);
        assert_eq!(interp_clamped(&xs, &ys, 1.0).unwrap(), 10.0);
    }
}
