//! Error statistics: pairwise sums, RMSE, inter-quartile cleaning, ECDF.

/// Pairwise (cascade) summation; the result depends only on the order of `v`.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Root mean square of `errors`; `NaN` for an empty slice.
pub fn rmse(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return f64::NAN;
    }
    let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
    (pairwise_sum(&sq) / errors.len() as f64).sqrt()
}

/// Quantile with linear interpolation between order statistics of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Keeps samples inside `[Q1 − 1.5 IQR, Q3 + 1.5 IQR]`, in their original order.
pub fn iqr_clean(samples: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    samples.iter().copied().filter(|v| (lo..=hi).contains(v)).collect()
}

/// RMSE of the cleaned absolute errors.
pub fn rmse_clean(errors: &[f64]) -> f64 {
    let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    rmse(&iqr_clean(&abs))
}

/// Empirical CDF as sorted sample values with their cumulative probabilities.
pub fn ecdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.into_iter().enumerate().map(|(i, v)| (v, (i + 1) as f64 / n)).collect()
}

/// `P(X ≤ x)` under the empirical distribution.
pub fn ecdf_at(samples: &[f64], x: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    samples.iter().filter(|v| **v <= x).count() as f64 / samples.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
    }

    #[test]
    fn rmse_of_constant() {
        assert!((rmse(&[2.0, -2.0, 2.0]) - 2.0).abs() < 1e-15);
        assert!(rmse(&[]).is_nan());
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&s, 0.25), 2.0);
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0], 0.5), 1.5);
    }

    #[test]
    fn outlier_removed() {
        let v = [1.0, 1.1, 0.9, 1.05, 0.95, 50.0];
        let c = iqr_clean(&v);
        assert_eq!(c.len(), 5);
        assert!(!c.contains(&50.0));
        assert!(rmse_clean(&v) <= rmse(&v));
    }

    #[test]
    fn ecdf_limits() {
        let v = [3.0, 1.0, 2.0];
        let e = ecdf(&v);
        assert_eq!(e.last().unwrap().1, 1.0);
        assert_eq!(ecdf_at(&v, 0.5), 0.0);
        assert_eq!(ecdf_at(&v, 3.0), 1.0);
    }
}
