//! Small numeric helpers shared across modules.
//!
//! Reductions that feed reported numbers are always performed in a fixed
//! sequential order so results are bit-identical for any rayon worker count.

/// Compensated (Neumaier) sum; order-sensitive but far more accurate than a
/// naive accumulation for long vectors.
pub fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
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

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    stable_sum(values.iter().copied()) / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    stable_sum(values.iter().map(|v| (v - m) * (v - m))) / (n - 1) as f64
}

/// Standard error of the sample mean.
pub fn std_error(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    (variance(values) / values.len() as f64).sqrt()
}

/// Fixed chunk length used when splitting path-indexed work across rayon.
/// Chunk boundaries depend only on the path count, never on worker count.
pub const PATH_CHUNK: usize = 2048;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_sum_matches_exact_small_case() {
        assert_eq!(stable_sum([1.0, 2.0, 3.0]), 6.0);
    }

    #[test]
    fn variance_of_constant_is_zero() {
        let v = vec![3.5; 100];
        assert_eq!(variance(&v), 0.0);
        assert_eq!(std_error(&v), 0.0);
    }

    #[test]
    fn mean_of_empty_is_nan() {
        assert!(mean(&[]).is_nan());
    }
}
