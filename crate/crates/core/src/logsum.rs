//! Max-shifted log-sum-exp and softmax.

/// `ln Σ exp(x_i)`; `-inf` for an empty input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `mu ln Σ exp(x_i / mu)`. The maximum is subtracted before dividing by
/// `mu`, so small scales do not amplify the rounding error of large values.
pub fn scaled_log_sum(values: &[f64], mu: f64) -> f64 {
    let max = max_of(values);
    if !max.is_finite() {
        return max;
    }
    let scaled: Vec<f64> = values.iter().map(|v| (v - max) / mu).collect();
    max + mu * log_sum_exp(&scaled)
}

/// `ln` of the softmax of `x / mu`.
pub fn log_softmax(values: &[f64], mu: f64) -> Vec<f64> {
    let max = max_of(values);
    let scaled: Vec<f64> = values.iter().map(|v| (v - max) / mu).collect();
    let norm = log_sum_exp(&scaled);
    scaled.into_iter().map(|s| s - norm).collect()
}

/// Softmax of `x / mu`.
pub fn softmax(values: &[f64], mu: f64) -> Vec<f64> {
    let max = max_of(values);
    let weights: Vec<f64> = values.iter().map(|v| ((v - max) / mu).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_form_in_safe_range() {
        let v = [-3.0, -2.0, 0.5];
        let naive = v.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&v) - naive).abs() < 1e-14);
    }

    #[test]
    fn survives_tiny_scale() {
        let v = [-3.0, -2.0];
        let lse = scaled_log_sum(&v, 1e-4);
        assert!((lse - (-2.0)).abs() < 1e-8);
        let p = softmax(&v, 1e-4);
        assert_eq!(p[1], 1.0);
        assert_eq!(p[0], 0.0);
    }

    #[test]
    fn log_softmax_is_exact_for_ties_at_tiny_scale() {
        let lp = log_softmax(&[-3.0, -3.0, -3.5], 1e-4);
        assert_eq!(lp[0], -std::f64::consts::LN_2);
        assert_eq!(lp[1], -std::f64::consts::LN_2);
        assert!(lp[2] < -4000.0);
    }

    #[test]
    fn softmax_normalizes() {
        let p = softmax(&[1.0, 1.0, 1.0, 1.0], 1.0);
        assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-15));
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}
