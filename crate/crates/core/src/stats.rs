//! Weighted estimators, effective sample size and bootstrap errors.
//!
//! Log-weights are never exponentiated before shifting by their maximum.
//! All sums run in index order, so results do not depend on thread count.

use rand::Rng;

use crate::rng::stream_rng;

/// Default number of bootstrap resamples.
pub const DEFAULT_BOOTSTRAP: usize = 256;

/// `exp(log_w − max log_w)`; `−∞` maps to `0`. All zeros if every weight is `−∞`.
pub fn shifted_weights(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; log_weights.len()];
    }
    log_weights.iter().map(|lw| (lw - max).exp()).collect()
}

/// `log Σ exp(log_w)`.
pub fn log_sum_exp(log_weights: &[f64]) -> f64 {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + log_weights.iter().map(|lw| (lw - max).exp()).sum::<f64>().ln()
}

/// `(Σ w)² / Σ w²`.
pub fn effective_sample_size(log_weights: &[f64]) -> f64 {
    let w = shifted_weights(log_weights);
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|v| v * v).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Self-normalized weighted mean `Σ w O / Σ w` with plain (linear) weights.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let (num, den) = values.iter().zip(weights).fold(
        (0.0, 0.0),
        |(n, d), (v, w)| if *w == 0.0 { (n, d) } else { (n + w * v, d + w) },
    );
    num / den
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

/// Standard deviation of `statistic` over `n_boot` resamples (with replacement)
/// of `0..n`. The resampling stream is fixed by `seed`.
pub fn bootstrap_se(n: usize, n_boot: usize, seed: u64, mut statistic: impl FnMut(&[usize]) -> f64) -> f64 {
    let mut rng = stream_rng(seed, 0xB007_57A9);
    let mut idx = vec![0usize; n];
    let mut stats = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        for slot in idx.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        let v = statistic(&idx);
        if v.is_finite() {
            stats.push(v);
        }
    }
    if stats.len() < 2 {
        return f64::NAN;
    }
    variance(&stats).sqrt()
}

/// Mean of `values` and its bootstrap standard error.
pub fn mean_with_se(values: &[f64], n_boot: usize, seed: u64) -> (f64, f64) {
    let m = mean(values);
    let se = bootstrap_se(values.len(), n_boot, seed, |idx| {
        idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64
    });
    (m, se)
}

/// Weighted mean and its bootstrap standard error (samples and weights resampled jointly).
pub fn weighted_mean_with_se(values: &[f64], weights: &[f64], n_boot: usize, seed: u64) -> (f64, f64) {
    let m = weighted_mean(values, weights);
    let se = bootstrap_se(values.len(), n_boot, seed, |idx| {
        resampled_weighted_mean(values, weights, idx)
    });
    (m, se)
}

/// Weighted means of `a` and `b` over the same weighted samples, their
/// difference and the paired-bootstrap standard error of that difference.
pub fn paired_difference_with_se(a: &[f64], b: &[f64], weights: &[f64], n_boot: usize, seed: u64) -> (f64, f64) {
    let d = weighted_mean(b, weights) - weighted_mean(a, weights);
    let se = bootstrap_se(a.len(), n_boot, seed, |idx| {
        resampled_weighted_mean(b, weights, idx) - resampled_weighted_mean(a, weights, idx)
    });
    (d, se)
}

fn resampled_weighted_mean(values: &[f64], weights: &[f64], idx: &[usize]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for &i in idx {
        if weights[i] != 0.0 {
            num += weights[i] * values[i];
            den += weights[i];
        }
    }
    num / den
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Weighted `q`-quantile (`0 < q < 1`) of `values`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let total: f64 = order.iter().map(|&i| weights[i]).sum();
    let mut acc = 0.0;
    for &i in &order {
        acc += weights[i];
        if acc >= q * total {
            return values[i];
        }
    }
    order.last().map_or(f64::NAN, |&i| values[i])
}

/// Systematic resampling: `count` indices drawn proportionally to `weights`
/// with a single uniform offset from stream `(seed, 0x5E1EC7)`.
pub fn systematic_resample(weights: &[f64], count: usize, seed: u64) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let mut rng = stream_rng(seed, 0x5E_1EC7);
    let offset: f64 = rng.random::<f64>();
    let mut out = Vec::with_capacity(count);
    let mut acc = 0.0;
    let mut i = 0;
    for j in 0..count {
        let target = (j as f64 + offset) / count as f64 * total;
        while i + 1 < weights.len() && acc + weights[i] < target {
            acc += weights[i];
            i += 1;
        }
        out.push(i);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn resampling_follows_weights() {
        let idx = systematic_resample(&[0.0, 3.0, 1.0, 0.0], 400, 2);
        let ones = idx.iter().filter(|&&i| i == 1).count();
        assert_eq!(idx.len(), 400);
        assert!(idx.iter().all(|&i| i == 1 || i == 2));
        assert!((ones as i64 - 300).abs() <= 1);
    }

    #[test]
    fn ess_bounds() {
        assert_abs_diff_eq!(effective_sample_size(&[0.0; 10]), 10.0, epsilon = 1e-12);
        let lw = [0.0, f64::NEG_INFINITY, -1.0, -3.0];
        let ess = effective_sample_size(&lw);
        assert!(ess > 1.0 && ess < 3.0);
        assert_eq!(effective_sample_size(&[f64::NEG_INFINITY; 3]), 0.0);
    }

    #[test]
    fn shifted_weights_do_not_overflow() {
        let w = shifted_weights(&[1000.0, 999.0, f64::NEG_INFINITY]);
        assert_eq!(w[0], 1.0);
        assert_abs_diff_eq!(w[1], (-1.0f64).exp(), epsilon = 1e-15);
        assert_eq!(w[2], 0.0);
        assert_abs_diff_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn weighted_mean_ignores_zero_weights() {
        assert_abs_diff_eq!(weighted_mean(&[1.0, 3.0, f64::NAN], &[1.0, 1.0, 0.0]), 2.0);
    }

    #[test]
    fn bootstrap_se_matches_analytic_for_mean() {
        let values: Vec<f64> = (0..4000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
        let (_, se) = mean_with_se(&values, 400, 5);
        let analytic = (variance(&values) / values.len() as f64).sqrt();
        assert!((se / analytic - 1.0).abs() < 0.15, "se {se} analytic {analytic}");
    }

    #[test]
    fn fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, -1.0, -3.0, -5.0];
        let (s, c) = linear_fit(&x, &y);
        assert_abs_diff_eq!(s, -2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn quantile_of_uniform_weights() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(weighted_quantile(&v, &[1.0; 5], 0.5), 3.0);
        assert_eq!(weighted_quantile(&v, &[0.0, 0.0, 0.0, 0.0, 1.0], 0.5), 4.0);
    }
}
