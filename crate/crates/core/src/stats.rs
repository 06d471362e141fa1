//! Weighted summaries of particle populations and MCMC draws.

use serde::{Deserialize, Serialize};

/// `ln sum exp(x_i)`, ignoring `-inf` terms; `-inf` when all terms are.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Rescales nonnegative weights to sum to one.
pub fn normalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
}

/// Weights `exp(l_i - LSE(l))`, summing to one.
pub fn normalize_log(log_weights: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_weights);
    let mut w: Vec<f64> = log_weights.iter().map(|l| (l - lse).exp()).collect();
    // the exponentials sum to 1 only up to rounding
    normalize(&mut w);
    w
}

pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    values.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / total
}

/// Reliability-weighted standard deviation `sqrt(sum w (x - m)^2 / (1 - sum w^2))`
/// with weights normalized to one; reduces to the usual `n - 1` estimator for
/// equal weights.
pub fn weighted_sd(values: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    let m = weighted_mean(values, weights);
    let mut ss = 0.0;
    let mut w2 = 0.0;
    for (x, w) in values.iter().zip(weights) {
        let w = w / total;
        ss += w * (x - m) * (x - m);
        w2 += w * w;
    }
    let denom = 1.0 - w2;
    if denom <= 0.0 {
        0.0
    } else {
        (ss / denom).sqrt()
    }
}

/// Smallest value whose cumulative weight reaches `level`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], level: f64) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    weighted_quantile_sorted(values, weights, &order, level)
}

fn weighted_quantile_sorted(values: &[f64], weights: &[f64], order: &[usize], level: f64) -> f64 {
    let total: f64 = weights.iter().sum();
    let target = level * total;
    let mut acc = 0.0;
    for &i in order {
        acc += weights[i];
        if acc >= target * (1.0 - 1e-12) {
            return values[i];
        }
    }
    values[*order.last().expect("nonempty")]
}

/// Posterior mean with the 2.5%, 50% and 97.5% quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
}

impl Interval {
    pub fn weighted(values: &[f64], weights: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        Self {
            mean: weighted_mean(values, weights),
            q025: weighted_quantile_sorted(values, weights, &order, 0.025),
            q500: weighted_quantile_sorted(values, weights, &order, 0.5),
            q975: weighted_quantile_sorted(values, weights, &order, 0.975),
        }
    }

    pub fn unweighted(values: &[f64]) -> Self {
        Self::weighted(values, &vec![1.0; values.len()])
    }

    pub fn width(&self) -> f64 {
        self.q975 - self.q025
    }

    pub fn contains(&self, x: f64) -> bool {
        self.q025 <= x && x <= self.q975
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        let w = normalize_log(&[-800.0, -800.0 + 3f64.ln()]);
        assert!((w[0] - 0.25).abs() < 1e-12 && (w[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn weighted_reduces_to_unweighted() {
        let x = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let w = [0.125; 8];
        let m = x.iter().sum::<f64>() / 8.0;
        let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 7.0;
        assert!((weighted_mean(&x, &w) - m).abs() < 1e-15);
        assert!((weighted_sd(&x, &w) - var.sqrt()).abs() < 1e-14);
        // ceil(0.5 * 8) = 4th order statistic
        assert_eq!(weighted_quantile(&x, &w, 0.5), 3.0);
        assert_eq!(weighted_quantile(&x, &w, 1.0), 9.0);
        assert_eq!(weighted_quantile(&x, &w, 0.0), 1.0);
    }

    #[test]
    fn two_point_mean() {
        let i = Interval::weighted(&[0.2, 0.4], &[0.5, 0.5]);
        assert!((i.mean - 0.3).abs() < 1e-15);
        assert!(i.contains(i.mean));
    }

    #[test]
    fn identical_values_have_zero_width() {
        let i = Interval::unweighted(&[0.7; 10]);
        assert_eq!(i.width(), 0.0);
        assert!((i.mean - 0.7).abs() < 1e-15);
        assert_eq!(weighted_sd(&[0.7; 10], &[0.1; 10]), 0.0);
    }
}
