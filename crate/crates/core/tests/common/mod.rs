//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

/// Double-exponential (tanh-sinh) quadrature on `(lo, hi)`.
pub fn de_finite<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    let half = 0.5 * (hi - lo);
    let h = 1.0 / 128.0;
    let mut total = 0.0;
    let mut k = -(6.0 / h) as i64;
    while (k as f64) * h <= 6.0 {
        let t = k as f64 * h;
        let u = FRAC_PI_2 * t.sinh();
        let w = FRAC_PI_2 * t.cosh() / u.cosh().powi(2);
        // 1 - |tanh u| without cancellation
        let d = half * 2.0 / ((2.0 * u.abs()).exp() + 1.0);
        let x = if u < 0.0 { lo + d } else { hi - d };
        if d > 0.0 && x > lo && x < hi {
            let v = f(x);
            if v.is_finite() {
                total += w * v;
            }
        }
        k += 1;
    }
    total * half * h
}

/// Double-exponential quadrature on `(0, inf)` via `x = exp(pi/2 sinh t)`.
pub fn de_half_line<F: Fn(f64) -> f64>(f: F) -> f64 {
    let h = 1.0 / 128.0;
    let mut total = 0.0;
    let mut k = -(5.0 / h) as i64;
    while (k as f64) * h <= 5.0 {
        let t = k as f64 * h;
        let x = (FRAC_PI_2 * t.sinh()).exp();
        if x > 0.0 && x.is_finite() {
            let v = f(x) * x * FRAC_PI_2 * t.cosh();
            if v.is_finite() {
                total += v;
            }
        }
        k += 1;
    }
    total * h
}

/// Gini estimate `E|X1 - X2| / (2 mean)` from draws, with a batch-means
/// standard error over 100 batches.
pub fn mc_gini(mut draws: Vec<f64>) -> (f64, f64) {
    fn gini_of(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(|a, b| a.total_cmp(b));
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        // E|X1 - X2| over distinct pairs
        let s: f64 = xs
            .iter()
            .enumerate()
            .map(|(i, x)| (2.0 * (i as f64 + 1.0) - n - 1.0) * x)
            .sum();
        let md = 2.0 * s / (n * (n - 1.0));
        md / (2.0 * mean)
    }
    let batches = 100;
    let size = draws.len() / batches;
    let per_batch: Vec<f64> = draws.chunks(size).map(|c| gini_of(c.to_vec())).collect();
    let m = per_batch.iter().sum::<f64>() / batches as f64;
    let var = per_batch.iter().map(|g| (g - m).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    let g = gini_of(std::mem::take(&mut draws));
    (g, (var / batches as f64).sqrt())
}
