//! Small statistics helpers shared by the ensemble experiments.

use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

/// Run independent trials in parallel and return results in trial order.
///
/// Trial `i` must depend only on `(master seed, i)`, so the outcome is
/// identical for any worker count; aggregation happens on the ordered
/// output.
pub fn parallel_trials<T, F>(trials: u64, f: F) -> crate::Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> crate::Result<T> + Sync + Send,
{
    (0..trials)
        .into_par_iter()
        .map(f)
        .collect::<crate::Result<Vec<T>>>()
}

/// Exact (Clopper–Pearson) two-sided confidence interval for a binomial
/// proportion.
pub fn clopper_pearson(hits: u64, trials: u64, confidence: f64) -> (f64, f64) {
    assert!(trials > 0 && hits <= trials);
    assert!((0.0..1.0).contains(&(1.0 - confidence)));
    let alpha = 1.0 - confidence;
    let h = hits as f64;
    let n = trials as f64;
    let lo = if hits == 0 {
        0.0
    } else {
        Beta::new(h, n - h + 1.0).unwrap().inverse_cdf(alpha / 2.0)
    };
    let hi = if hits == trials {
        1.0
    } else {
        Beta::new(h + 1.0, n - h).unwrap().inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// Ordinary least squares for `y = a + b·x`; returns `(slope, intercept, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

/// Sample mean and standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Pearson correlation of two equal-length samples.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (slope, _, r2) = linear_fit(a, b);
    r2.sqrt().copysign(slope)
}
