//! Small distribution utilities used by the Monte Carlo harness.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Quantile of the χ² distribution with `df` degrees of freedom.
pub fn chi2_quantile(prob: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("df > 0").inverse_cdf(prob)
}

pub fn chi2_cdf(x: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("df > 0").cdf(x)
}

/// Plotting positions `(i − 0.5)/m` for `i = 1..m`.
pub fn plotting_positions(m: usize) -> impl Iterator<Item = f64> {
    (1..=m).map(move |i| (i as f64 - 0.5) / m as f64)
}

/// Sorted sample paired with χ²_df quantiles at the plotting positions.
pub fn chi2_qq_pairs(sample: &[f64], df: f64) -> Vec<(f64, f64)> {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    plotting_positions(sorted.len())
        .zip(sorted)
        .map(|(p, s)| (chi2_quantile(p, df), s))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF, with the
/// asymptotic p-value (Stephens' small-sample correction to `λ`).
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let m = sample.len();
    if m == 0 {
        return KsResult {
            statistic: 0.0,
            p_value: 1.0,
        };
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mf = m as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / mf).max((i + 1) as f64 / mf - f)
        })
        .fold(0.0, f64::max);
    let sqrt_m = mf.sqrt();
    let lambda = (sqrt_m + 0.12 + 0.11 / sqrt_m) * statistic;
    KsResult {
        statistic,
        p_value: kolmogorov_sf(lambda),
    }
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson correlation; `NaN` when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Sample mean and standard deviation (divisor `m − 1`); the SD is `None`
/// for fewer than two values.
pub fn mean_sd(values: &[f64]) -> (f64, Option<f64>) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, None);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, Some((ss / (m - 1.0)).sqrt()))
}
