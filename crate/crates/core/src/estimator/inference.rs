use nalgebra::DVector;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{QifError, Result};
use crate::model::LongitudinalDataset;

use super::solver::{effective_config, fit, minimize, FitOptions, FitResult};
use super::ExtendedScoreConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTestResult {
    /// `n{Q_n(restricted) − Q_n(unrestricted)}`, clamped at zero.
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub beta_restricted: DVector<f64>,
    pub beta_unrestricted: DVector<f64>,
    /// The raw difference was negative and has been set to zero.
    pub clamped: bool,
    pub restricted_converged: bool,
}

/// Profile χ² test of `β[constrained] = values`, fitting the unrestricted
/// model first.
pub fn profile_test(
    config: &ExtendedScoreConfig,
    dataset: &LongitudinalDataset,
    constrained: &[usize],
    values: &[f64],
    options: &FitOptions,
) -> Result<ProfileTestResult> {
    let unrestricted = fit(config, dataset, None, options)?;
    profile_test_from(&unrestricted, config, dataset, constrained, values, options)
}

/// As [`profile_test`] but reusing an existing unrestricted fit.
pub fn profile_test_from(
    unrestricted: &FitResult,
    config: &ExtendedScoreConfig,
    dataset: &LongitudinalDataset,
    constrained: &[usize],
    values: &[f64],
    options: &FitOptions,
) -> Result<ProfileTestResult> {
    let p = dataset.p();
    if constrained.is_empty() || constrained.len() > p || constrained.len() != values.len() {
        return Err(QifError::DimensionMismatch(format!(
            "{} constrained indices with {} values for p = {p}",
            constrained.len(),
            values.len()
        )));
    }
    let mut pinned = vec![false; p];
    for &k in constrained {
        if k >= p || pinned[k] {
            return Err(QifError::DimensionMismatch(format!(
                "constrained index {k} is out of range or repeated"
            )));
        }
        pinned[k] = true;
    }
    if !unrestricted.converged {
        return Err(QifError::NonConvergence {
            iterations: unrestricted.iterations,
        });
    }
    let config = effective_config(config, dataset, options)?;
    let mut start = unrestricted.beta_hat.clone();
    for (&k, &v) in constrained.iter().zip(values) {
        start[k] = v;
    }
    let free: Vec<usize> = (0..p).filter(|&k| !pinned[k]).collect();
    let restricted = minimize(&config, dataset, start, &free, options)?;
    let raw = dataset.n() as f64 * (restricted.objective - unrestricted.objective);
    let clamped = raw < 0.0;
    let statistic = raw.max(0.0);
    let df = constrained.len();
    let chi2 = ChiSquared::new(df as f64).expect("df >= 1");
    let p_value = if statistic == 0.0 {
        1.0
    } else {
        chi2.sf(statistic).clamp(0.0, 1.0)
    };
    Ok(ProfileTestResult {
        statistic,
        df,
        p_value,
        beta_restricted: restricted.beta_hat,
        beta_unrestricted: unrestricted.beta_hat.clone(),
        clamped,
        restricted_converged: restricted.converged,
    })
}

/// `β̂_j ± z_{1−α/2} · SE_j`.
pub fn wald_interval(result: &FitResult, index: usize, level: f64) -> (f64, f64) {
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let se = result.covariance[(index, index)].max(0.0).sqrt();
    let b = result.beta_hat[index];
    (b - z * se, b + z * se)
}

/// `Var_a(β̂_j) / Var_b(β̂_j)` from plug-in covariances.
pub fn relative_efficiency(a: &FitResult, b: &FitResult, index: usize) -> Result<f64> {
    let denom = b.covariance[(index, index)];
    if denom == 0.0 {
        return Err(QifError::DivisionByZero(format!(
            "variance of coefficient {index} is zero"
        )));
    }
    Ok(a.covariance[(index, index)] / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_basis, CorrelationStructure};
    use crate::estimator::test_support::random_dataset;
    use crate::model::MarginalModelSpec;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn result(beta: f64, var: f64) -> FitResult {
        FitResult {
            beta_hat: DVector::from_vec(vec![beta]),
            covariance: DMatrix::from_element(1, 1, var),
            objective: 0.0,
            iterations: 1,
            converged: true,
            gradient_norm: 0.0,
            weight_rank: 1,
            moment_dim: 1,
            n: 10,
        }
    }

    #[test]
    fn wald_interval_values() {
        let (lo, hi) = wald_interval(&result(0.5, 0.04 * 0.04), 0, 0.95);
        assert!((lo - 0.4216).abs() < 5e-5 && (hi - 0.5784).abs() < 5e-5);
        assert!((hi - 0.5 - 1.959964 * 0.04).abs() < 1e-7);
        assert_eq!(wald_interval(&result(0.3, 0.0), 0, 0.95), (0.3, 0.3));
    }

    #[test]
    fn relative_efficiency_cases() {
        let a = result(0.0, 2.0);
        assert_eq!(relative_efficiency(&a, &a, 0).unwrap(), 1.0);
        assert_eq!(relative_efficiency(&a, &result(0.0, 0.5), 0).unwrap(), 4.0);
        assert!(matches!(
            relative_efficiency(&a, &result(0.0, 0.0), 0),
            Err(QifError::DivisionByZero(_))
        ));
    }

    #[test]
    fn constraining_at_optimum_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let ds = random_dataset(&mut rng, 150, 3, 2, false);
        let cfg = ExtendedScoreConfig::qif(
            MarginalModelSpec::gaussian(),
            build_basis(CorrelationStructure::CompoundSymmetry, 3).unwrap(),
        );
        let opts = FitOptions::default();
        let u = fit(&cfg, &ds, None, &opts).unwrap();
        let t = profile_test_from(&u, &cfg, &ds, &[0], &[u.beta_hat[0]], &opts).unwrap();
        assert!(t.statistic < 1e-8, "{}", t.statistic);
        assert!(t.p_value > 0.999);
        assert_eq!(t.df, 1);
        // all coordinates pinned at the optimum
        let t = profile_test_from(&u, &cfg, &ds, &[0, 1], u.beta_hat.as_slice(), &opts).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn far_null_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let ds = random_dataset(&mut rng, 200, 3, 2, false);
        let cfg = ExtendedScoreConfig::qif(
            MarginalModelSpec::gaussian(),
            build_basis(CorrelationStructure::Ar1, 3).unwrap(),
        );
        let opts = FitOptions::default();
        let u = fit(&cfg, &ds, None, &opts).unwrap();
        let t = profile_test_from(&u, &cfg, &ds, &[1], &[u.beta_hat[1] + 2.0], &opts).unwrap();
        assert!(t.p_value < 1e-6);
        assert_eq!(t.beta_restricted[1], u.beta_hat[1] + 2.0);
    }

    #[test]
    fn bad_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let ds = random_dataset(&mut rng, 40, 3, 2, false);
        let cfg = ExtendedScoreConfig::qif(
            MarginalModelSpec::gaussian(),
            build_basis(CorrelationStructure::Independence, 3).unwrap(),
        );
        let opts = FitOptions::default();
        assert!(profile_test(&cfg, &ds, &[], &[], &opts).is_err());
        assert!(profile_test(&cfg, &ds, &[2], &[0.0], &opts).is_err());
        assert!(profile_test(&cfg, &ds, &[0, 0], &[0.0, 0.0], &opts).is_err());
        assert!(profile_test(&cfg, &ds, &[0], &[0.0, 1.0], &opts).is_err());
    }
}
