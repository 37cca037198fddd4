use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::model::{LongitudinalDataset, Subject};

use super::{SimulationDesign, TIME_POINTS};

/// Draws `design.n` subjects. Column 1 of each covariate matrix is the
/// time-varying `X_j1`, column 2 the subject-level `X_2` repeated per row.
pub fn generate_dataset<R: Rng + ?Sized>(design: &SimulationDesign, rng: &mut R) -> Result<LongitudinalDataset> {
    generate_subjects(design, design.n, rng)
}

pub(crate) fn generate_subjects<R: Rng + ?Sized>(
    design: &SimulationDesign,
    n: usize,
    rng: &mut R,
) -> Result<LongitudinalDataset> {
    let q = TIME_POINTS;
    let lx = design.sigma_x.cholesky(q)?;
    let ly = design.sigma_y.cholesky(q)?;
    let [b1, b2] = design.beta_true;
    let mut z = DVector::<f64>::zeros(q);
    let subjects = (0..n)
        .map(|_| {
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            let x1 = &lx * &z;
            let x2 = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            let e = &ly * &z;
            let y = DVector::from_fn(q, |j, _| b1 * x1[j] + b2 * x2 + e[j]);
            let x = DMatrix::from_fn(q, 2, |j, k| if k == 0 { x1[j] } else { x2 });
            Subject::new(y, x)
        })
        .collect();
    LongitudinalDataset::new(subjects)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{replication_rng, CorrelationSpec, CovStructure, StreamRole};
    use crate::stats::{mean_sd, pearson};

    #[test]
    fn shapes_and_structure() {
        let d = SimulationDesign {
            n: 50,
            ..Default::default()
        };
        let ds = generate_dataset(&d, &mut replication_rng(1, 0, StreamRole::Data)).unwrap();
        assert_eq!((ds.n(), ds.q(), ds.p()), (50, 3, 2));
        for s in ds.subjects() {
            let x2 = s.covariates[(0, 1)];
            assert!(x2 == 0.0 || x2 == 1.0);
            assert!((0..3).all(|j| s.covariates[(j, 1)] == x2));
        }
    }

    #[test]
    fn deterministic_for_fixed_stream() {
        let d = SimulationDesign {
            n: 20,
            ..Default::default()
        };
        let a = generate_dataset(&d, &mut replication_rng(9, 2, StreamRole::Data)).unwrap();
        let b = generate_dataset(&d, &mut replication_rng(9, 2, StreamRole::Data)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn independent_covariates_when_uncorrelated() {
        let d = SimulationDesign {
            n: 100_000,
            sigma_x: CorrelationSpec::new(CovStructure::CompoundSymmetry, 0.0),
            sigma_y: CorrelationSpec::new(CovStructure::CompoundSymmetry, 0.0),
            ..Default::default()
        };
        let ds = generate_dataset(&d, &mut replication_rng(3, 0, StreamRole::Data)).unwrap();
        let x11: Vec<f64> = ds.subjects().iter().map(|s| s.covariates[(0, 0)]).collect();
        let x21: Vec<f64> = ds.subjects().iter().map(|s| s.covariates[(1, 0)]).collect();
        let x2: Vec<f64> = ds.subjects().iter().map(|s| s.covariates[(0, 1)]).collect();
        assert!(pearson(&x11, &x2).abs() < 0.01);
        assert!(pearson(&x11, &x21).abs() < 0.01);
    }

    #[test]
    fn conditional_mean_given_x2() {
        let d = SimulationDesign {
            n: 1_000_000,
            ..Default::default()
        };
        let ds = generate_dataset(&d, &mut replication_rng(11, 0, StreamRole::Data)).unwrap();
        for j in 0..3 {
            let ys: Vec<f64> = ds
                .subjects()
                .iter()
                .filter(|s| s.covariates[(0, 1)] == 1.0)
                .map(|s| s.response[j])
                .collect();
            let (m, sd) = mean_sd(&ys);
            let mc_se = sd.unwrap() / (ys.len() as f64).sqrt();
            assert!((m + 0.5).abs() < 3.0 * mc_se, "j = {j}: {m}");
        }
    }
}
