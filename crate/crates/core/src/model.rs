//! Marginal mean and variance model for balanced longitudinal data.
//!
//! Each subject contributes a response vector of length `q` and a `q × p`
//! covariate matrix. The mean of the `j`th response is `h⁻¹(x_jᵀβ)` and its
//! variance is `ψ·v(μ_j)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{QifError, Result};

/// Linear predictors beyond this magnitude are clamped before the inverse logit.
pub const LOGIT_ETA_CLAMP: f64 = 30.0;
/// Bernoulli means are clamped to `[MU_CLAMP, 1 - MU_CLAMP]` before inverting the variance.
pub const MU_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub response: DVector<f64>,
    pub covariates: DMatrix<f64>,
}

impl Subject {
    pub fn new(response: DVector<f64>, covariates: DMatrix<f64>) -> Self {
        Self { response, covariates }
    }

    pub fn q(&self) -> usize {
        self.response.len()
    }
}

/// A balanced panel of `n` independent subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    subjects: Vec<Subject>,
    q: usize,
    p: usize,
}

impl LongitudinalDataset {
    pub fn new(subjects: Vec<Subject>) -> Result<Self> {
        let first = subjects.first().ok_or(QifError::EmptyDataset)?;
        let q = first.response.len();
        let p = first.covariates.ncols();
        if q == 0 || p == 0 {
            return Err(QifError::InvalidDataset(format!(
                "q and p must be positive (q={q}, p={p})"
            )));
        }
        for (i, s) in subjects.iter().enumerate() {
            if s.response.len() != q || s.covariates.nrows() != q || s.covariates.ncols() != p {
                return Err(QifError::InvalidDataset(format!(
                    "subject {i} has response length {} and covariates {}x{}, expected {q} and {q}x{p}",
                    s.response.len(),
                    s.covariates.nrows(),
                    s.covariates.ncols()
                )));
            }
            if s.response.iter().chain(s.covariates.iter()).any(|v| !v.is_finite()) {
                return Err(QifError::InvalidDataset(format!("subject {i} has non-finite entries")));
            }
        }
        Ok(Self { subjects, q, p })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn into_subjects(self) -> Vec<Subject> {
        self.subjects
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Subset by subject indices, preserving the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let subjects = indices
            .iter()
            .map(|&i| {
                self.subjects
                    .get(i)
                    .cloned()
                    .ok_or_else(|| QifError::InvalidDataset(format!("subject index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(subjects)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Identity,
    Logit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceFunction {
    Constant,
    Bernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalModelSpec {
    link: Link,
    variance: VarianceFunction,
    dispersion: f64,
}

impl MarginalModelSpec {
    pub fn new(link: Link, variance: VarianceFunction, dispersion: f64) -> Result<Self> {
        match (link, variance) {
            (Link::Identity, VarianceFunction::Constant) | (Link::Logit, VarianceFunction::Bernoulli) => {}
            _ => {
                return Err(QifError::InvalidModel(format!(
                    "link {link:?} cannot be paired with variance {variance:?}"
                )))
            }
        }
        if !(dispersion > 0.0 && dispersion.is_finite()) {
            return Err(QifError::InvalidModel(format!(
                "dispersion must be positive, got {dispersion}"
            )));
        }
        Ok(Self {
            link,
            variance,
            dispersion,
        })
    }

    /// Gaussian working model: identity link, constant variance, ψ = 1.
    pub fn gaussian() -> Self {
        Self {
            link: Link::Identity,
            variance: VarianceFunction::Constant,
            dispersion: 1.0,
        }
    }

    /// Bernoulli working model: logit link, `μ(1-μ)` variance, ψ = 1.
    pub fn bernoulli() -> Self {
        Self {
            link: Link::Logit,
            variance: VarianceFunction::Bernoulli,
            dispersion: 1.0,
        }
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn variance(&self) -> VarianceFunction {
        self.variance
    }

    pub fn dispersion(&self) -> f64 {
        self.dispersion
    }

    /// `h⁻¹(η)`.
    pub fn inverse_link(&self, eta: f64) -> f64 {
        match self.link {
            Link::Identity => eta,
            Link::Logit => {
                let eta = eta.clamp(-LOGIT_ETA_CLAMP, LOGIT_ETA_CLAMP);
                1.0 / (1.0 + (-eta).exp())
            }
        }
    }

    /// `dh⁻¹/dη`.
    pub fn inverse_link_derivative(&self, eta: f64) -> f64 {
        match self.link {
            Link::Identity => 1.0,
            Link::Logit => {
                let mu = self.inverse_link(eta);
                mu * (1.0 - mu)
            }
        }
    }

    /// `d²h⁻¹/dη²`.
    pub fn inverse_link_second_derivative(&self, eta: f64) -> f64 {
        match self.link {
            Link::Identity => 0.0,
            Link::Logit => {
                let mu = self.inverse_link(eta);
                mu * (1.0 - mu) * (1.0 - 2.0 * mu)
            }
        }
    }

    /// `d/dμ (ψ v(μ))^{-1/2}`, zero where `μ` is clamped.
    pub fn inv_sqrt_variance_derivative(&self, mu: f64) -> f64 {
        match self.variance {
            VarianceFunction::Constant => 0.0,
            VarianceFunction::Bernoulli => {
                if !(MU_CLAMP..=1.0 - MU_CLAMP).contains(&mu) {
                    return 0.0;
                }
                -0.5 * self.inv_sqrt_variance(mu) * (1.0 - 2.0 * mu) / (mu * (1.0 - mu))
            }
        }
    }

    /// Whether the score weights depend on `β` beyond `μ̇` (non-identity link
    /// or non-constant variance).
    pub(crate) fn is_curved(&self) -> bool {
        self.link != Link::Identity || self.variance != VarianceFunction::Constant
    }

    /// `(ψ v(μ))^{-1/2}`.
    pub fn inv_sqrt_variance(&self, mu: f64) -> f64 {
        let v = match self.variance {
            VarianceFunction::Constant => 1.0,
            VarianceFunction::Bernoulli => {
                let mu = mu.clamp(MU_CLAMP, 1.0 - MU_CLAMP);
                mu * (1.0 - mu)
            }
        };
        1.0 / (self.dispersion * v).sqrt()
    }
}

impl Default for MarginalModelSpec {
    fn default() -> Self {
        Self::gaussian()
    }
}

pub(crate) fn linear_predictor(subject: &Subject, beta: &DVector<f64>) -> DVector<f64> {
    &subject.covariates * beta
}

/// `μ_i(β)`, componentwise `h⁻¹(x_ijᵀβ)`.
pub fn mean_vector(spec: &MarginalModelSpec, subject: &Subject, beta: &DVector<f64>) -> DVector<f64> {
    linear_predictor(subject, beta).map(|eta| spec.inverse_link(eta))
}

/// `μ̇_i = ∂μ_i/∂βᵀ`, a `q × p` matrix whose row `j` is `h⁻¹'(η_ij)·x_ijᵀ`.
pub fn mean_derivative(spec: &MarginalModelSpec, subject: &Subject, beta: &DVector<f64>) -> DMatrix<f64> {
    match spec.link {
        Link::Identity => subject.covariates.clone(),
        Link::Logit => {
            let eta = linear_predictor(subject, beta);
            let mut d = subject.covariates.clone();
            for (j, mut row) in d.row_iter_mut().enumerate() {
                row *= spec.inverse_link_derivative(eta[j]);
            }
            d
        }
    }
}

/// `A_i^{-1/2}` as a diagonal matrix.
pub fn variance_inv_sqrt(spec: &MarginalModelSpec, subject: &Subject, beta: &DVector<f64>) -> DMatrix<f64> {
    let mu = mean_vector(spec, subject, beta);
    DMatrix::from_diagonal(&mu.map(|m| spec.inv_sqrt_variance(m)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn subject(rows: &[&[f64]]) -> Subject {
        let q = rows.len();
        let p = rows[0].len();
        let x = DMatrix::from_fn(q, p, |i, j| rows[i][j]);
        Subject::new(DVector::zeros(q), x)
    }

    #[test]
    fn identity_mean_is_linear() {
        let s = subject(&[&[1.0, 2.0]]);
        let mu = mean_vector(&MarginalModelSpec::gaussian(), &s, &DVector::from_vec(vec![0.5, -0.5]));
        assert_eq!(mu.as_slice(), &[-0.5]);
    }

    #[test]
    fn simulation_design_mean_at_truth() {
        let s = subject(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]);
        let mu = mean_vector(&MarginalModelSpec::gaussian(), &s, &DVector::from_vec(vec![0.5, -0.5]));
        assert!(mu.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn logit_mean_at_zero_is_half() {
        let s = subject(&[&[0.0, 0.0]]);
        let mu = mean_vector(&MarginalModelSpec::bernoulli(), &s, &DVector::from_vec(vec![3.0, -7.0]));
        assert_eq!(mu[0], 0.5);
    }

    #[test]
    fn logit_mean_clamped_in_open_interval() {
        let s = subject(&[&[1.0]]);
        let spec = MarginalModelSpec::bernoulli();
        let hi = mean_vector(&spec, &s, &DVector::from_vec(vec![1e6]))[0];
        let lo = mean_vector(&spec, &s, &DVector::from_vec(vec![-1e6]))[0];
        assert!(hi < 1.0 && lo > 0.0);
    }

    #[test]
    fn identity_derivative_is_covariates() {
        let s = subject(&[&[1.0, 2.0], &[3.0, -4.0]]);
        let d = mean_derivative(&MarginalModelSpec::gaussian(), &s, &DVector::from_vec(vec![0.1, 0.2]));
        assert_eq!(d, s.covariates);
    }

    #[test]
    fn logit_derivative_zero_covariates() {
        let s = subject(&[&[0.0, 0.0]]);
        let d = mean_derivative(&MarginalModelSpec::bernoulli(), &s, &DVector::from_vec(vec![1.0, 1.0]));
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn logit_derivative_matches_finite_difference_at_zero() {
        let s = subject(&[&[1.0]]);
        let spec = MarginalModelSpec::bernoulli();
        let h = 1e-6;
        let up = mean_vector(&spec, &s, &DVector::from_vec(vec![h]))[0];
        let dn = mean_vector(&spec, &s, &DVector::from_vec(vec![-h]))[0];
        let fd = (up - dn) / (2.0 * h);
        assert_relative_eq!(fd, 0.25, max_relative = 1e-8);
        let d = mean_derivative(&spec, &s, &DVector::from_vec(vec![0.0]));
        assert_eq!(d[(0, 0)], 0.25);
    }

    #[test]
    fn variance_weights() {
        let s = subject(&[&[1.0], &[2.0]]);
        let w = variance_inv_sqrt(&MarginalModelSpec::gaussian(), &s, &DVector::from_vec(vec![3.0]));
        assert_eq!(w, DMatrix::identity(2, 2));

        let spec = MarginalModelSpec::bernoulli();
        let half = subject(&[&[0.0]]);
        assert_eq!(
            variance_inv_sqrt(&spec, &half, &DVector::from_vec(vec![1.0]))[(0, 0)],
            2.0
        );
        // μ = 0.9 at η = ln 9
        let nine = subject(&[&[1.0]]);
        let w = variance_inv_sqrt(&spec, &nine, &DVector::from_vec(vec![9f64.ln()]))[(0, 0)];
        assert_relative_eq!(w, 0.09f64.powf(-0.5), max_relative = 1e-12);
        assert_relative_eq!(w, 10.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_mismatched_link_and_variance() {
        assert!(MarginalModelSpec::new(Link::Identity, VarianceFunction::Bernoulli, 1.0).is_err());
        assert!(MarginalModelSpec::new(Link::Logit, VarianceFunction::Bernoulli, 0.0).is_err());
        assert!(MarginalModelSpec::new(Link::Logit, VarianceFunction::Bernoulli, 2.0).is_ok());
    }

    #[test]
    fn dataset_validation() {
        let good = Subject::new(DVector::zeros(2), DMatrix::zeros(2, 3));
        let bad = Subject::new(DVector::zeros(3), DMatrix::zeros(3, 3));
        assert!(LongitudinalDataset::new(vec![good.clone(), bad]).is_err());
        assert_eq!(LongitudinalDataset::new(vec![]), Err(QifError::EmptyDataset));
        let mut nan = good.clone();
        nan.response[0] = f64::NAN;
        assert!(LongitudinalDataset::new(vec![good.clone(), nan]).is_err());
        let ds = LongitudinalDataset::new(vec![good.clone(), good]).unwrap();
        assert_eq!((ds.n(), ds.q(), ds.p()), (2, 2, 3));
    }

    fn arb_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..4, 1usize..4).prop_flat_map(|(q, p)| {
            (
                prop::collection::vec(-2.0f64..2.0, q * p),
                prop::collection::vec(-1.5f64..1.5, p),
                prop::collection::vec(-1.5f64..1.5, p),
            )
                .prop_map(move |(x, b1, b2)| {
                    let mut x = x;
                    x.push(q as f64);
                    (x, b1, b2)
                })
        })
    }

    fn unpack(x: &[f64], p: usize) -> Subject {
        let q = *x.last().unwrap() as usize;
        Subject::new(DVector::zeros(q), DMatrix::from_row_slice(q, p, &x[..q * p]))
    }

    proptest! {
        #[test]
        fn identity_derivative_independent_of_beta((x, b1, b2) in arb_case()) {
            let s = unpack(&x, b1.len());
            let spec = MarginalModelSpec::gaussian();
            let d1 = mean_derivative(&spec, &s, &DVector::from_vec(b1));
            let d2 = mean_derivative(&spec, &s, &DVector::from_vec(b2));
            prop_assert_eq!(d1, d2);
        }

        #[test]
        fn derivative_matches_central_differences((x, b, _b) in arb_case(), logit in any::<bool>()) {
            let p = b.len();
            let s = unpack(&x, p);
            let spec = if logit { MarginalModelSpec::bernoulli() } else { MarginalModelSpec::gaussian() };
            let beta = DVector::from_vec(b);
            let d = mean_derivative(&spec, &s, &beta);
            let h = 1e-5;
            for k in 0..p {
                let mut up = beta.clone();
                up[k] += h;
                let mut dn = beta.clone();
                dn[k] -= h;
                let fd = (mean_vector(&spec, &s, &up) - mean_vector(&spec, &s, &dn)) / (2.0 * h);
                for j in 0..s.q() {
                    let err = (fd[j] - d[(j, k)]).abs();
                    prop_assert!(err <= 1e-6 * d[(j, k)].abs().max(1e-3), "j={} k={} fd={} an={}", j, k, fd[j], d[(j, k)]);
                }
            }
        }

        #[test]
        fn variance_weights_scale_with_dispersion((x, b, _b) in arb_case(), psi in 0.1f64..10.0) {
            let s = unpack(&x, b.len());
            let beta = DVector::from_vec(b);
            let one = MarginalModelSpec::new(Link::Logit, VarianceFunction::Bernoulli, psi).unwrap();
            let two = MarginalModelSpec::new(Link::Logit, VarianceFunction::Bernoulli, 2.0 * psi).unwrap();
            let w1 = variance_inv_sqrt(&one, &s, &beta);
            let w2 = variance_inv_sqrt(&two, &s, &beta);
            for j in 0..s.q() {
                let ratio = w2[(j, j)] / w1[(j, j)];
                prop_assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
            }
        }
    }
}
