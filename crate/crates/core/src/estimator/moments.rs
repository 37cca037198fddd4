//! Extended score `g_n(β)`, its empirical second moment `Σ_n(β)`, the
//! quadratic objective `Q_n(β)` and the Jacobian `G_n(β)`.

use nalgebra::{DMatrix, DVector};

use crate::auxiliary::AuxiliaryInfo;
use crate::error::{QifError, Result};
use crate::linalg::{pinv_symmetric, PINV_RELATIVE_CUTOFF};
use crate::model::{LongitudinalDataset, Subject};

use super::ExtendedScoreConfig;

/// `g_n(β)` together with the `n × d` matrix of per-subject contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: DVector<f64>,
    pub contributions: DMatrix<f64>,
}

/// `Q_n(β)` with rank diagnostics of the weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    /// Numerical rank of `Σ_n(β)`.
    pub rank: usize,
    /// Moment dimension `d`.
    pub dim: usize,
}

impl ObjectiveValue {
    /// `Σ_n` had to be pseudo-inverted.
    pub fn degraded_rank(&self) -> bool {
        self.rank < self.dim
    }
}

/// Per-subject quantities needed by both the score and its Jacobian.
struct SubjectTerms {
    mu: DVector<f64>,
    /// `A^{-1/2} μ̇`, `q × p`
    weighted_derivative: DMatrix<f64>,
    /// `μ̇`, `q × p`
    derivative: DMatrix<f64>,
    /// `A^{-1/2}(Y − μ)`
    weighted_residual: DVector<f64>,
    curvature: Option<Curvature>,
}

/// Pointwise derivatives needed for the exact Jacobian of curved models.
struct Curvature {
    /// diagonal of `A^{-1/2}`
    a: DVector<f64>,
    /// `d a_j / d μ_j`
    da: DVector<f64>,
    /// `h⁻¹''(η_j)`
    d2: DVector<f64>,
    residual: DVector<f64>,
}

fn subject_terms(config: &ExtendedScoreConfig, s: &Subject, beta: &DVector<f64>) -> SubjectTerms {
    let spec = config.spec();
    let eta = &s.covariates * beta;
    let q = s.q();
    let p = beta.len();
    let mut mu = DVector::zeros(q);
    let mut derivative = DMatrix::zeros(q, p);
    let mut weighted_derivative = DMatrix::zeros(q, p);
    let mut weighted_residual = DVector::zeros(q);
    let mut curvature = spec.is_curved().then(|| Curvature {
        a: DVector::zeros(q),
        da: DVector::zeros(q),
        d2: DVector::zeros(q),
        residual: DVector::zeros(q),
    });
    for j in 0..q {
        let m = spec.inverse_link(eta[j]);
        let dm = spec.inverse_link_derivative(eta[j]);
        let a = spec.inv_sqrt_variance(m);
        mu[j] = m;
        weighted_residual[j] = a * (s.response[j] - m);
        if let Some(c) = curvature.as_mut() {
            c.a[j] = a;
            c.da[j] = spec.inv_sqrt_variance_derivative(m);
            c.d2[j] = spec.inverse_link_second_derivative(eta[j]);
            c.residual[j] = s.response[j] - m;
        }
        for k in 0..p {
            let v = dm * s.covariates[(j, k)];
            derivative[(j, k)] = v;
            weighted_derivative[(j, k)] = a * v;
        }
    }
    SubjectTerms {
        mu,
        weighted_derivative,
        derivative,
        weighted_residual,
        curvature,
    }
}

fn group_of(aux: Option<&AuxiliaryInfo>, s: &Subject) -> Option<usize> {
    aux.and_then(|a| a.locate(s))
}

pub(crate) fn check_dims(
    config: &ExtendedScoreConfig,
    dataset: &LongitudinalDataset,
    beta: &DVector<f64>,
) -> Result<()> {
    if config.basis().q() != dataset.q() {
        return Err(QifError::DimensionMismatch(format!(
            "basis is {0}x{0} but subjects have q = {1}",
            config.basis().q(),
            dataset.q()
        )));
    }
    if beta.len() != dataset.p() {
        return Err(QifError::DimensionMismatch(format!(
            "beta has length {} but covariates have p = {}",
            beta.len(),
            dataset.p()
        )));
    }
    if let Some(aux) = config.aux() {
        if let Some(phi) = aux.phi().first() {
            if phi.len() != dataset.q() {
                return Err(QifError::DimensionMismatch(format!(
                    "subgroup means have length {} but q = {}",
                    phi.len(),
                    dataset.q()
                )));
            }
        }
        for g in aux.partition().groups() {
            for pr in &g.predicates {
                if pr.row >= dataset.q() || pr.col >= dataset.p() {
                    return Err(QifError::InvalidSubgroup(format!(
                        "{pr} is outside the {}x{} covariate matrix",
                        dataset.q(),
                        dataset.p()
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Block `l` of the score is `μ̇ᵀ A^{-1/2} M_l A^{-1/2}(Y − μ)`; auxiliary
/// block `k` is `I(X ∈ Ω_k)(μ − φ_k)`.
pub fn moment_vector(
    config: &ExtendedScoreConfig,
    dataset: &LongitudinalDataset,
    beta: &DVector<f64>,
) -> Result<Moments> {
    check_dims(config, dataset, beta)?;
    let n = dataset.n();
    let p = dataset.p();
    let q = dataset.q();
    let basis = config.basis().matrices();
    let qif_dim = p * basis.len();
    let d = config.moment_dim(p);
    let mut contributions = DMatrix::zeros(n, d);
    for (i, s) in dataset.subjects().iter().enumerate() {
        let t = subject_terms(config, s, beta);
        for (l, m) in basis.iter().enumerate() {
            let w = m * &t.weighted_residual;
            let block = t.weighted_derivative.tr_mul(&w);
            for k in 0..p {
                contributions[(i, l * p + k)] = block[k];
            }
        }
        if let (Some(aux), Some(k)) = (config.aux(), group_of(config.aux(), s)) {
            let phi = &aux.phi()[k];
            let off = qif_dim + k * q;
            for j in 0..q {
                contributions[(i, off + j)] = t.mu[j] - phi[j];
            }
        }
    }
    let mean = column_means(&contributions);
    Ok(Moments { mean, contributions })
}

fn column_means(c: &DMatrix<f64>) -> DVector<f64> {
    let n = c.nrows().max(1) as f64;
    DVector::from_iterator(c.ncols(), c.column_iter().map(|col| col.sum() / n))
}

/// `Σ_n = n⁻¹ Σ_i g_i g_iᵀ`.
pub fn weight_matrix(contributions: &DMatrix<f64>) -> DMatrix<f64> {
    let n = contributions.nrows().max(1) as f64;
    contributions.tr_mul(contributions) / n
}

pub(crate) fn quadratic_form(g: &DVector<f64>, w: &DMatrix<f64>) -> f64 {
    (g.transpose() * w * g)[(0, 0)].max(0.0)
}

/// `Q_n(β) = g_nᵀ Σ_n⁺ g_n` with diagnostics.
pub fn evaluate_objective(
    config: &ExtendedScoreConfig,
    dataset: &LongitudinalDataset,
    beta: &DVector<f64>,
) -> Result<ObjectiveValue> {
    let m = moment_vector(config, dataset, beta)?;
    let (w, rank) = pinv_symmetric(&weight_matrix(&m.contributions), PINV_RELATIVE_CUTOFF);
    if rank < dataset.p() {
        return Err(QifError::SingularWeightMatrix { rank, p: dataset.p() });
    }
    Ok(ObjectiveValue {
        value: quadratic_form(&m.mean, &w),
        rank,
        dim: m.mean.len(),
    })
}

pub fn objective(config: &ExtendedScoreConfig, dataset: &LongitudinalDataset, beta: &DVector<f64>) -> Result<f64> {
    evaluate_objective(config, dataset, beta).map(|o| o.value)
}

/// `G_n(β) = ∂g_n/∂βᵀ`, `d × p`. For the identity link with constant
/// variance the score blocks reduce to `−μ̇ᵀ A^{-1/2} M_l A^{-1/2} μ̇`; curved
/// models add the terms from differentiating `μ̇` and `A^{-1/2}`.
pub fn score_jacobian(
    config: &ExtendedScoreConfig,
    dataset: &LongitudinalDataset,
    beta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_dims(config, dataset, beta)?;
    let n = dataset.n() as f64;
    let mut jac = DMatrix::zeros(config.moment_dim(dataset.p()), dataset.p());
    for_each_subject_jacobian(config, dataset, beta, |_, j| jac += j);
    Ok(jac / n)
}

/// `G_n` together with `n⁻¹ Σ_i (g_iᵀv) G_iᵀ v`, half the derivative of
/// `vᵀ Σ_n v` with `v` held fixed.
pub(crate) fn jacobian_with_weight_term(
    config: &ExtendedScoreConfig,
    dataset: &LongitudinalDataset,
    beta: &DVector<f64>,
    contributions: &DMatrix<f64>,
    v: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_dims(config, dataset, beta)?;
    let n = dataset.n() as f64;
    let p = dataset.p();
    let mut jac = DMatrix::zeros(config.moment_dim(p), p);
    let mut term = DVector::zeros(p);
    let cv = contributions * v;
    for_each_subject_jacobian(config, dataset, beta, |i, j| {
        jac += j;
        term += j.tr_mul(v) * cv[i];
    });
    Ok((jac / n, term / n))
}

fn for_each_subject_jacobian(
    config: &ExtendedScoreConfig,
    dataset: &LongitudinalDataset,
    beta: &DVector<f64>,
    mut f: impl FnMut(usize, &DMatrix<f64>),
) {
    let p = dataset.p();
    let q = dataset.q();
    let basis = config.basis().matrices();
    let qif_dim = p * basis.len();
    let mut ji = DMatrix::zeros(config.moment_dim(p), p);
    for (i, s) in dataset.subjects().iter().enumerate() {
        ji.fill(0.0);
        let t = subject_terms(config, s, beta);
        for (l, m) in basis.iter().enumerate() {
            let block = t.weighted_derivative.tr_mul(&(m * &t.weighted_derivative));
            let mut view = ji.view_mut((l * p, 0), (p, p));
            view -= block;
            if let Some(c) = &t.curvature {
                view += curvature_terms(c, m, s, &t.derivative, &t.weighted_residual);
            }
        }
        if let Some(k) = group_of(config.aux(), s) {
            let mut view = ji.view_mut((qif_dim + k * q, 0), (q, p));
            view += &t.derivative;
        }
        f(i, &ji);
    }
}

/// `Σ_j h''_j u_j x_j x_jᵀ + μ̇ᵀ{diag(a' ∘ M w) + diag(a) M diag(a' ∘ r)} μ̇`
/// with `w = A^{-1/2} r` and `u = A^{-1/2} M w`.
fn curvature_terms(
    c: &Curvature,
    m: &DMatrix<f64>,
    s: &Subject,
    derivative: &DMatrix<f64>,
    weighted_residual: &DVector<f64>,
) -> DMatrix<f64> {
    let q = s.q();
    let p = derivative.ncols();
    let mw = m * weighted_residual;
    let mut out = DMatrix::zeros(p, p);
    for j in 0..q {
        let coef = c.d2[j] * c.a[j] * mw[j];
        if coef != 0.0 {
            let x = s.covariates.row(j);
            out += x.transpose() * x * coef;
        }
    }
    let left = DVector::from_fn(q, |j, _| c.da[j] * mw[j]);
    let inner = DVector::from_fn(q, |j, _| c.da[j] * c.residual[j]);
    let mut du = DMatrix::from_fn(q, p, |j, k| left[j] * derivative[(j, k)]);
    let scaled = DMatrix::from_fn(q, p, |j, k| inner[j] * derivative[(j, k)]);
    let tmp = m * scaled;
    for j in 0..q {
        for k in 0..p {
            du[(j, k)] += c.a[j] * tmp[(j, k)];
        }
    }
    out + derivative.tr_mul(&du)
}
