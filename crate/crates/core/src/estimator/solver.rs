use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};

use crate::error::{QifError, Result};
use crate::linalg::{inverse_spd, pinv_symmetric, solve_spd, PINV_RELATIVE_CUTOFF};
use crate::model::{Link, LongitudinalDataset};

use super::moments::{
    check_dims, jacobian_with_weight_term, moment_vector, quadratic_form, score_jacobian, weight_matrix,
};
use super::ExtendedScoreConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Stop when `‖Δβ‖∞` falls below this.
    pub step_tolerance: f64,
    /// Stop when `|ΔQ_n|` falls below this.
    pub objective_tolerance: f64,
    /// Freeze `Σ_n` after the first iteration instead of updating it.
    pub two_step: bool,
    /// Drop auxiliary groups with no subjects instead of failing.
    pub allow_empty_subgroups: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            max_halvings: 20,
            step_tolerance: 1e-8,
            objective_tolerance: 1e-12,
            two_step: false,
            allow_empty_subgroups: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta_hat: DVector<f64>,
    /// Estimated `Var(β̂)`, already divided by `n`.
    pub covariance: DMatrix<f64>,
    /// `Q_n(β̂)`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `‖∇Q_n‖∞` at `β̂` over the free coordinates.
    pub gradient_norm: f64,
    /// Numerical rank of `Σ_n(β̂)`.
    pub weight_rank: usize,
    pub moment_dim: usize,
    pub n: usize,
}

impl FitResult {
    pub fn standard_errors(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.covariance.nrows(),
            (0..self.covariance.nrows()).map(|j| self.covariance[(j, j)].max(0.0).sqrt()),
        )
    }

    pub fn ensure_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(QifError::NonConvergence {
                iterations: self.iterations,
            })
        }
    }
}

/// Working-independence GEE estimate: stacked least squares for the identity
/// link, 25 Fisher-scoring steps from zero for the logit link.
pub fn gee_independence(config: &ExtendedScoreConfig, dataset: &LongitudinalDataset) -> Result<DVector<f64>> {
    let p = dataset.p();
    let spec = config.spec();
    let steps = match spec.link() {
        Link::Identity => 1,
        Link::Logit => 25,
    };
    let mut beta = DVector::zeros(p);
    for _ in 0..steps {
        let mut info = DMatrix::zeros(p, p);
        let mut score = DVector::zeros(p);
        for s in dataset.subjects() {
            let eta = &s.covariates * &beta;
            for j in 0..s.q() {
                let mu = spec.inverse_link(eta[j]);
                let dmu = spec.inverse_link_derivative(eta[j]);
                let a2 = spec.inv_sqrt_variance(mu).powi(2);
                let x = s.covariates.row(j).transpose();
                info += &x * x.transpose() * (dmu * dmu * a2);
                score += &x * (dmu * a2 * (s.response[j] - mu));
            }
        }
        let step = solve_spd(&info, &score).ok_or(QifError::RankDeficient)?;
        beta += step;
        if !beta.iter().all(|v| v.is_finite()) {
            return Err(QifError::RankDeficient);
        }
    }
    Ok(beta)
}

/// Drops empty auxiliary groups (or fails) and checks the partition.
pub(crate) fn effective_config<'a>(
    config: &'a ExtendedScoreConfig,
    dataset: &LongitudinalDataset,
    options: &FitOptions,
) -> Result<Cow<'a, ExtendedScoreConfig>> {
    let Some(aux) = config.aux() else {
        return Ok(Cow::Borrowed(config));
    };
    if aux.k() == 0 {
        return Ok(Cow::Borrowed(config));
    }
    check_dims(config, dataset, &DVector::zeros(dataset.p()))?;
    let groups = aux.partition().assign(dataset)?;
    let mut counts = vec![0usize; aux.k()];
    for g in groups {
        counts[g] += 1;
    }
    if counts.iter().all(|&c| c > 0) {
        return Ok(Cow::Borrowed(config));
    }
    if !options.allow_empty_subgroups {
        let k = counts.iter().position(|&c| c == 0).unwrap_or(0);
        return Err(QifError::EmptySubgroup(k + 1));
    }
    let keep: Vec<usize> = (0..aux.k()).filter(|&k| counts[k] > 0).collect();
    Ok(Cow::Owned(config.with_aux(Some(aux.retain_groups(&keep)))))
}

struct Evaluation {
    g: DVector<f64>,
    contributions: DMatrix<f64>,
    weight: DMatrix<f64>,
    rank: usize,
    q: f64,
}

fn evaluate(
    config: &ExtendedScoreConfig,
    dataset: &LongitudinalDataset,
    beta: &DVector<f64>,
    frozen: Option<&(DMatrix<f64>, usize)>,
) -> Result<Evaluation> {
    let m = moment_vector(config, dataset, beta)?;
    let (weight, rank) = match frozen {
        Some((w, r)) => (w.clone(), *r),
        None => pinv_symmetric(&weight_matrix(&m.contributions), PINV_RELATIVE_CUTOFF),
    };
    if rank < dataset.p() {
        return Err(QifError::SingularWeightMatrix { rank, p: dataset.p() });
    }
    let q = quadratic_form(&m.mean, &weight);
    Ok(Evaluation {
        g: m.mean,
        contributions: m.contributions,
        weight,
        rank,
        q,
    })
}

/// Free columns of `G_n` and half the gradient of `Q_n`. With the weight
/// updated continuously the gradient is `2Gᵀv − vᵀ(∂Σ_n)v`, `v = Σ_n⁺g_n`;
/// dropping the second term leaves a fixed point that does not minimize
/// `Q_n` in finite samples.
fn half_gradient(
    config: &ExtendedScoreConfig,
    dataset: &LongitudinalDataset,
    beta: &DVector<f64>,
    at: &Evaluation,
    free: &[usize],
    frozen: bool,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let v = &at.weight * &at.g;
    let (full, grad) = if frozen {
        let jac = score_jacobian(config, dataset, beta)?;
        let grad = jac.tr_mul(&v);
        (jac, grad)
    } else {
        let (jac, term) = jacobian_with_weight_term(config, dataset, beta, &at.contributions, &v)?;
        let grad = jac.tr_mul(&v) - term;
        (jac, grad)
    };
    let jac = select_columns(&full, free);
    let grad = DVector::from_iterator(free.len(), free.iter().map(|&k| grad[k]));
    Ok((jac, grad))
}

fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// `(G_nᵀ Σ_n⁺ G_n)⁻¹ / n` at `beta`.
pub fn plugin_covariance(
    config: &ExtendedScoreConfig,
    dataset: &LongitudinalDataset,
    beta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let e = evaluate(config, dataset, beta, None)?;
    let jac = score_jacobian(config, dataset, beta)?;
    covariance_from(&jac, &e.weight, dataset.n())
}

fn covariance_from(jac: &DMatrix<f64>, weight: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    let info = jac.tr_mul(&(weight * jac));
    let inv = inverse_spd(&info).ok_or(QifError::RankDeficient)?;
    let cov = (&inv + inv.transpose()) * (0.5 / n as f64);
    Ok(cov)
}

/// Minimizes `Q_n` over the coordinates in `free`, holding the others at `start`.
pub(crate) fn minimize(
    config: &ExtendedScoreConfig,
    dataset: &LongitudinalDataset,
    start: DVector<f64>,
    free: &[usize],
    options: &FitOptions,
) -> Result<FitResult> {
    let n = dataset.n();
    let mut beta = start;
    let mut frozen: Option<(DMatrix<f64>, usize)> = None;
    let mut current = evaluate(config, dataset, &beta, None)?;
    if options.two_step {
        frozen = Some((current.weight.clone(), current.rank));
    }
    let mut converged = free.is_empty();
    let mut iterations = 0;

    while !converged && iterations < options.max_iterations {
        iterations += 1;
        let (jac, grad) = half_gradient(config, dataset, &beta, &current, free, frozen.is_some())?;
        let info = jac.tr_mul(&(&current.weight * &jac));
        let delta = solve_spd(&info, &grad).ok_or(QifError::RankDeficient)?;
        if !delta.iter().all(|v| v.is_finite()) {
            return Err(QifError::RankDeficient);
        }
        if delta.amax() < options.step_tolerance {
            converged = true;
            break;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_halvings {
            let mut trial = beta.clone();
            for (c, &k) in free.iter().enumerate() {
                trial[k] -= step * delta[c];
            }
            match evaluate(config, dataset, &trial, frozen.as_ref()) {
                Ok(e) if e.q <= current.q => {
                    accepted = Some((trial, e));
                    break;
                }
                _ => step *= 0.5,
            }
        }
        // No decrease anywhere along the direction: Q_n is unchanged, which
        // satisfies the objective tolerance.
        let Some((trial, mut next)) = accepted else {
            converged = true;
            break;
        };
        let moved = (step * delta.amax()) < options.step_tolerance;
        beta = trial;
        if options.two_step && iterations == 1 {
            next = evaluate(config, dataset, &beta, None)?;
            frozen = Some((next.weight.clone(), next.rank));
        }
        let dq = (current.q - next.q).abs();
        current = next;
        if moved || dq < options.objective_tolerance {
            converged = true;
        }
    }

    let at_hat = evaluate(config, dataset, &beta, None)?;
    let full_jac = score_jacobian(config, dataset, &beta)?;
    let covariance = covariance_from(&full_jac, &at_hat.weight, n)?;
    let gradient_norm = if free.is_empty() {
        0.0
    } else {
        half_gradient(config, dataset, &beta, &current, free, frozen.is_some())?
            .1
            .amax()
            * 2.0
    };
    Ok(FitResult {
        beta_hat: beta,
        covariance,
        objective: current.q,
        iterations,
        converged,
        gradient_norm,
        weight_rank: at_hat.rank,
        moment_dim: current.g.len(),
        n,
    })
}

/// Fits `β` by minimizing `Q_n`. Non-convergence is reported through
/// `converged = false` rather than an error.
pub fn fit(
    config: &ExtendedScoreConfig,
    dataset: &LongitudinalDataset,
    init: Option<&DVector<f64>>,
    options: &FitOptions,
) -> Result<FitResult> {
    let config = effective_config(config, dataset, options)?;
    let start = match init {
        Some(b) => b.clone(),
        None => gee_independence(&config, dataset)?,
    };
    check_dims(&config, dataset, &start)?;
    let jac = score_jacobian(&config, dataset, &start)?;
    if jac
        .clone()
        .svd(false, false)
        .rank(1e-12 * jac.amax().max(f64::MIN_POSITIVE))
        < dataset.p()
    {
        return Err(QifError::RankDeficient);
    }
    let free: Vec<usize> = (0..dataset.p()).collect();
    minimize(&config, dataset, start, &free, options)
}
