//! Generalized method of moments estimation with the QIF extended score.
//!
//! The moment vector stacks the `L` quadratic-inference score blocks and,
//! when auxiliary information is configured, the `K` subgroup blocks. The
//! estimator minimizes `Q_n(β) = g_nᵀ Σ_n(β)⁺ g_n` with a continuously
//! updated weight matrix, stepping along the exact gradient scaled by the
//! Gauss–Newton information `GᵀΣ⁺G`.

mod inference;
mod moments;
mod solver;

pub use inference::{profile_test, profile_test_from, relative_efficiency, wald_interval, ProfileTestResult};
pub use moments::{
    evaluate_objective, moment_vector, objective, score_jacobian, weight_matrix, Moments, ObjectiveValue,
};
pub use solver::{fit, gee_independence, plugin_covariance, FitOptions, FitResult};

use crate::auxiliary::AuxiliaryInfo;
use crate::basis::BasisSet;
use crate::model::MarginalModelSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedScoreConfig {
    spec: MarginalModelSpec,
    basis: BasisSet,
    aux: Option<AuxiliaryInfo>,
}

impl ExtendedScoreConfig {
    pub fn new(spec: MarginalModelSpec, basis: BasisSet, aux: Option<AuxiliaryInfo>) -> Self {
        Self { spec, basis, aux }
    }

    /// Plain QIF, no auxiliary moments.
    pub fn qif(spec: MarginalModelSpec, basis: BasisSet) -> Self {
        Self::new(spec, basis, None)
    }

    pub fn spec(&self) -> &MarginalModelSpec {
        &self.spec
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn aux(&self) -> Option<&AuxiliaryInfo> {
        self.aux.as_ref()
    }

    pub fn with_aux(&self, aux: Option<AuxiliaryInfo>) -> Self {
        Self { aux, ..self.clone() }
    }

    pub fn with_basis(&self, basis: BasisSet) -> Self {
        Self { basis, ..self.clone() }
    }

    /// `d = p·L + K·q`.
    pub fn moment_dim(&self, p: usize) -> usize {
        let aux = self.aux.as_ref().map_or(0, |a| a.k() * self.basis.q());
        p * self.basis.len() + aux
    }
}
