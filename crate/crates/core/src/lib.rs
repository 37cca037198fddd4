//! Marginal-model estimation for balanced longitudinal data with quadratic
//! inference functions, optionally augmented with subgroup auxiliary
//! information through generalized method of moments.

pub mod auxiliary;
pub mod basis;
pub mod error;
pub mod estimator;
pub mod io;
pub mod linalg;
pub mod model;
pub mod simulation;
pub mod stats;

pub use auxiliary::{estimate_phi, psi, AuxiliaryInfo, Predicate, Subgroup, SubgroupPartition};
pub use basis::{build_basis, BasisSet, CorrelationStructure};
pub use error::{QifError, Result};
pub use estimator::{
    fit, moment_vector, objective, profile_test, relative_efficiency, score_jacobian, wald_interval, weight_matrix,
    ExtendedScoreConfig, FitOptions, FitResult, ProfileTestResult,
};
pub use model::{
    mean_derivative, mean_vector, variance_inv_sqrt, Link, LongitudinalDataset, MarginalModelSpec, Subject,
    VarianceFunction,
};
