//! Monte Carlo studies for the two-covariate marginal model
//! `E(Y_ij | X) = β₁ X_ij1 + β₂ X_i2` with three time points.
//!
//! `X_·1 ~ N(0, Σ_X)` varies over time, `X_2 ~ Bernoulli(0.5)` is constant
//! within a subject, and `Y ~ N(μ, Σ_Y)` with unit-variance `Σ_Y`.

mod config;
mod generate;
mod monte_carlo;
mod presets;
mod subgroups;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::basis::CorrelationStructure;
use crate::error::{QifError, Result};

pub use config::{parse_design, Study};
pub use generate::generate_dataset;
pub use monte_carlo::{
    qq_data, run_monte_carlo, simulate, CoefficientSummary, Hypothesis, McOptions, Method, MethodDraw, MethodSummary,
    MonteCarloRun, MonteCarloSummary, PowerEntry,
};
pub use presets::{preset, PRESETS};
pub use subgroups::{build_four_group_aux, build_two_group_aux, four_group_partition, two_group_aux};

/// Number of time points in the bundled designs.
pub const TIME_POINTS: usize = 3;

/// Default held-out sample size for estimating four-group means.
pub const DEFAULT_HELD_OUT_M: usize = 100_000;

/// Smallest held-out sample accepted, roughly 100 subjects per cell.
pub const MIN_HELD_OUT_M: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovStructure {
    Identity,
    CompoundSymmetry,
    Ar1,
}

impl std::str::FromStr for CovStructure {
    type Err = QifError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "ind" | "i" => Ok(Self::Identity),
            "cs" | "exchangeable" => Ok(Self::CompoundSymmetry),
            "ar1" | "ar(1)" => Ok(Self::Ar1),
            other => Err(QifError::Config(format!("unknown correlation structure '{other}'"))),
        }
    }
}

impl std::fmt::Display for CovStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Identity => "I",
            Self::CompoundSymmetry => "CS",
            Self::Ar1 => "AR(1)",
        })
    }
}

/// Unit-variance correlation matrix with a given structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSpec {
    pub structure: CovStructure,
    pub rho: f64,
}

impl CorrelationSpec {
    pub fn new(structure: CovStructure, rho: f64) -> Self {
        Self { structure, rho }
    }

    pub fn identity() -> Self {
        Self::new(CovStructure::Identity, 0.0)
    }

    pub fn matrix(&self, q: usize) -> DMatrix<f64> {
        DMatrix::from_fn(q, q, |i, j| {
            if i == j {
                return 1.0;
            }
            match self.structure {
                CovStructure::Identity => 0.0,
                CovStructure::CompoundSymmetry => self.rho,
                CovStructure::Ar1 => self.rho.powi((i as i32 - j as i32).abs()),
            }
        })
    }

    /// Lower Cholesky factor, or `Config` if the matrix is not positive definite.
    pub fn cholesky(&self, q: usize) -> Result<DMatrix<f64>> {
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(QifError::Config(format!("correlation {} outside (-1, 1)", self.rho)));
        }
        self.matrix(q).cholesky().map(|c| c.l()).ok_or_else(|| {
            QifError::Config(format!(
                "{} correlation with rho = {} is not positive definite",
                self.structure, self.rho
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxMode {
    None,
    TwoGroup,
    FourGroup,
}

impl AuxMode {
    /// Methods compared under this mode: QIF, plus each auxiliary variant
    /// the mode makes available.
    pub fn methods(&self) -> Vec<Method> {
        match self {
            Self::None => vec![Method::Qif],
            Self::TwoGroup => vec![Method::Qif, Method::Gmmai2],
            Self::FourGroup => vec![Method::Qif, Method::Gmmai2, Method::Gmmai4],
        }
    }
}

impl std::str::FromStr for AuxMode {
    type Err = QifError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "two" | "twogroup" | "two_group" | "2" => Ok(Self::TwoGroup),
            "four" | "fourgroup" | "four_group" | "4" => Ok(Self::FourGroup),
            other => Err(QifError::Config(format!("unknown aux_mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiSource {
    /// Exact conditional means under the design.
    TrueValues,
    /// Means of a fresh simulated sample of size `m`.
    HeldOutEstimate(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationDesign {
    pub n: usize,
    pub beta_true: [f64; 2],
    pub sigma_x: CorrelationSpec,
    pub sigma_y: CorrelationSpec,
    pub working: CorrelationStructure,
    pub aux_mode: AuxMode,
    pub phi_source: PhiSource,
    pub seed: u64,
    pub replications: usize,
}

impl Default for SimulationDesign {
    fn default() -> Self {
        Self {
            n: 300,
            beta_true: [0.5, -0.5],
            sigma_x: CorrelationSpec::new(CovStructure::CompoundSymmetry, 0.5),
            sigma_y: CorrelationSpec::new(CovStructure::CompoundSymmetry, 0.5),
            working: CorrelationStructure::CompoundSymmetry,
            aux_mode: AuxMode::TwoGroup,
            phi_source: PhiSource::TrueValues,
            seed: 20240101,
            replications: 500,
        }
    }
}

impl SimulationDesign {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(QifError::Config("n must be positive".into()));
        }
        if self.replications == 0 {
            return Err(QifError::Config("replications must be at least 1".into()));
        }
        if self.sigma_y.structure == CovStructure::Identity && self.sigma_y.rho != 0.0 {
            return Err(QifError::Config("response correlation must be CS or AR(1)".into()));
        }
        if let PhiSource::HeldOutEstimate(m) = self.phi_source {
            if m < MIN_HELD_OUT_M {
                return Err(QifError::Config(format!(
                    "held-out sample size {m} is below {MIN_HELD_OUT_M}"
                )));
            }
        }
        if self.beta_true.iter().any(|b| !b.is_finite()) {
            return Err(QifError::Config("true coefficients must be finite".into()));
        }
        self.sigma_x.cholesky(TIME_POINTS)?;
        self.sigma_y.cholesky(TIME_POINTS)?;
        Ok(())
    }

    pub fn beta(&self) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_row_slice(&self.beta_true)
    }
}

/// Roles of the independent random streams used within one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamRole {
    Data = 0,
    HeldOut = 1,
}

/// Counter-based stream for `(seed, replication, role)`: the ChaCha key is
/// derived from the seed and the stream id from replication and role, so the
/// draws of one replication never depend on scheduling.
pub fn replication_rng(seed: u64, replication: usize, role: StreamRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((replication as u64) << 8) | role as u64);
    rng
}
