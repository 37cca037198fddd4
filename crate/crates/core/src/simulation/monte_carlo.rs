use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::auxiliary::AuxiliaryInfo;
use crate::basis::{build_basis, BasisSet};
use crate::error::{QifError, Result};
use crate::estimator::{fit, profile_test_from, wald_interval, ExtendedScoreConfig, FitOptions};
use crate::model::MarginalModelSpec;
use crate::stats::{chi2_qq_pairs, mean_sd};

use super::generate::generate_dataset;
use super::subgroups::{build_four_group_aux, two_group_aux};
use super::{replication_rng, PhiSource, SimulationDesign, StreamRole, TIME_POINTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Qif,
    /// Two-group information on `X₂`.
    Gmmai2,
    /// Four-group information on `(sign X₁₁, X₂)`.
    Gmmai4,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Qif => "QIF",
            Self::Gmmai2 => "GMMAI2",
            Self::Gmmai4 => "GMMAI4",
        })
    }
}

impl FromStr for Method {
    type Err = QifError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qif" => Ok(Self::Qif),
            "gmmai2" | "gmmai" => Ok(Self::Gmmai2),
            "gmmai4" => Ok(Self::Gmmai4),
            other => Err(QifError::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// `H₀: β[index] = value` (0-based index).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    pub index: usize,
    pub value: f64,
}

impl Hypothesis {
    pub fn new(index: usize, value: f64) -> Self {
        Self { index, value }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "beta{}={}", self.index + 1, self.value)
    }
}

/// Parses `beta1=0.5` or `1=0.5`, with a 1-based coefficient index.
impl FromStr for Hypothesis {
    type Err = QifError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || QifError::Config(format!("hypothesis '{s}' is not of the form beta<j>=<value>"));
        let (lhs, rhs) = s.split_once('=').ok_or_else(bad)?;
        let lhs = lhs.trim();
        let idx: usize = lhs
            .strip_prefix("beta")
            .unwrap_or(lhs)
            .trim()
            .parse()
            .map_err(|_| bad())?;
        let value: f64 = rhs.trim().parse().map_err(|_| bad())?;
        if idx == 0 {
            return Err(bad());
        }
        Ok(Self::new(idx - 1, value))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOptions {
    pub parallel: bool,
    /// Wald interval level.
    pub level: f64,
    /// Rejection threshold for profile tests.
    pub test_level: f64,
    /// Fraction of failed replications tolerated per method.
    pub max_failure_rate: f64,
    pub fit: FitOptions,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            parallel: true,
            level: 0.95,
            test_level: 0.05,
            max_failure_rate: 0.05,
            fit: FitOptions::default(),
        }
    }
}

/// Outcome of one method in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodDraw {
    pub beta: DVector<f64>,
    pub se: DVector<f64>,
    pub covered: Vec<bool>,
    /// Profile statistics, one per hypothesis.
    pub statistics: Vec<f64>,
    pub p_values: Vec<f64>,
}

/// Raw per-replication results, indexed `[replication][method]`; `None`
/// marks a failed fit or test.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloRun {
    pub design: SimulationDesign,
    pub methods: Vec<Method>,
    pub hypotheses: Vec<Hypothesis>,
    pub test_level: f64,
    pub max_failure_rate: f64,
    pub draws: Vec<Vec<Option<MethodDraw>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSummary {
    pub bias: f64,
    /// `None` with fewer than two successful replications.
    pub sd: Option<f64>,
    pub se: f64,
    pub cp: f64,
    /// `SD²(baseline) / SD²(method)`.
    pub re: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerEntry {
    pub hypothesis: Hypothesis,
    pub rejection_rate: f64,
    pub tests: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub coefficients: Vec<CoefficientSummary>,
    pub power: Vec<PowerEntry>,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub replications: usize,
    pub baseline: Option<Method>,
    pub methods: Vec<MethodSummary>,
}

impl MonteCarloSummary {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }
}

impl MonteCarloRun {
    fn column(&self, method: Method) -> Option<usize> {
        self.methods.iter().position(|&m| m == method)
    }

    /// Successful draws of `method`, in replication order.
    pub fn successful(&self, method: Method) -> Vec<&MethodDraw> {
        match self.column(method) {
            Some(c) => self.draws.iter().filter_map(|r| r[c].as_ref()).collect(),
            None => Vec::new(),
        }
    }

    pub fn failures(&self, method: Method) -> usize {
        self.draws.len() - self.successful(method).len()
    }

    /// Profile statistics of hypothesis `h` (position in `hypotheses`).
    pub fn statistics(&self, method: Method, h: usize) -> Vec<f64> {
        self.successful(method).iter().map(|d| d.statistics[h]).collect()
    }

    pub fn summarize(&self) -> Result<MonteCarloSummary> {
        let total = self.draws.len();
        let baseline = self.methods.contains(&Method::Qif).then_some(Method::Qif);
        let beta = self.design.beta_true;
        let mut methods = Vec::with_capacity(self.methods.len());
        let mut sds: Vec<Vec<Option<f64>>> = Vec::new();
        for &method in &self.methods {
            let ok = self.successful(method);
            let failed = total - ok.len();
            if ok.is_empty() || failed as f64 > self.max_failure_rate * total as f64 {
                return Err(QifError::TooManyFailures { failed, total });
            }
            let m = ok.len() as f64;
            let coefficients: Vec<CoefficientSummary> = (0..beta.len())
                .map(|j| {
                    let est: Vec<f64> = ok.iter().map(|d| d.beta[j]).collect();
                    let (mean, sd) = mean_sd(&est);
                    CoefficientSummary {
                        bias: mean - beta[j],
                        sd,
                        se: ok.iter().map(|d| d.se[j]).sum::<f64>() / m,
                        cp: ok.iter().filter(|d| d.covered[j]).count() as f64 / m,
                        re: None,
                    }
                })
                .collect();
            sds.push(coefficients.iter().map(|c| c.sd).collect());
            let power = self
                .hypotheses
                .iter()
                .enumerate()
                .map(|(h, &hypothesis)| PowerEntry {
                    hypothesis,
                    rejection_rate: ok.iter().filter(|d| d.p_values[h] < self.test_level).count() as f64 / m,
                    tests: ok.len(),
                })
                .collect();
            methods.push(MethodSummary {
                method,
                coefficients,
                power,
                successes: ok.len(),
                failures: failed,
            });
        }
        if let Some(b) = baseline.and_then(|b| self.column(b)) {
            let base = sds[b].clone();
            for (summary, own) in methods.iter_mut().zip(&sds) {
                for ((c, sb), sm) in summary.coefficients.iter_mut().zip(&base).zip(own) {
                    c.re = match (sb, sm) {
                        (Some(sb), Some(sm)) if *sm > 0.0 => Some((sb * sb) / (sm * sm)),
                        _ => None,
                    };
                }
            }
        }
        Ok(MonteCarloSummary {
            replications: total,
            baseline,
            methods,
        })
    }
}

struct Setup {
    spec: MarginalModelSpec,
    basis: BasisSet,
    two: AuxiliaryInfo,
    /// Four-group information shared by all replications (analytic means).
    four: Option<AuxiliaryInfo>,
}

/// Runs the replications and keeps every draw.
pub fn simulate(
    design: &SimulationDesign,
    methods: &[Method],
    hypotheses: &[Hypothesis],
    options: &McOptions,
) -> Result<MonteCarloRun> {
    design.validate()?;
    if methods.is_empty() {
        return Err(QifError::Config("no methods selected".into()));
    }
    if let Some(h) = hypotheses.iter().find(|h| h.index >= 2) {
        return Err(QifError::Config(format!(
            "hypothesis {h} refers to a missing coefficient"
        )));
    }
    let four = match design.phi_source {
        PhiSource::TrueValues => Some(build_four_group_aux(
            PhiSource::TrueValues,
            design,
            &mut replication_rng(0, 0, StreamRole::HeldOut),
        )?),
        PhiSource::HeldOutEstimate(_) => None,
    };
    let setup = Setup {
        spec: MarginalModelSpec::gaussian(),
        basis: build_basis(design.working, TIME_POINTS)?,
        two: two_group_aux(design),
        four,
    };
    let run_one = |r: usize| replicate(design, methods, hypotheses, options, &setup, r);
    let draws = if options.parallel {
        (0..design.replications)
            .into_par_iter()
            .map(run_one)
            .collect::<Result<Vec<_>>>()?
    } else {
        (0..design.replications).map(run_one).collect::<Result<Vec<_>>>()?
    };
    Ok(MonteCarloRun {
        design: design.clone(),
        methods: methods.to_vec(),
        hypotheses: hypotheses.to_vec(),
        test_level: options.test_level,
        max_failure_rate: options.max_failure_rate,
        draws,
    })
}

/// Runs the replications and aggregates them.
pub fn run_monte_carlo(
    design: &SimulationDesign,
    methods: &[Method],
    hypotheses: &[Hypothesis],
    options: &McOptions,
) -> Result<MonteCarloSummary> {
    simulate(design, methods, hypotheses, options)?.summarize()
}

fn replicate(
    design: &SimulationDesign,
    methods: &[Method],
    hypotheses: &[Hypothesis],
    options: &McOptions,
    setup: &Setup,
    r: usize,
) -> Result<Vec<Option<MethodDraw>>> {
    let dataset = generate_dataset(design, &mut replication_rng(design.seed, r, StreamRole::Data))?;
    let beta0 = design.beta();
    Ok(methods
        .iter()
        .map(|method| {
            let aux = match method {
                Method::Qif => None,
                Method::Gmmai2 => Some(setup.two.clone()),
                Method::Gmmai4 => match &setup.four {
                    Some(a) => Some(a.clone()),
                    None => {
                        let mut rng = replication_rng(design.seed, r, StreamRole::HeldOut);
                        Some(build_four_group_aux(design.phi_source, design, &mut rng).ok()?)
                    }
                },
            };
            let config = ExtendedScoreConfig::new(setup.spec, setup.basis.clone(), aux);
            let result = fit(&config, &dataset, None, &options.fit).ok()?;
            if !result.converged {
                return None;
            }
            let covered = (0..beta0.len())
                .map(|j| {
                    let (lo, hi) = wald_interval(&result, j, options.level);
                    lo <= beta0[j] && beta0[j] <= hi
                })
                .collect();
            let mut statistics = Vec::with_capacity(hypotheses.len());
            let mut p_values = Vec::with_capacity(hypotheses.len());
            for h in hypotheses {
                let t = profile_test_from(&result, &config, &dataset, &[h.index], &[h.value], &options.fit).ok()?;
                if !t.restricted_converged {
                    return None;
                }
                statistics.push(t.statistic);
                p_values.push(t.p_value);
            }
            Some(MethodDraw {
                se: result.standard_errors(),
                beta: result.beta_hat,
                covered,
                statistics,
                p_values,
            })
        })
        .collect())
}

/// Sorted profile statistics for `hypothesis` under `method`, paired with
/// χ²₁ quantiles at `(i − 0.5)/R`.
pub fn qq_data(
    design: &SimulationDesign,
    hypothesis: Hypothesis,
    method: Method,
    replications: usize,
) -> Result<Vec<(f64, f64)>> {
    let design = SimulationDesign {
        replications,
        ..design.clone()
    };
    let run = simulate(&design, &[method], &[hypothesis], &McOptions::default())?;
    run.summarize()?;
    Ok(chi2_qq_pairs(&run.statistics(method, 0), 1.0))
}
