use crate::error::{QifError, Result};

use super::{Hypothesis, Method, PhiSource, SimulationDesign, DEFAULT_HELD_OUT_M};

/// A design together with the methods and hypotheses to run on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    /// Column values identifying the study in tabular output.
    pub label: Vec<(String, String)>,
    pub design: SimulationDesign,
    pub methods: Vec<Method>,
    pub hypotheses: Vec<Hypothesis>,
}

/// Parses `key = value` lines; `#` starts a comment. Recognized keys:
/// `n`, `rho_x`, `rho_y`, `structure_x`, `structure_y`, `working`,
/// `aux_mode`, `phi_source` (`true` or `holdout`), `held_out_m`, `seed`,
/// `reps`, `beta1`, `beta2`, `methods` (comma list) and `hypotheses`
/// (comma list of `beta<j>=<value>`). Unset keys keep their defaults;
/// `methods` defaults to those implied by `aux_mode`.
pub fn parse_design(text: &str) -> Result<Study> {
    let mut d = SimulationDesign::default();
    let mut methods = None;
    let mut hypotheses = Vec::new();
    let mut phi_holdout = false;
    let mut held_out_m = DEFAULT_HELD_OUT_M;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| QifError::Config(format!("line {}: expected key=value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let num = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| QifError::Config(format!("line {}: '{v}' is not a number", lineno + 1)))
        };
        let int = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| QifError::Config(format!("line {}: '{v}' is not a non-negative integer", lineno + 1)))
        };
        match key {
            "n" => d.n = int(value)?,
            "rho_x" => d.sigma_x.rho = num(value)?,
            "rho_y" => d.sigma_y.rho = num(value)?,
            "structure_x" => d.sigma_x.structure = value.parse()?,
            "structure_y" => d.sigma_y.structure = value.parse()?,
            "working" => d.working = value.parse()?,
            "aux_mode" => d.aux_mode = value.parse()?,
            "phi_source" => {
                phi_holdout = match value.to_ascii_lowercase().as_str() {
                    "true" | "truevalues" | "true_values" | "analytic" => false,
                    "holdout" | "held_out" | "heldout" => true,
                    other => return Err(QifError::Config(format!("unknown phi_source '{other}'"))),
                }
            }
            "held_out_m" => held_out_m = int(value)?,
            "seed" => {
                d.seed = value
                    .parse()
                    .map_err(|_| QifError::Config(format!("line {}: bad seed '{value}'", lineno + 1)))?
            }
            "reps" | "replications" => d.replications = int(value)?,
            "beta1" => d.beta_true[0] = num(value)?,
            "beta2" => d.beta_true[1] = num(value)?,
            "methods" => {
                methods = Some(
                    value
                        .split(',')
                        .filter(|t| !t.trim().is_empty())
                        .map(str::parse)
                        .collect::<Result<Vec<Method>>>()?,
                )
            }
            "hypotheses" => {
                hypotheses = value
                    .split(',')
                    .filter(|t| !t.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<Vec<Hypothesis>>>()?
            }
            other => return Err(QifError::Config(format!("line {}: unknown key '{other}'", lineno + 1))),
        }
    }
    if phi_holdout {
        d.phi_source = PhiSource::HeldOutEstimate(held_out_m);
    }
    d.validate()?;
    Ok(Study {
        label: Vec::new(),
        methods: methods.unwrap_or_else(|| d.aux_mode.methods()),
        design: d,
        hypotheses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::CorrelationStructure;
    use crate::simulation::{AuxMode, CovStructure};

    #[test]
    fn full_config() {
        let s = parse_design(
            "# table 3 style\nn = 300\nrho_x=0.8\nstructure_x = ar1\nrho_y = 0.5\nstructure_y = cs\n\
             working = cs\naux_mode = four\nphi_source = holdout\nheld_out_m = 5000\nseed = 9\nreps = 50\n\
             hypotheses = beta1=0.55, beta2=-0.6\n",
        )
        .unwrap();
        let d = &s.design;
        assert_eq!(d.n, 300);
        assert_eq!(d.sigma_x.structure, CovStructure::Ar1);
        assert_eq!(d.sigma_x.rho, 0.8);
        assert_eq!(d.working, CorrelationStructure::CompoundSymmetry);
        assert_eq!(d.aux_mode, AuxMode::FourGroup);
        assert_eq!(d.phi_source, PhiSource::HeldOutEstimate(5000));
        assert_eq!((d.seed, d.replications), (9, 50));
        assert_eq!(s.methods, vec![Method::Qif, Method::Gmmai2, Method::Gmmai4]);
        assert_eq!(s.hypotheses, vec![Hypothesis::new(0, 0.55), Hypothesis::new(1, -0.6)]);
    }

    #[test]
    fn defaults_and_errors() {
        let s = parse_design("").unwrap();
        assert_eq!(s.design, SimulationDesign::default());
        assert_eq!(s.methods, vec![Method::Qif, Method::Gmmai2]);
        assert_eq!(parse_design("methods = qif").unwrap().methods, vec![Method::Qif]);
        assert!(parse_design("colour = red").is_err());
        assert!(parse_design("n 300").is_err());
        assert!(parse_design("n = -3").is_err());
        assert!(parse_design("rho_y = 1.5").is_err());
        assert!(parse_design("phi_source = holdout\nheld_out_m = 10").is_err());
    }
}
