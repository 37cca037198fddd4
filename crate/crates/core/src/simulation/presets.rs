use crate::basis::CorrelationStructure;
use crate::error::{QifError, Result};

use super::{AuxMode, CorrelationSpec, CovStructure, Hypothesis, Method, SimulationDesign, Study};

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 4] = ["table1", "table2", "table3", "table4"];

const RHOS: [f64; 3] = [0.2, 0.5, 0.8];
const STRUCTURES: [CovStructure; 2] = [CovStructure::CompoundSymmetry, CovStructure::Ar1];

fn working_for(s: CovStructure) -> CorrelationStructure {
    match s {
        CovStructure::Ar1 => CorrelationStructure::Ar1,
        _ => CorrelationStructure::CompoundSymmetry,
    }
}

fn label(pairs: &[(&str, String)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// The bundled study grids. Each row gets its own seed, `seed + row index`.
///
/// * `table1`: `ρ_Y × Σ_Y × working`, `n = 300`, `Σ_X` CS(0.5), two-group information.
/// * `table2`: `ρ_Y × n ∈ {200, 500} × Σ_Y`, `Σ_X = I`, four-group information.
/// * `table3`: `Σ_X × ρ_X`, `n = 300`, `Σ_Y` CS(0.5), four-group information.
/// * `table4`: `n = 300`, CS/CS at 0.5, profile tests of `β₁ ∈ {0.5, 0.55, 0.6}`
///   and `β₂ ∈ {−0.5, −0.55, −0.6}`.
pub fn preset(name: &str, seed: u64, replications: usize) -> Result<Vec<Study>> {
    let base = SimulationDesign {
        seed,
        replications,
        ..Default::default()
    };
    let mut rows = Vec::new();
    match name.to_ascii_lowercase().as_str() {
        "table1" => {
            for rho in RHOS {
                for sy in STRUCTURES {
                    for wc in STRUCTURES {
                        rows.push(Study {
                            label: label(&[
                                ("rho_y", rho.to_string()),
                                ("sigma_y", sy.to_string()),
                                ("wc", wc.to_string()),
                            ]),
                            design: SimulationDesign {
                                sigma_y: CorrelationSpec::new(sy, rho),
                                working: working_for(wc),
                                aux_mode: AuxMode::TwoGroup,
                                ..base.clone()
                            },
                            methods: vec![Method::Qif, Method::Gmmai2],
                            hypotheses: Vec::new(),
                        });
                    }
                }
            }
        }
        "table2" => {
            for rho in RHOS {
                for n in [200, 500] {
                    for sy in STRUCTURES {
                        rows.push(Study {
                            label: label(&[
                                ("rho_y", rho.to_string()),
                                ("n", n.to_string()),
                                ("sigma_y", sy.to_string()),
                            ]),
                            design: SimulationDesign {
                                n,
                                sigma_x: CorrelationSpec::identity(),
                                sigma_y: CorrelationSpec::new(sy, rho),
                                working: working_for(sy),
                                aux_mode: AuxMode::FourGroup,
                                ..base.clone()
                            },
                            methods: AuxMode::FourGroup.methods(),
                            hypotheses: Vec::new(),
                        });
                    }
                }
            }
        }
        "table3" => {
            for sx in STRUCTURES {
                for rho in RHOS {
                    rows.push(Study {
                        label: label(&[("sigma_x", sx.to_string()), ("rho_x", rho.to_string())]),
                        design: SimulationDesign {
                            sigma_x: CorrelationSpec::new(sx, rho),
                            aux_mode: AuxMode::FourGroup,
                            ..base.clone()
                        },
                        methods: AuxMode::FourGroup.methods(),
                        hypotheses: Vec::new(),
                    });
                }
            }
        }
        "table4" => {
            let hypotheses = [0.5, 0.55, 0.6]
                .iter()
                .map(|&v| Hypothesis::new(0, v))
                .chain([-0.5, -0.55, -0.6].iter().map(|&v| Hypothesis::new(1, v)))
                .collect();
            rows.push(Study {
                label: Vec::new(),
                design: SimulationDesign {
                    aux_mode: AuxMode::FourGroup,
                    ..base
                },
                methods: AuxMode::FourGroup.methods(),
                hypotheses,
            });
        }
        other => {
            return Err(QifError::Config(format!(
                "unknown preset '{other}' (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    }
    for (i, row) in rows.iter_mut().enumerate() {
        row.design.seed = seed.wrapping_add(i as u64);
    }
    Ok(rows)
}
