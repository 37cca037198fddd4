use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{QifError, Result};
use crate::estimator::{FitResult, ProfileTestResult};
use crate::simulation::{MonteCarloSummary, Study};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Comma-separated rows, one per coefficient.
    Table,
    /// One JSON object per fit, one per line.
    Structured,
}

impl std::str::FromStr for ReportFormat {
    type Err = QifError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "table" => Ok(Self::Table),
            "structured" | "json" | "jsonl" => Ok(Self::Structured),
            other => Err(QifError::Config(format!("unknown report format '{other}'"))),
        }
    }
}

/// A fit with the name shown in reports.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedFit {
    pub label: String,
    pub coefficients: Vec<String>,
    pub result: FitResult,
}

impl NamedFit {
    pub fn new(label: impl Into<String>, coefficients: Vec<String>, result: FitResult) -> Self {
        Self {
            label: label.into(),
            coefficients,
            result,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    label: String,
    coefficients: Vec<String>,
    beta: Vec<f64>,
    se: Vec<f64>,
    cov: Vec<Vec<f64>>,
    q_value: f64,
    n_iter: usize,
    converged: bool,
    gradient_norm: f64,
    weight_rank: usize,
    moment_dim: usize,
    n: usize,
}

/// Two-sided Wald p-value `2{1 − Φ(|β̂/SE|)}`.
pub fn wald_p_value(estimate: f64, se: f64) -> f64 {
    if se <= 0.0 {
        return if estimate == 0.0 { 1.0 } else { 0.0 };
    }
    2.0 * Normal::standard().sf((estimate / se).abs())
}

pub fn emit_report(fits: &[NamedFit], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Table => {
            out.push_str("method,coef,estimate,se,p_value\n");
            for f in fits {
                let se = f.result.standard_errors();
                for (j, b) in f.result.beta_hat.iter().enumerate() {
                    let name = f
                        .coefficients
                        .get(j)
                        .cloned()
                        .unwrap_or_else(|| format!("beta{}", j + 1));
                    let _ = writeln!(
                        out,
                        "{},{},{:.6},{:.6},{:.4e}",
                        f.label,
                        name,
                        b,
                        se[j],
                        wald_p_value(*b, se[j])
                    );
                }
            }
        }
        ReportFormat::Structured => {
            for f in fits {
                let r = &f.result;
                let rec = Record {
                    label: f.label.clone(),
                    coefficients: f.coefficients.clone(),
                    beta: r.beta_hat.iter().copied().collect(),
                    se: r.standard_errors().iter().copied().collect(),
                    cov: r
                        .covariance
                        .row_iter()
                        .map(|row| row.iter().copied().collect())
                        .collect(),
                    q_value: r.objective,
                    n_iter: r.iterations,
                    converged: r.converged,
                    gradient_norm: r.gradient_norm,
                    weight_rank: r.weight_rank,
                    moment_dim: r.moment_dim,
                    n: r.n,
                };
                out.push_str(&serde_json::to_string(&rec).expect("plain record"));
                out.push('\n');
            }
        }
    }
    out
}

/// Parses one line of structured output back into a fit.
pub fn parse_structured(line: &str) -> Result<NamedFit> {
    let rec: Record = serde_json::from_str(line).map_err(|e| QifError::Config(format!("bad record: {e}")))?;
    let p = rec.beta.len();
    if rec.cov.len() != p || rec.cov.iter().any(|r| r.len() != p) {
        return Err(QifError::DimensionMismatch("covariance does not match beta".into()));
    }
    Ok(NamedFit {
        label: rec.label,
        coefficients: rec.coefficients,
        result: FitResult {
            beta_hat: DVector::from_vec(rec.beta),
            covariance: DMatrix::from_fn(p, p, |i, j| rec.cov[i][j]),
            objective: rec.q_value,
            iterations: rec.n_iter,
            converged: rec.converged,
            gradient_norm: rec.gradient_norm,
            weight_rank: rec.weight_rank,
            moment_dim: rec.moment_dim,
            n: rec.n,
        },
    })
}

pub fn emit_test(label: &str, t: &ProfileTestResult) -> String {
    format!(
        "method,statistic,df,p_value,clamped,restricted_converged\n{label},{:.6},{},{:.6e},{},{}\n",
        t.statistic, t.df, t.p_value, t.clamped, t.restricted_converged
    )
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "NA".into(), |v| format!("{v:.digits$}"))
}

/// Bias, SD, SE, CP and RE per design, method and coefficient; a second
/// block lists rejection rates when any study has hypotheses.
pub fn emit_summary(rows: &[(Study, MonteCarloSummary)], delim: char) -> String {
    let mut out = String::new();
    let label_keys: Vec<String> = rows
        .first()
        .map(|(s, _)| s.label.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_default();
    let join = |cells: Vec<String>| cells.join(&delim.to_string());
    let mut header = label_keys.clone();
    header.extend(["method", "coef", "bias", "sd", "se", "cp", "re", "failures"].map(String::from));
    out.push_str(&join(header));
    out.push('\n');
    for (study, summary) in rows {
        let labels: Vec<String> = study.label.iter().map(|(_, v)| v.clone()).collect();
        for m in &summary.methods {
            for (j, c) in m.coefficients.iter().enumerate() {
                let mut cells = labels.clone();
                cells.extend([
                    m.method.to_string(),
                    format!("beta{}", j + 1),
                    format!("{:.5}", c.bias),
                    opt(c.sd, 5),
                    format!("{:.5}", c.se),
                    format!("{:.3}", c.cp),
                    opt(c.re, 3),
                    m.failures.to_string(),
                ]);
                out.push_str(&join(cells));
                out.push('\n');
            }
        }
    }
    if rows.iter().any(|(s, _)| !s.hypotheses.is_empty()) {
        out.push('\n');
        let mut header = label_keys;
        header.extend(["method", "hypothesis", "rejection_rate", "tests"].map(String::from));
        out.push_str(&join(header));
        out.push('\n');
        for (study, summary) in rows {
            let labels: Vec<String> = study.label.iter().map(|(_, v)| v.clone()).collect();
            for m in &summary.methods {
                for p in &m.power {
                    let mut cells = labels.clone();
                    cells.extend([
                        m.method.to_string(),
                        p.hypothesis.to_string(),
                        format!("{:.4}", p.rejection_rate),
                        p.tests.to_string(),
                    ]);
                    out.push_str(&join(cells));
                    out.push('\n');
                }
            }
        }
    }
    out
}

/// Two columns, theoretical then sample quantile, with a header line.
pub fn emit_qq(pairs: &[(f64, f64)]) -> String {
    let mut out = String::from("theoretical,sample\n");
    for (t, s) in pairs {
        let _ = writeln!(out, "{t},{s}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit3() -> FitResult {
        FitResult {
            beta_hat: DVector::from_vec(vec![-0.1234567890123, 0.3, 1e-17]),
            covariance: DMatrix::from_row_slice(3, 3, &[0.01, 0.001, 0.0, 0.001, 0.04, -1e-5, 0.0, -1e-5, 0.09]),
            objective: 1.2345678901234567e-3,
            iterations: 7,
            converged: true,
            gradient_norm: 3.3e-11,
            weight_rank: 9,
            moment_dim: 9,
            n: 1000,
        }
    }

    #[test]
    fn table_layout() {
        let f = NamedFit::new("QIF", vec!["gender".into(), "read".into(), "math".into()], fit3());
        let t = emit_report(&[f], ReportFormat::Table);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "method,coef,estimate,se,p_value");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("QIF,gender,-0.123457,0.100000,"));
        assert!(lines[3].starts_with("QIF,math,0.000000,0.300000,1.0000e0"));
    }

    #[test]
    fn structured_round_trip() {
        let f = NamedFit::new("GMMAI", vec!["a".into(), "b".into(), "c".into()], fit3());
        let text = emit_report(std::slice::from_ref(&f), ReportFormat::Structured);
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains("\"q_value\"") && text.contains("\"n_iter\":7"));
        assert_eq!(parse_structured(text.trim()).unwrap(), f);
        assert!(parse_structured("{}").is_err());
    }

    #[test]
    fn p_values() {
        assert!((wald_p_value(1.959964, 1.0) - 0.05).abs() < 1e-6);
        assert_eq!(wald_p_value(0.0, 1.0), 1.0);
    }

    #[test]
    fn qq_file() {
        let s = emit_qq(&[(0.1, 0.2), (1.5, 1.25)]);
        assert_eq!(s, "theoretical,sample\n0.1,0.2\n1.5,1.25\n");
    }
}
