//! Basis matrices spanning the inverse working correlation.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{QifError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorrelationStructure {
    Independence,
    CompoundSymmetry,
    Ar1,
}

impl CorrelationStructure {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Independence => "ind",
            Self::CompoundSymmetry => "cs",
            Self::Ar1 => "ar1",
        }
    }
}

impl fmt::Display for CorrelationStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorrelationStructure {
    type Err = QifError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ind" | "independence" => Ok(Self::Independence),
            "cs" | "exchangeable" => Ok(Self::CompoundSymmetry),
            "ar1" | "ar(1)" => Ok(Self::Ar1),
            other => Err(QifError::Config(format!(
                "unknown correlation structure '{other}' (expected ind, cs or ar1)"
            ))),
        }
    }
}

/// An ordered list of `q × q` basis matrices; the first is always the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    q: usize,
    matrices: Vec<DMatrix<f64>>,
}

impl BasisSet {
    /// Arbitrary user-provided basis. Matrices must be square `q × q`, symmetric,
    /// and the first must be the identity.
    pub fn from_matrices(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let q = matrices
            .first()
            .map(|m| m.nrows())
            .ok_or_else(|| QifError::InvalidModel("basis must contain at least one matrix".into()))?;
        for (l, m) in matrices.iter().enumerate() {
            if m.nrows() != q || m.ncols() != q {
                return Err(QifError::DimensionMismatch(format!(
                    "basis matrix {l} is {}x{}, expected {q}x{q}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m != &m.transpose() {
                return Err(QifError::InvalidModel(format!("basis matrix {l} is not symmetric")));
            }
        }
        if matrices[0] != DMatrix::identity(q, q) {
            return Err(QifError::InvalidModel("first basis matrix must be the identity".into()));
        }
        Ok(Self { q, matrices })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    /// Multiplies basis matrix `l` by `c`. Breaks the 0/1 invariant, so this is
    /// only exposed for invariance checks.
    #[doc(hidden)]
    pub fn scaled(&self, l: usize, c: f64) -> Self {
        let mut out = self.clone();
        out.matrices[l] *= c;
        out
    }
}

pub fn build_basis(structure: CorrelationStructure, q: usize) -> Result<BasisSet> {
    if q == 0 {
        return Err(QifError::DimensionTooSmall {
            structure: structure.name(),
            min: 1,
            q,
        });
    }
    let identity = DMatrix::identity(q, q);
    let matrices = match structure {
        CorrelationStructure::Independence => vec![identity],
        CorrelationStructure::CompoundSymmetry | CorrelationStructure::Ar1 if q < 2 => {
            return Err(QifError::DimensionTooSmall {
                structure: structure.name(),
                min: 2,
                q,
            })
        }
        CorrelationStructure::CompoundSymmetry => {
            let off = DMatrix::from_fn(q, q, |i, j| if i == j { 0.0 } else { 1.0 });
            vec![identity, off]
        }
        // The corner-correction matrix of the exact AR(1) inverse is dropped.
        CorrelationStructure::Ar1 => {
            let band = DMatrix::from_fn(q, q, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 });
            vec![identity, band]
        }
    };
    Ok(BasisSet { q, matrices })
}
