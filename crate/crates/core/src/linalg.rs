use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative eigenvalue cutoff used when pseudo-inverting weight matrices.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

/// Moore–Penrose inverse of a symmetric PSD matrix, dropping eigenvalues below
/// `rel_cutoff · λ_max`. Returns the inverse and the retained rank.
pub fn pinv_symmetric(m: &DMatrix<f64>, rel_cutoff: f64) -> (DMatrix<f64>, usize) {
    let d = m.nrows();
    if d == 0 {
        return (DMatrix::zeros(0, 0), 0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return (DMatrix::zeros(d, d), 0);
    }
    let tol = rel_cutoff * max;
    let mut rank = 0;
    let inv_vals = eig.eigenvalues.map(|l| {
        if l > tol {
            rank += 1;
            1.0 / l
        } else {
            0.0
        }
    });
    let v = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(d, d, |i, j| v[(i, j)] * inv_vals[j]);
    let pinv = &scaled * v.transpose();
    (pinv, rank)
}

/// Solves `a x = b` for symmetric positive definite `a`, falling back to LU.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        return Some(chol.solve(b));
    }
    a.clone().lu().solve(b)
}

pub fn inverse_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        return Some(chol.inverse());
    }
    a.clone().try_inverse()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}
