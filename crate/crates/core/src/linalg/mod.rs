//! Sparse matrices, a sparse LDLᵀ factorization and small dense helpers.

mod ldlt;
mod ordering;
mod sparse;

pub use ldlt::SparseLdlt;
pub use ordering::minimum_degree;
pub use sparse::{CsrMatrix, Triplets};

use nalgebra::{DMatrix, SymmetricEigen};

/// Clamp the eigenvalues of a small symmetric matrix at zero.
pub fn project_psd(h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = h.nrows();
    let sym = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return h.clone();
    }
    let mut out = DMatrix::zeros(n, n);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > 0.0 {
            let v = eig.eigenvectors.column(k);
            out += lambda * v * v.transpose();
        }
    }
    out
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
