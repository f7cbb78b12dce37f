//! Small shared dense-matrix helpers.

use crate::{C64, CMat, CVec};

/// Largest entry modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Frobenius norm.
pub fn frob(m: &CMat) -> f64 {
    m.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Deviation from Hermitian symmetry, max |M - Mᴴ|.
pub fn hermitian_defect(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn hermitian_min_eig(m: &CMat) -> f64 {
    hermitian_eigenvalues(m)[0]
}

/// Leading (eigenvalue, eigenvector) of a Hermitian matrix.
pub fn hermitian_leading_pair(m: &CMat) -> (f64, CVec) {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).into_owned())
}

/// Hermitian square root factor `F` with `F Fᴴ = M` (negative eigenvalues
/// are clipped at zero).
pub fn hermitian_sqrt_factor(m: &CMat) -> CMat {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let n = m.nrows();
    let mut f = eig.eigenvectors.clone();
    for j in 0..n {
        let s = eig.eigenvalues[j].max(0.0).sqrt();
        for i in 0..n {
            f[(i, j)] *= C64::new(s, 0.0);
        }
    }
    f
}

/// Diagonal matrix from a complex vector.
pub fn diag(v: &CVec) -> CMat {
    CMat::from_diagonal(v)
}
