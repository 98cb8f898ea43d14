//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn real_part(m: &CMat) -> RMat {
    m.map(|v| v.re)
}

pub fn max_imag(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.im.abs()))
}

pub fn cidentity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Eigenvalues of a real square matrix (possibly complex).
pub fn eigenvalues(m: &RMat) -> Result<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::NonConvergence {
            context: "Schur decomposition".into(),
            iterations: 10_000,
            residual: f64::NAN,
            trajectory: Vec::new(),
        })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_radius(m: &RMat) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().fold(0.0, |acc, l| acc.max(l.norm())))
}

/// ‖M − Mᵀ‖ / max(1, ‖M‖), Frobenius.
pub fn symmetry_residual(m: &RMat) -> f64 {
    (m - m.transpose()).norm() / m.norm().max(1.0)
}

/// Symmetric PSD square root and its inverse. Fails when the smallest
/// eigenvalue is at or below `rel_floor·λ_max`.
pub fn sym_sqrt_pair(m: &RMat, rel_floor: f64) -> Option<(RMat, RMat)> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if eig.eigenvalues.iter().any(|&l| l <= rel_floor * lmax.max(f64::MIN_POSITIVE)) {
        return None;
    }
    let v = &eig.eigenvectors;
    let root = v * RMat::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * v.transpose();
    let inv_root =
        v * RMat::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * v.transpose();
    Some((root, inv_root))
}

pub fn min_eigenvalue_sym(m: &RMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Spectral (largest singular value) norm of a complex matrix.
pub fn cnorm2(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.len() == 1 {
        return m[(0, 0)].norm();
    }
    if m.ncols() == 1 || m.nrows() == 1 {
        return m.norm();
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn hermitian_lambda_max(m: &CMat) -> f64 {
    if m.len() == 1 {
        return m[(0, 0)].re;
    }
    hermitian_eigenvalues(m).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    if m.len() == 1 {
        return vec![m[(0, 0)].re];
    }
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(h).eigenvalues.iter().copied().collect()
}

/// Solve `(z I − A) X = B` for one complex `z`.
pub fn resolvent_apply(a: &RMat, z: Complex64, b: &CMat) -> Option<CMat> {
    let n = a.nrows();
    let mut m = to_complex(a) * Complex64::new(-1.0, 0.0);
    for i in 0..n {
        m[(i, i)] += z;
    }
    m.lu().solve(b)
}
