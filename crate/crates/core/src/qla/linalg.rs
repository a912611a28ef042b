//! Hermitian matrix functions on top of nalgebra's symmetric eigensolver.

use nalgebra::{DMatrix, SymmetricEigen};

use super::C64;
use crate::error::{LabError, Result};
use crate::tol;

/// Largest entry of `|m − m†|`.
pub fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// `(m + m†)/2`.
pub fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix. Fails if `m` deviates from
/// Hermitian by more than the structural tolerance (scaled by its size).
pub fn hermitian_eigen(m: &DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>)> {
    if m.nrows() != m.ncols() {
        return Err(LabError::DimensionMismatch(format!(
            "{}x{} matrix is not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.iter().fold(1.0f64, |acc, z| acc.max(z.norm()));
    let dev = hermitian_deviation(m);
    if dev > tol::STRUCTURAL * scale {
        return Err(LabError::NotHermitian(dev));
    }
    if m.nrows() == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    Ok((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors))
}

pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Result<Vec<f64>> {
    if m.nrows() == 1 {
        return Ok(vec![m[(0, 0)].re]);
    }
    hermitian_eigen(m).map(|(v, _)| v)
}

/// `V diag(f(λ)) V†`.
pub fn hermitian_function(m: &DMatrix<C64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<C64>> {
    let (vals, vecs) = hermitian_eigen(m)?;
    Ok(reassemble(&vals, &vecs, f))
}

pub(crate) fn reassemble(
    vals: &[f64],
    vecs: &DMatrix<C64>,
    f: impl Fn(f64) -> f64,
) -> DMatrix<C64> {
    let n = vals.len();
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let fv = C64::new(f(v), 0.0);
        for i in 0..n {
            scaled[(i, j)] *= fv;
        }
    }
    &scaled * vecs.adjoint()
}

/// Square root of a PSD matrix; eigenvalues below `PSEUDO_RANK·λ_max`
/// (including clamped negatives) are treated as zero.
pub fn psd_sqrt(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let (vals, vecs) = hermitian_eigen(m)?;
    check_psd(&vals)?;
    let cut = tol::PSEUDO_RANK * vals.iter().cloned().fold(0.0f64, f64::max);
    Ok(reassemble(&vals, &vecs, |v| {
        if v > cut {
            v.sqrt()
        } else {
            0.0
        }
    }))
}

pub(crate) fn check_psd(vals: &[f64]) -> Result<()> {
    let scale = vals.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if let Some(&v) = vals.iter().find(|&&v| v < -tol::STRUCTURAL * scale) {
        return Err(LabError::InvalidState(format!(
            "negative eigenvalue {v:.3e} in a PSD operator"
        )));
    }
    Ok(())
}

/// Pseudo-inverse square root: eigenvalues `≥ rel_tol·λ_max` map to
/// `λ^{-1/2}`, the rest to zero.
pub fn inv_sqrt_on_support(m: &DMatrix<C64>, rel_tol: f64) -> Result<DMatrix<C64>> {
    let (vals, vecs) = hermitian_eigen(m)?;
    check_psd(&vals)?;
    let max = vals.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Err(LabError::InvalidArgument(
            "inverse square root of the zero operator".into(),
        ));
    }
    let cut = rel_tol * max;
    Ok(reassemble(&vals, &vecs, |v| {
        if v >= cut {
            1.0 / v.sqrt()
        } else {
            0.0
        }
    }))
}

/// Projector onto eigenvectors with eigenvalue `> rel_tol·λ_max`, and its rank.
pub fn support_projector(m: &DMatrix<C64>, rel_tol: f64) -> Result<(DMatrix<C64>, usize)> {
    let (vals, vecs) = hermitian_eigen(m)?;
    let max = vals.iter().cloned().fold(0.0f64, f64::max);
    let cut = rel_tol * max;
    let rank = vals.iter().filter(|&&v| v > cut).count();
    Ok((
        reassemble(&vals, &vecs, |v| if v > cut { 1.0 } else { 0.0 }),
        rank,
    ))
}

/// Numerical rank with the pseudo-rank cutoff.
pub fn numerical_rank(m: &DMatrix<C64>, rel_tol: f64) -> Result<usize> {
    let vals = hermitian_eigenvalues(m)?;
    let max = vals.iter().cloned().fold(0.0f64, f64::max);
    Ok(vals.iter().filter(|&&v| v > rel_tol * max).count())
}

pub fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

pub fn trace(m: &DMatrix<C64>) -> C64 {
    m.diagonal().iter().sum()
}

/// Largest entry-wise modulus of `a − b`.
pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Operator (spectral) norm of a Hermitian matrix.
pub fn hermitian_norm(m: &DMatrix<C64>) -> Result<f64> {
    Ok(hermitian_eigenvalues(m)?
        .into_iter()
        .fold(0.0f64, |a, v| a.max(v.abs())))
}
