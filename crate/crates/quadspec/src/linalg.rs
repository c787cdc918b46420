//! Thin wrappers over faer for the small dense problems used throughout.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMat = Mat<C64>;

pub(crate) const I: C64 = C64::new(0.0, 1.0);

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(a: MatRef<'_, C64>) -> Result<(Vec<f64>, CMat)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::ConvergenceFailure)?;
    let s = evd.S();
    let vals = (0..a.nrows()).map(|i| s[i].re).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn hermitian_eigenvalues(a: MatRef<'_, C64>) -> Result<Vec<f64>> {
    let vals = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::ConvergenceFailure)?;
    Ok(vals)
}

pub fn symmetric_eigen(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::ConvergenceFailure)?;
    let s = evd.S();
    let vals = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn inverse(a: MatRef<'_, C64>) -> CMat {
    a.partial_piv_lu().inverse()
}

/// Singular values, descending.
pub fn singular_values(a: MatRef<'_, C64>) -> Result<Vec<f64>> {
    a.singular_values().map_err(|_| Error::ConvergenceFailure)
}

pub fn frobenius(a: MatRef<'_, C64>) -> f64 {
    a.norm_l2()
}

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn trace(a: MatRef<'_, C64>) -> C64 {
    (0..a.nrows()).map(|i| a[(i, i)]).sum()
}

/// Hilbert–Schmidt pairing `Tr(R* T)`.
pub fn hs_inner(r: MatRef<'_, C64>, t: MatRef<'_, C64>) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..r.ncols() {
        for i in 0..r.nrows() {
            acc += r[(i, j)].conj() * t[(i, j)];
        }
    }
    acc
}

pub fn adjoint(a: MatRef<'_, C64>) -> CMat {
    a.adjoint().to_owned()
}

pub fn scale(a: MatRef<'_, C64>, s: C64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn from_rows(rows: &[Vec<C64>]) -> CMat {
    Mat::from_fn(rows.len(), rows.first().map_or(0, Vec::len), |i, j| {
        rows[i][j]
    })
}
