//! Small complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn diag(v: &CVec) -> CMat {
    CMat::from_diagonal(v)
}

/// Entrywise reciprocal, failing on exact zeros.
pub fn recip(v: &CVec) -> Result<CVec> {
    if let Some(index) = v.iter().position(|z| z.norm_sqr() == 0.0) {
        return Err(Error::SingularDiagonal { index });
    }
    Ok(v.map(|z| z.inv()))
}

/// `D_x · M`, scaling row `i` by `x_i`.
pub fn scale_rows(x: &CVec, m: &CMat) -> CMat {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= x[i];
    }
    out
}

/// `M · D_x`, scaling column `j` by `x_j`.
pub fn scale_cols(m: &CMat, x: &CVec) -> CMat {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= x[j];
    }
    out
}

/// `D_x · M · D_xᴴ`.
pub fn congruence_diag(x: &CVec, m: &CMat) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| x[i] * m[(i, j)] * x[j].conj())
}

/// `(M + Mᴴ) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_vec(v: &CVec) -> f64 {
    v.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    m.is_square() && max_abs(&(m - m.adjoint())) <= tol
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(m.nrows(), order.len(), |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigen(m).0.first().copied().unwrap_or(0.0)
}

/// A square factor `F` with `F Fᴴ = M` for a Hermitian PSD `M`, obtained
/// from the eigendecomposition with negative eigenvalues clipped to zero.
pub fn psd_factor(m: &CMat) -> CMat {
    let (values, vectors) = hermitian_eigen(m);
    let mut f = vectors;
    for (k, mut col) in f.column_iter_mut().enumerate() {
        col *= Complex64::from(values[k].max(0.0).sqrt());
    }
    f
}

/// Moore-Penrose pseudo-inverse of a Hermitian PSD matrix. Eigenvalues
/// below `rel_tol · λ_max` are treated as zero.
pub fn pinv_hermitian(m: &CMat, rel_tol: f64) -> CMat {
    let (values, vectors) = hermitian_eigen(m);
    let top = values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let n = m.nrows();
    let mut out = CMat::zeros(n, n);
    for (k, &lambda) in values.iter().enumerate() {
        if lambda > rel_tol * top && lambda > 0.0 {
            let v = vectors.column(k);
            out += (v * v.adjoint()).scale(1.0 / lambda);
        }
    }
    out
}

/// Solves `A X = B` for Hermitian positive definite `A`.
pub fn solve_hpd(a: &CMat, b: &CMat) -> Result<CMat> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(format!("{}x{} system", a.nrows(), a.ncols())))?;
    Ok(chol.solve(b))
}

/// Inverse of a general square matrix by LU.
pub fn inverse(a: &CMat) -> Result<CMat> {
    a.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveDefinite(format!("singular {}x{} matrix", a.nrows(), a.ncols())))
}

/// `xᵀ M y*` (plain transpose on the left, conjugate on the right).
pub fn bilinear(x: &CVec, m: &CMat, y: &CVec) -> Complex64 {
    let my = m * y.conjugate();
    x.iter().zip(my.iter()).map(|(a, b)| a * b).sum()
}

/// `xᵀ y` without conjugation.
pub fn dot_t(x: &CVec, y: &CVec) -> Complex64 {
    x.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

pub fn trace_re(m: &CMat) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// `‖A − B‖_F / ‖B‖_F`, or the absolute difference when `B = 0`.
pub fn rel_frobenius(a: &CMat, b: &CMat) -> f64 {
    let diff = (a - b).norm();
    let base = b.norm();
    if base == 0.0 {
        diff
    } else {
        diff / base
    }
}
