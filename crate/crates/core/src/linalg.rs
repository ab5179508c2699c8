//! Small complex linear-algebra helpers shared by the model and the solvers.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
#[allow(unused_imports)] // inherent float methods take over when std is linked
use num_traits::Float;

pub type C64 = Complex<f64>;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `e^{j phi}`.
#[inline]
pub fn cis(phi: f64) -> C64 {
    C64::new(phi.cos(), phi.sin())
}

pub fn zeros(n: usize, m: usize) -> CMatrix {
    CMatrix::zeros(n, m)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn cvec_zeros(n: usize) -> CVector {
    CVector::zeros(n)
}

/// `a a^H`.
pub fn outer(a: &CVector) -> CMatrix {
    a * a.adjoint()
}

/// `x^H y`.
#[inline]
pub fn inner(x: &CVector, y: &CVector) -> C64 {
    x.dotc(y)
}

pub fn norm_sqr(x: &CVector) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// Diagonal matrix from a vector.
pub fn diag(v: &CVector) -> CMatrix {
    CMatrix::from_diagonal(v)
}

/// `Diag(A)`: keeps the main diagonal, zeroes everything else.
pub fn diag_part(a: &CMatrix) -> CMatrix {
    CMatrix::from_diagonal(&a.diagonal())
}

/// IRS reflection matrix `diag(e^{j psi_m})`.
pub fn phase_matrix(psi: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(psi.len(), psi.iter().map(|&p| cis(p))))
}

/// Real part of `Tr(A B)`, computed without forming the product.
pub fn trace_prod_re(a: &CMatrix, b: &CMatrix) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            let x = a[(i, k)] * b[(k, i)];
            acc += x.re;
        }
    }
    acc
}

pub fn trace_re(a: &CMatrix) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// Largest entry-wise deviation from Hermitian symmetry.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    if a.nrows() != a.ncols() {
        return f64::INFINITY;
    }
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(A + A^H) / 2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues in descending
/// order. The sort is stable, so ties keep the order of the eigen routine.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, Vec<CVector>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let eig = hermitian_part(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .partial_cmp(&eig.eigenvalues[x])
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    (values, vectors)
}

pub fn lambda_max(a: &CMatrix) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    hermitian_eigen(a).0[0]
}

pub fn lambda_min(a: &CMatrix) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    *hermitian_eigen(a).0.last().unwrap()
}

/// Solves `A x = b` for Hermitian positive definite `A`.
pub fn hpd_solve(a: &CMatrix, b: &CVector) -> Option<CVector> {
    let chol = hermitian_part(a).cholesky()?;
    Some(chol.solve(b))
}

/// Orthogonal projector onto the complement of the column space of `a`.
/// Returns `None` when the Gram matrix is numerically singular.
pub fn null_projector(a: &CMatrix) -> Option<CMatrix> {
    let n = a.nrows();
    if a.ncols() == 0 {
        return Some(identity(n));
    }
    let gram = a.adjoint() * a;
    let inv = gram.try_inverse()?;
    Some(identity(n) - a * inv * a.adjoint())
}

/// Builds a column vector from a slice.
pub fn cvec(values: &[C64]) -> CVector {
    CVector::from_column_slice(values)
}

/// Stacks column vectors side by side.
pub fn hstack(cols: &[CVector], nrows: usize) -> CMatrix {
    let mut m = zeros(nrows, cols.len());
    for (j, col) in cols.iter().enumerate() {
        m.set_column(j, col);
    }
    m
}
