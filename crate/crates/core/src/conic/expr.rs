//! Affine scalar and Hermitian-matrix-valued expressions over the scalar
//! variables of a [`super::ConicProgram`].

use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::linalg::{zeros, CMatrix, C64};

/// `constant + sum coef * x[index]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        AffineExpr { terms: Vec::new(), constant: c }
    }

    pub fn var(index: usize) -> Self {
        AffineExpr { terms: alloc::vec![(index, 1.0)], constant: 0.0 }
    }

    pub fn term(index: usize, coef: f64) -> Self {
        AffineExpr { terms: alloc::vec![(index, coef)], constant: 0.0 }
    }

    pub fn add_term(&mut self, index: usize, coef: f64) {
        if coef != 0.0 {
            self.terms.push((index, coef));
        }
    }

    pub fn add_scaled(&mut self, other: &AffineExpr, scale: f64) {
        if scale == 0.0 {
            return;
        }
        self.terms.extend(other.terms.iter().map(|&(i, c)| (i, c * scale)));
        self.constant += other.constant * scale;
    }

    pub fn scaled(&self, scale: f64) -> Self {
        AffineExpr {
            terms: self.terms.iter().map(|&(i, c)| (i, c * scale)).collect(),
            constant: self.constant * scale,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    /// Merges repeated indices and drops zero coefficients.
    pub fn simplify(&mut self) {
        self.terms.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(i, c) in &self.terms {
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += c,
                _ => merged.push((i, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        self.terms = merged;
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|&(_, c)| c == 0.0)
    }

    pub fn max_abs_coef(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, &(_, c)| m.max(c.abs()))
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: AffineExpr) -> AffineExpr {
        self.add_scaled(&rhs, 1.0);
        self
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(mut self, rhs: AffineExpr) -> AffineExpr {
        self.add_scaled(&rhs, -1.0);
        self
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for AffineExpr {
    type Output = AffineExpr;
    fn mul(self, rhs: f64) -> AffineExpr {
        self.scaled(rhs)
    }
}

impl Add<f64> for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: f64) -> AffineExpr {
        self.constant += rhs;
        self
    }
}

/// Affine Hermitian-matrix-valued function `constant + sum x[index] * coef`
/// whose value is required to be PSD when used as a constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub dim: usize,
    pub constant: CMatrix,
    pub terms: Vec<(usize, CMatrix)>,
}

impl LmiBlock {
    pub fn zeros(dim: usize) -> Self {
        LmiBlock { dim, constant: zeros(dim, dim), terms: Vec::new() }
    }

    pub fn from_constant(m: CMatrix) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "LMI blocks are square");
        LmiBlock { dim: m.nrows(), constant: m, terms: Vec::new() }
    }

    /// `e * I`.
    pub fn identity_times(dim: usize, e: &AffineExpr) -> Self {
        Self::scalar_at(dim, e, &(0..dim).collect::<Vec<_>>())
    }

    /// `e` placed on the listed diagonal positions, zero elsewhere.
    pub fn scalar_at(dim: usize, e: &AffineExpr, positions: &[usize]) -> Self {
        let mut pattern = zeros(dim, dim);
        for &p in positions {
            pattern[(p, p)] = C64::new(1.0, 0.0);
        }
        let mut out = LmiBlock::zeros(dim);
        out.constant = pattern.scale(e.constant);
        out.terms = e.terms.iter().map(|&(i, c)| (i, pattern.scale(c))).collect();
        out
    }

    /// Affine scalar times a fixed matrix.
    pub fn scalar_times(e: &AffineExpr, m: &CMatrix) -> Self {
        LmiBlock {
            dim: m.nrows(),
            constant: m.scale(e.constant),
            terms: e.terms.iter().map(|&(i, c)| (i, m.scale(c))).collect(),
        }
    }

    pub fn add_block(&mut self, other: &LmiBlock, scale: f64) {
        assert_eq!(self.dim, other.dim, "LMI dimension mismatch");
        if scale == 0.0 {
            return;
        }
        self.constant += other.constant.scale(scale);
        self.terms.extend(other.terms.iter().map(|(i, m)| (*i, m.scale(scale))));
    }

    pub fn plus(mut self, other: &LmiBlock) -> Self {
        self.add_block(other, 1.0);
        self
    }

    pub fn minus(mut self, other: &LmiBlock) -> Self {
        self.add_block(other, -1.0);
        self
    }

    pub fn scaled(&self, s: f64) -> Self {
        LmiBlock {
            dim: self.dim,
            constant: self.constant.scale(s),
            terms: self.terms.iter().map(|(i, m)| (*i, m.scale(s))).collect(),
        }
    }

    /// `A X A^H` applied to every coefficient.
    pub fn congruence(&self, a: &CMatrix) -> Self {
        assert_eq!(a.ncols(), self.dim, "congruence dimension mismatch");
        let ah = a.adjoint();
        LmiBlock {
            dim: a.nrows(),
            constant: a * &self.constant * &ah,
            terms: self.terms.iter().map(|(i, m)| (*i, a * m * &ah)).collect(),
        }
    }

    /// Entry-wise transpose (equal to the conjugate for Hermitian values).
    pub fn transpose(&self) -> Self {
        LmiBlock {
            dim: self.dim,
            constant: self.constant.transpose(),
            terms: self.terms.iter().map(|(i, m)| (*i, m.transpose())).collect(),
        }
    }

    /// Places the blocks along the diagonal of a larger block.
    pub fn block_diag(blocks: &[LmiBlock]) -> Self {
        let dim: usize = blocks.iter().map(|b| b.dim).sum();
        let mut out = LmiBlock::zeros(dim);
        let mut offset = 0;
        for b in blocks {
            out.constant.view_mut((offset, offset), (b.dim, b.dim)).copy_from(&b.constant);
            for (i, m) in &b.terms {
                let mut big = zeros(dim, dim);
                big.view_mut((offset, offset), (b.dim, b.dim)).copy_from(m);
                out.terms.push((*i, big));
            }
            offset += b.dim;
        }
        out
    }

    /// `Re Tr(A M(x))` as a scalar affine expression.
    pub fn trace_with(&self, a: &CMatrix) -> AffineExpr {
        let tr = |m: &CMatrix| crate::linalg::trace_prod_re(a, m);
        let mut e = AffineExpr::constant(tr(&self.constant));
        for (i, m) in &self.terms {
            e.add_term(*i, tr(m));
        }
        e
    }

    pub fn evaluate(&self, x: &[f64]) -> CMatrix {
        let mut out = self.constant.clone();
        for (i, m) in &self.terms {
            out += m.scale(x[*i]);
        }
        out
    }

    /// Merges terms that reference the same variable.
    pub fn simplify(&mut self) {
        self.terms.sort_by_key(|(i, _)| *i);
        let mut merged: Vec<(usize, CMatrix)> = Vec::with_capacity(self.terms.len());
        for (i, m) in self.terms.drain(..) {
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += m,
                _ => merged.push((i, m)),
            }
        }
        merged.retain(|(_, m)| m.iter().any(|z| z.re != 0.0 || z.im != 0.0));
        self.terms = merged;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn affine_ops_and_simplify() {
        let mut e = AffineExpr::var(2) + AffineExpr::term(0, 3.0) - AffineExpr::var(2) + 1.5;
        e.simplify();
        assert_eq!(e.terms, alloc::vec![(0, 3.0)]);
        assert_eq!(e.evaluate(&[2.0, 0.0, 9.0]), 7.5);
    }

    #[test]
    fn block_diag_and_trace() {
        let a = LmiBlock::identity_times(2, &AffineExpr::var(0));
        let b = LmiBlock::from_constant(CMatrix::from_element(1, 1, c(4.0, 0.0)));
        let d = LmiBlock::block_diag(&[a, b]);
        let v = d.evaluate(&[3.0]);
        assert_eq!(v[(0, 0)], c(3.0, 0.0));
        assert_eq!(v[(2, 2)], c(4.0, 0.0));
        assert_eq!(v[(0, 2)], c(0.0, 0.0));
        let t = d.trace_with(&CMatrix::identity(3, 3));
        assert_eq!(t.evaluate(&[3.0]), 10.0);
    }
}
