//! Lowering of a [`ConicProgram`] to a real conic program of the form
//! `min q^T x + q0  s.t.  A x + s = b,  s in K`.

use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)] // inherent float methods take over when std is linked
use num_traits::Float;

use super::{AffineExpr, ConicProgram, Constraint, LmiBlock};
use crate::error::invalid;
use crate::linalg::{hermitian_defect, max_abs, CMatrix, C64};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RealCone {
    Zero(usize),
    NonNeg(usize),
    SecondOrder(usize),
    /// Symmetric PSD cone of the given side, rows in scaled upper-triangle
    /// column-major order (off-diagonal entries multiplied by sqrt 2).
    Psd(usize),
    Exp,
}

impl RealCone {
    pub fn rows(self) -> usize {
        match self {
            RealCone::Zero(n) | RealCone::NonNeg(n) | RealCone::SecondOrder(n) => n,
            RealCone::Psd(d) => d * (d + 1) / 2,
            RealCone::Exp => 3,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RealConicProgram {
    pub n: usize,
    pub q: Vec<f64>,
    pub q0: f64,
    /// `(row, col, value)` entries of `A`, possibly with repeats.
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub cones: Vec<RealCone>,
}

impl RealConicProgram {
    pub fn n_rows(&self) -> usize {
        self.b.len()
    }

    fn push_row(&mut self, e: &AffineExpr, scale: f64) {
        let row = self.b.len();
        for &(i, c) in &e.terms {
            if c != 0.0 {
                self.a.push((row, i, -c * scale));
            }
        }
        self.b.push(e.constant * scale);
    }

    fn push_cone(&mut self, cone: RealCone) {
        match (self.cones.last_mut(), cone) {
            (Some(RealCone::Zero(n)), RealCone::Zero(m)) => *n += m,
            (Some(RealCone::NonNeg(n)), RealCone::NonNeg(m)) => *n += m,
            _ => self.cones.push(cone),
        }
    }
}

/// Normalizes a scalar row by its largest coefficient, or by its constant
/// when that dominates (a nearly vacuous row such as a leakage cap far
/// above any reachable value).
fn row_scale(e: &AffineExpr) -> f64 {
    let m = e.max_abs_coef().max(e.constant.abs());
    if m > 0.0 && m.is_finite() {
        1.0 / m
    } else {
        1.0
    }
}

/// `[Re H, -Im H; Im H, Re H]`.
pub fn embed_hermitian(h: &CMatrix) -> Result<DMatrix<f64>> {
    let scale = max_abs(h).max(1.0);
    if hermitian_defect(h) > 1e-12 * scale {
        return Err(invalid("matrix is not Hermitian"));
    }
    Ok(embed_unchecked(h))
}

fn embed_unchecked(h: &CMatrix) -> DMatrix<f64> {
    let n = h.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
        }
    }
    out
}

/// Inverse of [`embed_hermitian`].
pub fn unembed_hermitian(r: &DMatrix<f64>) -> CMatrix {
    let n = r.nrows() / 2;
    CMatrix::from_fn(n, n, |i, j| C64::new(r[(i, j)], r[(i + n, j)]))
}

/// Connected components of the sparsity graph of an LMI block.
fn components(block: &LmiBlock) -> Vec<Vec<usize>> {
    let n = block.dim;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let link = |m: &CMatrix, parent: &mut Vec<usize>| {
        for i in 0..n {
            for j in (i + 1)..n {
                if m[(i, j)] != C64::new(0.0, 0.0) || m[(j, i)] != C64::new(0.0, 0.0) {
                    let (a, b) = (find(parent, i), find(parent, j));
                    if a != b {
                        parent[a] = b;
                    }
                }
            }
        }
    };
    link(&block.constant, &mut parent);
    for (_, m) in &block.terms {
        link(m, &mut parent);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of: Vec<Option<usize>> = alloc::vec![None; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        match root_of[r] {
            Some(g) => groups[g].push(i),
            None => {
                root_of[r] = Some(groups.len());
                groups.push(alloc::vec![i]);
            }
        }
    }
    groups
}

fn sub_matrix(m: &CMatrix, idx: &[usize]) -> CMatrix {
    CMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

fn lower_psd(out: &mut RealConicProgram, block: &LmiBlock) {
    for idx in components(block) {
        let constant = sub_matrix(&block.constant, &idx);
        let terms: Vec<(usize, CMatrix)> =
            block.terms.iter().map(|(i, m)| (*i, sub_matrix(m, &idx))).collect();
        if idx.len() == 1 {
            let mut e = AffineExpr::constant(constant[(0, 0)].re);
            for (i, m) in &terms {
                e.add_term(*i, m[(0, 0)].re);
            }
            if e.is_constant() && e.constant == 0.0 {
                continue;
            }
            out.push_row(&e, row_scale(&e));
            out.push_cone(RealCone::NonNeg(1));
            continue;
        }
        let is_real = core::iter::once(&constant)
            .chain(terms.iter().map(|(_, m)| m))
            .all(|m| m.iter().all(|z| z.im == 0.0));
        let to_real = |m: &CMatrix| -> DMatrix<f64> {
            if is_real {
                m.map(|z| z.re)
            } else {
                embed_unchecked(m)
            }
        };
        let r0 = to_real(&constant);
        let rs: Vec<(usize, DMatrix<f64>)> = terms.iter().map(|(i, m)| (*i, to_real(m))).collect();
        let d = r0.nrows();
        // diagonal congruence equilibration
        let mut row_max = alloc::vec![0.0f64; d];
        for (_, m) in &rs {
            for i in 0..d {
                for j in 0..d {
                    row_max[i] = row_max[i].max(m[(i, j)].abs());
                }
            }
        }
        let dscale: Vec<f64> = row_max
            .iter()
            .map(|&m| if m > 0.0 && m.is_finite() { 1.0 / m.sqrt() } else { 1.0 })
            .collect();
        for j in 0..d {
            for i in 0..=j {
                let f = if i == j { 1.0 } else { core::f64::consts::SQRT_2 } * dscale[i] * dscale[j];
                let mut e = AffineExpr::constant(r0[(i, j)]);
                for (v, m) in &rs {
                    e.add_term(*v, m[(i, j)]);
                }
                out.push_row(&e, f);
            }
        }
        out.push_cone(RealCone::Psd(d));
    }
}

/// Lowers a program to the real standard form consumed by backends. The
/// variable vector is unchanged; rows are rescaled for conditioning, which
/// leaves the feasible set intact.
pub fn lower(prog: &ConicProgram) -> Result<RealConicProgram> {
    prog.validate()?;
    let mut out = RealConicProgram { n: prog.n_scalars, ..Default::default() };
    out.q = alloc::vec![0.0; prog.n_scalars];
    for &(i, c) in &prog.objective.terms {
        out.q[i] += c;
    }
    out.q0 = prog.objective.constant;
    for con in &prog.constraints {
        match con {
            Constraint::Zero(e) => {
                let mut e = e.clone();
                e.simplify();
                out.push_row(&e, row_scale(&e));
                out.push_cone(RealCone::Zero(1));
            }
            Constraint::NonNeg(e) => {
                let mut e = e.clone();
                e.simplify();
                out.push_row(&e, row_scale(&e));
                out.push_cone(RealCone::NonNeg(1));
            }
            Constraint::SecondOrder(es) => {
                let m = es.iter().fold(0.0f64, |m, e| m.max(e.max_abs_coef()));
                let s = if m > 0.0 { 1.0 / m } else { 1.0 };
                for e in es {
                    out.push_row(e, s);
                }
                out.push_cone(RealCone::SecondOrder(es.len()));
            }
            Constraint::Exp(es) => {
                let m = es.iter().fold(0.0f64, |m, e| m.max(e.max_abs_coef()));
                let s = if m > 0.0 { 1.0 / m } else { 1.0 };
                for e in es {
                    out.push_row(e, s);
                }
                out.push_cone(RealCone::Exp);
            }
            Constraint::Psd(block) => {
                let mut b = block.clone();
                b.simplify();
                lower_psd(&mut out, &b);
            }
        }
    }
    Ok(out)
}
