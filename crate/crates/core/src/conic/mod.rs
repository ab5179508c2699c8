//! Solver-agnostic convex program representation.
//!
//! Programs are built over flat real scalar variables. A Hermitian `n x n`
//! variable owns `n^2` scalars: the `n` diagonal entries followed by the
//! real and imaginary parts of each strictly-upper entry in row order.
//! Objectives are minimized. Backends receive the program through
//! [`lower`] and implement [`ConicSolver`].

mod expr;
mod lower;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::linalg::{c, zeros, CMatrix};
use crate::Result;

pub use expr::{AffineExpr, LmiBlock};
pub use lower::{embed_hermitian, lower, unembed_hermitian, RealCone, RealConicProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Real(usize),
    Hermitian(usize),
}

impl VarKind {
    pub fn scalar_len(self) -> usize {
        match self {
            VarKind::Real(n) => n,
            VarKind::Hermitian(n) => n * n,
        }
    }
}

/// Handle to a declared variable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarHandle {
    pub offset: usize,
    pub kind: VarKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `e == 0`
    Zero(AffineExpr),
    /// `e >= 0`
    NonNeg(AffineExpr),
    /// `e[0] >= || e[1..] ||`
    SecondOrder(Vec<AffineExpr>),
    /// Affine Hermitian matrix PSD.
    Psd(LmiBlock),
    /// `(x, y, z)` with `y exp(x / y) <= z`, `y > 0`.
    Exp([AffineExpr; 3]),
}

/// A log term of the objective: `t <= ln(arg)` with `t` a scalar variable.
#[derive(Debug, Clone, PartialEq)]
pub struct LogTerm {
    pub weight: f64,
    pub epigraph: usize,
    pub arg: AffineExpr,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    pub vars: Vec<VarHandle>,
    pub n_scalars: usize,
    pub objective: AffineExpr,
    pub constraints: Vec<Constraint>,
    pub log_terms: Vec<LogTerm>,
}

fn herm_index(n: usize, i: usize, j: usize) -> usize {
    // position of the (re) entry for i < j, counted after the diagonal
    debug_assert!(i < j);
    let before = i * n - i * (i + 1) / 2; // pairs in rows < i
    n + 2 * (before + (j - i - 1))
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    fn declare(&mut self, kind: VarKind) -> VarHandle {
        let h = VarHandle { offset: self.n_scalars, kind };
        self.n_scalars += kind.scalar_len();
        self.vars.push(h);
        h
    }

    pub fn add_real(&mut self, len: usize) -> VarHandle {
        self.declare(VarKind::Real(len))
    }

    pub fn add_scalar(&mut self) -> AffineExpr {
        let h = self.add_real(1);
        AffineExpr::var(h.offset)
    }

    pub fn add_hermitian(&mut self, n: usize) -> VarHandle {
        self.declare(VarKind::Hermitian(n))
    }

    /// Entry `idx` of a real vector variable.
    pub fn scalar(&self, h: VarHandle, idx: usize) -> AffineExpr {
        match h.kind {
            VarKind::Real(n) => {
                assert!(idx < n, "index out of range");
                AffineExpr::var(h.offset + idx)
            }
            VarKind::Hermitian(_) => panic!("scalar() on a Hermitian variable"),
        }
    }

    /// The Hermitian variable as an affine matrix expression.
    pub fn hermitian(&self, h: VarHandle) -> LmiBlock {
        let n = match h.kind {
            VarKind::Hermitian(n) => n,
            VarKind::Real(_) => panic!("hermitian() on a real variable"),
        };
        let mut out = LmiBlock::zeros(n);
        for d in 0..n {
            let mut m = zeros(n, n);
            m[(d, d)] = c(1.0, 0.0);
            out.terms.push((h.offset + d, m));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let k = h.offset + herm_index(n, i, j);
                let mut re = zeros(n, n);
                re[(i, j)] = c(1.0, 0.0);
                re[(j, i)] = c(1.0, 0.0);
                let mut im = zeros(n, n);
                im[(i, j)] = c(0.0, 1.0);
                im[(j, i)] = c(0.0, -1.0);
                out.terms.push((k, re));
                out.terms.push((k + 1, im));
            }
        }
        out
    }

    /// Diagonal entry `d` of a Hermitian variable.
    pub fn hermitian_diag(&self, h: VarHandle, d: usize) -> AffineExpr {
        AffineExpr::var(h.offset + d)
    }

    /// `Re Tr(A X)` for a Hermitian variable `X`, without forming basis
    /// matrices.
    pub fn trace_with(&self, h: VarHandle, a: &CMatrix) -> AffineExpr {
        let n = match h.kind {
            VarKind::Hermitian(n) => n,
            VarKind::Real(_) => panic!("trace_with() on a real variable"),
        };
        let mut e = AffineExpr::default();
        for d in 0..n {
            e.add_term(h.offset + d, a[(d, d)].re);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let k = h.offset + herm_index(n, i, j);
                e.add_term(k, (a[(j, i)] + a[(i, j)]).re);
                e.add_term(k + 1, -(a[(j, i)] - a[(i, j)]).im);
            }
        }
        e
    }

    pub fn add_eq(&mut self, e: AffineExpr) {
        self.constraints.push(Constraint::Zero(e));
    }

    /// `e >= 0`
    pub fn add_nonneg(&mut self, e: AffineExpr) {
        self.constraints.push(Constraint::NonNeg(e));
    }

    /// `lhs <= rhs`
    pub fn add_le(&mut self, lhs: AffineExpr, rhs: AffineExpr) {
        self.add_nonneg(rhs - lhs);
    }

    pub fn add_soc(&mut self, t: AffineExpr, rest: Vec<AffineExpr>) {
        let mut all = alloc::vec![t];
        all.extend(rest);
        self.constraints.push(Constraint::SecondOrder(all));
    }

    pub fn add_psd(&mut self, block: LmiBlock) {
        self.constraints.push(Constraint::Psd(block));
    }

    pub fn add_exp(&mut self, x: AffineExpr, y: AffineExpr, z: AffineExpr) {
        self.constraints.push(Constraint::Exp([x, y, z]));
    }

    /// Adds `e` to the minimized objective.
    pub fn add_objective(&mut self, e: &AffineExpr) {
        self.objective.add_scaled(e, 1.0);
    }

    /// Adds `-weight * log2(arg)` to the minimized objective through an
    /// epigraph variable `t <= ln(arg)` (exponential cone `(t, 1, arg)`).
    /// Returns the epigraph variable.
    pub fn add_log_term(&mut self, weight: f64, arg: AffineExpr) -> VarHandle {
        assert!(weight >= 0.0, "log-term weight must be nonnegative");
        let h = self.add_real(1);
        let t = AffineExpr::var(h.offset);
        self.add_exp(t.clone(), AffineExpr::constant(1.0), arg.clone());
        self.objective.add_term(h.offset, -weight / core::f64::consts::LN_2);
        self.log_terms.push(LogTerm { weight, epigraph: h.offset, arg });
        h
    }

    /// Objective value with epigraph variables taken as given.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.evaluate(x)
    }

    /// Objective value with every epigraph variable replaced by the exact
    /// logarithm of its argument.
    pub fn exact_objective(&self, x: &[f64]) -> f64 {
        let mut y = x.to_vec();
        for lt in &self.log_terms {
            let arg = lt.arg.evaluate(x);
            y[lt.epigraph] = if arg > 0.0 { num_traits::Float::ln(arg) } else { f64::NEG_INFINITY };
        }
        self.objective.evaluate(&y)
    }

    pub fn value_real(&self, h: VarHandle, x: &[f64]) -> Vec<f64> {
        x[h.offset..h.offset + h.kind.scalar_len()].to_vec()
    }

    pub fn value_hermitian(&self, h: VarHandle, x: &[f64]) -> CMatrix {
        self.hermitian(h).evaluate(x)
    }

    /// Writes a Hermitian matrix into the scalar layout (for warm starts and
    /// feasibility checks).
    pub fn set_hermitian(&self, h: VarHandle, m: &CMatrix, x: &mut [f64]) {
        let n = match h.kind {
            VarKind::Hermitian(n) => n,
            VarKind::Real(_) => panic!("set_hermitian() on a real variable"),
        };
        for d in 0..n {
            x[h.offset + d] = m[(d, d)].re;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let k = h.offset + herm_index(n, i, j);
                x[k] = m[(i, j)].re;
                x[k + 1] = m[(i, j)].im;
            }
        }
    }

    /// Largest violation of any constraint at `x` (0 when feasible). PSD
    /// violations are measured by the most negative eigenvalue.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for con in &self.constraints {
            let v = match con {
                Constraint::Zero(e) => e.evaluate(x).abs(),
                Constraint::NonNeg(e) => (-e.evaluate(x)).max(0.0),
                Constraint::SecondOrder(es) => {
                    let t = es[0].evaluate(x);
                    let r: f64 = es[1..].iter().map(|e| { let v = e.evaluate(x); v * v }).sum();
                    (num_traits::Float::sqrt(r) - t).max(0.0)
                }
                Constraint::Psd(b) => (-crate::linalg::lambda_min(&b.evaluate(x))).max(0.0),
                Constraint::Exp([a, b, cc]) => {
                    let (xv, yv, zv) = (a.evaluate(x), b.evaluate(x), cc.evaluate(x));
                    if yv <= 0.0 {
                        f64::INFINITY
                    } else {
                        (yv * num_traits::Float::exp(xv / yv) - zv).max(0.0)
                    }
                }
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Checks that every referenced scalar index is declared.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_scalars;
        let aff_ok = |e: &AffineExpr| e.terms.iter().all(|&(i, _)| i < n);
        let ok = aff_ok(&self.objective)
            && self.log_terms.iter().all(|l| aff_ok(&l.arg) && l.epigraph < n)
            && self.constraints.iter().all(|c| match c {
                Constraint::Zero(e) | Constraint::NonNeg(e) => aff_ok(e),
                Constraint::SecondOrder(es) => !es.is_empty() && es.iter().all(aff_ok),
                Constraint::Exp(es) => es.iter().all(aff_ok),
                Constraint::Psd(b) => {
                    b.constant.shape() == (b.dim, b.dim)
                        && b.terms.iter().all(|(i, m)| *i < n && m.shape() == (b.dim, b.dim))
                }
            });
        if ok {
            Ok(())
        } else {
            Err(invalid("program references undeclared variables or has bad shapes"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveSettings {
    pub max_iters: u32,
    /// Relative duality-gap tolerance.
    pub tol_gap: f64,
    /// Primal/dual feasibility tolerance.
    pub tol_feas: f64,
    pub verbose: bool,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings { max_iters: 200, tol_gap: 1e-8, tol_feas: 1e-8, verbose: false }
    }
}

impl SolveSettings {
    /// Tighter tolerances for subproblems whose rank structure is tested.
    pub fn tight() -> Self {
        SolveSettings { tol_gap: 1e-12, tol_feas: 1e-12, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: u32,
    pub message: String,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// A conic backend. Implementations must be deterministic for identical
/// inputs and must report failures through the status, never by panicking.
pub trait ConicSolver {
    fn solve(&self, prog: &ConicProgram, settings: &SolveSettings) -> SolveResult;
}

impl<T: ConicSolver + ?Sized> ConicSolver for &T {
    fn solve(&self, prog: &ConicProgram, settings: &SolveSettings) -> SolveResult {
        (**self).solve(prog, settings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_defect, max_abs};

    fn sample_hermitian(n: usize) -> CMatrix {
        let mut m = CMatrix::from_fn(n, n, |i, j| c((i + 2 * j) as f64 * 0.3 - 1.0, (i as f64) - 0.7 * j as f64));
        m = crate::linalg::hermitian_part(&m);
        m
    }

    #[test]
    fn hermitian_layout_round_trip() {
        let mut prog = ConicProgram::new();
        let _pad = prog.add_real(2);
        let h = prog.add_hermitian(3);
        let m = sample_hermitian(3);
        let mut x = alloc::vec![0.0; prog.n_scalars];
        prog.set_hermitian(h, &m, &mut x);
        let back = prog.value_hermitian(h, &x);
        assert!(max_abs(&(&back - &m)) < 1e-15);
        assert!(hermitian_defect(&back) == 0.0);
    }

    #[test]
    fn trace_functional_matches_dense() {
        let mut prog = ConicProgram::new();
        let h = prog.add_hermitian(3);
        let m = sample_hermitian(3);
        let a = CMatrix::from_fn(3, 3, |i, j| c(i as f64 - j as f64 * 0.5, 0.25 * (i * j) as f64 + 0.1));
        let mut x = alloc::vec![0.0; prog.n_scalars];
        prog.set_hermitian(h, &m, &mut x);
        let dense = (&a * &m).trace().re;
        assert!((prog.trace_with(h, &a).evaluate(&x) - dense).abs() < 1e-12);
        assert!((prog.hermitian(h).trace_with(&a).evaluate(&x) - dense).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_log_term_leaves_objective() {
        let mut prog = ConicProgram::new();
        let x = prog.add_scalar();
        let before = prog.objective.clone();
        prog.add_log_term(0.0, x);
        assert!(prog.objective.is_constant());
        assert_eq!(before.constant, prog.objective.constant);
    }
}
