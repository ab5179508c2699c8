//! Phase stage: lifted phase matrix, penalized SCA and phase recovery.
//!
//! With `theta_m = e^{-j psi_m}` and `Theta = [theta; 1][theta; 1]^H`, every
//! gain through the IRS is a quadratic form `Tr(Theta A)` with `A` built
//! from the channels and the fixed beams, powers and combiners.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::LN_2;

use super::wp::{relative_change, si_weight, DcParts};
use super::AlgoConfig;
use crate::conic::{AffineExpr, ConicProgram, ConicSolver, LmiBlock, SolveStatus, VarHandle};
use crate::error::invalid;
use crate::linalg::{cis, cvec_zeros, hermitian_eigen, hermitian_part, outer, trace_prod_re, trace_re, zeros, CMatrix, CVector, C64};
use crate::model::Scenario;
use crate::robust::{build_lmi_c4a, build_lmi_c4b, build_lmi_c4c_theta, c4d_theta, has_uncertainty, reflected_power_matrix, theta_c4c_factors};
use crate::Result;

#[allow(unused_imports)] // inherent float methods take over when std is linked
use num_traits::Float;

/// `[theta; 1][theta; 1]^H` with `theta_m = e^{-j psi_m}`.
pub fn lift_phases(psi: &[f64]) -> CMatrix {
    let m = psi.len();
    let mut t = cvec_zeros(m + 1);
    for (k, &x) in psi.iter().enumerate() {
        t[k] = cis(-x);
    }
    t[m] = C64::new(1.0, 0.0);
    outer(&t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredPhases {
    pub psi: Vec<f64>,
    /// `lambda_2 / lambda_1` of the lifted matrix.
    pub ratio: f64,
    pub flagged: bool,
    /// Largest radial correction applied when projecting to unit modulus.
    pub max_projection: f64,
}

/// Phases from the principal eigenvector of `theta`, normalized so that the
/// last entry is 1 and projected entry-wise onto the unit circle.
pub fn recover_psi(theta: &CMatrix, rank_tol: f64) -> Result<RecoveredPhases> {
    let dim = theta.nrows();
    if dim < 2 {
        return Err(invalid("lifted phase matrix must have dimension at least 2"));
    }
    let (vals, vecs) = hermitian_eigen(theta);
    let l1 = vals[0];
    if !(l1 > 0.0) {
        return Err(invalid("lifted phase matrix has no positive eigenvalue"));
    }
    let ratio = vals[1].max(0.0) / l1;
    // With a repeated top eigenvalue the eigenvector is arbitrary; take the
    // projection of the reference axis onto the top eigenspace instead.
    let mut top = vecs[0].clone();
    if vals[1] >= l1 * (1.0 - 1e-12) {
        top.fill(C64::new(0.0, 0.0));
        for (val, vec) in vals.iter().zip(&vecs) {
            if *val >= l1 * (1.0 - 1e-12) {
                top += vec * vec[dim - 1].conj();
            }
        }
    }
    let u = &top;
    let last = u[dim - 1];
    if last.norm() < 1e-12 {
        return Err(invalid("principal eigenvector has a vanishing reference entry"));
    }
    let mut psi = Vec::with_capacity(dim - 1);
    let mut max_projection: f64 = 0.0;
    for k in 0..dim - 1 {
        let t = u[k] / last;
        max_projection = max_projection.max((t.norm() - 1.0).abs());
        psi.push(-t.arg());
    }
    if max_projection > 1e-3 {
        log::debug!("phase projection moved an entry by {max_projection:.3e}");
    }
    Ok(RecoveredPhases { psi, ratio, flagged: ratio > rank_tol, max_projection })
}

/// Channel matrices of the lifted phase representation. They do not depend
/// on the phases; `theta_mat` holds the current lifted matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaData {
    pub theta_mat: CMatrix,
    /// `[diag(g_R^*) F; g_D^H]`, so `|g_hat^H w|^2 = Tr(Theta G w w^H G^H)`.
    pub g_lift: Vec<CMatrix>,
    /// `[diag(h_R^*) F; h_D^H]`; uplink gains use `Tr(Theta^T H v v^H H^H)`.
    pub h_lift: Vec<CMatrix>,
    pub l_lift: Vec<CMatrix>,
    pub q_lift: Vec<Vec<CMatrix>>,
    pub p_lift: Vec<Vec<CMatrix>>,
    pub rho: C64,
}

fn lift_rows(f: &CMatrix, r: &CVector, d: &CVector) -> CMatrix {
    let (m, n) = f.shape();
    let mut out = zeros(m + 1, n);
    for row in 0..m {
        let c = r[row].conj();
        for col in 0..n {
            out[(row, col)] = c * f[(row, col)];
        }
    }
    for col in 0..n {
        out[(m, col)] = d[col].conj();
    }
    out
}

fn lift_scalar(r: &CVector, h: &CVector, d: C64) -> CMatrix {
    let m = r.len();
    let mut c = cvec_zeros(m + 1);
    for k in 0..m {
        c[k] = r[k].conj() * h[k];
    }
    c[m] = d;
    outer(&c)
}

impl ThetaData {
    pub fn new(s: &Scenario, psi: &[f64]) -> Self {
        let g_lift = (0..s.k_dl()).map(|k| lift_rows(&s.f, &s.g_r[k], &s.g_d[k])).collect();
        let h_lift = (0..s.j_ul()).map(|t| lift_rows(&s.f, &s.h_r[t], &s.h_d[t])).collect();
        let l_lift = (0..s.i_pu()).map(|i| lift_rows(&s.f, &s.l_r_hat[i], &s.l_d_hat[i])).collect();
        let q_lift = (0..s.j_ul())
            .map(|j| (0..s.k_dl()).map(|k| lift_scalar(&s.g_r[k], &s.h_r[j], s.q[j][k])).collect())
            .collect();
        let p_lift = (0..s.i_pu())
            .map(|i| (0..s.j_ul()).map(|j| lift_scalar(&s.l_r_hat[i], &s.h_r[j], s.e_hat[i][j])).collect())
            .collect();
        ThetaData {
            theta_mat: lift_phases(psi),
            g_lift,
            h_lift,
            l_lift,
            q_lift,
            p_lift,
            rho: C64::new(1.0, 0.0),
        }
    }
}

/// One log argument `Tr(Theta total) + c` and its interference part
/// `Tr(Theta interference) + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedRate {
    pub total: CMatrix,
    pub interference: CMatrix,
    pub constant: f64,
}

impl LiftedRate {
    pub fn total_at(&self, theta: &CMatrix) -> f64 {
        trace_prod_re(theta, &self.total) + self.constant
    }

    pub fn interference_at(&self, theta: &CMatrix) -> f64 {
        trace_prod_re(theta, &self.interference) + self.constant
    }
}

/// Every rate of the network as lifted quadratic forms for fixed beams,
/// powers and combiners.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaTerms {
    pub dl: Vec<LiftedRate>,
    pub ul: Vec<LiftedRate>,
}

impl ThetaTerms {
    pub fn new(s: &Scenario, td: &ThetaData, w: &[CMatrix], p: &[f64], v: &[CVector]) -> Self {
        let dim = s.m() + 1;
        let dl = (0..s.k_dl())
            .map(|k| {
                let g = &td.g_lift[k];
                let mut total = zeros(dim, dim);
                let mut own = zeros(dim, dim);
                for (r, wr) in w.iter().enumerate() {
                    let x = g * wr * g.adjoint();
                    if r == k {
                        own = x.clone();
                    }
                    total += x;
                }
                for (j, &pj) in p.iter().enumerate() {
                    total += td.q_lift[j][k].scale(pj);
                }
                let interference = &total - own;
                LiftedRate { total, interference, constant: s.params.sigma2_dl[k] }
            })
            .collect();
        let ul = (0..s.j_ul())
            .map(|j| {
                let vj = &v[j];
                let siw = si_weight(s, vj);
                let constant = s.params.sigma2_ul * vj.norm_squared()
                    + w.iter().map(|wk| trace_prod_re(&siw, wk)).sum::<f64>();
                let mut total = zeros(dim, dim);
                let mut own = zeros(dim, dim);
                for (t, &pt) in p.iter().enumerate() {
                    let y = &td.h_lift[t] * vj;
                    let x = outer(&y).transpose().scale(pt);
                    if t == j {
                        own = x.clone();
                    }
                    total += x;
                }
                let interference = &total - own;
                LiftedRate { total, interference, constant }
            })
            .collect();
        ThetaTerms { dl, ul }
    }
}

pub fn dc_parts_theta(s: &Scenario, terms: &ThetaTerms, theta: &CMatrix) -> DcParts {
    let mut out = DcParts { f1: 0.0, f2: 0.0, g1: 0.0, g2: 0.0 };
    for (r, wt) in terms.dl.iter().zip(&s.params.weights_dl) {
        out.f1 -= wt * r.total_at(theta).log2();
        out.g1 -= wt * r.interference_at(theta).log2();
    }
    for (r, wt) in terms.ul.iter().zip(&s.params.weights_ul) {
        out.f2 -= wt * r.total_at(theta).log2();
        out.g2 -= wt * r.interference_at(theta).log2();
    }
    out
}

/// `Tr(Theta) - lambda_max(Theta)`, which equals zero exactly at rank one.
pub fn rank_residual(theta: &CMatrix) -> f64 {
    let (vals, _) = hermitian_eigen(theta);
    trace_re(theta) - vals[0]
}

/// Objective of the phase stage including the rank penalty.
pub fn penalized_objective(s: &Scenario, terms: &ThetaTerms, theta: &CMatrix, chi: f64) -> f64 {
    dc_parts_theta(s, terms, theta).objective() + chi * rank_residual(theta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaGradients {
    pub d_g1: CMatrix,
    pub d_g2: CMatrix,
    /// `u u^H` for the principal unit eigenvector `u` of the anchor.
    pub spectral_subgrad: CMatrix,
}

pub fn gradients_theta(s: &Scenario, terms: &ThetaTerms, theta: &CMatrix) -> ThetaGradients {
    let dim = theta.nrows();
    let mut d_g1 = zeros(dim, dim);
    for (r, wt) in terms.dl.iter().zip(&s.params.weights_dl) {
        d_g1 -= r.interference.scale(wt / (LN_2 * r.interference_at(theta)));
    }
    let mut d_g2 = zeros(dim, dim);
    for (r, wt) in terms.ul.iter().zip(&s.params.weights_ul) {
        d_g2 -= r.interference.scale(wt / (LN_2 * r.interference_at(theta)));
    }
    let (_, vecs) = hermitian_eigen(theta);
    ThetaGradients { d_g1, d_g2, spectral_subgrad: outer(&vecs[0]) }
}

#[derive(Debug, Clone, Copy)]
struct Scaled {
    index: usize,
    scale: f64,
}

impl Scaled {
    fn new(prog: &mut ConicProgram, scale: f64) -> Self {
        let index = prog.add_scalar().terms[0].0;
        Scaled { index, scale }
    }

    fn expr(self) -> AffineExpr {
        AffineExpr::term(self.index, self.scale)
    }

    fn set(self, x: &mut [f64], value: f64) {
        x[self.index] = value / self.scale;
    }
}

#[derive(Debug, Clone)]
struct PuVars {
    beta: Scaled,
    gamma: Scaled,
    tau: Scaled,
    delta: Option<Scaled>,
    kappa: Option<Scaled>,
    iota: Vec<Scaled>,
}

#[derive(Debug, Clone)]
pub struct ThetaProgram {
    pub prog: ConicProgram,
    pub theta: VarHandle,
    pus: Vec<Option<PuVars>>,
    /// Per PU: strictly positive weights and factors of `B`.
    factors: Vec<(f64, CMatrix)>,
    sum_w: CMatrix,
    nominal: Vec<CMatrix>,
}

impl ThetaProgram {
    pub fn theta_value(&self, x: &[f64]) -> CMatrix {
        hermitian_part(&self.prog.value_hermitian(self.theta, x))
    }

    /// Scalar vector for a given lifted matrix with the tightest slacks.
    pub fn point(&self, s: &Scenario, theta: &CMatrix, p: &[f64]) -> Vec<f64> {
        let mut x = alloc::vec![0.0; self.prog.n_scalars];
        self.prog.set_hermitian(self.theta, theta, &mut x);
        let m = s.m();
        let kappa = crate::linalg::lambda_max(&self.sum_w).max(0.0);
        let mut top = zeros(m + 1, m + 1);
        let tt = theta.transpose();
        for (sigma, d) in &self.factors {
            top += (d * &tt * d.adjoint()).scale(*sigma);
        }
        let delta = crate::linalg::lambda_max(&top.view((0, 0), (m, m)).into_owned()).max(0.0);
        for (i, vars) in self.pus.iter().enumerate() {
            if let Some(v) = vars {
                let tau = trace_prod_re(theta, &self.nominal[i]);
                let gamma = tau + s.eps_r[i].powi(2) * delta;
                let beta = gamma + s.eps_d[i].powi(2) * kappa;
                v.tau.set(&mut x, tau);
                v.gamma.set(&mut x, gamma);
                v.beta.set(&mut x, beta);
                if let Some(d) = v.delta {
                    d.set(&mut x, delta);
                }
                if let Some(k) = v.kappa {
                    k.set(&mut x, kappa);
                }
                for (q, &pj) in v.iota.iter().zip(p) {
                    q.set(&mut x, pj);
                }
            }
        }
        x
    }
}

/// Convex surrogate of the phase problem at the anchor `anchor` (a lifted
/// matrix) for fixed beams, powers and combiners. The nuclear norm of a
/// PSD matrix with unit diagonal is its trace, the constant `M + 1`, so the
/// penalty reduces to minus the linearized spectral norm.
pub fn build_subproblem_theta(
    s: &Scenario,
    td: &ThetaData,
    terms: &ThetaTerms,
    anchor: &CMatrix,
    w: &[CMatrix],
    p: &[f64],
    chi: f64,
) -> Result<ThetaProgram> {
    let m = s.m();
    let dim = m + 1;
    if anchor.shape() != (dim, dim) {
        return Err(invalid("anchor must have dimension M + 1"));
    }
    let par = &s.params;
    let mut prog = ConicProgram::new();
    let h = prog.add_hermitian(dim);
    let theta_blk = prog.hermitian(h);
    prog.add_psd(theta_blk.clone());
    for d in 0..dim {
        prog.add_eq(prog.hermitian_diag(h, d) - AffineExpr::constant(1.0));
    }

    let mut sum_w = zeros(s.n_t(), s.n_t());
    for wk in w {
        sum_w += wk;
    }
    let b = hermitian_part(&reflected_power_matrix(s, w, p));
    let factors = theta_c4c_factors(&b)?;
    let b_scale = {
        let tr = trace_re(&b);
        if tr > 0.0 {
            tr
        } else {
            1.0
        }
    };
    let p_dl = par.p_max_dl;
    let p_const: Vec<AffineExpr> = p.iter().map(|&x| AffineExpr::constant(x)).collect();
    let sum_w_blk = LmiBlock::from_constant(sum_w.clone());
    let mut pus = Vec::with_capacity(s.i_pu());
    let mut nominal = Vec::with_capacity(s.i_pu());
    for i in 0..s.i_pu() {
        let tol = par.p_tol[i];
        let mut nom = zeros(dim, dim);
        for wk in w {
            nom += &td.l_lift[i] * wk * td.l_lift[i].adjoint();
        }
        for (pl, &pj) in td.p_lift[i].iter().zip(p) {
            nom += pl.scale(pj);
        }
        nominal.push(nom);
        if !has_uncertainty(s, i) {
            let lhs = c4d_theta(&theta_blk, &td.l_lift[i], w, &td.p_lift[i], p, &AffineExpr::constant(tol));
            prog.add_nonneg(-lhs);
            pus.push(None);
            continue;
        }
        let beta = Scaled::new(&mut prog, tol);
        let gamma = Scaled::new(&mut prog, tol);
        let tau = Scaled::new(&mut prog, tol);
        let iota: Vec<Scaled> = (0..s.j_ul()).map(|j| Scaled::new(&mut prog, par.p_max_ul[j])).collect();
        let iota_e: Vec<AffineExpr> = iota.iter().map(|q| q.expr()).collect();
        prog.add_psd(build_lmi_c4a(&p_const, &beta.expr(), &iota_e, &s.eps_e[i], tol)?);
        let kappa = if s.eps_d[i] > 0.0 {
            let kappa = Scaled::new(&mut prog, p_dl);
            prog.add_psd(build_lmi_c4b(&sum_w_blk, &beta.expr(), &gamma.expr(), &kappa.expr(), s.eps_d[i])?);
            Some(kappa)
        } else {
            prog.add_le(gamma.expr(), beta.expr());
            None
        };
        let delta = if s.eps_r[i] > 0.0 {
            let delta = Scaled::new(&mut prog, b_scale);
            prog.add_psd(build_lmi_c4c_theta(&b, &theta_blk, &gamma.expr(), &tau.expr(), &delta.expr(), s.eps_r[i])?);
            Some(delta)
        } else {
            prog.add_le(tau.expr(), gamma.expr());
            None
        };
        prog.add_nonneg(-c4d_theta(&theta_blk, &td.l_lift[i], w, &td.p_lift[i], p, &tau.expr()));
        pus.push(Some(PuVars { beta, gamma, tau, delta, kappa, iota }));
    }

    let rates = terms.dl.iter().zip(&par.weights_dl).chain(terms.ul.iter().zip(&par.weights_ul));
    for (r, &wt) in rates {
        if wt == 0.0 {
            continue;
        }
        let c = r.constant;
        let mut arg = prog.trace_with(h, &r.total.scale(1.0 / c));
        arg.constant += 1.0;
        arg.simplify();
        prog.add_log_term(wt, arg);
        prog.add_objective(&AffineExpr::constant(-wt * c.log2()));
    }
    let base = dc_parts_theta(s, terms, anchor);
    let grad = gradients_theta(s, terms, anchor);
    let gsum = &grad.d_g1 + &grad.d_g2;
    let mut lin = prog.trace_with(h, &gsum).scaled(-1.0);
    lin.constant += trace_prod_re(&gsum, anchor) - (base.g1 + base.g2);
    if chi > 0.0 {
        lin.add_scaled(&prog.trace_with(h, &grad.spectral_subgrad), -chi);
        lin.constant += chi * dim as f64;
    }
    lin.simplify();
    prog.add_objective(&lin);
    Ok(ThetaProgram { prog, theta: h, pus, factors, sum_w, nominal })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSegment {
    pub chi: f64,
    /// Penalized objective at each accepted iterate.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaResult {
    pub psi: Vec<f64>,
    pub theta: CMatrix,
    pub ratio: f64,
    pub residual: f64,
    pub segments: Vec<ThetaSegment>,
    pub degraded: bool,
    pub notes: Vec<String>,
}

/// Penalized SCA over the lifted phase matrix for fixed beams, powers and
/// combiners. If the result is not rank one to `rank_tol`, the penalty is
/// raised tenfold and the loop restarts from the current iterate, up to
/// `cfg.max_chi_escalations` times.
#[allow(clippy::too_many_arguments)]
pub fn sca_theta<S: ConicSolver + ?Sized>(
    solver: &S,
    s: &Scenario,
    psi: &[f64],
    w: &[CMatrix],
    p: &[f64],
    v: &[CVector],
    cfg: &AlgoConfig,
) -> ThetaResult {
    let td = ThetaData::new(s, psi);
    let terms = ThetaTerms::new(s, &td, w, p, v);
    let mut theta = td.theta_mat.clone();
    let mut chi = cfg.chi;
    let mut out = ThetaResult {
        psi: psi.to_vec(),
        theta: theta.clone(),
        ratio: 0.0,
        residual: 0.0,
        segments: Vec::new(),
        degraded: false,
        notes: Vec::new(),
    };
    for esc in 0..=cfg.max_chi_escalations {
        let mut val = penalized_objective(s, &terms, &theta, chi);
        let mut seg = ThetaSegment { chi, values: alloc::vec![val] };
        for _ in 0..cfg.max_inner_iters {
            let sub = match build_subproblem_theta(s, &td, &terms, &theta, w, p, chi) {
                Ok(sub) => sub,
                Err(e) => {
                    out.degraded = true;
                    out.notes.push(alloc::format!("theta build failed: {e}"));
                    break;
                }
            };
            let res = super::solve_with_fallback(solver, &sub.prog, &cfg.solver);
            let usable = matches!(
                res.status,
                SolveStatus::Optimal | SolveStatus::NumericalFailure | SolveStatus::IterationLimit
            ) && res.x.len() == sub.prog.n_scalars
                && res.x.iter().all(|x| x.is_finite());
            if !usable {
                out.degraded = true;
                out.notes.push(alloc::format!("theta solve: {:?} {}", res.status, res.message));
                break;
            }
            let cand = sub.theta_value(&res.x);
            let nval = penalized_objective(s, &terms, &cand, chi);
            if !(nval <= val) {
                if !super::stalled_near_optimum(&res) {
                    out.degraded = true;
                    out.notes.push(alloc::format!("theta solve: {:?} without progress ({:?})", res.status, res.residuals));
                }
                break;
            }
            let change = relative_change(val, nval);
            theta = cand;
            val = nval;
            seg.values.push(val);
            if change <= cfg.eps_sca {
                break;
            }
        }
        out.segments.push(seg);
        let (vals, _) = hermitian_eigen(&theta);
        let ratio = if vals[0] > 0.0 { vals[1].max(0.0) / vals[0] } else { 1.0 };
        if ratio <= cfg.rank_tol || esc == cfg.max_chi_escalations || out.degraded {
            break;
        }
        chi *= 10.0;
    }
    out.residual = rank_residual(&theta);
    match recover_psi(&theta, cfg.rank_tol) {
        Ok(rec) => {
            out.ratio = rec.ratio;
            if rec.flagged {
                out.degraded = true;
                out.notes.push(alloc::format!("phase matrix not rank one: ratio {:.3e}", rec.ratio));
            }
            out.psi = rec.psi;
        }
        Err(e) => {
            out.degraded = true;
            out.notes.push(alloc::format!("phase recovery failed: {e}"));
        }
    }
    out.theta = theta;
    out
}
