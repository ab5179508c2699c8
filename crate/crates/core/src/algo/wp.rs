//! Beamforming and uplink power stage: difference-of-convex surrogate,
//! its gradients, the SDR subproblem and the SCA loop.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::LN_2;

use super::{AlgoConfig, EffectiveChannels};
use crate::conic::{AffineExpr, ConicProgram, ConicSolver, LmiBlock, SolveStatus, VarHandle};
use crate::error::invalid;
use crate::linalg::{hermitian_eigen, hermitian_part, outer, trace_prod_re, zeros, CMatrix, CVector};
use crate::model::Scenario;
use crate::robust::{
    build_lmi_c4a, build_lmi_c4b, build_lmi_c4c_fixed, c4d_fixed, canonical_slacks_mats, has_uncertainty,
    safe_leakage_bound_mats,
};
use crate::Result;

#[allow(unused_imports)] // inherent float methods take over when std is linked
use num_traits::Float;

/// `F = f1 + f2 - g1 - g2`, all in bits. `f` terms are minus the weighted
/// log of signal-plus-interference, `g` terms minus the weighted log of
/// interference alone, so `F` is minus the weighted sum rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcParts {
    pub f1: f64,
    pub f2: f64,
    pub g1: f64,
    pub g2: f64,
}

impl DcParts {
    pub fn objective(&self) -> f64 {
        self.f1 + self.f2 - self.g1 - self.g2
    }
}

/// `eta S^H Diag(|v|^2) S`, so that the residual SI seen by `v` is
/// `sum_k Tr(. W_k)`.
pub fn si_weight(s: &Scenario, v: &CVector) -> CMatrix {
    let mut d = s.s_si.clone();
    for (r, z) in v.iter().enumerate() {
        let a = z.norm_sqr();
        for col in 0..d.ncols() {
            d[(r, col)] *= a;
        }
    }
    (s.s_si.adjoint() * d).scale(s.params.eta)
}

/// Per-DL-user `(total, interference-plus-noise)` powers.
pub fn dl_powers(s: &Scenario, ec: &EffectiveChannels, w: &[CMatrix], p: &[f64]) -> Vec<(f64, f64)> {
    (0..s.k_dl())
        .map(|k| {
            let g = &ec.g_hat[k];
            let mut interf = s.params.sigma2_dl[k];
            let mut own = 0.0;
            for (r, wr) in w.iter().enumerate() {
                let x = g.dotc(&(wr * g)).re;
                if r == k {
                    own = x;
                } else {
                    interf += x;
                }
            }
            for (j, &pj) in p.iter().enumerate() {
                interf += pj * ec.phi[j][k].norm_sqr();
            }
            (own + interf, interf)
        })
        .collect()
}

/// Per-UL-user `(total, interference-plus-noise)` powers at combiners `v`.
pub fn ul_powers(
    s: &Scenario,
    ec: &EffectiveChannels,
    w: &[CMatrix],
    p: &[f64],
    v: &[CVector],
) -> Vec<(f64, f64)> {
    (0..s.j_ul())
        .map(|j| {
            let vj = &v[j];
            let siw = si_weight(s, vj);
            let mut interf = s.params.sigma2_ul * vj.norm_squared();
            interf += w.iter().map(|wk| trace_prod_re(&siw, wk)).sum::<f64>();
            let mut own = 0.0;
            for (t, &pt) in p.iter().enumerate() {
                let x = pt * ec.h_hat[t].dotc(vj).norm_sqr();
                if t == j {
                    own = x;
                } else {
                    interf += x;
                }
            }
            (own + interf, interf)
        })
        .collect()
}

pub fn dc_parts_wp(
    s: &Scenario,
    ec: &EffectiveChannels,
    w: &[CMatrix],
    p: &[f64],
    v: &[CVector],
) -> DcParts {
    let mut out = DcParts { f1: 0.0, f2: 0.0, g1: 0.0, g2: 0.0 };
    for ((tot, int), wt) in dl_powers(s, ec, w, p).into_iter().zip(&s.params.weights_dl) {
        out.f1 -= wt * tot.log2();
        out.g1 -= wt * int.log2();
    }
    for ((tot, int), wt) in ul_powers(s, ec, w, p, v).into_iter().zip(&s.params.weights_ul) {
        out.f2 -= wt * tot.log2();
        out.g2 -= wt * int.log2();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct WpGradients {
    pub dw_g1: Vec<CMatrix>,
    pub dp_g1: Vec<f64>,
    pub dw_g2: Vec<CMatrix>,
    pub dp_g2: Vec<f64>,
}

/// Gradients of `g1` and `g2` with respect to the beam matrices (as
/// Hermitian matrices `G` with `dg = Re Tr(G dW)`) and the uplink powers.
pub fn gradients_wp(
    s: &Scenario,
    ec: &EffectiveChannels,
    w: &[CMatrix],
    p: &[f64],
    v: &[CVector],
) -> WpGradients {
    let n = s.n_t();
    let (k_dl, j_ul) = (s.k_dl(), s.j_ul());
    let dl = dl_powers(s, ec, w, p);
    let ul = ul_powers(s, ec, w, p, v);
    let wdl = &s.params.weights_dl;
    let wul = &s.params.weights_ul;

    let mut dw_g1 = alloc::vec![zeros(n, n); k_dl];
    for k in 0..k_dl {
        let gg = outer(&ec.g_hat[k]).scale(-wdl[k] / (LN_2 * dl[k].1));
        for (r, d) in dw_g1.iter_mut().enumerate() {
            if r != k {
                *d += &gg;
            }
        }
    }
    let dp_g1 = (0..j_ul)
        .map(|j| -(0..k_dl).map(|k| wdl[k] * ec.phi[j][k].norm_sqr() / dl[k].1).sum::<f64>() / LN_2)
        .collect();

    let mut common = zeros(n, n);
    for j in 0..j_ul {
        common += si_weight(s, &v[j]).scale(-wul[j] / (LN_2 * ul[j].1));
    }
    let dw_g2 = alloc::vec![common; k_dl];
    let dp_g2 = (0..j_ul)
        .map(|t| {
            -(0..j_ul)
                .filter(|&j| j != t)
                .map(|j| wul[j] * ec.h_hat[t].dotc(&v[j]).norm_sqr() / ul[j].1)
                .sum::<f64>()
                / LN_2
        })
        .collect();
    WpGradients { dw_g1, dp_g1, dw_g2, dp_g2 }
}

/// Tangent-plane values of `g1` and `g2` at `(w, p)` built from the anchor.
pub fn linearized_g_wp(
    s: &Scenario,
    ec: &EffectiveChannels,
    anchor: (&[CMatrix], &[f64]),
    v: &[CVector],
    w: &[CMatrix],
    p: &[f64],
) -> (f64, f64) {
    let (aw, ap) = anchor;
    let base = dc_parts_wp(s, ec, aw, ap, v);
    let grad = gradients_wp(s, ec, aw, ap, v);
    let mut g1 = base.g1;
    let mut g2 = base.g2;
    for k in 0..w.len() {
        let dw = &w[k] - &aw[k];
        g1 += trace_prod_re(&grad.dw_g1[k], &dw);
        g2 += trace_prod_re(&grad.dw_g2[k], &dw);
    }
    for j in 0..p.len() {
        g1 += grad.dp_g1[j] * (p[j] - ap[j]);
        g2 += grad.dp_g2[j] * (p[j] - ap[j]);
    }
    (g1, g2)
}

/// How the downlink beams are parametrized in the subproblem.
#[derive(Debug, Clone, Copy)]
pub enum BeamShape<'a> {
    /// One Hermitian PSD matrix per user (semidefinite relaxation).
    Free,
    /// Fixed unit directions; only the per-beam power is optimized.
    Fixed(&'a [CVector]),
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

    fn get(self, x: &[f64]) -> f64 {
        x[self.index] * self.scale
    }
}

#[derive(Debug, Clone)]
enum BeamVar {
    Matrix(VarHandle),
    Power(Scaled, CMatrix),
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

/// Subproblem of the beamforming stage together with the variable map
/// needed to read a solution back or to evaluate the program at a point.
#[derive(Debug, Clone)]
pub struct WpProgram {
    pub prog: ConicProgram,
    beams: Vec<BeamVar>,
    powers: Vec<Scaled>,
    pus: Vec<Option<PuVars>>,
    p_dl: f64,
}

impl WpProgram {
    pub fn beams(&self, x: &[f64]) -> Vec<CMatrix> {
        self.beams
            .iter()
            .map(|b| match b {
                BeamVar::Matrix(h) => self.prog.value_hermitian(*h, x).scale(self.p_dl),
                BeamVar::Power(q, uu) => uu.scale(q.get(x)),
            })
            .collect()
    }

    pub fn powers(&self, x: &[f64]) -> Vec<f64> {
        self.powers.iter().map(|q| q.get(x)).collect()
    }

    /// Scalar vector representing `(w, p)` with the tightest slacks, for
    /// checking the program at a known point. Log epigraph entries are left
    /// at zero; use `exact_objective` to evaluate.
    pub fn point(&self, s: &Scenario, w: &[CMatrix], p: &[f64], psi: &[f64]) -> Vec<f64> {
        let mut x = alloc::vec![0.0; self.prog.n_scalars];
        for (b, wk) in self.beams.iter().zip(w) {
            match b {
                BeamVar::Matrix(h) => self.prog.set_hermitian(*h, &wk.scale(1.0 / self.p_dl), &mut x),
                BeamVar::Power(q, uu) => {
                    // power along the fixed direction
                    q.set(&mut x, trace_prod_re(uu, wk));
                }
            }
        }
        for (q, &pj) in self.powers.iter().zip(p) {
            q.set(&mut x, pj);
        }
        for (i, vars) in self.pus.iter().enumerate() {
            if let Some(vars) = vars {
                let sl = canonical_slacks_mats(s, w, p, psi, i);
                vars.beta.set(&mut x, sl.beta);
                vars.gamma.set(&mut x, sl.gamma);
                vars.tau.set(&mut x, sl.tau);
                if let Some(d) = vars.delta {
                    d.set(&mut x, sl.delta);
                }
                if let Some(k) = vars.kappa {
                    k.set(&mut x, sl.kappa);
                }
                for (q, &v) in vars.iota.iter().zip(&sl.iota) {
                    q.set(&mut x, v);
                }
            }
        }
        x
    }
}

fn pos_or_one(x: f64) -> f64 {
    if x > 0.0 && x.is_finite() {
        x
    } else {
        1.0
    }
}

/// Builds the convex surrogate of the beamforming/power problem at the
/// anchor `(anchor_w, anchor_p)` for fixed combiners `v` and phases `psi`.
/// Each UL power is scaled by its limit; slacks of PU `i` are scaled by its tolerance.
#[allow(clippy::too_many_arguments)]
pub fn build_subproblem_wp(
    s: &Scenario,
    ec: &EffectiveChannels,
    anchor_w: &[CMatrix],
    anchor_p: &[f64],
    v: &[CVector],
    psi: &[f64],
    shape: BeamShape<'_>,
) -> Result<WpProgram> {
    let (n, m, k_dl, j_ul) = (s.n_t(), s.m(), s.k_dl(), s.j_ul());
    if anchor_w.len() != k_dl || anchor_p.len() != j_ul || v.len() != j_ul || psi.len() != m {
        return Err(invalid("anchor dimensions do not match the scenario"));
    }
    let par = &s.params;
    // Beam matrices are measured against ten times the anchor's DL power:
    // solver noise then stays small next to the active beams while leaving
    // room for the iterate to grow.
    let anchor_total: f64 = anchor_w.iter().map(crate::linalg::trace_re).sum();
    let p_dl = (10.0 * anchor_total).clamp(1e-3 * par.p_max_dl, par.p_max_dl);
    let mut prog = ConicProgram::new();

    let mut beams = Vec::with_capacity(k_dl);
    let mut blocks: Vec<LmiBlock> = Vec::with_capacity(k_dl);
    for k in 0..k_dl {
        match shape {
            BeamShape::Free => {
                let h = prog.add_hermitian(n);
                let blk = prog.hermitian(h);
                prog.add_psd(blk.clone());
                blocks.push(blk.scaled(p_dl));
                beams.push(BeamVar::Matrix(h));
            }
            BeamShape::Fixed(dirs) => {
                if dirs.len() != k_dl || dirs[k].len() != n {
                    return Err(invalid("fixed beam directions do not match the scenario"));
                }
                let q = Scaled::new(&mut prog, p_dl);
                prog.add_nonneg(AffineExpr::var(q.index));
                let uu = outer(&dirs[k]);
                blocks.push(LmiBlock::scalar_times(&q.expr(), &uu));
                beams.push(BeamVar::Power(q, uu));
            }
        }
    }
    let powers: Vec<Scaled> = (0..j_ul).map(|j| Scaled::new(&mut prog, par.p_max_ul[j])).collect();
    let p_expr: Vec<AffineExpr> = powers.iter().map(|q| q.expr()).collect();

    // C1 and C2
    let mut total = AffineExpr::default();
    for blk in &blocks {
        total.add_scaled(&blk.trace_with(&crate::linalg::identity(n)), 1.0 / p_dl);
    }
    prog.add_le(total, AffineExpr::constant(par.p_max_dl / p_dl));
    for q in &powers {
        prog.add_nonneg(AffineExpr::var(q.index));
        prog.add_le(AffineExpr::var(q.index), AffineExpr::constant(1.0));
    }

    // Robust leakage constraints.
    let b_scale = pos_or_one(
        p_dl * s.f.norm_squared()
            + s.h_r.iter().zip(&par.p_max_ul).map(|(h, pm)| pm * h.norm_squared()).sum::<f64>(),
    );
    let mut b_block = LmiBlock::zeros(m);
    for blk in &blocks {
        b_block.add_block(&blk.congruence(&s.f), 1.0);
    }
    for (j, pe) in p_expr.iter().enumerate() {
        b_block.add_block(&LmiBlock::scalar_times(pe, &outer(&s.h_r[j])), 1.0);
    }
    let mut sum_w = LmiBlock::zeros(n);
    for blk in &blocks {
        sum_w.add_block(blk, 1.0);
    }
    let mut pus = Vec::with_capacity(s.i_pu());
    for i in 0..s.i_pu() {
        let tol = par.p_tol[i];
        if !has_uncertainty(s, i) {
            let lhs = c4d_fixed(&ec.l_hat[i], &ec.theta_e[i], &blocks, &p_expr, &AffineExpr::constant(tol));
            prog.add_nonneg(-lhs);
            pus.push(None);
            continue;
        }
        let beta = Scaled::new(&mut prog, tol);
        let gamma = Scaled::new(&mut prog, tol);
        let tau = Scaled::new(&mut prog, tol);
        let iota: Vec<Scaled> = (0..j_ul).map(|j| Scaled::new(&mut prog, par.p_max_ul[j])).collect();
        let iota_e: Vec<AffineExpr> = iota.iter().map(|q| q.expr()).collect();
        prog.add_psd(build_lmi_c4a(&p_expr, &beta.expr(), &iota_e, &s.eps_e[i], tol)?);
        let kappa = if s.eps_d[i] > 0.0 {
            let kappa = Scaled::new(&mut prog, p_dl);
            prog.add_psd(build_lmi_c4b(&sum_w, &beta.expr(), &gamma.expr(), &kappa.expr(), s.eps_d[i])?);
            Some(kappa)
        } else {
            prog.add_le(gamma.expr(), beta.expr());
            None
        };
        let delta = if s.eps_r[i] > 0.0 {
            let delta = Scaled::new(&mut prog, b_scale);
            prog.add_psd(build_lmi_c4c_fixed(
                &b_block,
                psi,
                &gamma.expr(),
                &tau.expr(),
                &delta.expr(),
                s.eps_r[i],
            )?);
            Some(delta)
        } else {
            prog.add_le(tau.expr(), gamma.expr());
            None
        };
        prog.add_nonneg(-c4d_fixed(&ec.l_hat[i], &ec.theta_e[i], &blocks, &p_expr, &tau.expr()));
        pus.push(Some(PuVars { beta, gamma, tau, delta, kappa, iota }));
    }

    // Objective f1 + f2 - linearized (g1 + g2).
    for k in 0..k_dl {
        let wt = par.weights_dl[k];
        if wt == 0.0 {
            continue;
        }
        let sig = par.sigma2_dl[k];
        let gg = outer(&ec.g_hat[k]);
        let mut arg = AffineExpr::constant(sig);
        for blk in &blocks {
            arg.add_scaled(&blk.trace_with(&gg), 1.0);
        }
        for (j, pe) in p_expr.iter().enumerate() {
            arg.add_scaled(pe, ec.phi[j][k].norm_sqr());
        }
        let mut arg = arg.scaled(1.0 / sig);
        arg.simplify();
        prog.add_log_term(wt, arg);
        prog.add_objective(&AffineExpr::constant(-wt * sig.log2()));
    }
    for j in 0..j_ul {
        let wt = par.weights_ul[j];
        if wt == 0.0 {
            continue;
        }
        let noise = par.sigma2_ul * v[j].norm_squared();
        let siw = si_weight(s, &v[j]);
        let mut arg = AffineExpr::constant(noise);
        for blk in &blocks {
            arg.add_scaled(&blk.trace_with(&siw), 1.0);
        }
        for (t, pe) in p_expr.iter().enumerate() {
            arg.add_scaled(pe, ec.h_hat[t].dotc(&v[j]).norm_sqr());
        }
        let mut arg = arg.scaled(1.0 / noise);
        arg.simplify();
        prog.add_log_term(wt, arg);
        prog.add_objective(&AffineExpr::constant(-wt * noise.log2()));
    }
    let base = dc_parts_wp(s, ec, anchor_w, anchor_p, v);
    let grad = gradients_wp(s, ec, anchor_w, anchor_p, v);
    let mut lin = AffineExpr::constant(-(base.g1 + base.g2));
    for k in 0..k_dl {
        let gsum = &grad.dw_g1[k] + &grad.dw_g2[k];
        lin.add_scaled(&blocks[k].trace_with(&gsum), -1.0);
        lin.constant += trace_prod_re(&gsum, &anchor_w[k]);
    }
    for j in 0..j_ul {
        let gp = grad.dp_g1[j] + grad.dp_g2[j];
        lin.add_scaled(&p_expr[j], -gp);
        lin.constant += gp * anchor_p[j];
    }
    lin.simplify();
    prog.add_objective(&lin);

    Ok(WpProgram { prog, beams, powers, pus, p_dl })
}

/// Projects beam matrices onto the PSD cone and scales `(w, p)` down until
/// C1, C2 and every safe leakage bound hold. The bound is positively
/// homogeneous in `(w, p)`, so one common factor suffices.
pub fn repair_feasibility(s: &Scenario, w: &mut [CMatrix], p: &mut [f64], psi: &[f64]) {
    for wk in w.iter_mut() {
        let (vals, vecs) = hermitian_eigen(&hermitian_part(wk));
        let mut out = zeros(wk.nrows(), wk.ncols());
        for (l, u) in vals.iter().zip(&vecs) {
            if *l > 0.0 {
                out += outer(u).scale(*l);
            }
        }
        *wk = out;
    }
    for (pj, pm) in p.iter_mut().zip(&s.params.p_max_ul) {
        *pj = pj.clamp(0.0, *pm);
    }
    let total: f64 = w.iter().map(|wk| crate::linalg::trace_re(wk)).sum();
    if total > s.params.p_max_dl {
        let f = s.params.p_max_dl / total;
        for wk in w.iter_mut() {
            *wk = wk.scale(f);
        }
    }
    let mut factor: f64 = 1.0;
    for i in 0..s.i_pu() {
        let b = safe_leakage_bound_mats(s, w, p, psi, i);
        if b > s.params.p_tol[i] {
            factor = factor.min(s.params.p_tol[i] / b * (1.0 - 1e-12));
        }
    }
    if factor < 1.0 {
        for wk in w.iter_mut() {
            *wk = wk.scale(factor);
        }
        for pj in p.iter_mut() {
            *pj *= factor;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WpResult {
    pub w: Vec<CMatrix>,
    pub p: Vec<f64>,
    /// Surrogate-free objective (minus the weighted sum rate) at each
    /// accepted iterate, starting with the start point.
    pub trace: Vec<f64>,
    pub degraded: bool,
    pub notes: Vec<String>,
}

pub(crate) fn relative_change(old: f64, new: f64) -> f64 {
    let d = (old - new).abs();
    let scale = old.abs().max(new.abs());
    if scale > 0.0 {
        d / scale
    } else {
        d
    }
}

/// Successive convex approximation for the beams and uplink powers with
/// combiners and phases held fixed. Iterates are accepted only when the
/// true objective does not increase.
#[allow(clippy::too_many_arguments)]
pub fn sca_wp<S: ConicSolver + ?Sized>(
    solver: &S,
    s: &Scenario,
    ec: &EffectiveChannels,
    start_w: &[CMatrix],
    start_p: &[f64],
    v: &[CVector],
    psi: &[f64],
    shape: BeamShape<'_>,
    cfg: &AlgoConfig,
) -> WpResult {
    let mut w = start_w.to_vec();
    let mut p = start_p.to_vec();
    let mut val = dc_parts_wp(s, ec, &w, &p, v).objective();
    let mut out = WpResult { w: Vec::new(), p: Vec::new(), trace: alloc::vec![val], degraded: false, notes: Vec::new() };
    for _ in 0..cfg.max_inner_iters {
        let sub = match build_subproblem_wp(s, ec, &w, &p, v, psi, shape) {
            Ok(sub) => sub,
            Err(e) => {
                out.degraded = true;
                out.notes.push(alloc::format!("wp build failed: {e}"));
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
            out.notes.push(alloc::format!("wp solve: {:?} {}", res.status, res.message));
            break;
        }
        let mut nw = sub.beams(&res.x);
        let mut np = sub.powers(&res.x);
        repair_feasibility(s, &mut nw, &mut np, psi);
        let nval = dc_parts_wp(s, ec, &nw, &np, v).objective();
        if !(nval <= val) {
            if !super::stalled_near_optimum(&res) {
                out.degraded = true;
                out.notes.push(alloc::format!("wp solve: {:?} without progress ({:?})", res.status, res.residuals));
            }
            break;
        }
        let change = relative_change(val, nval);
        w = nw;
        p = np;
        val = nval;
        out.trace.push(val);
        if change <= cfg.eps_sca {
            break;
        }
    }
    out.w = w;
    out.p = p;
    out
}

/// Principal eigenpair extraction of a beam matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOne {
    pub w: CVector,
    /// `lambda_2 / lambda_1`, 0 when the matrix is zero or 1x1.
    pub ratio: f64,
    /// Ratio above tolerance, or a near tie between the top two eigenvalues.
    pub flagged: bool,
}

pub fn extract_rank_one(w: &CMatrix, rank_tol: f64) -> RankOne {
    let n = w.nrows();
    let (vals, vecs) = hermitian_eigen(w);
    let l1 = vals.first().copied().unwrap_or(0.0);
    if !(l1 > 0.0) {
        return RankOne { w: CVector::zeros(n), ratio: 0.0, flagged: false };
    }
    let l2 = vals.get(1).copied().unwrap_or(0.0).max(0.0);
    let ratio = l2 / l1;
    let tie = l1 - l2 < 1e-12 * l1;
    RankOne { w: vecs[0].scale(l1.sqrt()), ratio, flagged: ratio > rank_tol || tie }
}
