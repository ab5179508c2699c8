//! Safe approximation of the worst-case interference constraint, the
//! S-procedure LMI constructors and a sampling-based robustness check.
//!
//! The leakage at PU `i` is split three ways (`|a+b+c|^2 <= 3(...)`) into a
//! UL-error part, a BS-link error part, an IRS-link error part and a nominal
//! part. Slacks `beta >= gamma >= tau` chain the parts together; multipliers
//! `iota`, `kappa`, `delta` certify the three error balls.

use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods take over when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::conic::{AffineExpr, LmiBlock};
use crate::error::invalid;
use crate::linalg::{c, hermitian_eigen, identity, lambda_max, outer, phase_matrix, zeros, CMatrix, CVector, C64};
use crate::model::{interference_leakage, Allocation, PuChannels, Scenario};
use crate::Result;

/// Worst-case values of the four pieces of the split leakage bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeParts {
    /// `max sum_j p_j |de_ij|^2`
    pub ul_error: f64,
    /// `max sum_k |dl_D^H w_k|^2`
    pub bs_error: f64,
    /// `max sum_k |dl_R^H Psi F w_k|^2 + sum_j p_j |dl_R^H Psi h_Rj|^2`
    pub irs_error: f64,
    /// Leakage at the estimated channels.
    pub nominal: f64,
}

impl SafeParts {
    pub fn total(&self) -> f64 {
        3.0 * (self.ul_error + self.bs_error + self.irs_error + self.nominal)
    }
}

/// `B = sum_k F W_k F^H + sum_j p_j h_Rj h_Rj^H`.
pub fn reflected_power_matrix(s: &Scenario, w: &[CMatrix], p: &[f64]) -> CMatrix {
    let mut b = zeros(s.m(), s.m());
    for wk in w {
        b += &s.f * wk * s.f.adjoint();
    }
    for (j, &pj) in p.iter().enumerate() {
        b += outer(&s.h_r[j]).scale(pj);
    }
    b
}

/// Whether PU `i` has any channel uncertainty. Without it the safe bound is
/// the nominal leakage itself and no splitting is needed.
pub fn has_uncertainty(s: &Scenario, i: usize) -> bool {
    s.eps_d[i] > 0.0 || s.eps_r[i] > 0.0 || s.eps_e[i].iter().any(|&e| e > 0.0)
}

/// Nominal leakage at the estimated channels for beam matrices `w`.
pub fn nominal_leakage(s: &Scenario, w: &[CMatrix], p: &[f64], psi: &[f64], i: usize) -> f64 {
    let psi_mat = phase_matrix(psi);
    let reflect = psi_mat.adjoint() * &s.l_r_hat[i];
    let eff = &s.l_d_hat[i] + s.f.adjoint() * &reflect;
    let dl: f64 = w.iter().map(|wk| eff.dotc(&(wk * &eff)).re).sum();
    let ul: f64 = p
        .iter()
        .enumerate()
        .map(|(j, &pj)| pj * (s.e_hat[i][j] + reflect.dotc(&s.h_r[j])).norm_sqr())
        .sum();
    dl + ul
}

/// Split bound parts for beam matrices (not necessarily rank one).
pub fn safe_leakage_parts_mats(s: &Scenario, w: &[CMatrix], p: &[f64], psi: &[f64], i: usize) -> SafeParts {
    let mut sum_w = zeros(s.n_t(), s.n_t());
    for wk in w {
        sum_w += wk;
    }
    let psi_mat = phase_matrix(psi);
    let rotated = &psi_mat * reflected_power_matrix(s, w, p) * psi_mat.adjoint();
    let ul_error = p.iter().zip(&s.eps_e[i]).map(|(p, e)| p * e * e).sum();
    SafeParts {
        ul_error,
        bs_error: s.eps_d[i].powi(2) * lambda_max(&sum_w).max(0.0),
        irs_error: s.eps_r[i].powi(2) * lambda_max(&rotated).max(0.0),
        nominal: nominal_leakage(s, w, p, psi, i),
    }
}

pub fn safe_leakage_parts(s: &Scenario, a: &Allocation, i: usize) -> SafeParts {
    safe_leakage_parts_mats(s, &a.beam_matrices(), &a.p, &a.psi, i)
}

/// Bound for beam matrices; see [`safe_leakage_bound`].
pub fn safe_leakage_bound_mats(s: &Scenario, w: &[CMatrix], p: &[f64], psi: &[f64], i: usize) -> f64 {
    let parts = safe_leakage_parts_mats(s, w, p, psi, i);
    if has_uncertainty(s, i) {
        parts.total()
    } else {
        parts.nominal
    }
}

/// Upper bound on the worst-case leakage at PU `i` over all channels in the
/// uncertainty balls. Each ball supremum is evaluated in closed form. A PU
/// with no uncertainty gets its nominal leakage.
pub fn safe_leakage_bound(s: &Scenario, a: &Allocation, i: usize) -> f64 {
    safe_leakage_bound_mats(s, &a.beam_matrices(), &a.p, &a.psi, i)
}

/// Slack and multiplier values for one PU.
#[derive(Debug, Clone, PartialEq)]
pub struct PuSlacks {
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub delta: f64,
    pub iota: Vec<f64>,
    pub kappa: f64,
}

/// The tightest slacks consistent with an allocation: every chained
/// inequality except the first holds with equality. The split constraint
/// holds iff `ul_error + beta <= p_tol / 3` for these values.
pub fn canonical_slacks(s: &Scenario, a: &Allocation, i: usize) -> PuSlacks {
    canonical_slacks_mats(s, &a.beam_matrices(), &a.p, &a.psi, i)
}

pub fn canonical_slacks_mats(s: &Scenario, w: &[CMatrix], p: &[f64], psi: &[f64], i: usize) -> PuSlacks {
    let parts = safe_leakage_parts_mats(s, w, p, psi, i);
    let mut sum_w = zeros(s.n_t(), s.n_t());
    for wk in w {
        sum_w += wk;
    }
    let psi_mat = phase_matrix(psi);
    let rotated = &psi_mat * reflected_power_matrix(s, w, p) * psi_mat.adjoint();
    let tau = parts.nominal;
    let gamma = tau + parts.irs_error;
    let beta = gamma + parts.bs_error;
    PuSlacks {
        beta,
        gamma,
        tau,
        delta: lambda_max(&rotated).max(0.0),
        iota: p.to_vec(),
        kappa: lambda_max(&sum_w).max(0.0),
    }
}

fn check_nonneg_constant(e: &AffineExpr, what: &str) -> Result<()> {
    if e.is_constant() && e.constant < 0.0 {
        return Err(invalid(alloc::format!("{what} multiplier must be nonnegative")));
    }
    Ok(())
}

/// UL-error LMI: `[diag(iota) - diag(p), 0; 0, -sum_j iota_j eps_j^2 - beta + p_tol/3]`.
/// One multiplier per uplink link; with a single link this is the usual
/// S-procedure block.
pub fn build_lmi_c4a(
    p: &[AffineExpr],
    beta: &AffineExpr,
    iota: &[AffineExpr],
    eps_e_row: &[f64],
    p_tol: f64,
) -> Result<LmiBlock> {
    let j = p.len();
    if iota.len() != j || eps_e_row.len() != j {
        return Err(invalid("dimension mismatch in the uplink-error LMI"));
    }
    let mut blocks = Vec::with_capacity(j + 1);
    let mut tail = AffineExpr::constant(p_tol / 3.0) - beta.clone();
    for t in 0..j {
        check_nonneg_constant(&iota[t], "iota")?;
        blocks.push(LmiBlock::identity_times(1, &(iota[t].clone() - p[t].clone())));
        tail.add_scaled(&iota[t], -eps_e_row[t] * eps_e_row[t]);
    }
    blocks.push(LmiBlock::identity_times(1, &tail));
    Ok(LmiBlock::block_diag(&blocks))
}

/// BS-link-error LMI: `[kappa I - sum_k W_k, 0; 0, -kappa eps^2 - gamma + beta]`.
pub fn build_lmi_c4b(
    sum_w: &LmiBlock,
    beta: &AffineExpr,
    gamma: &AffineExpr,
    kappa: &AffineExpr,
    eps_d: f64,
) -> Result<LmiBlock> {
    check_nonneg_constant(kappa, "kappa")?;
    let n = sum_w.dim;
    let top = LmiBlock::identity_times(n, kappa).minus(sum_w);
    let tail = beta.clone() - gamma.clone() - kappa.scaled(eps_d * eps_d);
    Ok(LmiBlock::block_diag(&[top, LmiBlock::identity_times(1, &tail)]))
}

/// IRS-link-error LMI for fixed phases:
/// `[delta I - Psi B Psi^H, 0; 0, -delta eps^2 - tau + gamma]` with `B`
/// affine in the beams and powers.
pub fn build_lmi_c4c_fixed(
    b: &LmiBlock,
    psi: &[f64],
    gamma: &AffineExpr,
    tau: &AffineExpr,
    delta: &AffineExpr,
    eps_r: f64,
) -> Result<LmiBlock> {
    check_nonneg_constant(delta, "delta")?;
    let m = b.dim;
    if psi.len() != m {
        return Err(invalid("phase vector length differs from the IRS size"));
    }
    let top = LmiBlock::identity_times(m, delta).minus(&b.congruence(&phase_matrix(psi)));
    let tail = gamma.clone() - tau.clone() - delta.scaled(eps_r * eps_r);
    Ok(LmiBlock::block_diag(&[top, LmiBlock::identity_times(1, &tail)]))
}

/// Matrices `D_s` and weights `sigma_s` with
/// `C^H Psi B Psi^H C = sum_s sigma_s D_s Theta^T D_s^H` for
/// `Theta = [theta; 1][theta; 1]^H`, `theta_m = e^{-j psi_m}` and
/// `C = [I_M 0]`. `B` must be Hermitian PSD, so its eigen-decomposition is
/// also its singular value decomposition.
pub fn theta_c4c_factors(b: &CMatrix) -> Result<Vec<(f64, CMatrix)>> {
    let m = b.nrows();
    let scale = crate::linalg::max_abs(b).max(f64::MIN_POSITIVE);
    if crate::linalg::hermitian_defect(b) > 1e-10 * scale {
        return Err(invalid("B must be Hermitian"));
    }
    let (vals, vecs) = hermitian_eigen(b);
    if vals.last().copied().unwrap_or(0.0) < -1e-9 * scale {
        return Err(invalid("B must be positive semidefinite"));
    }
    let mut out = Vec::new();
    for (sigma, u) in vals.into_iter().zip(vecs) {
        if sigma <= 0.0 {
            continue;
        }
        let mut d = zeros(m + 1, m + 1);
        for r in 0..m {
            d[(r, r)] = u[r];
        }
        out.push((sigma, d));
    }
    Ok(out)
}

/// IRS-link-error LMI in the lifted phase variable:
/// `[delta I_M, 0; 0, -delta eps^2 - tau + gamma] - sum_s sigma_s D_s Theta^T D_s^H`.
pub fn build_lmi_c4c_theta(
    b: &CMatrix,
    theta: &LmiBlock,
    gamma: &AffineExpr,
    tau: &AffineExpr,
    delta: &AffineExpr,
    eps_r: f64,
) -> Result<LmiBlock> {
    check_nonneg_constant(delta, "delta")?;
    let m = b.nrows();
    if theta.dim != m + 1 {
        return Err(invalid("lifted phase variable must have dimension M + 1"));
    }
    let mut out = LmiBlock::block_diag(&[
        LmiBlock::identity_times(m, delta),
        LmiBlock::identity_times(1, &(gamma.clone() - tau.clone() - delta.scaled(eps_r * eps_r))),
    ]);
    let theta_t = theta.transpose();
    for (sigma, d) in theta_c4c_factors(b)? {
        out.add_block(&theta_t.congruence(&d), -sigma);
    }
    Ok(out)
}

/// Nominal-leakage constraint for fixed phases, returned as `lhs - tau`
/// (required to be nonpositive): `sum_k Tr(l l^H W_k) + sum_j p_j |t_j|^2 - tau`.
pub fn c4d_fixed(
    l_hat: &CVector,
    vartheta: &[C64],
    w: &[LmiBlock],
    p: &[AffineExpr],
    tau: &AffineExpr,
) -> AffineExpr {
    let ll = outer(l_hat);
    let mut e = -tau.clone();
    for wk in w {
        e.add_scaled(&wk.trace_with(&ll), 1.0);
    }
    for (pj, t) in p.iter().zip(vartheta) {
        e.add_scaled(pj, t.norm_sqr());
    }
    e
}

/// Nominal-leakage constraint in the lifted phase variable:
/// `sum_k Tr(Theta L W_k L^H) + sum_j p_j Tr(Theta P_j) - tau`.
pub fn c4d_theta(
    theta: &LmiBlock,
    l_lift: &CMatrix,
    w: &[CMatrix],
    p_lift: &[CMatrix],
    p: &[f64],
    tau: &AffineExpr,
) -> AffineExpr {
    let dim = theta.dim;
    let mut a = zeros(dim, dim);
    for wk in w {
        a += l_lift * wk * l_lift.adjoint();
    }
    for (pl, &pj) in p_lift.iter().zip(p) {
        a += pl.scale(pj);
    }
    theta.trace_with(&a) - tau.clone()
}

/// Outcome of [`verify_robust_leakage`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustCheck {
    pub max_leak: f64,
    pub violated: bool,
}

fn sample_ball(rng: &mut ChaCha8Rng, n: usize, radius: f64, boundary: bool) -> CVector {
    let dir = CVector::from_iterator(
        n,
        (0..n).map(|_| c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))),
    );
    let u: f64 = rng.random();
    let norm = dir.norm();
    if radius == 0.0 || norm == 0.0 {
        return CVector::zeros(n);
    }
    let r = if boundary { radius } else { radius * u.powf(1.0 / (2.0 * n as f64)) };
    dir.scale(r / norm)
}

/// Rotates `dir` so that it adds coherently to the nominal response `z` of
/// the link (`dir^H x` in phase with `z`).
fn align(dir: &CVector, x: &CVector, z: C64) -> CVector {
    let y = dir.dotc(x);
    if y.norm() == 0.0 || z.norm() == 0.0 {
        return dir.clone();
    }
    let phase = (y / y.norm()).conj() * (z / z.norm());
    dir.map(|d| d * phase.conj())
}

/// Draws error triples in the uncertainty balls of PU `i` and evaluates the
/// exact leakage at each. Half of the samples sit on the ball boundaries;
/// two analytically aligned worst directions are always included.
pub fn verify_robust_leakage(
    s: &Scenario,
    a: &Allocation,
    i: usize,
    n_samples: usize,
    seed: u64,
) -> RobustCheck {
    let (n, m, j) = (s.n_t(), s.m(), s.j_ul());
    let l_d = &s.l_d_hat[i];
    let l_r = &s.l_r_hat[i];
    let e = &s.e_hat[i];
    let (ed, er) = (s.eps_d[i], s.eps_r[i]);
    let eps_e = &s.eps_e[i];
    let psi = phase_matrix(&a.psi);

    let eval = |dd: &CVector, dr: &CVector, de: &[C64]| -> f64 {
        let ld = l_d + dd;
        let lr = l_r + dr;
        let ee: Vec<C64> = e.iter().zip(de).map(|(x, y)| x + y).collect();
        interference_leakage(s, a, PuChannels { l_d: &ld, l_r: &lr, e: &ee })
    };

    let mut worst = f64::NEG_INFINITY;
    // Aligned candidates: strongest beam direction at the BS, strongest
    // reflected direction at the IRS, UL errors in phase with the nominal.
    {
        let w = a.beam_matrices();
        let mut sum_w = zeros(n, n);
        for wk in &w {
            sum_w += wk;
        }
        let rotated = &psi * reflected_power_matrix(s, &w, &a.p) * psi.adjoint();
        let (_, vd) = hermitian_eigen(&sum_w);
        let (_, vr) = hermitian_eigen(&rotated);
        let strongest = a
            .w
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.norm_squared().partial_cmp(&y.1.norm_squared()).unwrap())
            .map(|(k, _)| k);
        let reflect = psi.adjoint() * l_r;
        let eff = l_d + s.f.adjoint() * &reflect;
        let mut dd = vd.first().cloned().unwrap_or_else(|| CVector::zeros(n)).scale(ed);
        let mut dr = vr.first().cloned().unwrap_or_else(|| CVector::zeros(m)).scale(er);
        if let Some(k) = strongest {
            let z = eff.dotc(&a.w[k]);
            dd = align(&dd, &a.w[k], z);
            let x = &psi * (&s.f * &a.w[k]);
            dr = align(&dr, &x, z);
        }
        let de: Vec<C64> = (0..j)
            .map(|t| {
                let z = e[t] + reflect.dotc(&s.h_r[t]);
                if z.norm() == 0.0 {
                    c(eps_e[t], 0.0)
                } else {
                    z.scale(eps_e[t] / z.norm())
                }
            })
            .collect();
        worst = worst.max(eval(&dd, &dr, &de));
        let zero_d = CVector::zeros(n);
        let zero_r = CVector::zeros(m);
        let zero_e = alloc::vec![c(0.0, 0.0); j];
        worst = worst.max(eval(&zero_d, &zero_r, &zero_e));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((i as u64) << 32));
    for t in 0..n_samples {
        let boundary = t % 2 == 0;
        let dd = sample_ball(&mut rng, n, ed, boundary);
        let dr = sample_ball(&mut rng, m, er, boundary);
        let de: Vec<C64> = (0..j).map(|u| sample_ball(&mut rng, 1, eps_e[u], boundary)[0]).collect();
        worst = worst.max(eval(&dd, &dr, &de));
    }
    RobustCheck { max_leak: worst, violated: worst > s.params.p_tol[i] }
}

/// Exact leakage of PU `i` at `n_samples` error triples drawn uniformly
/// from the uncertainty balls.
pub fn sampled_leakages(s: &Scenario, a: &Allocation, i: usize, n_samples: usize, seed: u64) -> Vec<f64> {
    let (n, m, j) = (s.n_t(), s.m(), s.j_ul());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((i as u64) << 32));
    rng.set_stream(1);
    (0..n_samples)
        .map(|_| {
            let ld = &s.l_d_hat[i] + sample_ball(&mut rng, n, s.eps_d[i], false);
            let lr = &s.l_r_hat[i] + sample_ball(&mut rng, m, s.eps_r[i], false);
            let ee: Vec<C64> =
                (0..j).map(|u| s.e_hat[i][u] + sample_ball(&mut rng, 1, s.eps_e[i][u], false)[0]).collect();
            interference_leakage(s, a, PuChannels { l_d: &ld, l_r: &lr, e: &ee })
        })
        .collect()
}

/// `kappa I - sum_k W_k` evaluated; helper for tests and diagnostics.
pub fn bs_error_margin(sum_w: &CMatrix, kappa: f64) -> CMatrix {
    identity(sum_w.nrows()).scale(kappa) - sum_w
}
