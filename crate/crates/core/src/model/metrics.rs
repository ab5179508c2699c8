use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods take over when std is linked
use num_traits::Float;

use super::{Allocation, PuChannels, Scenario};
use crate::error::invalid;
use crate::linalg::{phase_matrix, CMatrix, CVector, C64};
use crate::Result;

/// `g_D^H w + g_R^H Psi F w` for every beam. Reused by the SINR formulas.
fn dl_gain(s: &Scenario, psi_mat: &CMatrix, k: usize, w: &CVector) -> C64 {
    let direct = s.g_d[k].dotc(w);
    let reflected = s.g_r[k].dotc(&(psi_mat * (&s.f * w)));
    direct + reflected
}

fn ul_gain(s: &Scenario, psi_mat: &CMatrix, t: usize, v: &CVector) -> C64 {
    // v^H h_D + v^H F^H Psi h_R
    let eff = &s.h_d[t] + s.f.adjoint() * (psi_mat * &s.h_r[t]);
    v.dotc(&eff)
}

fn cross_gain(s: &Scenario, psi_mat: &CMatrix, j: usize, k: usize) -> C64 {
    s.q[j][k] + s.g_r[k].dotc(&(psi_mat * &s.h_r[j]))
}

/// Downlink SINR of user `k`.
pub fn dl_sinr(s: &Scenario, a: &Allocation, k: usize) -> f64 {
    let psi = phase_matrix(&a.psi);
    let desired = dl_gain(s, &psi, k, &a.w[k]).norm_sqr();
    let mut interference = s.params.sigma2_dl[k];
    for (r, w) in a.w.iter().enumerate() {
        if r != k {
            interference += dl_gain(s, &psi, k, w).norm_sqr();
        }
    }
    for (j, &p) in a.p.iter().enumerate() {
        interference += p * cross_gain(s, &psi, j, k).norm_sqr();
    }
    desired / interference
}

/// Residual self-interference seen by combiner `v_j`, approximated form
/// `eta v^H Diag(sum_k S w_k w_k^H S^H) v`.
pub fn residual_si(s: &Scenario, a: &Allocation, j: usize) -> f64 {
    let per_antenna: Vec<f64> = {
        let mut acc = alloc::vec![0.0; s.n_t()];
        for w in &a.w {
            let sw = &s.s_si * w;
            for (n, z) in sw.iter().enumerate() {
                acc[n] += z.norm_sqr();
            }
        }
        acc
    };
    s.params.eta
        * a.v[j].iter().zip(&per_antenna).map(|(z, d)| z.norm_sqr() * d).sum::<f64>()
}

/// Residual self-interference including the paths reflected by the IRS.
pub fn residual_si_full(s: &Scenario, a: &Allocation, j: usize) -> f64 {
    let psi = phase_matrix(&a.psi);
    let total = &s.s_si + s.f.adjoint() * &psi * &s.f;
    let mut acc = alloc::vec![0.0; s.n_t()];
    for w in &a.w {
        let tw = &total * w;
        for (n, z) in tw.iter().enumerate() {
            acc[n] += z.norm_sqr();
        }
    }
    s.params.eta * a.v[j].iter().zip(&acc).map(|(z, d)| z.norm_sqr() * d).sum::<f64>()
}

/// Uplink SINR of user `j` with combiner `v_j`.
pub fn ul_sinr(s: &Scenario, a: &Allocation, j: usize) -> Result<f64> {
    let v = &a.v[j];
    let vv = v.norm_squared();
    if !(vv > 0.0) {
        return Err(invalid("receive combiner must be nonzero"));
    }
    let psi = phase_matrix(&a.psi);
    let desired = a.p[j] * ul_gain(s, &psi, j, v).norm_sqr();
    let mut interference = s.params.sigma2_ul * vv + residual_si(s, a, j);
    for (t, &p) in a.p.iter().enumerate() {
        if t != j {
            interference += p * ul_gain(s, &psi, t, v).norm_sqr();
        }
    }
    Ok(desired / interference)
}

pub fn dl_rates(s: &Scenario, a: &Allocation) -> Vec<f64> {
    (0..s.k_dl()).map(|k| (1.0 + dl_sinr(s, a, k)).log2()).collect()
}

pub fn ul_rates(s: &Scenario, a: &Allocation) -> Result<Vec<f64>> {
    (0..s.j_ul()).map(|j| ul_sinr(s, a, j).map(|g| (1.0 + g).log2())).collect()
}

/// Weighted sum of uplink and downlink rates (bits/s/Hz).
pub fn weighted_sum_rate(s: &Scenario, a: &Allocation) -> Result<f64> {
    let ul = ul_rates(s, a)?;
    let dl = dl_rates(s, a);
    let ul_sum: f64 = ul.iter().zip(&s.params.weights_ul).map(|(r, w)| r * w).sum();
    let dl_sum: f64 = dl.iter().zip(&s.params.weights_dl).map(|(r, w)| r * w).sum();
    Ok(ul_sum + dl_sum)
}

/// Interference power deposited at a PU with the supplied channels.
pub fn interference_leakage(s: &Scenario, a: &Allocation, pu: PuChannels<'_>) -> f64 {
    let psi = phase_matrix(&a.psi);
    let reflect = psi.adjoint() * pu.l_r; // so that reflect^H x = l_R^H Psi x
    let eff = pu.l_d + s.f.adjoint() * &reflect;
    let dl: f64 = a.w.iter().map(|w| eff.dotc(w).norm_sqr()).sum();
    let ul: f64 = a
        .p
        .iter()
        .enumerate()
        .map(|(j, &p)| p * (pu.e[j] + reflect.dotc(&s.h_r[j])).norm_sqr())
        .sum();
    dl + ul
}
