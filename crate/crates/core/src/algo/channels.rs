use alloc::vec::Vec;

use crate::linalg::{phase_matrix, CVector, C64};
use crate::model::Scenario;

/// Channels with the IRS folded in for a fixed phase vector.
///
/// `g_hat[k]^H w` is the downlink gain, `h_hat[j]` the uplink channel,
/// `l_hat[i]^H w` the estimated BS-to-PU gain, `phi[j][k]` the UL-to-DL
/// cross gain and `theta_e[i][j]` the estimated UL-to-PU gain.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannels {
    pub g_hat: Vec<CVector>,
    pub h_hat: Vec<CVector>,
    pub l_hat: Vec<CVector>,
    pub phi: Vec<Vec<C64>>,
    pub theta_e: Vec<Vec<C64>>,
}

impl EffectiveChannels {
    pub fn new(s: &Scenario, psi: &[f64]) -> Self {
        let psi_mat = phase_matrix(psi);
        let fh = s.f.adjoint();
        let g_hat = s.g_r.iter().zip(&s.g_d).map(|(gr, gd)| gd + &fh * (psi_mat.adjoint() * gr)).collect();
        let h_hat = s.h_r.iter().zip(&s.h_d).map(|(hr, hd)| hd + &fh * (&psi_mat * hr)).collect();
        let l_hat = s
            .l_r_hat
            .iter()
            .zip(&s.l_d_hat)
            .map(|(lr, ld)| ld + &fh * (psi_mat.adjoint() * lr))
            .collect();
        let reflected_ul: Vec<CVector> = s.h_r.iter().map(|hr| &psi_mat * hr).collect();
        let phi = (0..s.j_ul())
            .map(|j| (0..s.k_dl()).map(|k| s.q[j][k] + s.g_r[k].dotc(&reflected_ul[j])).collect())
            .collect();
        let theta_e = (0..s.i_pu())
            .map(|i| (0..s.j_ul()).map(|j| s.e_hat[i][j] + s.l_r_hat[i].dotc(&reflected_ul[j])).collect())
            .collect();
        EffectiveChannels { g_hat, h_hat, l_hat, phi, theta_e }
    }
}
