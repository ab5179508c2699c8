//! Physical scenario, allocation and performance metrics.

mod metrics;
mod scenario;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::linalg::{cvec_zeros, CMatrix, CVector, C64, ZERO};
use crate::Result;

pub use metrics::{
    dl_rates, dl_sinr, interference_leakage, residual_si, residual_si_full, ul_rates, ul_sinr,
    weighted_sum_rate,
};
pub use scenario::{generate_scenario, path_loss, LinkKind, ScenarioConfig};

/// Powers, noise levels, limits and weights. All values are linear (W).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n_t: usize,
    pub m: usize,
    pub i_pu: usize,
    pub j_ul: usize,
    pub k_dl: usize,
    pub p_max_dl: f64,
    pub p_max_ul: Vec<f64>,
    pub p_tol: Vec<f64>,
    pub eta: f64,
    pub sigma2_ul: f64,
    pub sigma2_dl: Vec<f64>,
    pub weights_ul: Vec<f64>,
    pub weights_dl: Vec<f64>,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.m == 0 {
            return Err(invalid("antenna and IRS element counts must be at least 1"));
        }
        if self.p_max_ul.len() != self.j_ul
            || self.weights_ul.len() != self.j_ul
            || self.p_tol.len() != self.i_pu
            || self.sigma2_dl.len() != self.k_dl
            || self.weights_dl.len() != self.k_dl
        {
            return Err(invalid("per-user parameter lengths do not match user counts"));
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.p_max_dl)
            || !positive(self.sigma2_ul)
            || !self.p_max_ul.iter().all(|&x| positive(x))
            || !self.p_tol.iter().all(|&x| positive(x))
            || !self.sigma2_dl.iter().all(|&x| positive(x))
        {
            return Err(invalid("powers and noise levels must be strictly positive"));
        }
        if !(self.eta >= 0.0 && self.eta < 1.0) {
            return Err(invalid("eta must lie in [0, 1)"));
        }
        if self.weights_ul.iter().chain(&self.weights_dl).any(|&w| !(w >= 0.0)) {
            return Err(invalid("weights must be nonnegative"));
        }
        if self.n_t < self.j_ul {
            return Err(invalid("need at least as many BS antennas as uplink users"));
        }
        Ok(())
    }
}

/// Planar node positions (meters) used for path loss.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Geometry {
    pub bs: [f64; 2],
    pub irs: [f64; 2],
    pub ul_users: Vec<[f64; 2]>,
    pub dl_users: Vec<[f64; 2]>,
    pub pus: Vec<[f64; 2]>,
}

/// Channels of one primary user: BS link, IRS link and one scalar per
/// uplink user.
#[derive(Debug, Clone, Copy)]
pub struct PuChannels<'a> {
    pub l_d: &'a CVector,
    pub l_r: &'a CVector,
    pub e: &'a [C64],
}

/// All channels of one network realization.
///
/// `q[j][k]` is the uplink-user-to-downlink-user gain and `e_*[i][j]` the
/// uplink-user-to-PU gain. PU channels come as estimates with uncertainty
/// radii; the true channels are kept only for verification.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub f: CMatrix,
    pub h_d: Vec<CVector>,
    pub h_r: Vec<CVector>,
    pub g_d: Vec<CVector>,
    pub g_r: Vec<CVector>,
    pub s_si: CMatrix,
    pub q: Vec<Vec<C64>>,
    pub l_d_hat: Vec<CVector>,
    pub l_r_hat: Vec<CVector>,
    pub e_hat: Vec<Vec<C64>>,
    pub eps_d: Vec<f64>,
    pub eps_r: Vec<f64>,
    pub eps_e: Vec<Vec<f64>>,
    pub l_d_true: Vec<CVector>,
    pub l_r_true: Vec<CVector>,
    pub e_true: Vec<Vec<C64>>,
    pub params: SystemParams,
    pub geometry: Geometry,
}

impl Scenario {
    pub fn n_t(&self) -> usize {
        self.params.n_t
    }
    pub fn m(&self) -> usize {
        self.params.m
    }
    pub fn k_dl(&self) -> usize {
        self.params.k_dl
    }
    pub fn j_ul(&self) -> usize {
        self.params.j_ul
    }
    pub fn i_pu(&self) -> usize {
        self.params.i_pu
    }

    pub fn estimated_pu(&self, i: usize) -> PuChannels<'_> {
        PuChannels { l_d: &self.l_d_hat[i], l_r: &self.l_r_hat[i], e: &self.e_hat[i] }
    }

    pub fn true_pu(&self, i: usize) -> PuChannels<'_> {
        PuChannels { l_d: &self.l_d_true[i], l_r: &self.l_r_true[i], e: &self.e_true[i] }
    }

    /// Checks dimensions, parameters and that every true PU channel lies in
    /// its uncertainty ball.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let (n, m, k, j, i) = (self.n_t(), self.m(), self.k_dl(), self.j_ul(), self.i_pu());
        let vec_ok = |v: &[CVector], count: usize, len: usize| {
            v.len() == count && v.iter().all(|x| x.len() == len)
        };
        let grid_ok = |g: &[Vec<C64>], rows: usize, cols: usize| {
            g.len() == rows && g.iter().all(|r| r.len() == cols)
        };
        let dims = self.f.shape() == (m, n)
            && self.s_si.shape() == (n, n)
            && vec_ok(&self.h_d, j, n)
            && vec_ok(&self.h_r, j, m)
            && vec_ok(&self.g_d, k, n)
            && vec_ok(&self.g_r, k, m)
            && grid_ok(&self.q, j, k)
            && vec_ok(&self.l_d_hat, i, n)
            && vec_ok(&self.l_r_hat, i, m)
            && vec_ok(&self.l_d_true, i, n)
            && vec_ok(&self.l_r_true, i, m)
            && grid_ok(&self.e_hat, i, j)
            && grid_ok(&self.e_true, i, j)
            && self.eps_d.len() == i
            && self.eps_r.len() == i
            && self.eps_e.len() == i
            && self.eps_e.iter().all(|r| r.len() == j);
        if !dims {
            return Err(invalid("scenario dimensions are inconsistent with its parameters"));
        }
        let slack = |eps: f64| eps * (1.0 + 1e-9) + 1e-300;
        for pu in 0..i {
            if (&self.l_d_true[pu] - &self.l_d_hat[pu]).norm() > slack(self.eps_d[pu])
                || (&self.l_r_true[pu] - &self.l_r_hat[pu]).norm() > slack(self.eps_r[pu])
            {
                return Err(invalid("true PU channel outside its uncertainty ball"));
            }
            for ul in 0..j {
                if (self.e_true[pu][ul] - self.e_hat[pu][ul]).norm() > slack(self.eps_e[pu][ul]) {
                    return Err(invalid("true PU channel outside its uncertainty ball"));
                }
            }
        }
        Ok(())
    }

    /// Copy with every reflected path removed (no IRS deployed).
    pub fn without_irs(&self) -> Scenario {
        let mut s = self.clone();
        s.f.fill(ZERO);
        for v in s.h_r.iter_mut().chain(s.g_r.iter_mut()) {
            v.fill(ZERO);
        }
        for v in s.l_r_hat.iter_mut().chain(s.l_r_true.iter_mut()) {
            v.fill(ZERO);
        }
        s.eps_r.iter_mut().for_each(|e| *e = 0.0);
        s
    }

    /// Copy that treats the PU estimates as exact (all radii zero). The true
    /// channels are kept so that the outcome can still be verified.
    pub fn nominal(&self) -> Scenario {
        let mut s = self.clone();
        s.eps_d.iter_mut().for_each(|e| *e = 0.0);
        s.eps_r.iter_mut().for_each(|e| *e = 0.0);
        s.eps_e.iter_mut().for_each(|r| r.iter_mut().for_each(|e| *e = 0.0));
        s
    }

    /// Downlink-only restriction: no uplink users.
    pub fn dl_only(&self) -> Scenario {
        let mut s = self.clone();
        s.h_d.clear();
        s.h_r.clear();
        s.q.clear();
        for row in s.e_hat.iter_mut().chain(s.e_true.iter_mut()) {
            row.clear();
        }
        s.eps_e.iter_mut().for_each(|r| r.clear());
        s.params.j_ul = 0;
        s.params.p_max_ul.clear();
        s.params.weights_ul.clear();
        s.geometry.ul_users.clear();
        s
    }

    /// Uplink-only restriction: no downlink users.
    pub fn ul_only(&self) -> Scenario {
        let mut s = self.clone();
        s.g_d.clear();
        s.g_r.clear();
        s.q.iter_mut().for_each(|r| r.clear());
        s.params.k_dl = 0;
        s.params.sigma2_dl.clear();
        s.params.weights_dl.clear();
        s.geometry.dl_users.clear();
        s
    }
}

/// A point of the design space: transmit beams, uplink powers, receive
/// combiners and IRS phases.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub w: Vec<CVector>,
    pub p: Vec<f64>,
    pub v: Vec<CVector>,
    pub psi: Vec<f64>,
}

impl Allocation {
    /// All-zero beams and powers, first-axis combiners, zero phases.
    pub fn zeros(s: &Scenario) -> Allocation {
        let n = s.n_t();
        let mut e1 = cvec_zeros(n);
        e1[0] = crate::linalg::ONE;
        Allocation {
            w: (0..s.k_dl()).map(|_| cvec_zeros(n)).collect(),
            p: alloc::vec![0.0; s.j_ul()],
            v: (0..s.j_ul()).map(|_| e1.clone()).collect(),
            psi: alloc::vec![0.0; s.m()],
        }
    }

    pub fn total_dl_power(&self) -> f64 {
        self.w.iter().map(|w| w.norm_squared()).sum()
    }

    /// `W_k = w_k w_k^H`.
    pub fn beam_matrices(&self) -> Vec<CMatrix> {
        self.w.iter().map(crate::linalg::outer).collect()
    }

    /// Checks C1 and C2 with a relative slack, and that phases are finite.
    pub fn check_power(&self, s: &Scenario, rel_tol: f64) -> Result<()> {
        if self.total_dl_power() > s.params.p_max_dl * (1.0 + rel_tol) {
            return Err(invalid("downlink power budget exceeded"));
        }
        for (p, pmax) in self.p.iter().zip(&s.params.p_max_ul) {
            if *p < 0.0 || *p > pmax * (1.0 + rel_tol) {
                return Err(invalid("uplink power outside its limits"));
            }
        }
        if !self.psi.iter().all(|x| x.is_finite()) {
            return Err(invalid("non-finite IRS phase"));
        }
        Ok(())
    }

    pub fn check_dims(&self, s: &Scenario) -> Result<()> {
        let n = s.n_t();
        if self.w.len() != s.k_dl()
            || self.p.len() != s.j_ul()
            || self.v.len() != s.j_ul()
            || self.psi.len() != s.m()
            || self.w.iter().chain(&self.v).any(|x| x.len() != n)
        {
            return Err(invalid("allocation dimensions do not match the scenario"));
        }
        Ok(())
    }
}
