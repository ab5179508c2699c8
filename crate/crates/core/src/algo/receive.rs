use super::EffectiveChannels;
use crate::error::Error;
use crate::linalg::{hpd_solve, identity, outer, zeros, CMatrix, CVector, ONE};
use crate::model::Scenario;
use crate::Result;

/// Interference-plus-noise covariance seen by uplink user `j`:
/// other users, residual SI on the receive chains and receiver noise.
pub fn interference_covariance(s: &Scenario, ec: &EffectiveChannels, w: &[CMatrix], p: &[f64], j: usize) -> CMatrix {
    let n = s.n_t();
    let mut r = identity(n).scale(s.params.sigma2_ul);
    for (t, &pt) in p.iter().enumerate() {
        if t != j {
            r += outer(&ec.h_hat[t]).scale(pt);
        }
    }
    let mut tx = zeros(n, n);
    for wk in w {
        tx += &s.s_si * wk * s.s_si.adjoint();
    }
    for d in 0..n {
        r[(d, d)] += tx[(d, d)].re * s.params.eta;
    }
    r
}

/// MVDR combiner `R^{-1} h_j`, normalized. The scalar in front is dropped
/// since the SINR does not depend on it. A user with a zero channel gets
/// the first unit vector.
pub fn receive_beamformer(s: &Scenario, ec: &EffectiveChannels, w: &[CMatrix], p: &[f64], j: usize) -> Result<CVector> {
    let r = interference_covariance(s, ec, w, p, j);
    let x = hpd_solve(&r, &ec.h_hat[j])
        .ok_or_else(|| Error::Numerical(alloc::string::String::from("interference covariance is not positive definite")))?;
    let norm = x.norm();
    if norm > 0.0 && norm.is_finite() {
        Ok(x.unscale(norm))
    } else {
        let mut e1 = CVector::zeros(s.n_t());
        e1[0] = ONE;
        Ok(e1)
    }
}
