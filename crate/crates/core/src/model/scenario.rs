use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // inherent float methods take over when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Geometry, Scenario, SystemParams};
use crate::error::invalid;
use crate::linalg::{c, cis, CMatrix, CVector, C64};
use crate::Result;

/// Link class for the distance-based path-loss model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkKind {
    /// Direct link over distance `d`.
    Direct { d: f64 },
    /// BS-IRS-user cascade.
    Reflected { d_br: f64, d_ru: f64 },
}

/// Inputs for [`generate_scenario`]. Powers are linear (W); the file-level
/// configuration converts from dBm before building this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_t: usize,
    pub m: usize,
    pub k_dl: usize,
    pub j_ul: usize,
    pub i_pu: usize,
    pub p_max_dl: f64,
    pub p_max_ul: f64,
    pub p_tol: f64,
    pub eta: f64,
    pub sigma2_ul: f64,
    pub sigma2_dl: f64,
    pub weight_ul: f64,
    pub weight_dl: f64,
    /// Maximum normalized PU estimation error.
    pub upsilon2: f64,
    pub d_bs_irs: f64,
    pub cell_radius: f64,
    pub min_distance: f64,
    pub sector_half_angle: f64,
    pub c_d: f64,
    pub alpha_bu: f64,
    pub c_r: f64,
    pub alpha_br: f64,
    pub alpha_ru: f64,
    /// Rician factor of the reflected links (linear).
    pub rician_k: f64,
}

fn dbm(x: f64) -> f64 {
    10f64.powf((x - 30.0) / 10.0)
}

fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

impl Default for ScenarioConfig {
    /// Desk-scale defaults: 4 antennas, 4 IRS elements, two users of each kind.
    fn default() -> Self {
        ScenarioConfig {
            n_t: 4,
            m: 4,
            k_dl: 2,
            j_ul: 2,
            i_pu: 2,
            p_max_dl: dbm(30.0),
            p_max_ul: dbm(10.0),
            p_tol: dbm(-90.0),
            eta: db(-85.0),
            sigma2_ul: dbm(-110.0),
            sigma2_dl: dbm(-100.0),
            weight_ul: 1.0,
            weight_dl: 1.0,
            upsilon2: 0.1,
            d_bs_irs: 50.0,
            cell_radius: 50.0,
            min_distance: 5.0,
            sector_half_angle: PI / 3.0,
            c_d: db(-40.0),
            alpha_bu: 3.9,
            c_r: db(-80.0),
            alpha_br: 2.1,
            alpha_ru: 2.3,
            rician_k: db(5.0),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.m == 0 {
            return Err(invalid("n_t and m must be at least 1"));
        }
        if self.n_t < self.j_ul {
            return Err(invalid("n_t must be at least the number of uplink users"));
        }
        if !(self.upsilon2 >= 0.0) || !(self.rician_k >= 0.0) {
            return Err(invalid("upsilon2 and the Rician factor must be nonnegative"));
        }
        if !(self.cell_radius > self.min_distance && self.min_distance > 0.0 && self.d_bs_irs > 0.0)
        {
            return Err(invalid("need 0 < min_distance < cell_radius and d_bs_irs > 0"));
        }
        self.params().validate()
    }

    pub fn params(&self) -> SystemParams {
        SystemParams {
            n_t: self.n_t,
            m: self.m,
            i_pu: self.i_pu,
            j_ul: self.j_ul,
            k_dl: self.k_dl,
            p_max_dl: self.p_max_dl,
            p_max_ul: alloc::vec![self.p_max_ul; self.j_ul],
            p_tol: alloc::vec![self.p_tol; self.i_pu],
            eta: self.eta,
            sigma2_ul: self.sigma2_ul,
            sigma2_dl: alloc::vec![self.sigma2_dl; self.k_dl],
            weights_ul: alloc::vec![self.weight_ul; self.j_ul],
            weights_dl: alloc::vec![self.weight_dl; self.k_dl],
        }
    }

    pub fn link_gain(&self, link: LinkKind) -> Result<f64> {
        path_loss(link, self.c_d, self.alpha_bu, self.c_r, self.alpha_br, self.alpha_ru)
    }
}

/// Linear power gain of a link: `c_D d^-a_BU` for direct links and
/// `c_R d_BR^-a_BR d_RU^-a_RU` for reflected ones.
pub fn path_loss(
    link: LinkKind,
    c_d: f64,
    alpha_bu: f64,
    c_r: f64,
    alpha_br: f64,
    alpha_ru: f64,
) -> Result<f64> {
    match link {
        LinkKind::Direct { d } if d > 0.0 => Ok(c_d * d.powf(-alpha_bu)),
        LinkKind::Reflected { d_br, d_ru } if d_br > 0.0 && d_ru > 0.0 => {
            Ok(c_r * d_br.powf(-alpha_br) * d_ru.powf(-alpha_ru))
        }
        _ => Err(invalid("distances must be positive")),
    }
}

struct Draw {
    rng: ChaCha8Rng,
}

impl Draw {
    fn stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Draw { rng }
    }

    fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Circularly-symmetric complex Gaussian with unit variance.
    fn cn(&mut self) -> C64 {
        let re: f64 = self.rng.sample(StandardNormal);
        let im: f64 = self.rng.sample(StandardNormal);
        c(re, im) * core::f64::consts::FRAC_1_SQRT_2
    }

    fn cn_vec(&mut self, n: usize) -> CVector {
        CVector::from_iterator(n, (0..n).map(|_| self.cn()))
    }

    fn cn_mat(&mut self, r: usize, cols: usize) -> CMatrix {
        // column-major fill keeps the draw order fixed
        let mut m = CMatrix::zeros(r, cols);
        for j in 0..cols {
            for i in 0..r {
                m[(i, j)] = self.cn();
            }
        }
        m
    }

    fn angle(&mut self) -> f64 {
        2.0 * PI * self.uniform()
    }

    /// Uniform point of the annular sector around the origin.
    fn position(&mut self, cfg: &ScenarioConfig) -> [f64; 2] {
        let (r0, r1) = (cfg.min_distance, cfg.cell_radius);
        let r = (self.uniform() * (r1 * r1 - r0 * r0) + r0 * r0).sqrt();
        let phi = (2.0 * self.uniform() - 1.0) * cfg.sector_half_angle;
        [r * phi.cos(), r * phi.sin()]
    }

    /// Uniform point of the complex ball of the given radius.
    fn ball(&mut self, n: usize, radius: f64) -> CVector {
        let dir = self.cn_vec(n);
        let u = self.uniform();
        let norm = dir.norm();
        if radius == 0.0 || norm == 0.0 {
            return CVector::zeros(n);
        }
        let r = radius * u.powf(1.0 / (2.0 * n as f64));
        dir.scale(r / norm)
    }
}

/// Half-wavelength uniform linear array response.
fn steering(n: usize, angle: f64) -> CVector {
    let phase = PI * angle.sin();
    CVector::from_iterator(n, (0..n).map(|i| cis(phase * i as f64)))
}

fn rician_scale(k: f64) -> (f64, f64) {
    ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Draws one network realization. The result depends only on the
/// configuration and the seed. Positions and direct links, IRS links and
/// direct-link estimation errors come from separate streams, so sweeping
/// powers, the error level or the IRS size keeps the other draws fixed.
pub fn generate_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    let mut d = Draw::stream(seed, 0);
    let mut ir = Draw::stream(seed, 1);
    let mut er = Draw::stream(seed, 2);
    let (n, m) = (cfg.n_t, cfg.m);
    let (los, nlos) = rician_scale(cfg.rician_k);
    // The reflected path loss c_R d_BR^-a d_RU^-b is split evenly between
    // the two hops so that every cascade through the IRS carries it once.
    let hop_br = cfg.c_r.sqrt() * cfg.d_bs_irs.powf(-cfg.alpha_br);
    let hop_ru = |dd: f64| cfg.c_r.sqrt() * dd.max(cfg.min_distance).powf(-cfg.alpha_ru);

    let bs = [0.0, 0.0];
    let irs = [cfg.d_bs_irs, 0.0];
    let ul_users: Vec<[f64; 2]> = (0..cfg.j_ul).map(|_| d.position(cfg)).collect();
    let dl_users: Vec<[f64; 2]> = (0..cfg.k_dl).map(|_| d.position(cfg)).collect();
    let pus: Vec<[f64; 2]> = (0..cfg.i_pu).map(|_| d.position(cfg)).collect();

    let direct = |d: &mut Draw, len: usize, dd: f64| -> Result<CVector> {
        let g = cfg.link_gain(LinkKind::Direct { d: dd.max(cfg.min_distance) })?;
        Ok(d.cn_vec(len).scale(g.sqrt()))
    };
    let reflected = |d: &mut Draw, dd: f64| -> CVector {
        let a = steering(m, d.angle());
        let fade = d.cn_vec(m);
        (a.scale(los) + fade.scale(nlos)).scale(hop_ru(dd).sqrt())
    };

    let f = {
        let a_irs = steering(m, ir.angle());
        let a_bs = steering(n, ir.angle());
        let fade = ir.cn_mat(m, n);
        ((&a_irs * a_bs.adjoint()).scale(los) + fade.scale(nlos)).scale(hop_br.sqrt())
    };

    let mut h_d = Vec::new();
    let mut h_r = Vec::new();
    for &pos in &ul_users {
        h_d.push(direct(&mut d, n, dist(pos, bs))?);
        h_r.push(reflected(&mut ir, dist(pos, irs)));
    }
    let mut g_d = Vec::new();
    let mut g_r = Vec::new();
    for &pos in &dl_users {
        g_d.push(direct(&mut d, n, dist(pos, bs))?);
        g_r.push(reflected(&mut ir, dist(pos, irs)));
    }
    let s_si = d.cn_mat(n, n);
    let mut q = Vec::new();
    for &u in &ul_users {
        let mut row = Vec::new();
        for &v in &dl_users {
            row.push(direct(&mut d, 1, dist(u, v))?[0]);
        }
        q.push(row);
    }

    let mut l_d_true = Vec::new();
    let mut l_r_true = Vec::new();
    let mut e_true = Vec::new();
    for &pos in &pus {
        l_d_true.push(direct(&mut d, n, dist(pos, bs))?);
        l_r_true.push(reflected(&mut ir, dist(pos, irs)));
        let mut row = Vec::new();
        for &u in &ul_users {
            row.push(direct(&mut d, 1, dist(pos, u))?[0]);
        }
        e_true.push(row);
    }

    // Estimation errors: radius from the normalized error level, error
    // uniform on the ball, estimate = truth - error.
    let ups = cfg.upsilon2.sqrt();
    let (mut l_d_hat, mut l_r_hat, mut e_hat) = (Vec::new(), Vec::new(), Vec::new());
    let (mut eps_d, mut eps_r, mut eps_e) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..cfg.i_pu {
        let rd = ups * l_d_true[i].norm();
        let err_d = er.ball(n, rd);
        let rr = ups * l_r_true[i].norm();
        let err_r = ir.ball(m, rr);
        l_d_hat.push(&l_d_true[i] - err_d);
        l_r_hat.push(&l_r_true[i] - err_r);
        eps_d.push(rd);
        eps_r.push(rr);
        let mut row_hat = Vec::new();
        let mut row_eps = Vec::new();
        for j in 0..cfg.j_ul {
            let re = ups * e_true[i][j].norm();
            let err = er.ball(1, re)[0];
            row_hat.push(e_true[i][j] - err);
            row_eps.push(re);
        }
        e_hat.push(row_hat);
        eps_e.push(row_eps);
    }

    let s = Scenario {
        f,
        h_d,
        h_r,
        g_d,
        g_r,
        s_si,
        q,
        l_d_hat,
        l_r_hat,
        e_hat,
        eps_d,
        eps_r,
        eps_e,
        l_d_true,
        l_r_true,
        e_true,
        params: cfg.params(),
        geometry: Geometry { bs, irs, ul_users, dl_users, pus },
    };
    s.validate()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pl(link: LinkKind) -> f64 {
        ScenarioConfig::default().link_gain(link).unwrap()
    }

    #[test]
    fn path_loss_reference_points() {
        assert!((pl(LinkKind::Direct { d: 1.0 }) - 1e-4).abs() < 1e-18);
        assert!((pl(LinkKind::Reflected { d_br: 1.0, d_ru: 1.0 }) - 1e-8).abs() < 1e-22);
        let expected = 1e-4 * 10f64.powf(-3.9);
        assert!((pl(LinkKind::Direct { d: 10.0 }) / expected - 1.0).abs() < 1e-12);
        assert!(ScenarioConfig::default().link_gain(LinkKind::Direct { d: 0.0 }).is_err());
        assert!(ScenarioConfig::default()
            .link_gain(LinkKind::Reflected { d_br: 1.0, d_ru: -2.0 })
            .is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = ScenarioConfig::default();
        let a = generate_scenario(&cfg, 7).unwrap();
        let b = generate_scenario(&cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_scenario(&cfg, 8).unwrap();
        assert_ne!(a.f, c.f);
    }

    #[test]
    fn zero_error_level_gives_exact_estimates() {
        let cfg = ScenarioConfig { upsilon2: 0.0, ..ScenarioConfig::default() };
        let s = generate_scenario(&cfg, 3).unwrap();
        for i in 0..s.i_pu() {
            assert_eq!(s.l_d_true[i], s.l_d_hat[i]);
            assert_eq!(s.l_r_true[i], s.l_r_hat[i]);
            assert_eq!(s.e_true[i], s.e_hat[i]);
        }
    }

    #[test]
    fn normalized_errors_respect_the_level() {
        let cfg = ScenarioConfig::default();
        for seed in 0..20 {
            let s = generate_scenario(&cfg, seed).unwrap();
            for i in 0..s.i_pu() {
                let err = (&s.l_d_true[i] - &s.l_d_hat[i]).norm_squared();
                assert!(err / s.l_d_true[i].norm_squared() <= 0.1 * (1.0 + 1e-12));
                let err = (&s.l_r_true[i] - &s.l_r_hat[i]).norm_squared();
                assert!(err / s.l_r_true[i].norm_squared() <= 0.1 * (1.0 + 1e-12));
                for j in 0..s.j_ul() {
                    let err = (s.e_true[i][j] - s.e_hat[i][j]).norm_sqr();
                    assert!(err / s.e_true[i][j].norm_sqr() <= 0.1 * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn power_sweeps_keep_channels() {
        let base = ScenarioConfig::default();
        let louder = ScenarioConfig { p_max_dl: 10.0, ..base.clone() };
        let a = generate_scenario(&base, 11).unwrap();
        let b = generate_scenario(&louder, 11).unwrap();
        assert_eq!(a.f, b.f);
        assert_eq!(a.l_d_hat, b.l_d_hat);
    }
}
