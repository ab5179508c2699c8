#![allow(dead_code)]

use fdcr_core::algo::find_feasible_start;
use fdcr_core::linalg::{c, outer, CMatrix, CVector};
use fdcr_core::model::{generate_scenario, Allocation, Scenario, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn desk(seed: u64) -> Scenario {
    generate_scenario(&ScenarioConfig::default(), seed).unwrap()
}

pub fn scenario_with(seed: u64, edit: impl FnOnce(&mut ScenarioConfig)) -> Scenario {
    let mut cfg = ScenarioConfig::default();
    edit(&mut cfg);
    generate_scenario(&cfg, seed).unwrap()
}

pub fn start(s: &Scenario, seed: u64) -> Allocation {
    find_feasible_start(s, seed).unwrap()
}

pub fn gauss_vec(rng: &mut ChaCha8Rng, n: usize) -> CVector {
    CVector::from_iterator(n, (0..n).map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal))))
}

pub fn unit_vec(rng: &mut ChaCha8Rng, n: usize) -> CVector {
    let g = gauss_vec(rng, n);
    g.unscale(g.norm())
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let a = CMatrix::from_fn(n, n, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    (&a + a.adjoint()).scale(0.5)
}

/// Random PSD matrix of trace `scale` and rank up to `rank`.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize, scale: f64) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for _ in 0..rank {
        m += outer(&gauss_vec(rng, n));
    }
    let tr = m.trace().re;
    m.scale(scale / tr)
}

/// Random beams (full-rank PSD) and powers within the budgets.
pub fn random_wp(rng: &mut ChaCha8Rng, s: &Scenario) -> (Vec<CMatrix>, Vec<f64>) {
    let dl = s.params.p_max_dl.min(1e-2);
    let w = (0..s.k_dl())
        .map(|_| {
            let scale = dl * rng.random::<f64>() + 1e-6;
            random_psd(rng, s.n_t(), s.n_t(), scale)
        })
        .collect();
    let p = s.params.p_max_ul.iter().map(|pm| pm * (0.05 + 0.95 * rng.random::<f64>())).collect();
    (w, p)
}

/// Random feasible lifted phase matrix `sum_t a_t x_t x_t^H` with unit-modulus
/// `x_t`, so the diagonal is all ones.
pub fn random_theta(rng: &mut ChaCha8Rng, dim: usize, terms: usize) -> CMatrix {
    let weights: Vec<f64> = (0..terms).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = weights.iter().sum();
    let mut out = CMatrix::zeros(dim, dim);
    for a in weights {
        let mut x = CVector::zeros(dim);
        for k in 0..dim - 1 {
            x[k] = fdcr_core::linalg::cis(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
        }
        x[dim - 1] = c(1.0, 0.0);
        out += outer(&x).scale(a / total);
    }
    out
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
