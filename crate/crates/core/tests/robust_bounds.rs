mod common;

use common::*;
use fdcr_core::algo::theta::{build_subproblem_theta, lift_phases, penalized_objective, ThetaData, ThetaTerms};
use fdcr_core::algo::wp::{build_subproblem_wp, dc_parts_wp};
use fdcr_core::algo::{enforce_feasibility, BeamShape, EffectiveChannels};
use fdcr_core::conic::{AffineExpr, ConicProgram, LmiBlock};
use fdcr_core::linalg::{lambda_min, phase_matrix, CMatrix};
use fdcr_core::model::{Allocation, Scenario};
use fdcr_core::robust::{
    build_lmi_c4a, build_lmi_c4b, build_lmi_c4c_fixed, build_lmi_c4c_theta, c4d_fixed, c4d_theta, canonical_slacks,
    reflected_power_matrix, safe_leakage_bound, safe_leakage_parts, verify_robust_leakage,
};
use proptest::prelude::*;
use rand::Rng;

fn k(x: f64) -> AffineExpr {
    AffineExpr::constant(x)
}

/// A feasible allocation with random beam directions and powers at the
/// start point's phases.
fn random_feasible(s: &Scenario, seed: u64) -> Allocation {
    let mut a = start(s, seed);
    let mut r = rng(seed ^ 0x5eed);
    for w in &mut a.w {
        *w = gauss_vec(&mut r, s.n_t()).scale(0.1 * r.random::<f64>());
    }
    for (p, pm) in a.p.iter_mut().zip(&s.params.p_max_ul) {
        *p = pm * r.random::<f64>();
    }
    enforce_feasibility(s, &mut a);
    a
}

/// Every LMI of PU `i` with the canonical slacks substituted, plus the
/// nominal constraint value (must be <= 0).
fn canonical_lmis(s: &Scenario, a: &Allocation, i: usize) -> (Vec<CMatrix>, f64) {
    let sl = canonical_slacks(s, a, i);
    let w = a.beam_matrices();
    let mut sum_w = CMatrix::zeros(s.n_t(), s.n_t());
    for wk in &w {
        sum_w += wk;
    }
    let b = reflected_power_matrix(s, &w, &a.p);
    let p: Vec<AffineExpr> = a.p.iter().map(|&x| k(x)).collect();
    let iota: Vec<AffineExpr> = sl.iota.iter().map(|&x| k(x)).collect();
    let c4a = build_lmi_c4a(&p, &k(sl.beta), &iota, &s.eps_e[i], s.params.p_tol[i]).unwrap();
    let c4b = build_lmi_c4b(&LmiBlock::from_constant(sum_w), &k(sl.beta), &k(sl.gamma), &k(sl.kappa), s.eps_d[i]).unwrap();
    let c4c = build_lmi_c4c_fixed(&LmiBlock::from_constant(b), &a.psi, &k(sl.gamma), &k(sl.tau), &k(sl.delta), s.eps_r[i])
        .unwrap();
    let ec = EffectiveChannels::new(s, &a.psi);
    let wb: Vec<LmiBlock> = w.iter().map(|x| LmiBlock::from_constant(x.clone())).collect();
    let c4d = c4d_fixed(&ec.l_hat[i], &ec.theta_e[i], &wb, &p, &k(sl.tau));
    (vec![c4a.evaluate(&[]), c4b.evaluate(&[]), c4c.evaluate(&[])], c4d.evaluate(&[]))
}

#[test]
fn safe_bound_dominates_sampled_leakage() {
    for seed in 0..20 {
        let s = desk(seed);
        let a = random_feasible(&s, seed);
        for i in 0..s.i_pu() {
            let bound = safe_leakage_bound(&s, &a, i);
            let chk = verify_robust_leakage(&s, &a, i, 10_000, seed);
            assert!(chk.max_leak <= bound * (1.0 + 1e-12), "seed {seed} PU {i}: {} > {bound}", chk.max_leak);
            assert!(!chk.violated);
        }
    }
}

#[test]
fn without_uncertainty_the_bound_is_the_nominal_leakage() {
    let s = scenario_with(6, |c| c.upsilon2 = 0.0);
    let a = random_feasible(&s, 6);
    for i in 0..s.i_pu() {
        let parts = safe_leakage_parts(&s, &a, i);
        assert_eq!(safe_leakage_bound(&s, &a, i), parts.nominal);
        assert_eq!(parts.ul_error + parts.bs_error + parts.irs_error, 0.0);
    }
}

#[test]
fn canonical_slacks_satisfy_every_lmi_of_a_feasible_point() {
    for seed in 0..20 {
        let s = desk(seed);
        let a = random_feasible(&s, seed);
        for i in 0..s.i_pu() {
            let (blocks, nominal) = canonical_lmis(&s, &a, i);
            for (n, m) in blocks.iter().enumerate() {
                let scale = fdcr_core::linalg::max_abs(m).max(s.params.p_tol[i]);
                assert!(lambda_min(m) >= -1e-10 * scale, "seed {seed} PU {i} block {n}: {}", lambda_min(m));
            }
            assert!(nominal.abs() <= 1e-12 * s.params.p_tol[i]);
        }
    }
}

#[test]
fn an_infeasible_point_violates_the_uplink_lmi() {
    let s = desk(7);
    let mut a = random_feasible(&s, 7);
    for w in &mut a.w {
        *w = w.scale(100.0);
    }
    let violated = (0..s.i_pu()).any(|i| {
        let (blocks, _) = canonical_lmis(&s, &a, i);
        lambda_min(&blocks[0]) < 0.0
    });
    assert!(violated);
}

#[test]
fn lifted_irs_lmi_and_nominal_term_match_the_fixed_phase_forms() {
    let s = desk(8);
    let a = random_feasible(&s, 8);
    let w = a.beam_matrices();
    let b = reflected_power_matrix(&s, &w, &a.p);
    let theta = LmiBlock::from_constant(lift_phases(&a.psi));
    let td = ThetaData::new(&s, &a.psi);
    let m = s.m();
    for i in 0..s.i_pu() {
        let sl = canonical_slacks(&s, &a, i);
        let fixed = build_lmi_c4c_fixed(&LmiBlock::from_constant(b.clone()), &a.psi, &k(sl.gamma), &k(sl.tau), &k(sl.delta), s.eps_r[i])
            .unwrap()
            .evaluate(&[]);
        let lifted = build_lmi_c4c_theta(&b, &theta, &k(sl.gamma), &k(sl.tau), &k(sl.delta), s.eps_r[i]).unwrap().evaluate(&[]);
        let top_f = fixed.view((0, 0), (m, m)).into_owned();
        let top_l = lifted.view((0, 0), (m, m)).into_owned();
        assert!((&top_f - &top_l).norm() <= 1e-10 * top_f.norm().max(1e-30));
        assert!((fixed[(m, m)] - lifted[(m, m)]).norm() <= 1e-12 * s.params.p_tol[i]);

        let nominal = c4d_theta(&theta, &td.l_lift[i], &w, &td.p_lift[i], &a.p, &k(sl.tau)).evaluate(&[]);
        assert!(nominal.abs() <= 1e-10 * sl.tau.max(1e-30));
    }
}

#[test]
fn lmi_blocks_are_affine_in_the_variables() {
    let mut prog = ConicProgram::new();
    let n = 3;
    let wv = prog.add_hermitian(n);
    let beta = prog.add_scalar();
    let gamma = prog.add_scalar();
    let kappa = prog.add_scalar();
    let lmi = build_lmi_c4b(&prog.hermitian(wv), &beta, &gamma, &kappa, 0.3).unwrap();
    let mut r = rng(21);
    let x: Vec<f64> = (0..prog.n_scalars).map(|_| r.random::<f64>() - 0.5).collect();
    let y: Vec<f64> = (0..prog.n_scalars).map(|_| r.random::<f64>() - 0.5).collect();
    for t in [0.0, 0.25, 0.7, 1.0, 1.5] {
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let lhs = lmi.evaluate(&z);
        let rhs = lmi.evaluate(&x).scale(t) + lmi.evaluate(&y).scale(1.0 - t);
        assert!((lhs - rhs).norm() <= 1e-12);
    }
}

#[test]
fn wp_subproblem_is_exact_and_feasible_at_its_anchor() {
    for seed in 0..10 {
        let s = desk(seed);
        let a = random_feasible(&s, seed);
        let ec = EffectiveChannels::new(&s, &a.psi);
        let w = a.beam_matrices();
        let sub = build_subproblem_wp(&s, &ec, &w, &a.p, &a.v, &a.psi, BeamShape::Free).unwrap();
        let x = sub.point(&s, &w, &a.p, &a.psi);
        let truth = dc_parts_wp(&s, &ec, &w, &a.p, &a.v).objective();
        assert!(rel(sub.prog.exact_objective(&x), truth) <= 1e-10, "seed {seed}");
        assert!(sub.prog.max_violation(&x) <= 1e-9, "seed {seed}: {}", sub.prog.max_violation(&x));
    }
}

#[test]
fn theta_subproblem_is_exact_and_feasible_at_its_anchor() {
    for seed in 0..10 {
        let s = desk(seed);
        let a = random_feasible(&s, seed);
        let w = a.beam_matrices();
        let td = ThetaData::new(&s, &a.psi);
        let terms = ThetaTerms::new(&s, &td, &w, &a.p, &a.v);
        let anchor = td.theta_mat.clone();
        for chi in [0.0, 1e3] {
            let sub = build_subproblem_theta(&s, &td, &terms, &anchor, &w, &a.p, chi).unwrap();
            let x = sub.point(&s, &anchor, &a.p);
            let truth = penalized_objective(&s, &terms, &anchor, chi);
            assert!((sub.prog.exact_objective(&x) - truth).abs() <= 1e-9 * truth.abs().max(1.0), "seed {seed}");
            assert!(sub.prog.max_violation(&x) <= 1e-9, "seed {seed}: {}", sub.prog.max_violation(&x));
        }
    }
}

#[test]
fn phase_rotation_of_the_fixed_irs_lmi_is_a_congruence() {
    let s = desk(9);
    let a = random_feasible(&s, 9);
    let b = reflected_power_matrix(&s, &a.beam_matrices(), &a.p);
    let psi = phase_matrix(&a.psi);
    let rotated = &psi * &b * psi.adjoint();
    // The eigenvalues are invariant under the unitary rotation.
    let (vb, _) = fdcr_core::linalg::hermitian_eigen(&b);
    let (vr, _) = fdcr_core::linalg::hermitian_eigen(&rotated);
    for (x, y) in vb.iter().zip(&vr) {
        assert!((x - y).abs() <= 1e-12 * vb[0].abs().max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn enforced_allocations_respect_budgets_and_safe_bounds(seed in 0u64..10_000, scale in 0.0f64..10.0) {
        let s = desk(seed % 5);
        let mut a = random_feasible(&s, seed);
        for w in &mut a.w {
            *w = w.scale(scale);
        }
        enforce_feasibility(&s, &mut a);
        prop_assert!(a.total_dl_power() <= s.params.p_max_dl * (1.0 + 1e-12));
        for (p, pm) in a.p.iter().zip(&s.params.p_max_ul) {
            prop_assert!(*p >= 0.0 && *p <= *pm);
        }
        for i in 0..s.i_pu() {
            prop_assert!(safe_leakage_bound(&s, &a, i) <= s.params.p_tol[i]);
        }
    }

    #[test]
    fn safe_bound_dominates_random_channel_draws(seed in 0u64..10_000) {
        let s = desk(seed % 5);
        let a = random_feasible(&s, seed);
        for i in 0..s.i_pu() {
            let bound = safe_leakage_bound(&s, &a, i);
            let sampled = fdcr_core::robust::sampled_leakages(&s, &a, i, 200, seed);
            prop_assert!(sampled.iter().all(|&x| x <= bound * (1.0 + 1e-12)));
        }
    }
}
