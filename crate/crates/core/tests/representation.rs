mod common;

use common::*;
use fdcr_core::algo::theta::{lift_phases, recover_psi, ThetaData, ThetaTerms};
use fdcr_core::algo::wp::{dl_powers, ul_powers};
use fdcr_core::algo::{extract_rank_one, EffectiveChannels};
use fdcr_core::linalg::{c, cis, cvec, identity, outer, trace_prod_re, CMatrix, CVector};
use fdcr_core::model::{dl_sinr, interference_leakage, ul_sinr};
use fdcr_core::robust::nominal_leakage;
use proptest::prelude::*;
use std::f64::consts::PI;

const TOL: f64 = 1e-10;

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI + 1e-15 {
        y + 2.0 * PI
    } else {
        y
    }
}

fn angle_gap(a: f64, b: f64) -> f64 {
    wrap(a - b).abs()
}

#[test]
fn raw_effective_and_lifted_evaluations_agree() {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let s = desk(seed);
        let a = start(&s, seed);
        let ec = EffectiveChannels::new(&s, &a.psi);
        let w = a.beam_matrices();
        let td = ThetaData::new(&s, &a.psi);
        let terms = ThetaTerms::new(&s, &td, &w, &a.p, &a.v);
        let theta = lift_phases(&a.psi);
        for (k, (tot, int)) in dl_powers(&s, &ec, &w, &a.p).into_iter().enumerate() {
            let raw = dl_sinr(&s, &a, k);
            let lifted = terms.dl[k].total_at(&theta) / terms.dl[k].interference_at(&theta) - 1.0;
            worst = worst.max(rel(raw, tot / int - 1.0)).max(rel(raw, lifted));
        }
        for (j, (tot, int)) in ul_powers(&s, &ec, &w, &a.p, &a.v).into_iter().enumerate() {
            let raw = ul_sinr(&s, &a, j).unwrap();
            let lifted = terms.ul[j].total_at(&theta) / terms.ul[j].interference_at(&theta) - 1.0;
            worst = worst.max(rel(raw, tot / int - 1.0)).max(rel(raw, lifted));
        }
        for i in 0..s.i_pu() {
            let raw = interference_leakage(&s, &a, s.estimated_pu(i));
            let effective: f64 = a.w.iter().map(|wk| ec.l_hat[i].dotc(wk).norm_sqr()).sum::<f64>()
                + a.p.iter().zip(&ec.theta_e[i]).map(|(p, t)| p * t.norm_sqr()).sum::<f64>();
            let mut q = CMatrix::zeros(s.m() + 1, s.m() + 1);
            for wk in &w {
                q += &td.l_lift[i] * wk * td.l_lift[i].adjoint();
            }
            for (j, pj) in a.p.iter().enumerate() {
                q += td.p_lift[i][j].scale(*pj);
            }
            let lifted = trace_prod_re(&theta, &q);
            let via_mats = nominal_leakage(&s, &w, &a.p, &a.psi, i);
            worst = worst.max(rel(raw, effective)).max(rel(raw, lifted)).max(rel(raw, via_mats));
        }
    }
    assert!(worst <= TOL, "largest relative mismatch {worst:e}");
}

#[test]
fn lifted_phase_matrix_is_rank_one_with_unit_diagonal() {
    let psi = [0.3, -1.2, 2.9, -3.0];
    let t = lift_phases(&psi);
    for d in 0..5 {
        assert!((t[(d, d)] - c(1.0, 0.0)).norm() <= 1e-15);
    }
    let rec = recover_psi(&t, 1e-6).unwrap();
    assert!(rec.ratio <= 1e-14 && !rec.flagged);
}

#[test]
fn global_phase_does_not_change_the_lift() {
    let psi = [0.7, -0.4, 1.9];
    let mut th = cvec(&[cis(-0.7), cis(0.4), cis(-1.9), c(1.0, 0.0)]);
    let base = outer(&th);
    let rot = cis(1.234);
    th = th.map(|z| z * rot);
    assert!((outer(&th) - &base).norm() <= 1e-14);
    assert!((lift_phases(&psi) - base).norm() <= 1e-14);
}

#[test]
fn identity_is_flagged_as_not_rank_one() {
    let rec = recover_psi(&identity(4), 1e-6).unwrap();
    assert!((rec.ratio - 1.0).abs() <= 1e-12);
    assert!(rec.flagged);
}

#[test]
fn zero_matrix_cannot_be_recovered() {
    assert!(recover_psi(&CMatrix::zeros(3, 3), 1e-6).is_err());
}

#[test]
fn rank_one_extraction_hand_cases() {
    let w0 = cvec(&[c(1.0, 2.0), c(-0.5, 0.25), c(0.0, 3.0)]);
    let r = extract_rank_one(&outer(&w0), 1e-6);
    let phase = r.w.dotc(&w0);
    let aligned = r.w.map(|z| z * phase / phase.norm());
    assert!((aligned - &w0).norm() <= 1e-12 * w0.norm());
    assert!(r.ratio <= 1e-15 && !r.flagged);

    let r = extract_rank_one(&CMatrix::zeros(3, 3), 1e-6);
    assert_eq!(r.w, CVector::zeros(3));
    assert_eq!(r.ratio, 0.0);

    let d = CMatrix::from_diagonal(&cvec(&[c(2.0, 0.0), c(1.0, 0.0)]));
    let r = extract_rank_one(&d, 1e-6);
    assert!((r.w[0].norm() - 2f64.sqrt()).abs() <= 1e-14 && r.w[1].norm() <= 1e-14);
    assert!((r.ratio - 0.5).abs() <= 1e-14);
    assert!(r.flagged);
}

proptest! {
    #[test]
    fn lift_and_recover_round_trip(psi in prop::collection::vec(-PI..PI, 1..9)) {
        let rec = recover_psi(&lift_phases(&psi), 1e-6).unwrap();
        prop_assert!(!rec.flagged);
        for (a, b) in psi.iter().zip(&rec.psi) {
            prop_assert!(angle_gap(*a, *b) <= 1e-10);
        }
    }

    #[test]
    fn rank_one_extraction_preserves_the_trace_of_rank_one_input(
        re in prop::collection::vec(-3.0f64..3.0, 4),
        im in prop::collection::vec(-3.0f64..3.0, 4),
    ) {
        let w0 = CVector::from_iterator(4, re.iter().zip(&im).map(|(a, b)| c(*a, *b)));
        let r = extract_rank_one(&outer(&w0), 1e-6);
        prop_assert!((r.w.norm_squared() - w0.norm_squared()).abs() <= 1e-10 * w0.norm_squared().max(1.0));
        prop_assert!(r.ratio <= 1e-10);
    }
}
