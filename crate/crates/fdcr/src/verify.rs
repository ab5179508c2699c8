//! Invariant suite run by the `verify` subcommand on one seeded scenario.

use fdcr_core::algo::theta::{dc_parts_theta, gradients_theta, lift_phases, ThetaData, ThetaTerms};
use fdcr_core::algo::wp::{dc_parts_wp, dl_powers, gradients_wp, linearized_g_wp, ul_powers};
use fdcr_core::algo::{find_feasible_start, receive_beamformer, EffectiveChannels, RunStatus, Stage};
use fdcr_core::baselines::proposed;
use fdcr_core::conic::ConicSolver;
use fdcr_core::linalg::{c, outer, trace_prod_re, CMatrix, CVector};
use fdcr_core::model::{dl_sinr, generate_scenario, ul_sinr, Allocation, Scenario};
use fdcr_core::robust::verify_robust_leakage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn gauss_vec(rng: &mut ChaCha8Rng, n: usize) -> CVector {
    CVector::from_iterator(n, (0..n).map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal))))
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let a = CMatrix::from_fn(n, n, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    (&a + a.adjoint()).scale(0.5)
}

/// Random nonnegative powers and PSD beams of the given total scale.
fn random_point(rng: &mut ChaCha8Rng, s: &Scenario, dl: f64) -> (Vec<CMatrix>, Vec<f64>) {
    let w = (0..s.k_dl())
        .map(|_| {
            let g = gauss_vec(rng, s.n_t());
            outer(&g).scale(dl * rng.random::<f64>() / g.norm_squared())
        })
        .collect();
    let p = s.params.p_max_ul.iter().map(|pm| pm * rng.random::<f64>()).collect();
    (w, p)
}

fn representation(s: &Scenario, a: &Allocation) -> Check {
    let ec = EffectiveChannels::new(s, &a.psi);
    let w = a.beam_matrices();
    let td = ThetaData::new(s, &a.psi);
    let terms = ThetaTerms::new(s, &td, &w, &a.p, &a.v);
    let theta = lift_phases(&a.psi);
    let mut worst: f64 = 0.0;
    for (k, (tot, int)) in dl_powers(s, &ec, &w, &a.p).into_iter().enumerate() {
        let raw = dl_sinr(s, a, k);
        let lifted = terms.dl[k].total_at(&theta) / terms.dl[k].interference_at(&theta) - 1.0;
        worst = worst.max(rel(raw, tot / int - 1.0)).max(rel(raw, lifted));
    }
    for (j, (tot, int)) in ul_powers(s, &ec, &w, &a.p, &a.v).into_iter().enumerate() {
        let raw = ul_sinr(s, a, j).unwrap_or(f64::NAN);
        let lifted = terms.ul[j].total_at(&theta) / terms.ul[j].interference_at(&theta) - 1.0;
        worst = worst.max(rel(raw, tot / int - 1.0)).max(rel(raw, lifted));
    }
    check("representation consistency", worst <= 1e-10, format!("max relative SINR mismatch {worst:.2e}"))
}

fn gradients(s: &Scenario, a: &Allocation, rng: &mut ChaCha8Rng) -> Check {
    let ec = EffectiveChannels::new(s, &a.psi);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let (w, p) = random_point(rng, s, s.params.p_max_dl.min(1e-2));
        let g = gradients_wp(s, &ec, &w, &p, &a.v);
        let dw: Vec<CMatrix> = w.iter().map(|wk| random_hermitian(rng, s.n_t()).scale(wk.norm())).collect();
        let dp: Vec<f64> = p.iter().map(|pj| pj * rng.random::<f64>()).collect();
        let h = 1e-5;
        let eval = |t: f64, on_w: bool| {
            let ww: Vec<CMatrix> =
                w.iter().zip(&dw).map(|(x, d)| if on_w { x + d.scale(t) } else { x.clone() }).collect();
            let pp: Vec<f64> = p.iter().zip(&dp).map(|(x, d)| if on_w { *x } else { x + t * d }).collect();
            dc_parts_wp(s, &ec, &ww, &pp, &a.v)
        };
        for on_w in [true, false] {
            let (up, dn) = (eval(h, on_w), eval(-h, on_w));
            let (fd1, fd2) = ((up.g1 - dn.g1) / (2.0 * h), (up.g2 - dn.g2) / (2.0 * h));
            let (an1, an2) = if on_w {
                (
                    (0..w.len()).map(|k| trace_prod_re(&g.dw_g1[k], &dw[k])).sum::<f64>(),
                    (0..w.len()).map(|k| trace_prod_re(&g.dw_g2[k], &dw[k])).sum::<f64>(),
                )
            } else {
                (
                    g.dp_g1.iter().zip(&dp).map(|(x, d)| x * d).sum::<f64>(),
                    g.dp_g2.iter().zip(&dp).map(|(x, d)| x * d).sum::<f64>(),
                )
            };
            for (fd, an) in [(fd1, an1), (fd2, an2)] {
                if fd.abs().max(an.abs()) > 1e-9 {
                    worst = worst.max(rel(fd, an));
                }
            }
        }
        let td = ThetaData::new(s, &a.psi);
        let terms = ThetaTerms::new(s, &td, &w, &p, &a.v);
        let theta = lift_phases(&a.psi);
        let gt = gradients_theta(s, &terms, &theta);
        let d = random_hermitian(rng, s.m() + 1);
        let (up, dn) = (dc_parts_theta(s, &terms, &(&theta + d.scale(h))), dc_parts_theta(s, &terms, &(&theta - d.scale(h))));
        for (fd, an) in [
            ((up.g1 - dn.g1) / (2.0 * h), trace_prod_re(&gt.d_g1, &d)),
            ((up.g2 - dn.g2) / (2.0 * h), trace_prod_re(&gt.d_g2, &d)),
        ] {
            if fd.abs().max(an.abs()) > 1e-9 {
                worst = worst.max(rel(fd, an));
            }
        }
    }
    check("gradients vs finite differences", worst <= 1e-4, format!("max relative error {worst:.2e}"))
}

fn underestimators(s: &Scenario, a: &Allocation, rng: &mut ChaCha8Rng) -> Check {
    let ec = EffectiveChannels::new(s, &a.psi);
    let (aw, ap) = random_point(rng, s, s.params.p_max_dl.min(1e-2));
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let (w, p) = random_point(rng, s, s.params.p_max_dl.min(1e-2));
        let exact = dc_parts_wp(s, &ec, &w, &p, &a.v);
        let (l1, l2) = linearized_g_wp(s, &ec, (&aw, &ap), &a.v, &w, &p);
        worst = worst.max(l1 - exact.g1).max(l2 - exact.g2);
    }
    check("linearizations underestimate", worst <= 1e-9, format!("max excess {worst:.2e}"))
}

fn mvdr(s: &Scenario, a: &Allocation, rng: &mut ChaCha8Rng) -> Check {
    let ec = EffectiveChannels::new(s, &a.psi);
    let w = a.beam_matrices();
    let mut beaten = 0;
    for j in 0..s.j_ul() {
        let Ok(v) = receive_beamformer(s, &ec, &w, &a.p, j) else {
            return check("MVDR beats random combiners", false, format!("no combiner for user {j}"));
        };
        let mut alloc = a.clone();
        alloc.v[j] = v;
        let best = ul_sinr(s, &alloc, j).unwrap_or(f64::NAN);
        for _ in 0..1000 {
            let u = gauss_vec(rng, s.n_t());
            alloc.v[j] = u.unscale(u.norm());
            if ul_sinr(s, &alloc, j).unwrap_or(0.0) > best * (1.0 + 1e-12) {
                beaten += 1;
            }
        }
    }
    check("MVDR beats random combiners", beaten == 0, format!("{beaten} random vectors did better"))
}

fn monotone(values: &[f64], increasing: bool) -> bool {
    values.windows(2).all(|p| if increasing { p[1] >= p[0] - 1e-6 } else { p[1] <= p[0] + 1e-6 })
}

/// Runs the suite on seed `seed` of the configured scenario.
pub fn run_checks<S: ConicSolver + ?Sized>(solver: &S, cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<Vec<Check>> {
    let s = generate_scenario(&cfg.scenario, seed)?;
    let start = find_feasible_start(&s, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![
        representation(&s, &start),
        gradients(&s, &start, &mut rng),
        underestimators(&s, &start, &mut rng),
        mvdr(&s, &start, &mut rng),
    ];

    let run = proposed(solver, &s, seed, &cfg.algo)?;
    let part = &run.parts[0];
    let mut ok = monotone(&part.trace.outer(), true);
    for (_, stage, vals) in part.trace.inner_runs() {
        ok &= monotone(&vals, stage == Stage::Outer);
    }
    out.push(check(
        "trace monotonicity",
        ok && run.outer_iters <= cfg.algo.max_outer_iters,
        format!("{} outer iterations", run.outer_iters),
    ));
    out.push(check(
        "beam matrices rank one",
        run.w_rank_ratio <= cfg.algo.rank_tol,
        format!("max lambda2/lambda1 {:.2e}", run.w_rank_ratio),
    ));
    out.push(check("run status", run.status == RunStatus::Ok, run.notes.join("; ")));
    let mut worst: f64 = 0.0;
    for i in 0..s.i_pu() {
        let chk = verify_robust_leakage(&s, &part.alloc, i, cfg.verify_samples, seed);
        worst = worst.max(chk.max_leak / s.params.p_tol[i]);
    }
    out.push(check("robust leakage", worst <= 1.0, format!("max leakage / tolerance {worst:.4}")));
    Ok(out)
}
