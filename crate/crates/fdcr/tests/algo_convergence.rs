use fdcr::ClarabelSolver;
use fdcr_core::algo::theta::rank_residual;
use fdcr_core::algo::{bcd, find_feasible_start, sca_theta, sca_wp, AlgoConfig, BeamShape, EffectiveChannels, Stage};
use fdcr_core::model::{generate_scenario, weighted_sum_rate, Allocation, Scenario, ScenarioConfig};

const SLACK: f64 = 1e-6;

fn desk(seed: u64) -> Scenario {
    generate_scenario(&ScenarioConfig::default(), seed).unwrap()
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|p| p[1] <= p[0] + SLACK * p[0].abs().max(1.0))
}

fn run_wp(s: &Scenario, a: &Allocation, cfg: &AlgoConfig) -> fdcr_core::algo::WpResult {
    let ec = EffectiveChannels::new(s, &a.psi);
    sca_wp(&ClarabelSolver, s, &ec, &a.beam_matrices(), &a.p, &a.v, &a.psi, BeamShape::Free, cfg)
}

#[test]
fn wp_stage_is_monotone_and_bounded() {
    let cfg = AlgoConfig::default();
    for seed in 0..5 {
        let s = desk(seed);
        let a = find_feasible_start(&s, seed).unwrap();
        let out = run_wp(&s, &a, &cfg);
        assert!(non_increasing(&out.trace), "seed {seed}: {:?}", out.trace);
        assert!(out.trace.len() <= cfg.max_inner_iters + 1);
        assert!(out.trace.last().unwrap() <= &out.trace[0]);
    }
}

#[test]
fn wp_stage_restarted_at_its_output_stops_at_once() {
    let cfg = AlgoConfig::default();
    let s = desk(2);
    let a = find_feasible_start(&s, 2).unwrap();
    let ec = EffectiveChannels::new(&s, &a.psi);
    let tight = AlgoConfig { eps_sca: 1e-6, max_inner_iters: 200, ..AlgoConfig::default() };
    let first = run_wp(&s, &a, &tight);
    let again = sca_wp(&ClarabelSolver, &s, &ec, &first.w, &first.p, &a.v, &a.psi, BeamShape::Free, &cfg);
    assert!(again.trace.len() <= 2, "{:?}", again.trace);
    let change = (again.trace[0] - again.trace.last().unwrap()).abs() / again.trace[0].abs();
    assert!(change <= cfg.eps_sca);
}

#[test]
fn toy_instance_improves_on_its_start() {
    let cfg = ScenarioConfig { n_t: 2, m: 2, k_dl: 1, j_ul: 1, i_pu: 1, ..ScenarioConfig::default() };
    let s = generate_scenario(&cfg, 7).unwrap();
    let a = find_feasible_start(&s, 7).unwrap();
    let out = bcd(&ClarabelSolver, &s, &a, &AlgoConfig::default());
    assert!(out.sum_rate >= weighted_sum_rate(&s, &a).unwrap());
}

/// Single antenna, one user of each kind, no PU constraint in force. The
/// problem is nonconvex in (DL power, UL power), so SCA is started from the
/// corners of the box and the best result is checked against a grid search.
#[test]
fn scalar_case_matches_a_grid_search() {
    let cfg = ScenarioConfig { n_t: 1, m: 1, k_dl: 1, j_ul: 1, i_pu: 1, p_tol: 1e6, upsilon2: 0.0, ..ScenarioConfig::default() };
    let s = generate_scenario(&cfg, 3).unwrap();
    let a = find_feasible_start(&s, 3).unwrap();
    let (p_dl, p_ul) = (s.params.p_max_dl, s.params.p_max_ul[0]);
    let with_powers = |pd: f64, pu: f64| {
        let mut b = a.clone();
        b.w[0] = a.w[0].scale((pd / a.w[0].norm_squared()).sqrt());
        b.p[0] = pu;
        b
    };
    let rate = |pd: f64, pu: f64| weighted_sum_rate(&s, &with_powers(pd, pu)).unwrap();

    let algo = AlgoConfig { eps_sca: 1e-7, max_inner_iters: 200, ..AlgoConfig::default() };
    let mut best_sca = f64::NEG_INFINITY;
    for (pd, pu) in [(p_dl, p_ul), (p_dl, 1e-4 * p_ul), (1e-4 * p_dl, p_ul), (1e-4 * p_dl, 1e-4 * p_ul)] {
        let out = run_wp(&s, &with_powers(pd, pu), &algo);
        best_sca = best_sca.max(-out.trace.last().unwrap());
    }

    // Log-spaced grid over eight decades plus the zero endpoints.
    let n = 400;
    let axis = |max: f64| {
        let mut v: Vec<f64> = (0..=n).map(|i| max * 10f64.powf(-8.0 * (1.0 - i as f64 / n as f64))).collect();
        v.push(0.0);
        v
    };
    let mut best_grid = f64::NEG_INFINITY;
    for &pd in &axis(p_dl) {
        for &pu in &axis(p_ul) {
            best_grid = best_grid.max(rate(pd, pu));
        }
    }
    assert!((best_sca - best_grid).abs() <= 1e-4 * best_grid.max(1.0), "sca {best_sca} grid {best_grid}");
}

#[test]
fn theta_stage_is_monotone_per_penalty_segment() {
    let cfg = AlgoConfig::default();
    for seed in 0..3 {
        let s = desk(seed);
        let a = find_feasible_start(&s, seed).unwrap();
        let out = sca_theta(&ClarabelSolver, &s, &a.psi, &a.beam_matrices(), &a.p, &a.v, &cfg);
        for seg in &out.segments {
            assert!(non_increasing(&seg.values), "seed {seed}: {:?}", seg.values);
        }
    }
}

#[test]
fn penalty_residual_shrinks_as_the_penalty_grows() {
    let s = desk(1);
    let a = find_feasible_start(&s, 1).unwrap();
    let mut last = f64::INFINITY;
    for chi in [10.0, 1e2, 1e3, 1e4] {
        let cfg = AlgoConfig { chi, max_chi_escalations: 0, ..AlgoConfig::default() };
        let out = sca_theta(&ClarabelSolver, &s, &a.psi, &a.beam_matrices(), &a.p, &a.v, &cfg);
        let res = rank_residual(&out.theta).max(0.0);
        assert!(res <= last + 1e-9, "chi {chi}: {res} after {last}");
        if chi == 1e3 {
            assert!(res <= 1e-4 * (s.m() + 1) as f64);
        }
        last = res;
    }
}

#[test]
fn outer_loop_is_non_decreasing() {
    let cfg = AlgoConfig::default();
    for seed in 0..3 {
        let s = desk(seed);
        let a = find_feasible_start(&s, seed).unwrap();
        let out = bcd(&ClarabelSolver, &s, &a, &cfg);
        let outer = out.trace.outer();
        assert!(outer.windows(2).all(|p| p[1] >= p[0] - SLACK), "seed {seed}: {outer:?}");
        assert!(out.outer_iters <= cfg.max_outer_iters);
        for (_, stage, vals) in out.trace.inner_runs() {
            assert!(stage == Stage::Outer || non_increasing(&vals));
        }
    }
}
