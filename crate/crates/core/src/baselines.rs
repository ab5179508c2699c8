//! Reference schemes the proposed allocator is compared against, plus the
//! scheme dispatcher used by the experiment runner.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algo::{
    bcd_multistart, enforce_feasibility, sca_wp, AlgoConfig, BcdOutcome, BeamShape,
    ConvergenceTrace, EffectiveChannels, RunStatus, Stage,
};
use crate::conic::ConicSolver;
use crate::error::invalid;
use crate::linalg::{hstack, null_projector, CVector};
use crate::model::{dl_rates, ul_rates, weighted_sum_rate, Allocation, Scenario};
use crate::Result;

#[allow(unused_imports)] // inherent float methods take over when std is linked
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    ZfRandomPhase,
    NoIrs,
    HalfDuplex,
    NonRobust,
}

/// Every scheme the runner knows. The declaration order is the canonical
/// output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    Baseline1,
    Baseline2,
    Baseline3,
    NonRobust,
}

impl Scheme {
    pub const ALL: [Scheme; 5] =
        [Scheme::Proposed, Scheme::Baseline1, Scheme::Baseline2, Scheme::Baseline3, Scheme::NonRobust];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Baseline1 => "baseline1",
            Scheme::Baseline2 => "baseline2",
            Scheme::Baseline3 => "baseline3",
            Scheme::NonRobust => "non_robust",
        }
    }

    pub fn from_name(name: &str) -> Option<Scheme> {
        Scheme::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Whether the scheme is designed against the uncertainty sets.
    pub fn is_robust(self) -> bool {
        self != Scheme::NonRobust
    }

    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            Scheme::Proposed => None,
            Scheme::Baseline1 => Some(BaselineKind::ZfRandomPhase),
            Scheme::Baseline2 => Some(BaselineKind::NoIrs),
            Scheme::Baseline3 => Some(BaselineKind::HalfDuplex),
            Scheme::NonRobust => Some(BaselineKind::NonRobust),
        }
    }
}

impl From<BaselineKind> for Scheme {
    fn from(k: BaselineKind) -> Self {
        match k {
            BaselineKind::ZfRandomPhase => Scheme::Baseline1,
            BaselineKind::NoIrs => Scheme::Baseline2,
            BaselineKind::HalfDuplex => Scheme::Baseline3,
            BaselineKind::NonRobust => Scheme::NonRobust,
        }
    }
}

/// One optimized allocation together with the scenario it lives in. The
/// leakage check must be run against `scenario`: e.g. the no-IRS scheme
/// has no reflected paths, and the half-duplex slots see only their own
/// users.
#[derive(Debug, Clone)]
pub struct SchemePart {
    pub scenario: Scenario,
    pub alloc: Allocation,
    pub trace: ConvergenceTrace,
}

#[derive(Debug, Clone)]
pub struct SchemeOutcome {
    pub scheme: Scheme,
    pub parts: Vec<SchemePart>,
    /// Weighted sum rate in bits/s/Hz (halved slots for half duplex).
    pub sum_rate: f64,
    pub dl_rates: Vec<f64>,
    pub ul_rates: Vec<f64>,
    pub outer_iters: usize,
    pub w_rank_ratio: f64,
    pub status: RunStatus,
    pub notes: Vec<String>,
}

fn rates(s: &Scenario, a: &Allocation) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((dl_rates(s, a), if s.j_ul() > 0 { ul_rates(s, a)? } else { Vec::new() }))
}

fn from_bcd(scheme: Scheme, scenario: Scenario, out: BcdOutcome, eval: &Scenario) -> SchemeOutcome {
    let mut notes = out.notes;
    let mut status = out.status;
    let (dl, ul) = rates(eval, &out.alloc).unwrap_or_else(|e| {
        status = RunStatus::Degraded;
        notes.push(alloc::format!("rates: {e}"));
        (Vec::new(), Vec::new())
    });
    SchemeOutcome {
        scheme,
        sum_rate: out.sum_rate,
        dl_rates: dl,
        ul_rates: ul,
        outer_iters: out.outer_iters,
        w_rank_ratio: out.w_rank_ratio,
        status,
        notes,
        parts: alloc::vec![SchemePart { scenario, alloc: out.alloc, trace: out.trace }],
    }
}

/// Runs the proposed allocator from the seeded feasible starts.
pub fn proposed<S: ConicSolver + ?Sized>(solver: &S, s: &Scenario, seed: u64, cfg: &AlgoConfig) -> Result<SchemeOutcome> {
    let out = bcd_multistart(solver, s, seed, cfg, true)?;
    Ok(from_bcd(Scheme::Proposed, s.clone(), out, s))
}

/// Zero-forcing directions for the DL beams (each orthogonal to the other
/// users' effective channels) and the UL combiners (rows of the
/// pseudo-inverse of the stacked effective UL channels), unit norm.
pub fn zf_directions(s: &Scenario, ec: &EffectiveChannels) -> Result<(Vec<CVector>, Vec<CVector>)> {
    let n = s.n_t();
    let (k_dl, j_ul) = (s.k_dl(), s.j_ul());
    if k_dl > n || j_ul > n {
        return Err(invalid("zero forcing needs at least as many antennas as users"));
    }
    let mut dl = Vec::with_capacity(k_dl);
    for k in 0..k_dl {
        let others: Vec<CVector> = (0..k_dl).filter(|&r| r != k).map(|r| ec.g_hat[r].clone()).collect();
        let proj = null_projector(&hstack(&others, n))
            .ok_or_else(|| invalid("downlink channels are linearly dependent"))?;
        dl.push(unit(&proj * &ec.g_hat[k], "downlink channel lies in the other users' span")?);
    }
    let mut ul = Vec::with_capacity(j_ul);
    if j_ul > 0 {
        let h = hstack(&ec.h_hat, n);
        let gram_inv = (h.adjoint() * &h)
            .try_inverse()
            .ok_or_else(|| invalid("uplink channels are linearly dependent"))?;
        let pinv_t = &h * gram_inv;
        for j in 0..j_ul {
            ul.push(unit(pinv_t.column(j).into_owned(), "degenerate uplink zero-forcing combiner")?);
        }
    }
    Ok((dl, ul))
}

fn unit(x: CVector, what: &str) -> Result<CVector> {
    let norm = x.norm();
    if norm > 0.0 && norm.is_finite() {
        Ok(x.unscale(norm))
    } else {
        Err(invalid(what))
    }
}

/// Baseline 1: random fixed phases, zero-forcing beams and combiners, with
/// only the per-beam DL powers and the UL powers optimized by SCA.
pub fn baseline1_zf<S: ConicSolver + ?Sized>(solver: &S, s: &Scenario, seed: u64, cfg: &AlgoConfig) -> Result<SchemeOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi: Vec<f64> = (0..s.m())
        .map(|_| rng.random_range(-core::f64::consts::PI..core::f64::consts::PI))
        .collect();
    let ec = EffectiveChannels::new(s, &psi);
    let (dirs, combiners) = zf_directions(s, &ec)?;
    let per_user = if s.k_dl() > 0 { s.params.p_max_dl / s.k_dl() as f64 } else { 0.0 };
    let mut start = Allocation::zeros(s);
    start.w = dirs.iter().map(|d| d.scale(per_user.sqrt())).collect();
    start.p = s.params.p_max_ul.clone();
    start.v = combiners;
    start.psi = psi;
    enforce_feasibility(s, &mut start);

    let res = sca_wp(solver, s, &ec, &start.beam_matrices(), &start.p, &start.v, &start.psi, BeamShape::Fixed(&dirs), cfg);
    let mut a = start;
    a.w = dirs.iter().zip(&res.w).map(|(d, wk)| d.scale(crate::linalg::trace_re(wk).max(0.0).sqrt())).collect();
    a.p = res.p.clone();
    enforce_feasibility(s, &mut a);

    let mut trace = ConvergenceTrace::default();
    for (n, v) in res.trace.iter().enumerate() {
        trace.push(1, Stage::Wp, n, *v);
    }
    let rate = weighted_sum_rate(s, &a)?;
    trace.push(1, Stage::Outer, 0, rate);
    let (dl, ul) = rates(s, &a)?;
    Ok(SchemeOutcome {
        scheme: Scheme::Baseline1,
        sum_rate: rate,
        dl_rates: dl,
        ul_rates: ul,
        outer_iters: 1,
        w_rank_ratio: 0.0,
        status: if res.degraded { RunStatus::Degraded } else { RunStatus::Ok },
        notes: res.notes,
        parts: alloc::vec![SchemePart { scenario: s.clone(), alloc: a, trace }],
    })
}

/// Baseline 2: the same outer loop on the scenario without reflected paths
/// and without the phase stage.
pub fn baseline2_no_irs<S: ConicSolver + ?Sized>(solver: &S, s: &Scenario, seed: u64, cfg: &AlgoConfig) -> Result<SchemeOutcome> {
    let bare = s.without_irs();
    let out = bcd_multistart(solver, &bare, seed, cfg, false)?;
    Ok(from_bcd(Scheme::Baseline2, bare.clone(), out, &bare))
}

/// Baseline 3: DL and UL served in two equal time slots, each optimized on
/// its own restriction with its own phases.
pub fn baseline3_half_duplex<S: ConicSolver + ?Sized>(
    solver: &S,
    s: &Scenario,
    seed: u64,
    cfg: &AlgoConfig,
) -> Result<SchemeOutcome> {
    let mut parts = Vec::with_capacity(2);
    let mut notes = Vec::new();
    let mut status = RunStatus::Ok;
    let (mut dl, mut ul) = (Vec::new(), Vec::new());
    let (mut sum, mut outer, mut ratio) = (0.0, 0, 0.0f64);
    for slot in [s.dl_only(), s.ul_only()] {
        let out = bcd_multistart(solver, &slot, seed, cfg, true)?;
        let (d, u) = rates(&slot, &out.alloc)?;
        dl.extend(d.into_iter().map(|r| 0.5 * r));
        ul.extend(u.into_iter().map(|r| 0.5 * r));
        sum += 0.5 * out.sum_rate;
        outer = outer.max(out.outer_iters);
        ratio = ratio.max(out.w_rank_ratio);
        if out.status == RunStatus::Degraded {
            status = RunStatus::Degraded;
        }
        notes.extend(out.notes);
        parts.push(SchemePart { scenario: slot, alloc: out.alloc, trace: out.trace });
    }
    Ok(SchemeOutcome {
        scheme: Scheme::Baseline3,
        parts,
        sum_rate: sum,
        dl_rates: dl,
        ul_rates: ul,
        outer_iters: outer,
        w_rank_ratio: ratio,
        status,
        notes,
    })
}

/// The proposed pipeline designed as if the estimates were exact. The
/// outcome is checked against the original uncertainty sets.
pub fn non_robust<S: ConicSolver + ?Sized>(solver: &S, s: &Scenario, seed: u64, cfg: &AlgoConfig) -> Result<SchemeOutcome> {
    let exact = s.nominal();
    let out = bcd_multistart(solver, &exact, seed, cfg, true)?;
    Ok(from_bcd(Scheme::NonRobust, s.clone(), out, s))
}

pub fn run_scheme<S: ConicSolver + ?Sized>(
    solver: &S,
    s: &Scenario,
    scheme: Scheme,
    seed: u64,
    cfg: &AlgoConfig,
) -> Result<SchemeOutcome> {
    match scheme {
        Scheme::Proposed => proposed(solver, s, seed, cfg),
        Scheme::Baseline1 => baseline1_zf(solver, s, seed, cfg),
        Scheme::Baseline2 => baseline2_no_irs(solver, s, seed, cfg),
        Scheme::Baseline3 => baseline3_half_duplex(solver, s, seed, cfg),
        Scheme::NonRobust => non_robust(solver, s, seed, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_scenario, ScenarioConfig};

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(Scheme::from_name(s.name()), Some(s));
        }
        assert_eq!(Scheme::from_name("nope"), None);
        for k in [BaselineKind::ZfRandomPhase, BaselineKind::NoIrs, BaselineKind::HalfDuplex, BaselineKind::NonRobust] {
            assert_eq!(Scheme::from(k).baseline(), Some(k));
        }
    }

    #[test]
    fn zf_nulls_inter_user_terms() {
        let s = generate_scenario(&ScenarioConfig::default(), 3).unwrap();
        let ec = EffectiveChannels::new(&s, &[0.4, -1.0, 2.0, 0.1]);
        let (dl, ul) = zf_directions(&s, &ec).unwrap();
        for k in 0..s.k_dl() {
            for (r, w) in dl.iter().enumerate() {
                if r != k {
                    let leak = ec.g_hat[k].dotc(w).norm() / ec.g_hat[k].norm();
                    assert!(leak < 1e-10, "{leak}");
                }
            }
        }
        for j in 0..s.j_ul() {
            for t in 0..s.j_ul() {
                if t != j {
                    let leak = ul[j].dotc(&ec.h_hat[t]).norm() / ec.h_hat[t].norm();
                    assert!(leak < 1e-10, "{leak}");
                }
            }
        }
    }

    #[test]
    fn zf_single_user_is_maximum_ratio() {
        let mut cfg = ScenarioConfig::default();
        cfg.k_dl = 1;
        let s = generate_scenario(&cfg, 1).unwrap();
        let ec = EffectiveChannels::new(&s, &[0.0; 4]);
        let (dl, _) = zf_directions(&s, &ec).unwrap();
        let mrt = ec.g_hat[0].unscale(ec.g_hat[0].norm());
        assert!((&dl[0] - mrt).norm() < 1e-12);
    }

    #[test]
    fn zf_rejects_too_many_users() {
        let mut cfg = ScenarioConfig::default();
        cfg.k_dl = 5;
        let s = generate_scenario(&cfg, 1).unwrap();
        let ec = EffectiveChannels::new(&s, &[0.0; 4]);
        assert!(zf_directions(&s, &ec).is_err());
    }
}
