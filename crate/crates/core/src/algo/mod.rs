//! Alternating optimization: SCA over beams and uplink powers, MVDR
//! combining, penalized SCA over the IRS phases, and the outer loop.

mod channels;
mod receive;
pub mod theta;
pub mod wp;

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods take over when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conic::{ConicSolver, SolveSettings};
use crate::error::invalid;
use crate::linalg::{CVector, ONE};
use crate::model::{weighted_sum_rate, Allocation, Scenario};
use crate::robust::safe_leakage_bound;
use crate::Result;

pub use channels::EffectiveChannels;
pub use receive::{interference_covariance, receive_beamformer};
pub use theta::{lift_phases, recover_psi, sca_theta, ThetaData, ThetaResult};
pub use wp::{extract_rank_one, sca_wp, BeamShape, RankOne, WpResult};

/// Clarabel-style solvers stop with a numerical error when they stall
/// just short of the requested accuracy. Such a result counts as a clean
/// solve when its residuals are still small.
pub(crate) fn near_optimal(res: &crate::conic::SolveResult) -> bool {
    res.status == crate::conic::SolveStatus::Optimal
        || (res.residuals.primal <= 1e-5 && res.residuals.dual <= 1e-5 && res.residuals.gap <= 1e-3)
}

/// Looser test for a solve that failed to improve the iterate. The iterate
/// is kept either way, so this only decides whether the stall is reported.
pub(crate) fn stalled_near_optimum(res: &crate::conic::SolveResult) -> bool {
    near_optimal(res) || (res.residuals.primal <= 1e-4 && res.residuals.dual <= 1e-4 && res.residuals.gap <= 1e-2)
}

/// Solves `prog`; a solve that stalls short of near-optimality is retried
/// once with tolerances relaxed by 10.
pub(crate) fn solve_with_fallback<S: ConicSolver + ?Sized>(
    solver: &S,
    prog: &crate::conic::ConicProgram,
    settings: &SolveSettings,
) -> crate::conic::SolveResult {
    let first = solver.solve(prog, settings);
    if near_optimal(&first) {
        return first;
    }
    let relaxed = SolveSettings { tol_gap: settings.tol_gap * 10.0, tol_feas: settings.tol_feas * 10.0, ..*settings };
    let second = solver.solve(prog, &relaxed);
    log::debug!("solve {:?} retried with relaxed tolerances: {:?}", first.status, second.status);
    if near_optimal(&second) {
        second
    } else {
        first
    }
}

/// Share of the strongest beam's power below which a beam counts as off.
const INACTIVE_BEAM: f64 = 1e-6;
/// Share of the DL budget below which a beam counts as off.
const SILENT_BEAM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgoConfig {
    pub eps_sca: f64,
    pub eps_bcd: f64,
    pub chi: f64,
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
    pub rank_tol: f64,
    /// How many times the phase penalty may be raised tenfold.
    pub max_chi_escalations: usize,
    /// Independent feasible starts per run; the best outcome is kept.
    pub starts: usize,
    pub solver: SolveSettings,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        AlgoConfig {
            eps_sca: 0.01,
            eps_bcd: 0.01,
            chi: 1e3,
            max_inner_iters: 20,
            max_outer_iters: 30,
            rank_tol: 1e-6,
            max_chi_escalations: 2,
            starts: 3,
            solver: SolveSettings::tight(),
        }
    }
}

impl AlgoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.eps_sca) || !unit(self.eps_bcd) || !unit(self.rank_tol) {
            return Err(invalid("tolerances must lie in (0, 1)"));
        }
        if !(self.chi > 0.0 && self.chi.is_finite()) {
            return Err(invalid("penalty factor must be positive"));
        }
        if self.max_inner_iters == 0 || self.max_outer_iters == 0 || self.starts == 0 {
            return Err(invalid("iteration limits and start count must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    /// Beamforming/power SCA; objective is minus the weighted sum rate.
    Wp,
    /// Phase SCA with the given number of penalty escalations; objective
    /// includes the rank penalty.
    Theta(u8),
    /// Outer loop; objective is the weighted sum rate.
    Outer,
}

impl Stage {
    pub fn label(self) -> &'static str {
        match self {
            Stage::Wp => "wp",
            Stage::Theta(0) => "theta",
            Stage::Theta(1) => "theta_x10",
            Stage::Theta(_) => "theta_x100",
            Stage::Outer => "outer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub outer_iter: usize,
    pub stage: Stage,
    pub inner_iter: usize,
    pub objective: f64,
    pub rank_ratio_max: Option<f64>,
    pub max_safe_leakage: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
}

impl ConvergenceTrace {
    pub(crate) fn push(&mut self, outer_iter: usize, stage: Stage, inner_iter: usize, objective: f64) {
        self.rows.push(TraceRow {
            outer_iter,
            stage,
            inner_iter,
            objective,
            rank_ratio_max: None,
            max_safe_leakage: None,
        });
    }

    /// Objective values of the outer loop.
    pub fn outer(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.stage == Stage::Outer).map(|r| r.objective).collect()
    }

    /// Contiguous inner runs `(outer_iter, stage, values)`.
    pub fn inner_runs(&self) -> Vec<(usize, Stage, Vec<f64>)> {
        let mut out: Vec<(usize, Stage, Vec<f64>)> = Vec::new();
        for r in self.rows.iter().filter(|r| r.stage != Stage::Outer) {
            match out.last_mut() {
                Some((o, st, vals)) if *o == r.outer_iter && *st == r.stage && r.inner_iter > 0 => {
                    vals.push(r.objective)
                }
                _ => out.push((r.outer_iter, r.stage, alloc::vec![r.objective])),
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Ok,
    Degraded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcdOutcome {
    pub alloc: Allocation,
    pub trace: ConvergenceTrace,
    pub status: RunStatus,
    pub outer_iters: usize,
    /// Largest `lambda_2 / lambda_1` over the beam matrices of the last
    /// beamforming stage.
    pub w_rank_ratio: f64,
    /// Rank ratio of the last lifted phase matrix (0 without a phase stage).
    pub theta_rank_ratio: f64,
    pub sum_rate: f64,
    pub notes: Vec<String>,
}

fn all_weights_zero(s: &Scenario) -> bool {
    s.params.weights_dl.iter().chain(&s.params.weights_ul).all(|&w| w == 0.0)
}

fn max_bound(s: &Scenario, a: &Allocation) -> f64 {
    (0..s.i_pu()).map(|i| safe_leakage_bound(s, a, i)).fold(0.0, f64::max)
}

/// Scales an allocation down so that C1, C2 and every safe bound hold.
/// Returns the common factor applied for the leakage bounds.
pub fn enforce_feasibility(s: &Scenario, a: &mut Allocation) -> f64 {
    for (p, pm) in a.p.iter_mut().zip(&s.params.p_max_ul) {
        *p = p.clamp(0.0, *pm);
    }
    let total = a.total_dl_power();
    if total > s.params.p_max_dl {
        let f = (s.params.p_max_dl / total).sqrt();
        for w in &mut a.w {
            *w = w.scale(f);
        }
    }
    let mut factor: f64 = 1.0;
    for i in 0..s.i_pu() {
        let b = safe_leakage_bound(s, a, i);
        if b > s.params.p_tol[i] {
            factor = factor.min(s.params.p_tol[i] / b * (1.0 - 1e-12));
        }
    }
    if factor < 1.0 {
        let f = factor.sqrt();
        for w in &mut a.w {
            *w = w.scale(f);
        }
        for p in &mut a.p {
            *p *= factor;
        }
    }
    factor
}

/// Replaces every combiner by the MVDR solution for the current beams,
/// powers and phases.
pub fn update_combiners(s: &Scenario, a: &mut Allocation) -> Result<()> {
    let ec = EffectiveChannels::new(s, &a.psi);
    let w = a.beam_matrices();
    for j in 0..s.j_ul() {
        a.v[j] = receive_beamformer(s, &ec, &w, &a.p, j)?;
    }
    Ok(())
}

/// Random phases, maximum-ratio beams with an even split of the DL budget,
/// full uplink power, all scaled by one common factor until every safe
/// bound holds (the bound is homogeneous, so the factor is exact), then
/// MVDR combiners.
pub fn find_feasible_start(s: &Scenario, seed: u64) -> Result<Allocation> {
    start_from(s, seed, s.params.p_max_dl)
}

/// [`find_feasible_start`] with the total DL starting power set to `ratio`
/// times the total UL limit, capped by the DL budget. Because only this
/// ratio survives the common scaling, the start does not depend on the DL
/// budget unless the cap is hit.
pub fn find_start_with_ratio(s: &Scenario, seed: u64, ratio: f64) -> Result<Allocation> {
    let ul_total: f64 = s.params.p_max_ul.iter().sum();
    let dl_total = if ul_total > 0.0 { (ratio * ul_total).min(s.params.p_max_dl) } else { s.params.p_max_dl };
    start_from(s, seed, dl_total)
}

fn start_from(s: &Scenario, seed: u64, dl_total: f64) -> Result<Allocation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi: Vec<f64> = (0..s.m())
        .map(|_| rng.random_range(-core::f64::consts::PI..core::f64::consts::PI))
        .collect();
    let ec = EffectiveChannels::new(s, &psi);
    let k = s.k_dl();
    let per_user = if k > 0 { dl_total / k as f64 } else { 0.0 };
    let w = ec
        .g_hat
        .iter()
        .map(|g| {
            let norm = g.norm();
            if norm > 0.0 {
                g.scale(per_user.sqrt() / norm)
            } else {
                let mut e = CVector::zeros(s.n_t());
                e[0] = ONE;
                e.scale(per_user.sqrt())
            }
        })
        .collect();
    let mut a = Allocation::zeros(s);
    a.w = w;
    a.p = s.params.p_max_ul.clone();
    a.psi = psi;
    enforce_feasibility(s, &mut a);
    update_combiners(s, &mut a)?;
    Ok(a)
}

/// Seed of the `r`-th start of a run; the first start uses the run seed.
pub fn start_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add((r as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// DL-to-UL power ratios of the successive starts, cycled.
const START_RATIOS: [f64; 3] = [1.0, 1e-1, 1e-2];

/// Runs the outer loop from `cfg.starts` seeded feasible starts, which
/// differ in phases and in the DL/UL power balance, and keeps the one with
/// the highest sum rate. Every outcome is feasible, including degraded
/// ones, so the status does not enter the choice.
pub fn bcd_multistart<S: ConicSolver + ?Sized>(
    solver: &S,
    s: &Scenario,
    seed: u64,
    cfg: &AlgoConfig,
    optimize_phases: bool,
) -> Result<BcdOutcome> {
    let mut best: Option<BcdOutcome> = None;
    for r in 0..cfg.starts.max(1) {
        let ratio = START_RATIOS[r % START_RATIOS.len()];
        let start = find_start_with_ratio(s, start_seed(seed, r), ratio)?;
        let out = bcd_with(solver, s, &start, cfg, optimize_phases);
        if best.as_ref().map_or(true, |b| out.sum_rate > b.sum_rate) {
            best = Some(out);
        }
    }
    Ok(best.expect("at least one start"))
}

/// The outer loop with the phase stage enabled.
pub fn bcd<S: ConicSolver + ?Sized>(solver: &S, s: &Scenario, start: &Allocation, cfg: &AlgoConfig) -> BcdOutcome {
    bcd_with(solver, s, start, cfg, true)
}

/// Alternates the beamforming/power stage, MVDR combining and (optionally)
/// the phase stage until the weighted sum rate settles. Each stage's result
/// is kept only if the sum rate does not drop, so the outer trace is
/// non-decreasing.
pub fn bcd_with<S: ConicSolver + ?Sized>(
    solver: &S,
    s: &Scenario,
    start: &Allocation,
    cfg: &AlgoConfig,
    optimize_phases: bool,
) -> BcdOutcome {
    let mut out = BcdOutcome {
        alloc: start.clone(),
        trace: ConvergenceTrace::default(),
        status: RunStatus::Ok,
        outer_iters: 0,
        w_rank_ratio: 0.0,
        theta_rank_ratio: 0.0,
        sum_rate: 0.0,
        notes: Vec::new(),
    };
    let rate = |a: &Allocation| weighted_sum_rate(s, a);
    if all_weights_zero(s) {
        out.trace.push(0, Stage::Outer, 0, 0.0);
        return out;
    }
    let mut alloc = start.clone();
    let mut f = match rate(&alloc) {
        Ok(f) => f,
        Err(e) => {
            out.status = RunStatus::Degraded;
            out.notes.push(alloc::format!("start: {e}"));
            return out;
        }
    };
    out.trace.push(0, Stage::Outer, 0, f);
    if let Some(r) = out.trace.rows.last_mut() {
        r.max_safe_leakage = Some(max_bound(s, &alloc));
    }
    let mut degraded = false;
    for it in 1..=cfg.max_outer_iters {
        out.outer_iters = it;
        let f_start = f;

        let ec = EffectiveChannels::new(s, &alloc.psi);
        let wp = sca_wp(solver, s, &ec, &alloc.beam_matrices(), &alloc.p, &alloc.v, &alloc.psi, BeamShape::Free, cfg);
        for (n, v) in wp.trace.iter().enumerate() {
            out.trace.push(it, Stage::Wp, n, *v);
        }
        degraded |= wp.degraded;
        out.notes.extend(wp.notes.iter().cloned());
        let mut ratio: f64 = 0.0;
        let mut cand = alloc.clone();
        let lead: Vec<RankOne> = wp.w.iter().map(|wk| extract_rank_one(wk, cfg.rank_tol)).collect();
        // Beams carrying a negligible share of the strongest beam's power are
        // solver noise on a switched-off user; their ratio says nothing.
        let strongest = lead.iter().map(|r| r.w.norm_squared()).fold(0.0, f64::max);
        let floor = (INACTIVE_BEAM * strongest).max(SILENT_BEAM * s.params.p_max_dl);
        cand.w = lead
            .into_iter()
            .map(|r| {
                if r.w.norm_squared() <= floor {
                    CVector::zeros(r.w.len())
                } else {
                    ratio = ratio.max(r.ratio);
                    r.w
                }
            })
            .collect();
        cand.p = wp.p.clone();
        out.w_rank_ratio = ratio;
        if let Some(r) = out.trace.rows.last_mut() {
            r.rank_ratio_max = Some(ratio);
        }
        enforce_feasibility(s, &mut cand);
        match update_combiners(s, &mut cand).and_then(|_| rate(&cand)) {
            Ok(fc) if fc >= f => {
                alloc = cand;
                f = fc;
            }
            Ok(_) => {}
            Err(e) => {
                degraded = true;
                out.notes.push(alloc::format!("combiner update: {e}"));
            }
        }

        if optimize_phases && s.m() > 0 {
            let th = sca_theta(solver, s, &alloc.psi, &alloc.beam_matrices(), &alloc.p, &alloc.v, cfg);
            for (esc, seg) in th.segments.iter().enumerate() {
                for (n, v) in seg.values.iter().enumerate() {
                    out.trace.push(it, Stage::Theta(esc as u8), n, *v);
                }
            }
            if let Some(r) = out.trace.rows.last_mut() {
                r.rank_ratio_max = Some(th.ratio);
            }
            out.theta_rank_ratio = th.ratio;
            degraded |= th.degraded;
            out.notes.extend(th.notes.iter().cloned());
            let mut cand = alloc.clone();
            cand.psi = th.psi.clone();
            enforce_feasibility(s, &mut cand);
            match update_combiners(s, &mut cand).and_then(|_| rate(&cand)) {
                Ok(fc) if fc >= f => {
                    alloc = cand;
                    f = fc;
                }
                Ok(_) => {}
                Err(e) => {
                    degraded = true;
                    out.notes.push(alloc::format!("combiner update: {e}"));
                }
            }
        }

        out.trace.push(it, Stage::Outer, 0, f);
        if let Some(r) = out.trace.rows.last_mut() {
            r.max_safe_leakage = Some(max_bound(s, &alloc));
        }
        if wp::relative_change(f_start, f) <= cfg.eps_bcd {
            break;
        }
    }
    out.sum_rate = f;
    out.alloc = alloc;
    if degraded {
        out.status = RunStatus::Degraded;
    }
    out
}
