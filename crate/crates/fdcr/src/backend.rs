//! Clarabel-backed implementation of the conic solve contract.

use std::panic::{catch_unwind, AssertUnwindSafe};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use fdcr_core::conic::{
    lower, ConicProgram, ConicSolver, RealCone, RealConicProgram, Residuals, SolveResult, SolveSettings, SolveStatus,
};

/// Interior-point solver for the real standard form produced by
/// [`fdcr_core::conic::lower`]. Single-threaded so results are
/// reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelSolver;

fn failure(status: SolveStatus, message: impl Into<String>) -> SolveResult {
    SolveResult {
        status,
        x: Vec::new(),
        objective: f64::NAN,
        dual_objective: f64::NAN,
        residuals: Residuals::default(),
        iterations: 0,
        message: message.into(),
    }
}

fn cones(real: &RealConicProgram) -> Vec<SupportedConeT<f64>> {
    real.cones
        .iter()
        .map(|c| match *c {
            RealCone::Zero(n) => SupportedConeT::ZeroConeT(n),
            RealCone::NonNeg(n) => SupportedConeT::NonnegativeConeT(n),
            RealCone::SecondOrder(n) => SupportedConeT::SecondOrderConeT(n),
            RealCone::Psd(d) => SupportedConeT::PSDTriangleConeT(d),
            RealCone::Exp => SupportedConeT::ExponentialConeT(),
        })
        .collect()
}

fn map_status(s: SolverStatus) -> SolveStatus {
    match s {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::IterationLimit,
        _ => SolveStatus::NumericalFailure,
    }
}

const STATIC_REGULARIZATION: [f64; 3] = [1e-8, 1e-7, 1e-6];

/// Solves an already lowered program.
pub fn solve_real(real: &RealConicProgram, settings: &SolveSettings) -> SolveResult {
    let n = real.n;
    let m = real.n_rows();
    let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    for &(r, c, v) in &real.a {
        rows.push(r);
        cols.push(c);
        vals.push(v);
    }
    let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
    let p = CscMatrix::zeros((n, n));
    let cones = cones(real);
    // Stalled solves on badly scaled KKT systems usually recover with a
    // larger static regularization, so retry before reporting failure.
    let mut sol = None;
    for reg in STATIC_REGULARIZATION {
        let cfg = match DefaultSettingsBuilder::default()
            .max_iter(settings.max_iters)
            .tol_gap_rel(settings.tol_gap)
            .tol_gap_abs(settings.tol_gap)
            .tol_feas(settings.tol_feas)
            .verbose(settings.verbose)
            .max_threads(1)
            .presolve_enable(false)
            .static_regularization_constant(reg)
            .build()
        {
            Ok(c) => c,
            Err(e) => return failure(SolveStatus::NumericalFailure, format!("settings: {e}")),
        };
        let run = catch_unwind(AssertUnwindSafe(|| {
            let mut solver = DefaultSolver::new(&p, &real.q, &a, &real.b, &cones, cfg)
                .map_err(|e| format!("setup: {e}"))?;
            solver.solve();
            Ok::<_, String>(solver.solution)
        }));
        let attempt = match run {
            Ok(Ok(sol)) => sol,
            Ok(Err(msg)) => return failure(SolveStatus::NumericalFailure, msg),
            Err(_) => return failure(SolveStatus::NumericalFailure, "solver panicked"),
        };
        let done = !matches!(map_status(attempt.status), SolveStatus::NumericalFailure | SolveStatus::IterationLimit)
            || attempt.status == SolverStatus::AlmostSolved;
        let better = sol.as_ref().map_or(true, |s: &clarabel::solver::DefaultSolution<f64>| {
            attempt.r_prim.max(attempt.r_dual) < s.r_prim.max(s.r_dual)
        });
        if better {
            sol = Some(attempt);
        }
        if done {
            break;
        }
        log::debug!("clarabel stalled at regularization {reg:e}, retrying");
    }
    let sol = sol.expect("at least one attempt");
    let status = map_status(sol.status);
    let objective = if status == SolveStatus::Optimal || status == SolveStatus::NumericalFailure {
        sol.obj_val + real.q0
    } else {
        f64::NAN
    };
    let dual_objective = sol.obj_val_dual + real.q0;
    SolveResult {
        status,
        objective,
        dual_objective,
        residuals: Residuals {
            primal: sol.r_prim,
            dual: sol.r_dual,
            gap: (objective - dual_objective).abs() / objective.abs().max(1.0),
        },
        iterations: sol.iterations,
        message: format!("{:?}", sol.status),
        x: sol.x,
    }
}

impl ConicSolver for ClarabelSolver {
    fn solve(&self, prog: &ConicProgram, settings: &SolveSettings) -> SolveResult {
        match lower(prog) {
            Ok(real) => solve_real(&real, settings),
            Err(e) => failure(SolveStatus::NumericalFailure, format!("lowering: {e}")),
        }
    }
}
