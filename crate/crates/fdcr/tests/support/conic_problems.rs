//! Conic programs with known optimal values, shared by the backend suite
//! and the acceptance run.

use fdcr_core::conic::{AffineExpr, ConicProgram, LmiBlock};
use fdcr_core::linalg::{c, hermitian_eigen, CMatrix};

pub struct Problem {
    pub name: &'static str,
    pub prog: ConicProgram,
    pub optimum: f64,
}

fn k(x: f64) -> AffineExpr {
    AffineExpr::constant(x)
}

fn sample_hermitian() -> CMatrix {
    let a = CMatrix::from_fn(3, 3, |i, j| c(1.0 + i as f64 - 0.5 * j as f64, 0.7 * (i as f64 - j as f64) + 0.1 * (i * j) as f64));
    (&a + a.adjoint()).scale(0.5)
}

fn lp_inequalities() -> Problem {
    let mut p = ConicProgram::new();
    let x = p.add_scalar();
    let y = p.add_scalar();
    p.add_objective(&(x.scaled(2.0) + y.scaled(3.0)));
    p.add_le(k(4.0), x.clone() + y.clone());
    p.add_le(k(1.0), x);
    p.add_le(k(1.0), y);
    Problem { name: "lp with inequalities", prog: p, optimum: 9.0 }
}

fn lp_equality() -> Problem {
    let mut p = ConicProgram::new();
    let x = p.add_scalar();
    let y = p.add_scalar();
    p.add_objective(&x);
    p.add_eq(x.clone() + y.clone() - k(5.0));
    p.add_le(y, k(2.0));
    Problem { name: "lp with equality", prog: p, optimum: 3.0 }
}

fn soc_min_norm() -> Problem {
    let mut p = ConicProgram::new();
    let t = p.add_scalar();
    let x = p.add_scalar();
    let y = p.add_scalar();
    p.add_objective(&t);
    p.add_soc(t, vec![x.clone(), y.clone()]);
    p.add_eq(x + y - k(2.0));
    Problem { name: "soc minimum norm on a line", prog: p, optimum: 2f64.sqrt() }
}

fn soc_disc() -> Problem {
    let mut p = ConicProgram::new();
    let x = p.add_scalar();
    let y = p.add_scalar();
    p.add_objective(&(-(x.clone() + y.clone())));
    p.add_soc(k(1.0), vec![x, y]);
    Problem { name: "soc linear objective over the unit disc", prog: p, optimum: -(2f64.sqrt()) }
}

fn sdp_lambda_max() -> Problem {
    let a = sample_hermitian();
    let mut p = ConicProgram::new();
    let t = p.add_scalar();
    p.add_objective(&t);
    p.add_psd(LmiBlock::identity_times(3, &t).minus(&LmiBlock::from_constant(a.clone())));
    Problem { name: "sdp largest eigenvalue", prog: p, optimum: hermitian_eigen(&a).0[0] }
}

fn sdp_density() -> Problem {
    let a = sample_hermitian();
    let mut p = ConicProgram::new();
    let h = p.add_hermitian(3);
    p.add_objective(&p.trace_with(h, &a));
    p.add_eq(p.trace_with(h, &CMatrix::identity(3, 3)) - k(1.0));
    p.add_psd(p.hermitian(h));
    Problem { name: "complex sdp over density matrices", prog: p, optimum: hermitian_eigen(&a).0[2] }
}

fn sdp_fixed_off_diagonal() -> Problem {
    let mut p = ConicProgram::new();
    let h = p.add_hermitian(2);
    p.add_objective(&p.trace_with(h, &CMatrix::identity(2, 2)));
    let re = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
    let im = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(0.0, 0.0)]);
    p.add_eq(p.trace_with(h, &re) - k(1.0));
    p.add_eq(p.trace_with(h, &im) - k(1.0));
    p.add_psd(p.hermitian(h));
    // |X_01| = 1/sqrt(2); the trace is smallest at X_00 = X_11 = |X_01|.
    Problem { name: "complex sdp minimum trace", prog: p, optimum: 2f64.sqrt() }
}

fn schur() -> Problem {
    let mut p = ConicProgram::new();
    let t = p.add_scalar();
    let y = p.add_scalar();
    p.add_objective(&t);
    let off = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
    let lmi = LmiBlock::scalar_at(2, &t, &[0]).plus(&LmiBlock::scalar_at(2, &y, &[1])).plus(&LmiBlock::from_constant(off));
    p.add_psd(lmi);
    p.add_le(y, k(2.0));
    Problem { name: "schur complement lmi", prog: p, optimum: 0.5 }
}

fn exp_epigraph() -> Problem {
    let mut p = ConicProgram::new();
    let x = p.add_scalar();
    let z = p.add_scalar();
    p.add_objective(&z);
    p.add_exp(x.clone(), k(1.0), z);
    p.add_le(k(1.0), x);
    Problem { name: "exponential cone epigraph", prog: p, optimum: std::f64::consts::E }
}

fn water_filling() -> Problem {
    let noise = [0.5, 1.0, 2.0];
    let mut p = ConicProgram::new();
    let xs: Vec<AffineExpr> = noise.iter().map(|_| p.add_scalar()).collect();
    let mut total = k(0.0);
    for (x, n) in xs.iter().zip(noise) {
        p.add_log_term(1.0, k(1.0) + x.scaled(1.0 / n));
        p.add_nonneg(x.clone());
        total = total + x.clone();
    }
    p.add_eq(total - k(2.0));
    // Water level 1.75; the third channel stays off.
    let optimum = -((1.75f64 / 0.5).log2() + 1.75f64.log2());
    Problem { name: "water filling through log terms", prog: p, optimum }
}

pub fn problems() -> Vec<Problem> {
    vec![
        lp_inequalities(),
        lp_equality(),
        soc_min_norm(),
        soc_disc(),
        sdp_lambda_max(),
        sdp_density(),
        sdp_fixed_off_diagonal(),
        schur(),
        exp_epigraph(),
        water_filling(),
    ]
}
