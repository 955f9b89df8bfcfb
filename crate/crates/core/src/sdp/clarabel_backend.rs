use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
    SupportedConeT::{NonnegativeConeT, PSDTriangleConeT, ZeroConeT},
};

use super::{Affine, ConicProgram, RawAnswer};

// Row of entry (i, j), i <= j, in the column-major upper-triangle vectorization.
fn svec_index(i: usize, j: usize) -> usize {
    j * (j + 1) / 2 + i
}

pub(crate) fn solve(p: &ConicProgram, objective: Option<&Affine>) -> RawAnswer {
    let n = p.num_scalars;
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

    // s = b - A x
    if !p.equalities.is_empty() {
        for e in &p.equalities {
            let r = b.len();
            b.push(-e.constant);
            for &(k, c) in &e.terms {
                rows.push(r);
                cols.push(k);
                vals.push(c);
            }
        }
        cones.push(ZeroConeT(p.equalities.len()));
    }
    for block in &p.blocks {
        let offset = b.len();
        let size = block.dim * (block.dim + 1) / 2;
        b.resize(offset + size, 0.0);
        for &(i, j, v) in &block.constant {
            let s = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
            b[offset + svec_index(i, j)] += s * v;
        }
        for &(k, i, j, v) in &block.coeffs {
            let s = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
            rows.push(offset + svec_index(i, j));
            cols.push(k);
            vals.push(-s * v);
        }
        cones.push(if block.dim == 1 { NonnegativeConeT(1) } else { PSDTriangleConeT(block.dim) });
    }
    if b.is_empty() {
        // Nothing constrains the scalars.
        let x = vec![0.0; n];
        return match objective {
            Some(o) if o.terms.iter().any(|(_, c)| *c != 0.0) => RawAnswer::Unbounded,
            _ => RawAnswer::Solved { x, almost: false },
        };
    }
    let m = b.len();
    let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
    let pmat = CscMatrix::<f64>::zeros((n, n));
    let mut q = vec![0.0; n];
    if let Some(o) = objective {
        for &(k, c) in &o.terms {
            q[k] += c;
        }
    }
    let settings = match DefaultSettingsBuilder::default()
        .verbose(std::env::var_os("SGR_VERBOSE").is_some())
        .max_iter(200)
        .direct_solve_method("faer".into())
        .tol_feas(1e-10)
        .tol_gap_abs(1e-10)
        .tol_gap_rel(1e-10)
        .build() {
        Ok(s) => s,
        Err(e) => return RawAnswer::Failed(format!("solver settings: {e}")),
    };
    let mut solver = match DefaultSolver::new(&pmat, &q, &a, &b, &cones, settings) {
        Ok(s) => s,
        Err(e) => return RawAnswer::Failed(format!("solver setup: {e}")),
    };
    solver.solve();
    let sol = &solver.solution;
    match sol.status {
        SolverStatus::Solved => RawAnswer::Solved { x: sol.x.clone(), almost: false },
        SolverStatus::AlmostSolved => RawAnswer::Solved { x: sol.x.clone(), almost: true },
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => RawAnswer::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => RawAnswer::Unbounded,
        other => RawAnswer::Failed(format!("solver stopped with status {other:?}")),
    }
}
