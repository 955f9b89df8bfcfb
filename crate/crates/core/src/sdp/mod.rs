//! Semidefinite programs over free scalars: affine symmetric blocks required
//! positive semidefinite, affine equalities and an optional linear objective.

mod clarabel_backend;
mod sdpa;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub use sdpa::write_sdpa;

/// Default eigenvalue tolerance for accepting a witness.
pub const TOL_PSD: f64 = 1e-8;
/// Default tolerance on reported objective values.
pub const TOL_OBJ: f64 = 1e-6;
/// Environment override for `TOL_PSD`.
pub const TOL_ENV: &str = "SGR_SOLVER_TOL";

/// `TOL_PSD`, unless `SGR_SOLVER_TOL` holds a positive number.
pub fn tol_psd_from_env(default: f64) -> f64 {
    std::env::var(TOL_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|v| *v > 0.0 && v.is_finite())
        .unwrap_or(default)
}

/// Sparse linear form `constant + sum coef * x[var]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl Affine {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(k, c)| c * x[*k]).sum::<f64>()
    }
}

/// `F0 + sum_k x_k F_k`, stored as upper-triangle triplets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmiBlock {
    pub dim: usize,
    /// `(i, j, value)` with `i <= j`.
    pub constant: Vec<(usize, usize, f64)>,
    /// `(var, i, j, value)` with `i <= j`.
    pub coeffs: Vec<(usize, usize, usize, f64)>,
}

impl LmiBlock {
    pub fn new(dim: usize) -> Self {
        LmiBlock {
            dim,
            constant: Vec::new(),
            coeffs: Vec::new(),
        }
    }

    /// Adds `v` to entry `(i, j)` (and its mirror) of `F0`.
    pub fn add_constant(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.constant.push((i, j, v));
    }

    /// Adds `v` to entry `(i, j)` (and its mirror) of `F_var`.
    pub fn add_coeff(&mut self, var: usize, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.coeffs.push((var, i, j, v));
    }

    /// Shifts the block by `-margin * I`, so that feasibility means `>= margin`.
    pub fn with_margin(mut self, margin: f64) -> Self {
        if margin != 0.0 {
            for i in 0..self.dim {
                self.constant.push((i, i, -margin));
            }
        }
        self
    }

    /// Dense value of the block at `x`.
    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        let mut put = |i: usize, j: usize, v: f64| {
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        };
        for &(i, j, v) in &self.constant {
            put(i, j, v);
        }
        for &(k, i, j, v) in &self.coeffs {
            put(i, j, v * x[k]);
        }
        m
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub num_scalars: usize,
    pub blocks: Vec<LmiBlock>,
    /// Each entry requires `expr == 0`.
    pub equalities: Vec<Affine>,
    /// Minimized when present.
    pub objective: Option<Affine>,
}

impl ConicProgram {
    pub fn new(num_scalars: usize) -> Self {
        ConicProgram {
            num_scalars,
            ..Default::default()
        }
    }

    pub fn add_scalar(&mut self) -> usize {
        self.num_scalars += 1;
        self.num_scalars - 1
    }

    pub fn check(&self) -> Result<(), String> {
        for (b, block) in self.blocks.iter().enumerate() {
            for &(i, j, _) in &block.constant {
                if i > j || j >= block.dim {
                    return Err(format!("block {b}: constant entry ({i},{j}) out of range"));
                }
            }
            for &(k, i, j, _) in &block.coeffs {
                if k >= self.num_scalars || i > j || j >= block.dim {
                    return Err(format!("block {b}: coefficient ({k};{i},{j}) out of range"));
                }
            }
        }
        let bad_var = |a: &Affine| a.terms.iter().any(|(k, _)| *k >= self.num_scalars);
        if self.equalities.iter().any(bad_var) || self.objective.as_ref().is_some_and(bad_var) {
            return Err("affine expression references an unknown scalar".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConicStatus {
    Feasible,
    Infeasible,
    Unbounded,
    Unknown,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConicOutcome {
    pub status: ConicStatus,
    pub witness: Option<Vec<f64>>,
    /// Smallest eigenvalue across all blocks at the witness.
    pub margin: f64,
    /// Largest equality residual at the witness.
    pub eq_residual: f64,
    pub objective: Option<f64>,
    pub diagnostic: String,
}

impl ConicOutcome {
    pub fn is_feasible(&self) -> bool {
        self.status == ConicStatus::Feasible
    }

    fn without_witness(status: ConicStatus, diagnostic: String) -> Self {
        ConicOutcome {
            status,
            witness: None,
            margin: f64::NAN,
            eq_residual: f64::NAN,
            objective: None,
            diagnostic,
        }
    }
}

/// Minimum eigenvalue of every block at `x` (`+inf` when there are none).
pub fn min_block_eigenvalue(p: &ConicProgram, x: &[f64]) -> f64 {
    p.blocks
        .iter()
        .map(|b| {
            let m = b.evaluate(x);
            if b.dim == 1 {
                m[(0, 0)]
            } else {
                SymmetricEigen::new(m).eigenvalues.min()
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Smallest eigenvalue of each block divided by `max(1, largest |entry|)`.
pub fn min_scaled_eigenvalue(p: &ConicProgram, x: &[f64]) -> f64 {
    p.blocks
        .iter()
        .map(|b| {
            let m = b.evaluate(x);
            let scale = m.amax().max(1.0);
            let low = if b.dim == 1 { m[(0, 0)] } else { SymmetricEigen::new(m).eigenvalues.min() };
            low / scale
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn max_equality_residual(p: &ConicProgram, x: &[f64]) -> f64 {
    p.equalities.iter().map(|e| e.eval(x).abs()).fold(0.0, f64::max)
}

/// Raw solver answer before independent verification.
pub(crate) enum RawAnswer {
    Solved { x: Vec<f64>, almost: bool },
    Infeasible,
    Unbounded,
    Failed(String),
}

fn verify(p: &ConicProgram, raw: RawAnswer, tol_psd: f64) -> ConicOutcome {
    match raw {
        RawAnswer::Solved { x, almost } => {
            let margin = min_block_eigenvalue(p, &x);
            let eq_residual = max_equality_residual(p, &x);
            let objective = p.objective.as_ref().map(|o| o.eval(&x));
            let ok = min_scaled_eigenvalue(p, &x) >= -tol_psd && eq_residual <= 1e-6;
            let diagnostic = if ok {
                String::new()
            } else {
                format!("witness rejected: min eigenvalue {margin:.3e}, equality residual {eq_residual:.3e}")
            };
            ConicOutcome {
                status: if ok { ConicStatus::Feasible } else { ConicStatus::Unknown },
                witness: Some(x),
                margin,
                eq_residual,
                objective,
                diagnostic: if almost && ok { "reduced accuracy".into() } else { diagnostic },
            }
        }
        RawAnswer::Infeasible => ConicOutcome::without_witness(ConicStatus::Infeasible, "infeasibility certificate".into()),
        RawAnswer::Unbounded => ConicOutcome::without_witness(ConicStatus::Unbounded, "objective unbounded below".into()),
        RawAnswer::Failed(msg) => ConicOutcome::without_witness(ConicStatus::Unknown, msg),
    }
}

/// Finds any point satisfying all blocks and equalities; the objective is ignored.
pub fn solve_feasibility(p: &ConicProgram, tol_psd: f64) -> ConicOutcome {
    if let Err(e) = p.check() {
        return ConicOutcome::without_witness(ConicStatus::Unknown, e);
    }
    let raw = clarabel_backend::solve(p, None);
    verify(p, raw, tol_psd)
}

/// Minimizes the objective. A program without an objective minimizes zero.
pub fn solve_min_linear(p: &ConicProgram, tol_psd: f64) -> ConicOutcome {
    if let Err(e) = p.check() {
        return ConicOutcome::without_witness(ConicStatus::Unknown, e);
    }
    let raw = clarabel_backend::solve(p, p.objective.as_ref());
    let mut out = verify(p, raw, tol_psd);
    if out.objective.is_none() && out.is_feasible() {
        out.objective = Some(0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_block(constant: f64, coef: f64) -> LmiBlock {
        let mut b = LmiBlock::new(1);
        b.add_constant(0, 0, constant);
        b.add_coeff(0, 0, 0, coef);
        b
    }

    #[test]
    fn nonnegative_scalar_is_feasible() {
        let mut p = ConicProgram::new(1);
        p.blocks.push(scalar_block(0.0, 1.0));
        let out = solve_feasibility(&p, TOL_PSD);
        assert_eq!(out.status, ConicStatus::Feasible);
        assert!(out.witness.unwrap()[0] >= -TOL_PSD);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut p = ConicProgram::new(1);
        p.blocks.push(scalar_block(-1.0, 1.0));
        p.blocks.push(scalar_block(0.0, -1.0));
        assert_eq!(solve_feasibility(&p, TOL_PSD).status, ConicStatus::Infeasible);
    }

    #[test]
    fn gram_witness_for_x2_plus_1() {
        // x^2 + 1 over (1, x): G = [[1, a], [a, 1]] with a = 0 forced by the x coefficient.
        let mut p = ConicProgram::new(1);
        let mut b = LmiBlock::new(2);
        b.add_constant(0, 0, 1.0);
        b.add_constant(1, 1, 1.0);
        b.add_coeff(0, 0, 1, 1.0);
        p.blocks.push(b);
        p.equalities.push(Affine {
            constant: 0.0,
            terms: vec![(0, 2.0)],
        });
        let out = solve_feasibility(&p, TOL_PSD);
        assert!(out.is_feasible());
        assert_abs_diff_eq!(out.witness.unwrap()[0], 0.0, epsilon = 1e-7);
    }

    #[test]
    fn minimize_with_lower_bound() {
        let mut p = ConicProgram::new(1);
        p.blocks.push(scalar_block(-3.0, 1.0));
        p.objective = Some(Affine {
            constant: 0.0,
            terms: vec![(0, 1.0)],
        });
        let out = solve_min_linear(&p, TOL_PSD);
        assert!(out.is_feasible());
        assert_abs_diff_eq!(out.objective.unwrap(), 3.0, epsilon = TOL_OBJ);
    }

    #[test]
    fn minimum_trace_with_unit_off_diagonal() {
        // [[a, 1], [1, b]] >= 0, minimize a + b.
        let mut p = ConicProgram::new(2);
        let mut blk = LmiBlock::new(2);
        blk.add_constant(0, 1, 1.0);
        blk.add_coeff(0, 0, 0, 1.0);
        blk.add_coeff(1, 1, 1, 1.0);
        p.blocks.push(blk);
        p.objective = Some(Affine {
            constant: 0.0,
            terms: vec![(0, 1.0), (1, 1.0)],
        });
        let out = solve_min_linear(&p, TOL_PSD);
        assert_abs_diff_eq!(out.objective.unwrap(), 2.0, epsilon = 1e-5);
    }

    #[test]
    fn zero_objective_and_unboundedness() {
        let mut p = ConicProgram::new(1);
        p.blocks.push(scalar_block(0.0, 1.0));
        p.objective = Some(Affine::default());
        let out = solve_min_linear(&p, TOL_PSD);
        assert!(out.is_feasible());
        assert_abs_diff_eq!(out.objective.unwrap(), 0.0);

        p.objective = Some(Affine {
            constant: 0.0,
            terms: vec![(0, -1.0)],
        });
        assert_eq!(solve_min_linear(&p, TOL_PSD).status, ConicStatus::Unbounded);
    }

    #[test]
    fn unused_scalar_keeps_feasibility() {
        let mut p = ConicProgram::new(1);
        p.blocks.push(scalar_block(-1.0, 1.0));
        assert!(solve_feasibility(&p, TOL_PSD).is_feasible());
        p.add_scalar();
        assert!(solve_feasibility(&p, TOL_PSD).is_feasible());
    }

    #[test]
    fn malformed_program_is_unknown() {
        let mut p = ConicProgram::new(1);
        let mut b = LmiBlock::new(1);
        b.add_coeff(4, 0, 0, 1.0);
        p.blocks.push(b);
        assert_eq!(solve_feasibility(&p, TOL_PSD).status, ConicStatus::Unknown);
    }
}
