//! SOS programs in image form: each SOS constraint becomes one Gram block
//! `lift(p) + sum delta_k N_k`, affine in the decision scalars.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::poly::smr::GramLayout;
use crate::poly::{Monomial, PowerVector, Polynomial};
use crate::sdp::{solve_min_linear, Affine, ConicOutcome, ConicProgram, ConicStatus, LmiBlock};

/// `constant + sum coef * x[var]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub constant: f64,
    pub coeffs: BTreeMap<usize, f64>,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        LinExpr {
            constant: c,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn var(k: usize) -> Self {
        Self::term(k, 1.0)
    }

    pub fn term(k: usize, c: f64) -> Self {
        LinExpr {
            constant: 0.0,
            coeffs: [(k, c)].into_iter().collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, a: f64) {
        self.constant += a * other.constant;
        for (k, c) in &other.coeffs {
            *self.coeffs.entry(*k).or_insert(0.0) += a * c;
        }
    }

    pub fn scaled(&self, a: f64) -> LinExpr {
        let mut out = LinExpr::default();
        out.add_scaled(self, a);
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|(k, c)| c * x[*k]).sum::<f64>()
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.coeffs.values().all(|c| *c == 0.0)
    }

    pub fn to_affine(&self) -> Affine {
        Affine {
            constant: self.constant,
            terms: self.coeffs.iter().filter(|(_, c)| **c != 0.0).map(|(k, c)| (*k, *c)).collect(),
        }
    }
}

/// Polynomial whose coefficients are affine in the decision scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct LinPoly {
    num_vars: usize,
    terms: BTreeMap<Monomial, LinExpr>,
}

impl LinPoly {
    pub fn zero(num_vars: usize) -> Self {
        LinPoly {
            num_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_poly(p: &Polynomial) -> Self {
        let mut out = Self::zero(p.num_vars());
        for (m, c) in p.terms() {
            out.add_term(m.clone(), &LinExpr::constant(c), 1.0);
        }
        out
    }

    /// `p * x[var]`.
    pub fn from_poly_times_var(p: &Polynomial, var: usize) -> Self {
        let mut out = Self::zero(p.num_vars());
        for (m, c) in p.terms() {
            out.add_term(m.clone(), &LinExpr::term(var, c), 1.0);
        }
        out
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &LinExpr)> {
        self.terms.iter()
    }

    pub fn add_term(&mut self, m: Monomial, e: &LinExpr, a: f64) {
        self.terms.entry(m).or_default().add_scaled(e, a);
    }

    pub fn add_scaled(&mut self, other: &LinPoly, a: f64) {
        assert_eq!(self.num_vars, other.num_vars);
        for (m, e) in &other.terms {
            self.add_term(m.clone(), e, a);
        }
    }

    pub fn add_poly(&mut self, p: &Polynomial, a: f64) {
        for (m, c) in p.terms() {
            self.add_term(m.clone(), &LinExpr::constant(c), a);
        }
    }

    /// Product with a fixed polynomial.
    pub fn mul_poly(&self, p: &Polynomial) -> LinPoly {
        let mut out = LinPoly::zero(self.num_vars);
        for (m, e) in &self.terms {
            for (pm, c) in p.terms() {
                out.add_term(m.mul(pm), e, c);
            }
        }
        out
    }

    pub fn scaled(&self, a: f64) -> LinPoly {
        let mut out = LinPoly::zero(self.num_vars);
        out.add_scaled(self, a);
        out
    }

    pub fn evaluate(&self, x: &[f64]) -> Polynomial {
        Polynomial::from_terms(self.num_vars, self.terms.iter().map(|(m, e)| (m.clone(), e.eval(x))))
    }

    /// Smallest and largest total degree among terms that are not identically zero.
    pub fn degree_range(&self) -> Option<(u32, u32)> {
        let degs = self.terms.iter().filter(|(_, e)| !e.is_zero()).map(|(m, _)| m.degree());
        let (mut lo, mut hi) = (u32::MAX, 0);
        let mut any = false;
        for d in degs {
            lo = lo.min(d);
            hi = hi.max(d);
            any = true;
        }
        any.then_some((lo, hi))
    }
}

/// Monomial basis for an SOS polynomial with the given degree range.
/// With `reduced` the basis skips degrees that cannot occur in a Gram
/// representation; otherwise it starts at degree zero.
pub fn basis_for(num_vars: usize, degrees: (u32, u32), reduced: bool) -> PowerVector {
    let (lo, hi) = degrees;
    let hi = hi.div_ceil(2);
    let lo = if reduced { lo / 2 } else { 0 };
    PowerVector::with_degree_range(num_vars, lo.min(hi), hi)
}

#[derive(Clone, Debug)]
struct GramRecord {
    name: String,
    basis: PowerVector,
    block: usize,
    margin: f64,
    /// For constraints, the polynomial the Gram matrix must represent.
    target: Option<LinPoly>,
}

/// An SOS program under construction.
#[derive(Clone, Debug)]
pub struct SosProgram {
    pub conic: ConicProgram,
    grams: Vec<GramRecord>,
}

impl SosProgram {
    pub fn new() -> Self {
        SosProgram {
            conic: ConicProgram::new(0),
            grams: Vec::new(),
        }
    }

    pub fn scalar(&mut self) -> usize {
        self.conic.add_scalar()
    }

    /// `lo <= x[k]`.
    pub fn lower_bound(&mut self, k: usize, lo: f64) {
        let mut b = LmiBlock::new(1);
        b.add_constant(0, 0, -lo);
        b.add_coeff(k, 0, 0, 1.0);
        self.conic.blocks.push(b);
    }

    /// A fresh SOS polynomial `phi' G phi` with `G >= margin I`.
    pub fn sos_multiplier(&mut self, name: &str, basis: PowerVector, margin: f64) -> LinPoly {
        let k = basis.len();
        let mut poly = LinPoly::zero(basis.num_vars());
        if k == 0 {
            return poly;
        }
        let mut block = LmiBlock::new(k);
        let mons = basis.monomials();
        for i in 0..k {
            for j in i..k {
                let v = self.conic.add_scalar();
                block.add_coeff(v, i, j, 1.0);
                poly.add_term(mons[i].mul(&mons[j]), &LinExpr::var(v), if i == j { 1.0 } else { 2.0 });
            }
        }
        self.conic.blocks.push(block.with_margin(margin));
        self.grams.push(GramRecord {
            name: name.to_string(),
            basis,
            block: self.conic.blocks.len() - 1,
            margin,
            target: None,
        });
        poly
    }

    /// Requires `p` to be SOS over `basis`. Terms the basis cannot represent
    /// are forced to vanish. Returns the block side.
    pub fn constrain_sos(&mut self, name: &str, p: &LinPoly, basis: PowerVector, margin: f64) -> usize {
        let layout = GramLayout::new(&basis);
        let k = basis.len();
        let mut block = LmiBlock::new(k);
        for (m, e) in p.terms() {
            if e.is_zero() {
                continue;
            }
            match layout.canonical(m) {
                Some((i, j)) => {
                    let f = if i == j { 1.0 } else { 0.5 };
                    if e.constant != 0.0 {
                        block.add_constant(i, j, f * e.constant);
                    }
                    for (v, c) in &e.coeffs {
                        if *c != 0.0 {
                            block.add_coeff(*v, i, j, f * c);
                        }
                    }
                }
                None => self.conic.equalities.push(e.to_affine()),
            }
        }
        for dir in layout.null_directions() {
            let v = self.conic.add_scalar();
            for (i, j, c) in dir.entries {
                block.add_coeff(v, i, j, c);
            }
        }
        if k > 0 {
            self.conic.blocks.push(block.with_margin(margin));
            self.grams.push(GramRecord {
                name: name.to_string(),
                basis,
                block: self.conic.blocks.len() - 1,
                margin,
                target: Some(p.clone()),
            });
        } else {
            self.grams.push(GramRecord {
                name: name.to_string(),
                basis,
                block: usize::MAX,
                margin: 0.0,
                target: Some(p.clone()),
            });
        }
        k
    }

    pub fn add_equality(&mut self, e: &LinExpr) {
        self.conic.equalities.push(e.to_affine());
    }

    pub fn set_objective(&mut self, e: &LinExpr) {
        self.conic.objective = Some(e.to_affine());
    }

    /// Trace of a named Gram matrix as an affine expression.
    pub fn gram_trace(&self, name: &str) -> Option<LinExpr> {
        let g = self.grams.iter().find(|g| g.name == name)?;
        let b = self.conic.blocks.get(g.block)?;
        let mut out = LinExpr::constant(g.margin * b.dim as f64);
        for &(i, j, v) in &b.constant {
            if i == j {
                out.constant += v;
            }
        }
        for &(k, i, j, v) in &b.coeffs {
            if i == j {
                *out.coeffs.entry(k).or_insert(0.0) += v;
            }
        }
        Some(out)
    }

    pub fn block_sides(&self) -> Vec<(String, usize)> {
        self.grams.iter().map(|g| (g.name.clone(), g.basis.len())).collect()
    }

    pub fn solve(&self, tol_psd: f64) -> SosSolution {
        let outcome = solve_min_linear(&self.conic, tol_psd);
        let grams = match (&outcome.witness, outcome.status) {
            (Some(x), ConicStatus::Feasible) => self.grams.iter().map(|g| self.extract(g, x)).collect(),
            _ => Vec::new(),
        };
        SosSolution { outcome, grams }
    }

    fn extract(&self, g: &GramRecord, x: &[f64]) -> GramWitness {
        let k = g.basis.len();
        let mut matrix = match self.conic.blocks.get(g.block) {
            Some(b) => b.evaluate(x),
            None => DMatrix::zeros(0, 0),
        };
        // blocks carry a -margin I shift
        for i in 0..k {
            matrix[(i, i)] += g.margin;
        }
        let polynomial = match &g.target {
            Some(t) => t.evaluate(x),
            None => g.basis.quadratic_form(&matrix),
        };
        GramWitness::new(&g.name, &g.basis, matrix, polynomial, g.target.is_some())
    }
}

impl Default for SosProgram {
    fn default() -> Self {
        Self::new()
    }
}

/// A PSD Gram matrix and the polynomial it represents.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GramWitness {
    pub name: String,
    pub basis: Vec<String>,
    pub gram: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
    pub polynomial: Polynomial,
    /// Largest coefficient mismatch between `polynomial` and `basis' gram basis`.
    pub residual: f64,
    /// False for free multipliers.
    pub constraint: bool,
    #[serde(skip)]
    power_vector: Option<PowerVector>,
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

impl GramWitness {
    fn new(name: &str, basis: &PowerVector, matrix: DMatrix<f64>, polynomial: Polynomial, constraint: bool) -> Self {
        let residual = basis.quadratic_form(&matrix).max_coeff_diff(&polynomial);
        GramWitness {
            name: name.to_string(),
            basis: basis.monomials().iter().map(|m| m.to_string()).collect(),
            gram: (0..matrix.nrows()).map(|i| matrix.row(i).iter().copied().collect()).collect(),
            min_eigenvalue: min_eig(&matrix),
            polynomial,
            residual,
            constraint,
            power_vector: Some(basis.clone()),
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let k = self.gram.len();
        DMatrix::from_fn(k, k, |i, j| self.gram[i][j])
    }

    /// Recomputes the eigenvalue margin, relative to the largest entry, and
    /// the polynomial identity.
    pub fn verify(&self, tol_psd: f64, tol_coeff: f64) -> bool {
        let m = self.matrix();
        let ok_psd = min_eig(&m) >= -tol_psd * m.amax().max(1.0);
        let ok_id = match &self.power_vector {
            Some(pv) => {
                let scale = self.polynomial.max_abs_coeff().max(1.0);
                pv.quadratic_form(&m).max_coeff_diff(&self.polynomial) <= tol_coeff * scale
            }
            None => self.residual <= tol_coeff,
        };
        ok_psd && ok_id
    }
}

#[derive(Clone, Debug)]
pub struct SosSolution {
    pub outcome: ConicOutcome,
    pub grams: Vec<GramWitness>,
}

impl SosSolution {
    pub fn is_feasible(&self) -> bool {
        self.outcome.is_feasible()
    }

    pub fn gram(&self, name: &str) -> Option<&GramWitness> {
        self.grams.iter().find(|g| g.name == name)
    }

    pub fn value(&self, e: &LinExpr) -> Option<f64> {
        self.outcome.witness.as_ref().map(|x| e.eval(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_polynomial;

    #[test]
    fn sos_polynomial_is_certified() {
        let p = parse_polynomial("x1^4 - 2*x1^2*x2 + x2^2 + 1", 2).unwrap();
        let mut prog = SosProgram::new();
        let lp = LinPoly::from_poly(&p);
        let basis = basis_for(2, lp.degree_range().unwrap(), true);
        prog.constrain_sos("p", &lp, basis, 0.0);
        let sol = prog.solve(1e-8);
        assert!(sol.is_feasible(), "{}", sol.outcome.diagnostic);
        let g = sol.gram("p").unwrap();
        assert!(g.verify(1e-8, 1e-6));
    }

    #[test]
    fn negative_polynomial_is_refused() {
        let p = parse_polynomial("x1^2 - 2*x1*x2", 2).unwrap();
        let mut prog = SosProgram::new();
        prog.constrain_sos("p", &LinPoly::from_poly(&p), power_vector_1(2), 0.0);
        assert_eq!(prog.solve(1e-8).outcome.status, ConicStatus::Infeasible);
    }

    fn power_vector_1(n: usize) -> PowerVector {
        PowerVector::with_degree_range(n, 1, 1)
    }

    #[test]
    fn multiplier_search() {
        // largest constant t with x^2 + 1 - t x SOS
        let mut prog = SosProgram::new();
        let t = prog.sos_multiplier("t", PowerVector::with_degree_range(1, 0, 0), 0.0);
        let x = Polynomial::var(1, 0);
        let mut p = LinPoly::from_poly(&parse_polynomial("x1^2 + 1", 1).unwrap());
        p.add_scaled(&t.mul_poly(&x), -1.0);
        prog.constrain_sos("p", &p, PowerVector::with_degree_range(1, 0, 1), 0.0);
        // maximize t
        let tv = *t.terms().next().unwrap().1.coeffs.keys().next().unwrap();
        prog.set_objective(&LinExpr::term(tv, -1.0));
        let sol = prog.solve(1e-8);
        assert!(sol.is_feasible());
        assert!((sol.value(&LinExpr::var(tv)).unwrap() - 2.0).abs() < 1e-5);
        assert!(sol.grams.iter().all(|g| g.verify(1e-7, 1e-6)));
    }

    #[test]
    fn out_of_basis_terms_become_equalities() {
        let p = parse_polynomial("x1^3", 1).unwrap();
        let mut prog = SosProgram::new();
        prog.constrain_sos("p", &LinPoly::from_poly(&p), PowerVector::with_degree_range(1, 0, 1), 0.0);
        assert_eq!(prog.conic.equalities.len(), 1);
        assert_ne!(prog.solve(1e-8).outcome.status, ConicStatus::Feasible);
    }
}
