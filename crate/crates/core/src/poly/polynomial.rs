use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Monomial, PolyError};

/// Sparse multivariate polynomial with `f64` coefficients over `x1..xn`.
///
/// Zero coefficients are never stored. Arithmetic through the operator traits
/// panics on a variable-count mismatch; the `checked_*` methods report it.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PolyRepr", try_from = "PolyRepr")]
pub struct Polynomial {
    num_vars: usize,
    terms: BTreeMap<Monomial, f64>,
}

/// Wire form: exponent vectors with their coefficients.
#[derive(Serialize, Deserialize)]
struct PolyRepr {
    num_vars: usize,
    terms: Vec<(Vec<u32>, f64)>,
}

impl From<Polynomial> for PolyRepr {
    fn from(p: Polynomial) -> Self {
        PolyRepr {
            num_vars: p.num_vars,
            terms: p.terms.into_iter().map(|(m, c)| (m.exponents().to_vec(), c)).collect(),
        }
    }
}

impl TryFrom<PolyRepr> for Polynomial {
    type Error = PolyError;

    fn try_from(r: PolyRepr) -> Result<Self, PolyError> {
        if let Some((e, _)) = r.terms.iter().find(|(e, _)| e.len() != r.num_vars) {
            return Err(PolyError::DimensionMismatch {
                expected: r.num_vars,
                found: e.len(),
            });
        }
        Ok(Polynomial::from_terms(r.num_vars, r.terms.into_iter().map(|(e, c)| (Monomial::new(e), c))))
    }
}

impl Polynomial {
    pub fn zero(num_vars: usize) -> Self {
        Polynomial {
            num_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(num_vars: usize, value: f64) -> Self {
        let mut p = Self::zero(num_vars);
        p.add_term(Monomial::one(num_vars), value);
        p
    }

    /// The polynomial `x_{var+1}` (zero-based index).
    pub fn var(num_vars: usize, var: usize) -> Self {
        let mut p = Self::zero(num_vars);
        p.add_term(Monomial::var(num_vars, var), 1.0);
        p
    }

    pub fn from_terms<I>(num_vars: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut p = Self::zero(num_vars);
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    /// Univariate polynomial from coefficients `[c0, c1, c2, ...]`.
    pub fn univariate(coeffs: &[f64]) -> Self {
        Self::from_terms(
            1,
            coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| (Monomial::new(vec![k as u32]), c)),
        )
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Smallest total degree among stored terms; 0 for the zero polynomial.
    pub fn min_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).min().unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |acc, c| acc.max(c.abs()))
    }

    /// Adds `c * m` in place, dropping the term if it cancels exactly.
    pub fn add_term(&mut self, m: Monomial, c: f64) {
        assert_eq!(m.num_vars(), self.num_vars, "monomial variable count");
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let v = *o.get() + c;
                if v == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = v;
                }
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    /// Removes coefficients with magnitude at most `tol`.
    pub fn pruned(&self, tol: f64) -> Self {
        Polynomial {
            num_vars: self.num_vars,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.abs() > tol)
                .map(|(m, &c)| (m.clone(), c))
                .collect(),
        }
    }

    fn check_dims(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.num_vars != other.num_vars {
            return Err(PolyError::DimensionMismatch {
                expected: self.num_vars,
                found: other.num_vars,
            });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn checked_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dims(other)?;
        let mut out = Polynomial::zero(self.num_vars);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, a: f64) -> Polynomial {
        if a == 0.0 {
            return Polynomial::zero(self.num_vars);
        }
        Polynomial {
            num_vars: self.num_vars,
            terms: self.terms.iter().map(|(m, &c)| (m.clone(), a * c)).collect(),
        }
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::constant(self.num_vars, 1.0);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    pub fn evaluate(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.num_vars, "evaluation point dimension");
        self.terms.iter().map(|(m, &c)| c * m.evaluate(point)).sum()
    }

    pub fn checked_evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.num_vars {
            return Err(PolyError::DimensionMismatch {
                expected: self.num_vars,
                found: point.len(),
            });
        }
        Ok(self.evaluate(point))
    }

    /// Partial derivative with respect to `x_{var+1}`.
    pub fn derivative(&self, var: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.num_vars);
        for (m, &c) in &self.terms {
            let e = m.exponents()[var];
            if e == 0 {
                continue;
            }
            let mut exps = m.exponents().to_vec();
            exps[var] -= 1;
            out.add_term(Monomial::new(exps), c * e as f64);
        }
        out
    }

    pub fn gradient(&self) -> Vec<Polynomial> {
        (0..self.num_vars).map(|i| self.derivative(i)).collect()
    }

    /// Composes `self` with the polynomial map `x_i = subs[i](y)`.
    pub fn compose(&self, subs: &[Polynomial]) -> Result<Polynomial, PolyError> {
        if subs.len() != self.num_vars {
            return Err(PolyError::DimensionMismatch {
                expected: self.num_vars,
                found: subs.len(),
            });
        }
        let target_vars = subs.first().map(|p| p.num_vars).unwrap_or(0);
        if let Some(bad) = subs.iter().find(|p| p.num_vars != target_vars) {
            return Err(PolyError::DimensionMismatch {
                expected: target_vars,
                found: bad.num_vars,
            });
        }
        // cache powers of each substituted variable
        let max_deg = self.degree() as usize;
        let mut powers: Vec<Vec<Polynomial>> = Vec::with_capacity(subs.len());
        for s in subs {
            let mut row = vec![Polynomial::constant(target_vars, 1.0)];
            for k in 1..=max_deg {
                let next = &row[k - 1] * s;
                row.push(next);
            }
            powers.push(row);
        }
        let mut out = Polynomial::zero(target_vars);
        for (m, &c) in &self.terms {
            let mut term = Polynomial::constant(target_vars, c);
            for (i, &e) in m.exponents().iter().enumerate() {
                if e > 0 {
                    term = &term * &powers[i][e as usize];
                }
            }
            out = &out + &term;
        }
        Ok(out)
    }

    /// Composes `self` with the affine map `x = A y + b`; `A` is `n x k` and
    /// the result is a polynomial in `k` variables.
    pub fn substitute_affine(&self, a: &DMatrix<f64>, b: &[f64]) -> Result<Polynomial, PolyError> {
        if a.nrows() != self.num_vars || b.len() != self.num_vars {
            return Err(PolyError::DimensionMismatch {
                expected: self.num_vars,
                found: a.nrows().min(b.len()),
            });
        }
        let k = a.ncols();
        let subs: Vec<Polynomial> = (0..self.num_vars)
            .map(|i| {
                let mut p = Polynomial::constant(k, b[i]);
                for j in 0..k {
                    p.add_term(Monomial::var(k, j), a[(i, j)]);
                }
                p
            })
            .collect();
        self.compose(&subs)
    }

    /// Re-embeds the polynomial into `num_vars` variables, mapping old
    /// variable `i` to new variable `map[i]`.
    pub fn relabel(&self, num_vars: usize, map: &[usize]) -> Polynomial {
        assert_eq!(map.len(), self.num_vars);
        let mut out = Polynomial::zero(num_vars);
        for (m, &c) in &self.terms {
            let mut exps = vec![0u32; num_vars];
            for (i, &e) in m.exponents().iter().enumerate() {
                exps[map[i]] += e;
            }
            out.add_term(Monomial::new(exps), c);
        }
        out
    }

    /// Coefficient-wise comparison with tolerance `tol * max(1, max |coeff|)`.
    pub fn approx_eq(&self, other: &Polynomial, tol: f64) -> bool {
        self.num_vars == other.num_vars && self.max_coeff_diff(other) <= tol * self.max_abs_coeff().max(other.max_abs_coeff()).max(1.0)
    }

    /// Largest absolute coefficient difference.
    pub fn max_coeff_diff(&self, other: &Polynomial) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, &c) in &self.terms {
            worst = worst.max((c - other.coeff(m)).abs());
        }
        for (m, &c) in &other.terms {
            if !self.terms.contains_key(m) {
                worst = worst.max(c.abs());
            }
        }
        worst
    }

    /// The homogeneous part of the given total degree.
    pub fn homogeneous_part(&self, degree: u32) -> Polynomial {
        Polynomial {
            num_vars: self.num_vars,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.degree() == degree)
                .map(|(m, &c)| (m.clone(), c))
                .collect(),
        }
    }

    /// True when only even powers of every variable occur.
    pub fn is_even(&self) -> bool {
        self.terms.keys().all(|m| m.exponents().iter().all(|e| e % 2 == 0))
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.checked_add(rhs).expect("polynomial dimension mismatch")
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.checked_add(&rhs.scale(-1.0)).expect("polynomial dimension mismatch")
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.checked_mul(rhs).expect("polynomial dimension mismatch")
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // highest degree first reads naturally
        for (k, (m, &c)) in self.terms.iter().rev().enumerate() {
            let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
            if k == 0 {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            if m.is_one() {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{m}")?;
            } else {
                write!(f, "{mag}*{m}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Polynomial[{}]({self})", self.num_vars)
    }
}
