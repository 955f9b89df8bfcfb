use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A monomial `x1^e1 * ... * xn^en`, stored as its exponent vector.
///
/// Monomials are totally ordered by graded lexicographic order: lower total
/// degree first; within a degree, larger exponents on earlier variables come
/// first. For two variables of degree 2 this gives `x1^2, x1*x2, x2^2`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Monomial {
    exps: Vec<u32>,
}

impl Monomial {
    pub fn new(exps: Vec<u32>) -> Self {
        Monomial { exps }
    }

    pub fn one(num_vars: usize) -> Self {
        Monomial { exps: vec![0; num_vars] }
    }

    /// The monomial `x_var`.
    pub fn var(num_vars: usize, var: usize) -> Self {
        let mut exps = vec![0; num_vars];
        exps[var] = 1;
        Monomial { exps }
    }

    pub fn num_vars(&self) -> usize {
        self.exps.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exps
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    pub fn is_one(&self) -> bool {
        self.exps.iter().all(|&e| e == 0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.exps.len(), other.exps.len());
        Monomial {
            exps: self.exps.iter().zip(&other.exps).map(|(a, b)| a + b).collect(),
        }
    }

    /// `Some(m)` with `m * m == self` when every exponent is even.
    pub fn sqrt(&self) -> Option<Monomial> {
        if self.exps.iter().all(|e| e % 2 == 0) {
            Some(Monomial {
                exps: self.exps.iter().map(|e| e / 2).collect(),
            })
        } else {
            None
        }
    }

    pub fn evaluate(&self, point: &[f64]) -> f64 {
        self.exps
            .iter()
            .zip(point)
            .filter(|(e, _)| **e > 0)
            .map(|(&e, &x)| x.powi(e as i32))
            .product()
    }

    /// All monomials in `num_vars` variables of exactly total degree `degree`,
    /// in canonical order.
    pub fn of_degree(num_vars: usize, degree: u32) -> Vec<Monomial> {
        let mut out = Vec::new();
        let mut current = vec![0u32; num_vars];
        fill(&mut current, 0, degree, &mut out);
        out
    }
}

fn fill(current: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<Monomial>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(Monomial::new(current.clone()));
        return;
    }
    if current.is_empty() {
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        fill(current, pos + 1, remaining - e, out);
    }
    current[pos] = 0;
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_one() {
            return write!(f, "1");
        }
        let mut first = true;
        for (i, &e) in self.exps.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{}", i + 1)?;
            } else {
                write!(f, "x{}^{}", i + 1, e)?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_order_two_vars() {
        let mut all: Vec<Monomial> = (0..=2).flat_map(|d| Monomial::of_degree(2, d)).collect();
        let listed = all.iter().map(|m| m.to_string()).collect::<Vec<_>>();
        assert_eq!(listed, ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"]);
        let sorted = all.clone();
        all.reverse();
        all.sort();
        assert_eq!(all, sorted);
    }

    #[test]
    fn sqrt_only_for_even_exponents() {
        assert_eq!(Monomial::new(vec![2, 4]).sqrt(), Some(Monomial::new(vec![1, 2])));
        assert_eq!(Monomial::new(vec![1, 1]).sqrt(), None);
    }
}
