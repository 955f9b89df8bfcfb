//! Square matrix representation (Gram-matrix form) of polynomials.
//!
//! A polynomial `p` of degree at most `2d` is written as `phi' (P + L(delta)) phi`
//! where `phi` is a power vector of monomials, `P` is one fixed symmetric
//! representative and `L(delta)` ranges over the linear space of symmetric
//! matrices whose quadratic form in `phi` vanishes identically.
//!
//! Coefficient placement rule: each monomial `m` of `p` is placed at one Gram
//! position `(i, j)` with `phi_i * phi_j = m`. A diagonal position is used when
//! `m` is a square of a basis element; otherwise the pair with the smallest
//! degree imbalance wins, ties going to the first pair in basis order.
//! Off-diagonal placements store `c/2` on both symmetric entries.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Monomial, PolyError, Polynomial};

/// Ordered list of monomials with total degree in `[min_degree, max_degree]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerVector {
    num_vars: usize,
    min_degree: u32,
    max_degree: u32,
    monomials: Vec<Monomial>,
}

impl PowerVector {
    /// All monomials of degree `min_degree..=max_degree`, in canonical order.
    pub fn with_degree_range(num_vars: usize, min_degree: u32, max_degree: u32) -> Self {
        let monomials = (min_degree..=max_degree)
            .flat_map(|d| Monomial::of_degree(num_vars, d))
            .collect();
        PowerVector {
            num_vars,
            min_degree,
            max_degree,
            monomials,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn min_degree(&self) -> u32 {
        self.min_degree
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn evaluate(&self, point: &[f64]) -> Vec<f64> {
        self.monomials.iter().map(|m| m.evaluate(point)).collect()
    }

    /// Polynomial `phi' G phi` for a symmetric matrix `G`.
    pub fn quadratic_form(&self, gram: &DMatrix<f64>) -> Polynomial {
        let mut p = Polynomial::zero(self.num_vars);
        let k = self.len();
        for i in 0..k {
            for j in 0..k {
                let g = gram[(i, j)];
                if g != 0.0 {
                    p.add_term(self.monomials[i].mul(&self.monomials[j]), g);
                }
            }
        }
        p
    }
}

/// The power vector `phi(n, d)` holding every monomial of degree at most `d`.
pub fn power_vector(num_vars: usize, max_degree: u32) -> PowerVector {
    PowerVector::with_degree_range(num_vars, 0, max_degree)
}

fn binomial(n: u64, k: u64) -> Option<u64> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// `(l, theta)`: the power-vector length `C(n+d, d)` and the dimension of the
/// space of Gram matrices representing the zero polynomial.
pub fn smr_dimensions(num_vars: usize, half_degree: u32) -> Result<(u64, u64), PolyError> {
    if num_vars == 0 {
        return Err(PolyError::InvalidArgument("at least one variable is required".into()));
    }
    let n = num_vars as u64;
    let d = half_degree as u64;
    let capacity = || PolyError::Capacity { num_vars, degree: half_degree };
    let l = binomial(n.checked_add(d).ok_or_else(capacity)?, d).ok_or_else(capacity)?;
    let l2 = binomial(n.checked_add(2 * d).ok_or_else(capacity)?, 2 * d).ok_or_else(capacity)?;
    let pairs = (l as u128) * (l as u128 + 1) / 2;
    let theta = pairs.checked_sub(l2 as u128).ok_or_else(capacity)?;
    if theta > u64::MAX as u128 {
        return Err(capacity());
    }
    Ok((l, theta as u64))
}

/// Gram positions `(i, j)`, `i <= j`, grouped by the monomial they generate.
#[derive(Clone, Debug)]
pub struct GramLayout {
    positions: BTreeMap<Monomial, Vec<(usize, usize)>>,
    canonical: HashMap<Monomial, (usize, usize)>,
}

impl GramLayout {
    pub fn new(phi: &PowerVector) -> Self {
        let mons = phi.monomials();
        let mut positions: BTreeMap<Monomial, Vec<(usize, usize)>> = BTreeMap::new();
        for i in 0..mons.len() {
            for j in i..mons.len() {
                positions.entry(mons[i].mul(&mons[j])).or_default().push((i, j));
            }
        }
        let canonical = positions
            .iter()
            .map(|(m, list)| (m.clone(), pick_canonical(mons, list)))
            .collect();
        GramLayout { positions, canonical }
    }

    /// The position a coefficient of `m` is stored at, if `m` is representable.
    pub fn canonical(&self, m: &Monomial) -> Option<(usize, usize)> {
        self.canonical.get(m).copied()
    }

    pub fn positions(&self) -> impl Iterator<Item = (&Monomial, &Vec<(usize, usize)>)> {
        self.positions.iter()
    }

    pub fn num_monomials(&self) -> usize {
        self.positions.len()
    }

    /// Sparse symmetric matrices spanning `{L : phi' L phi == 0}`.
    ///
    /// For every monomial generated by `k` positions, the `k - 1` directions
    /// pair each non-canonical position with the canonical one.
    pub fn null_directions(&self) -> Vec<SymSparse> {
        let mut out = Vec::new();
        for (m, list) in &self.positions {
            if list.len() < 2 {
                continue;
            }
            let c = self.canonical[m];
            let wc = weight(c);
            for &p in list {
                if p == c {
                    continue;
                }
                out.push(SymSparse {
                    entries: vec![(p.0, p.1, 1.0), (c.0, c.1, -weight(p) / wc)],
                });
            }
        }
        out
    }
}

fn weight(p: (usize, usize)) -> f64 {
    if p.0 == p.1 {
        1.0
    } else {
        2.0
    }
}

fn pick_canonical(mons: &[Monomial], list: &[(usize, usize)]) -> (usize, usize) {
    if let Some(&d) = list.iter().find(|(i, j)| i == j) {
        return d;
    }
    *list
        .iter()
        .min_by_key(|(i, j)| (mons[*i].degree() as i64 - mons[*j].degree() as i64).abs())
        .expect("non-empty position list")
}

/// Symmetric matrix stored as upper-triangle triplets `(i, j, v)`, `i <= j`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymSparse {
    pub entries: Vec<(usize, usize, f64)>,
}

impl SymSparse {
    pub fn to_dense(&self, dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        }
        m
    }
}

/// Gram representation of a polynomial: `phi' (base + sum_k delta_k N_k) phi`.
#[derive(Clone, Debug)]
pub struct SmrForm {
    pub phi: PowerVector,
    pub base: DMatrix<f64>,
    pub null_basis: Vec<DMatrix<f64>>,
}

impl SmrForm {
    /// `base + sum_k delta_k N_k`.
    pub fn matrix(&self, delta: &[f64]) -> DMatrix<f64> {
        assert_eq!(delta.len(), self.null_basis.len());
        let mut m = self.base.clone();
        for (d, n) in delta.iter().zip(&self.null_basis) {
            m += n * *d;
        }
        m
    }
}

/// SMR matrix of `p` with respect to an explicit power vector.
pub fn smr_lift(p: &Polynomial, phi: &PowerVector) -> Result<DMatrix<f64>, PolyError> {
    smr_lift_with(p, phi, &GramLayout::new(phi))
}

pub fn smr_lift_with(p: &Polynomial, phi: &PowerVector, layout: &GramLayout) -> Result<DMatrix<f64>, PolyError> {
    if p.num_vars() != phi.num_vars() {
        return Err(PolyError::DimensionMismatch {
            expected: phi.num_vars(),
            found: p.num_vars(),
        });
    }
    let k = phi.len();
    let mut g = DMatrix::zeros(k, k);
    for (m, c) in p.terms() {
        let (i, j) = layout.canonical(m).ok_or_else(|| PolyError::DegreeExceedsBasis {
            monomial: m.to_string(),
            basis_degree: phi.max_degree(),
        })?;
        if i == j {
            g[(i, i)] += c;
        } else {
            g[(i, j)] += c / 2.0;
            g[(j, i)] += c / 2.0;
        }
    }
    Ok(g)
}

/// Basis of the null space `{L symmetric : phi(n,d)' L phi(n,d) == 0}`.
pub fn smr_null_basis(num_vars: usize, half_degree: u32) -> Vec<DMatrix<f64>> {
    let phi = power_vector(num_vars, half_degree);
    let k = phi.len();
    GramLayout::new(&phi)
        .null_directions()
        .into_iter()
        .map(|s| s.to_dense(k))
        .collect()
}

/// Full SMR of `p` over `phi(n, ceil(deg p / 2))`.
pub fn smr_of(p: &Polynomial) -> SmrForm {
    let d = p.degree().div_ceil(2);
    let phi = power_vector(p.num_vars(), d);
    let layout = GramLayout::new(&phi);
    let base = smr_lift_with(p, &phi, &layout).expect("half-degree basis spans every monomial");
    let k = phi.len();
    let null_basis = layout.null_directions().into_iter().map(|s| s.to_dense(k)).collect();
    SmrForm { phi, base, null_basis }
}
