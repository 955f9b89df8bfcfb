//! Even polynomial barrier shapes `Y(z)` with `z = |y_ij|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Geometry;
use crate::poly::{Monomial, Polynomial};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierKind {
    Connectivity,
    Collision,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierShape {
    pub kind: BarrierKind,
    /// Univariate polynomial in `z` with even powers only.
    pub poly: Polynomial,
    pub mu: f64,
}

impl BarrierShape {
    pub fn new(kind: BarrierKind, poly: Polynomial, mu: f64) -> Result<Self> {
        if poly.num_vars() != 1 {
            return Err(Error::Config("barrier polynomials are univariate in z".into()));
        }
        if !poly.is_even() {
            return Err(Error::Config(format!("barrier {poly} must contain even powers of z only")));
        }
        Ok(BarrierShape { kind, poly, mu })
    }

    /// Shape from coefficients `a_k` of `z^(2k)`.
    pub fn from_even_coeffs(kind: BarrierKind, coeffs: &[f64], mu: f64) -> Self {
        let poly = Polynomial::from_terms(1, coeffs.iter().enumerate().map(|(k, &a)| (Monomial::new(vec![2 * k as u32]), a)));
        BarrierShape { kind, poly, mu }
    }

    /// `mu * (z / r_hat)^degree`, the connectivity shape that reaches `mu` at `r_hat`.
    pub fn connectivity_power(mu: f64, r_hat: f64, degree: u32) -> Self {
        assert!(degree >= 2 && degree % 2 == 0);
        let mut coeffs = vec![0.0; degree as usize / 2 + 1];
        coeffs[degree as usize / 2] = mu / r_hat.powi(degree as i32);
        Self::from_even_coeffs(BarrierKind::Connectivity, &coeffs, mu)
    }

    /// `c2 (z^2 - r_tilde^2)^2` scaled so that the value at `d_hat` is `mu`.
    pub fn collision_quartic(mu: f64, d_hat: f64, r_tilde: f64) -> Self {
        let r2 = r_tilde * r_tilde;
        let c2 = mu / (d_hat * d_hat - r2).powi(2);
        Self::from_even_coeffs(BarrierKind::Collision, &[c2 * r2 * r2, -2.0 * c2 * r2, c2], mu)
    }

    /// Coefficients `a_k` of `z^(2k)`.
    pub fn even_coeffs(&self) -> Vec<f64> {
        let deg = self.poly.degree() as usize;
        let mut out = vec![0.0; deg / 2 + 1];
        for (m, c) in self.poly.terms() {
            out[m.exponents()[0] as usize / 2] += c;
        }
        out
    }

    pub fn degree(&self) -> u32 {
        self.poly.degree()
    }

    pub fn value(&self, z: f64) -> f64 {
        self.poly.evaluate(&[z])
    }

    pub fn derivative(&self, z: f64) -> f64 {
        self.poly.derivative(0).evaluate(&[z])
    }

    /// `Y'(z) / z`, a polynomial in `z^2` for even shapes.
    pub fn ratio(&self, z: f64) -> f64 {
        self.compiled().ratio(z * z)
    }

    pub fn compiled(&self) -> CompiledBarrier {
        let value = self.even_coeffs();
        let ratio = value.iter().enumerate().skip(1).map(|(k, a)| 2.0 * k as f64 * a).collect();
        CompiledBarrier { value, ratio }
    }
}

/// Barrier coefficients in `w = z^2` for fast evaluation.
#[derive(Clone, Debug, Default)]
pub struct CompiledBarrier {
    value: Vec<f64>,
    ratio: Vec<f64>,
}

fn horner(coeffs: &[f64], w: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * w + c)
}

impl CompiledBarrier {
    pub fn value(&self, w: f64) -> f64 {
        horner(&self.value, w)
    }

    pub fn ratio(&self, w: f64) -> f64 {
        horner(&self.ratio, w)
    }
}

/// Connectivity interval end `r_s - |tau_ij|`.
pub fn connectivity_radius(geo: &Geometry, tau_norm: f64) -> Result<f64> {
    let r = geo.r_s - tau_norm;
    if r <= 0.0 {
        return Err(Error::Config(format!("connectivity interval is empty: r_s - |tau| = {r}")));
    }
    Ok(r)
}

/// Collision interval `[d_s + |tau_ij|, r_z + |tau_ij|]`.
pub fn collision_interval(geo: &Geometry, tau_norm: f64) -> Result<(f64, f64)> {
    let lo = geo.d_s + tau_norm;
    let hi = geo.r_z + tau_norm;
    if hi <= lo {
        return Err(Error::Config(format!("collision interval [{lo}, {hi}] is empty")));
    }
    Ok((lo, hi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericCheck {
    pub pass: bool,
    /// First violating point and the violated condition.
    pub witness: Option<(f64, String)>,
}

impl NumericCheck {
    fn fail(z: f64, what: &str) -> Self {
        NumericCheck {
            pass: false,
            witness: Some((z, what.to_string())),
        }
    }
}

pub const DEFAULT_GRID: usize = 10_000;

/// Dense-grid check of the sign, boundary and monotonicity conditions.
pub fn validate_barrier_numeric(b: &BarrierShape, geo: &Geometry, tau_norm: f64, grid: usize) -> Result<NumericCheck> {
    let grid = grid.max(2);
    let scale = b.mu.abs().max(1.0);
    match b.kind {
        BarrierKind::Connectivity => {
            let r_hat = connectivity_radius(geo, tau_norm)?;
            if b.value(0.0).abs() > 1e-9 * scale {
                return Ok(NumericCheck::fail(0.0, "value at zero must vanish"));
            }
            if (b.value(r_hat) - b.mu).abs() > 1e-6 * scale {
                return Ok(NumericCheck::fail(r_hat, "value at the connectivity radius must equal mu"));
            }
            for k in 0..grid {
                let z = r_hat * k as f64 / (grid - 1) as f64;
                if b.value(z) < -1e-12 * scale {
                    return Ok(NumericCheck::fail(z, "negative value"));
                }
            }
            for k in 0..grid {
                let z = r_hat * k as f64 / (grid - 1) as f64;
                let ratio = b.ratio(z);
                if !ratio.is_finite() || ratio < 0.0 || (z > 0.0 && ratio <= 0.0) {
                    return Ok(NumericCheck::fail(z, "derivative over z must be positive and bounded"));
                }
                if z > 0.0 && b.derivative(z) <= 0.0 {
                    return Ok(NumericCheck::fail(z, "derivative must be positive"));
                }
            }
        }
        BarrierKind::Collision => {
            let (d_hat, z_max) = collision_interval(geo, tau_norm)?;
            if (b.value(d_hat) - b.mu).abs() > 1e-6 * scale {
                return Ok(NumericCheck::fail(d_hat, "value at the safety radius must equal mu"));
            }
            for k in 0..grid {
                let z = z_max * k as f64 / (grid - 1) as f64;
                if b.value(z) < -1e-12 * scale {
                    return Ok(NumericCheck::fail(z, "negative value"));
                }
            }
            for k in 0..grid {
                let z = d_hat + (z_max - d_hat) * k as f64 / (grid - 1) as f64;
                let d = b.derivative(z);
                if d > 0.0 || (k + 1 < grid && d >= 0.0) {
                    return Ok(NumericCheck::fail(z, "derivative must be negative"));
                }
            }
        }
    }
    Ok(NumericCheck { pass: true, witness: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo() -> Geometry {
        Geometry {
            r_a: 0.75,
            r_c: 0.9375,
            r_z: 3.5,
            r_s: 11.0,
            eps: 0.1,
            d_s: 1.921875,
        }
    }

    #[test]
    fn quartic_connectivity_passes() {
        let r_hat = 11.0 - 4.5;
        let b = BarrierShape::connectivity_power(50.0, r_hat, 4);
        assert!(validate_barrier_numeric(&b, &geo(), 4.5, DEFAULT_GRID).unwrap().pass);
        let six = BarrierShape::connectivity_power(50.0, r_hat, 6);
        assert!(validate_barrier_numeric(&six, &geo(), 4.5, DEFAULT_GRID).unwrap().pass);
    }

    #[test]
    fn negative_shape_fails_with_witness() {
        let b = BarrierShape::from_even_coeffs(BarrierKind::Connectivity, &[0.0, -1.0], -(6.5f64.powi(2)));
        let out = validate_barrier_numeric(&b, &geo(), 4.5, DEFAULT_GRID).unwrap();
        assert!(!out.pass);
        let (z, what) = out.witness.unwrap();
        assert!(z > 0.0);
        assert_eq!(what, "negative value");
    }

    #[test]
    fn collision_quartic_passes_on_its_interval() {
        let (d_hat, z_max) = collision_interval(&geo(), 4.5).unwrap();
        let b = BarrierShape::collision_quartic(50.0, d_hat, z_max);
        assert!((b.value(d_hat) - 50.0).abs() < 1e-9);
        assert!(validate_barrier_numeric(&b, &geo(), 4.5, DEFAULT_GRID).unwrap().pass);
        // centred at r_z the shape increases on the interval
        let short = BarrierShape::collision_quartic(50.0, d_hat, 3.5);
        assert!(!validate_barrier_numeric(&short, &geo(), 4.5, DEFAULT_GRID).unwrap().pass);
    }

    #[test]
    fn ratio_matches_derivative() {
        let b = BarrierShape::from_even_coeffs(BarrierKind::Connectivity, &[0.0, 0.3, 0.02], 1.0);
        for z in [0.5, 1.0, 2.5] {
            assert!((b.ratio(z) - b.derivative(z) / z).abs() < 1e-12);
        }
        assert!(connectivity_radius(&geo(), 12.0).is_err());
    }
}
