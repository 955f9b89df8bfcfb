//! Barrier validity as univariate SOS conditions in `t = z / L`.

use super::sos::{LinExpr, LinPoly, SosProgram};
use super::{solve_checked, Degrees, EstimatorOptions, SosCertificate};
use crate::dynamics::barrier::{collision_interval, connectivity_radius};
use crate::dynamics::{BarrierKind, BarrierShape};
use crate::error::{Error, Result};
use crate::graph::Geometry;
use crate::poly::{Monomial, PowerVector};

/// `[0, r_s - tau]` for connectivity and `[d_s + tau, r_z + tau]` for collision.
pub fn validity_interval(kind: BarrierKind, geo: &Geometry, tau_norm: f64) -> Result<(f64, f64)> {
    match kind {
        BarrierKind::Connectivity => Ok((0.0, connectivity_radius(geo, tau_norm)?)),
        BarrierKind::Collision => collision_interval(geo, tau_norm),
    }
}

fn t_pow(k: u32) -> Monomial {
    Monomial::new(vec![k])
}

/// Adds the validity conditions for `Y(z) = sum a_k z^(2k)` with affine
/// coefficients `a[k]`. Constant boundary conditions are checked directly.
pub(crate) fn add_validity(prog: &mut SosProgram, kind: BarrierKind, a: &[LinExpr], mu: f64, interval: (f64, f64), tag: &str) -> Result<()> {
    let (lo, hi) = interval;
    if !(hi > lo && hi > 0.0) {
        return Err(Error::Config(format!("barrier interval [{lo}, {hi}] is empty")));
    }
    let big_k = a.len().saturating_sub(1) as u32;
    let l = hi;
    // coefficients of t^(2k)
    let b: Vec<LinExpr> = a.iter().enumerate().map(|(k, e)| e.scaled(l.powi(2 * k as i32))).collect();
    let scale = mu.abs().max(1.0);

    let mut value = LinPoly::zero(1);
    for (k, e) in b.iter().enumerate() {
        value.add_term(t_pow(2 * k as u32), e, 1.0);
    }
    let value_lo = u32::from(kind == BarrierKind::Connectivity);
    prog.constrain_sos(&format!("{tag}value"), &value, PowerVector::with_degree_range(1, value_lo, big_k), 0.0);

    let anchor = match kind {
        BarrierKind::Connectivity => hi,
        BarrierKind::Collision => lo,
    };
    let mut at_anchor = LinExpr::constant(-mu);
    for (k, e) in b.iter().enumerate() {
        at_anchor.add_scaled(e, (anchor / l).powi(2 * k as i32));
    }
    let mut equalities = vec![at_anchor];
    if kind == BarrierKind::Connectivity {
        equalities.push(b[0].clone());
    }
    for eq in equalities {
        if eq.coeffs.values().all(|c| *c == 0.0) {
            if eq.constant.abs() > 1e-6 * scale {
                return Err(Error::Refused(format!("{tag}boundary value misses mu by {}", eq.constant)));
            }
        } else {
            prog.add_equality(&eq);
        }
    }

    let mult_half = big_k.saturating_sub(1);
    match kind {
        BarrierKind::Connectivity => {
            let mut ratio = LinPoly::zero(1);
            for (k, e) in b.iter().enumerate().skip(1) {
                ratio.add_term(t_pow(2 * k as u32 - 2), e, 2.0 * k as f64);
            }
            // slope = t * ratio, so the interval condition holds with s1 = ratio, s2 = 0
            prog.constrain_sos(&format!("{tag}ratio"), &ratio, PowerVector::with_degree_range(1, 0, mult_half), 0.0);
        }
        BarrierKind::Collision => {
            // L * dY/dz as a polynomial in t
            let mut slope = LinPoly::zero(1);
            for (k, e) in b.iter().enumerate().skip(1) {
                slope.add_term(t_pow(2 * k as u32 - 1), e, 2.0 * k as f64);
            }
            let t = crate::poly::Polynomial::var(1, 0);
            let one = crate::poly::Polynomial::constant(1, 1.0);
            let start = crate::poly::Polynomial::constant(1, lo / l);
            let s3 = prog.sos_multiplier(&format!("{tag}s3"), PowerVector::with_degree_range(1, 0, mult_half), 0.0);
            let s4 = prog.sos_multiplier(&format!("{tag}s4"), PowerVector::with_degree_range(1, 0, mult_half), 0.0);
            let mut rest = slope.scaled(-1.0);
            rest.add_scaled(&s3.mul_poly(&(&t - &start)), -1.0);
            rest.add_scaled(&s4.mul_poly(&(&one - &t)), -1.0);
            prog.constrain_sos(&format!("{tag}slope"), &rest, PowerVector::with_degree_range(1, 0, big_k), 0.0);
        }
    }
    Ok(())
}

/// SOS certificate that a fixed shape satisfies its sign, boundary and
/// monotonicity conditions on `interval`.
pub fn barrier_validity_sos(shape: &BarrierShape, interval: (f64, f64), opts: &EstimatorOptions) -> Result<SosCertificate> {
    let a: Vec<LinExpr> = shape.even_coeffs().into_iter().map(LinExpr::constant).collect();
    let mut prog = SosProgram::new();
    add_validity(&mut prog, shape.kind, &a, shape.mu, interval, "")?;
    let sol = solve_checked(&prog, opts, "barrier validity")?;
    Ok(SosCertificate::from_solution("barrier validity", "value", &sol, Degrees::default()))
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
    fn quartic_connectivity_certified() {
        let iv = validity_interval(BarrierKind::Connectivity, &geo(), 4.5).unwrap();
        let b = BarrierShape::connectivity_power(50.0, iv.1, 4);
        let cert = barrier_validity_sos(&b, iv, &EstimatorOptions::default()).unwrap();
        assert!(cert.verify(1e-7));
    }

    #[test]
    fn non_monotone_shape_refused() {
        let b = BarrierShape::from_even_coeffs(BarrierKind::Connectivity, &[0.0, -1.0, 1.0], 0.0);
        assert!(matches!(barrier_validity_sos(&b, (0.0, 1.0), &EstimatorOptions::default()), Err(Error::Refused(_))));
    }

    #[test]
    fn collision_quartic_certified() {
        let iv = validity_interval(BarrierKind::Collision, &geo(), 4.5).unwrap();
        let b = BarrierShape::collision_quartic(50.0, iv.0, iv.1);
        let cert = barrier_validity_sos(&b, iv, &EstimatorOptions::default()).unwrap();
        assert!(cert.verify(1e-7));
        let wrong_mu = BarrierShape { mu: 10.0, ..b };
        assert!(barrier_validity_sos(&wrong_mu, iv, &EstimatorOptions::default()).is_err());
    }
}
