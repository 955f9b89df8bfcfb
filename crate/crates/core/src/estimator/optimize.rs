//! Alternating search over the connectivity barrier coefficients: a level
//! and multiplier from bisection, then a trace-minimizing barrier with that
//! multiplier and level held fixed.

use log::info;
use serde::{Deserialize, Serialize};

use super::barrier_sos::{add_validity, validity_interval};
use super::sos::{basis_for, LinExpr, LinPoly, SosProgram};
use super::{
    barrier_validity_sos, certify_final, default_r_degree, estimate_c_gevp, exclusion_degree, merge, CertifiedRegion,
    EstimatorOptions, Mode, RegionProblem,
};
use crate::dynamics::{BarrierKind, BarrierShape, Barriers, FrozenModel};
use crate::error::{Error, Result};
use crate::graph::Geometry;
use crate::poly::{Monomial, Polynomial, PowerVector};
use crate::sdp::ConicStatus;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeOptions {
    pub n_iters: usize,
    pub estimator: EstimatorOptions,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            n_iters: 10,
            estimator: EstimatorOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizeOutcome {
    pub barriers: Barriers,
    pub region: CertifiedRegion,
    /// Minimal trace of the Gram matrix of `W` for the final barrier.
    pub zeta: f64,
    pub kappa: f64,
    pub baseline_c: f64,
    pub baseline_zeta: f64,
    pub baseline_kappa: f64,
    /// Baseline trace followed by one entry per round.
    pub traces: Vec<f64>,
    /// Certified level after each round, starting with the baseline.
    pub levels: Vec<f64>,
    pub diagnostics: Vec<String>,
}

struct Frozen<'a> {
    s: &'a Polynomial,
    c: f64,
}

fn w_linear(model: &FrozenModel, a: &[LinExpr]) -> LinPoly {
    let mut w = LinPoly::from_poly(&model.w_base);
    for (p, e) in model.w_conn.iter().zip(a) {
        for (m, c) in p.terms() {
            w.add_term(m.clone(), e, c);
        }
    }
    w
}

fn w_range(model: &FrozenModel) -> (u32, u32) {
    let mut r = LinPoly::from_poly(&model.w_base).degree_range();
    for p in &model.w_conn {
        r = merge(r, LinPoly::from_poly(p).degree_range());
    }
    r.unwrap_or((0, 0))
}

/// Minimizes the trace of the Gram matrix of `W(a)`. With `frozen`, the
/// coefficients are free and must keep the barrier valid and the frozen
/// level certified; otherwise `a` is fixed.
fn min_trace(
    model: &FrozenModel,
    problem: &RegionProblem,
    a_fixed: &[f64],
    frozen: Option<Frozen<'_>>,
    interval: (f64, f64),
    mu: f64,
    opts: &EstimatorOptions,
) -> Result<(Vec<f64>, f64)> {
    let m = model.num_vars();
    let mut prog = SosProgram::new();
    let a: Vec<LinExpr> = match frozen {
        Some(_) => a_fixed.iter().map(|_| LinExpr::var(prog.scalar())).collect(),
        None => a_fixed.iter().map(|v| LinExpr::constant(*v)).collect(),
    };
    let w = w_linear(model, &a);
    prog.constrain_sos("W", &w, basis_for(m, w_range(model), opts.reduced_bases), 0.0);
    if let Some(fz) = &frozen {
        let mut all = vec![LinExpr::constant(0.0)];
        all.extend(a.iter().cloned());
        add_validity(&mut prog, BarrierKind::Connectivity, &all, mu, interval, "barrier ")?;

        let mut psi = LinPoly::from_poly(&-&problem.wdot);
        psi.add_scaled(&w.mul_poly(fz.s), 1.0);
        psi.add_poly(fz.s, -fz.c);
        let mut range = psi.degree_range();
        for (bi, block) in problem.blocks.iter().enumerate() {
            if opts.mode == Mode::Strict && block.polys.len() != 1 {
                continue;
            }
            for (pi, omega) in block.polys.iter().enumerate() {
                let deg = opts.r_degree.unwrap_or_else(|| default_r_degree(problem, omega));
                let lo = if opts.reduced_bases && omega.evaluate(&vec![0.0; m]) < 0.0 { 1 } else { 0 };
                let r = prog.sos_multiplier(&format!("r{bi}_{pi}"), PowerVector::with_degree_range(m, lo, deg / 2), 0.0);
                let term = r.mul_poly(omega);
                range = merge(range, term.degree_range());
                psi.add_scaled(&term, 1.0);
            }
        }
        let range = range.unwrap_or((0, 0));
        prog.constrain_sos("decrease", &psi, basis_for(m, range, opts.reduced_bases), 0.0);

        if opts.mode == Mode::Strict {
            for (bi, block) in problem.blocks.iter().enumerate() {
                let mut target = w.clone();
                target.add_term(Monomial::one(m), &LinExpr::constant(-fz.c), 1.0);
                let mut top = model.w.degree();
                for (pi, omega) in block.polys.iter().enumerate() {
                    let deg = exclusion_degree(&model.w, omega);
                    let t = prog.sos_multiplier(&format!("t{bi}_{pi}"), PowerVector::with_degree_range(m, 0, deg / 2), 0.0);
                    target.add_scaled(&t.mul_poly(omega), -1.0);
                    top = top.max(deg + omega.degree());
                }
                prog.constrain_sos(&format!("exclusion{bi}"), &target, PowerVector::with_degree_range(m, 0, top.div_ceil(2)), 0.0);
            }
        }
    }
    let trace = prog.gram_trace("W").expect("W block exists");
    prog.set_objective(&trace);
    let sol = prog.solve(opts.tol_psd);
    let accept_raw = frozen.is_some() && sol.outcome.status == ConicStatus::Unknown;
    match (sol.outcome.status, &sol.outcome.witness) {
        (ConicStatus::Feasible, Some(x)) => Ok((a.iter().map(|e| e.eval(x)).collect(), trace.eval(x))),
        // candidate only: the caller re-certifies every accepted coefficient vector
        (ConicStatus::Unknown, Some(x)) if accept_raw => Ok((a.iter().map(|e| e.eval(x)).collect(), trace.eval(x))),
        (ConicStatus::Infeasible, _) => Err(Error::Refused("trace minimization is infeasible".into())),
        (_, _) => Err(Error::Solver(format!("trace minimization: {}", sol.outcome.diagnostic))),
    }
}

fn problem_for(model: &FrozenModel, a: &[f64]) -> RegionProblem {
    RegionProblem {
        w: model.w_with(a),
        wdot: model.wdot.clone(),
        blocks: model.blocks.clone(),
    }
}

/// Level `c` certified for `W(a)`, trying small back-offs when solver accuracy bites.
fn region_at(problem: &RegionProblem, c: f64, base: &CertifiedRegion, opts: &EstimatorOptions) -> Result<CertifiedRegion> {
    let mut last = None;
    for k in 0..4 {
        let c_try = c * (1.0 - opts.backoff * 10f64.powi(k));
        match certify_final(problem, c_try, opts) {
            Ok((decrease, exclusions)) => {
                return Ok(CertifiedRegion {
                    w: problem.w.clone(),
                    c: c_try,
                    decrease,
                    exclusions,
                    ..base.clone()
                })
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Alternates between bisection for `(c, s)` and trace minimization over the
/// connectivity coefficients. The collision shape does not enter `W` at the
/// formation and is only validated.
pub fn optimize_barriers(model: &FrozenModel, barriers: &Barriers, geo: &Geometry, tau_norm: f64, opts: &OptimizeOptions) -> Result<OptimizeOutcome> {
    let est = &opts.estimator;
    let conn = &barriers.connectivity;
    let interval = validity_interval(BarrierKind::Connectivity, geo, tau_norm)?;
    barrier_validity_sos(conn, interval, est)?;
    barrier_validity_sos(&barriers.collision, validity_interval(BarrierKind::Collision, geo, tau_norm)?, est)?;
    let coeffs = conn.even_coeffs();
    let mut a: Vec<f64> = coeffs.iter().skip(1).copied().collect();
    a.resize(model.w_conn.len(), 0.0);

    let problem = problem_for(model, &a);
    let mut region = estimate_c_gevp(&problem, est)?;
    let (_, baseline_zeta) = min_trace(model, &problem, &a, None, interval, conn.mu, est)?;
    let baseline_c = region.c;
    let mut c_best = baseline_c;
    let mut traces = vec![baseline_zeta];
    let mut levels = vec![baseline_c];
    let mut diagnostics = Vec::new();
    let mut best = (a.clone(), region.clone(), baseline_zeta);

    for round in 0..opts.n_iters {
        let problem = problem_for(model, &a);
        let s = match region.decrease.multiplier("s") {
            Some(s) => s.clone(),
            None => Polynomial::zero(model.num_vars()),
        };
        let zeta_prev = *traces.last().expect("baseline recorded");
        let step = min_trace(model, &problem, &a, Some(Frozen { s: &s, c: region.c }), interval, conn.mu, est);
        let candidate = match step {
            Ok((a_new, _)) => a_new,
            Err(e) => {
                diagnostics.push(format!("round {round}: {e}; keeping the incumbent"));
                traces.push(zeta_prev);
                levels.push(c_best);
                continue;
            }
        };
        let mut accepted = None;
        for theta in [1.0, 0.9, 0.5, 0.1] {
            let a_try: Vec<f64> = a.iter().zip(&candidate).map(|(o, n)| o + theta * (n - o)).collect();
            let mut all = vec![0.0];
            all.extend(a_try.iter().copied());
            let shape = BarrierShape::from_even_coeffs(BarrierKind::Connectivity, &all, conn.mu);
            if barrier_validity_sos(&shape, interval, est).is_err() {
                continue;
            }
            let problem_try = problem_for(model, &a_try);
            match min_trace(model, &problem_try, &a_try, None, interval, conn.mu, est) {
                Ok((_, zeta)) if zeta <= zeta_prev + 1e-7 * zeta_prev.abs().max(1.0) => {
                    accepted = Some((a_try, zeta.min(zeta_prev)));
                    break;
                }
                _ => {}
            }
        }
        match accepted {
            Some((a_new, zeta)) => {
                a = a_new;
                traces.push(zeta);
            }
            None => {
                diagnostics.push(format!("round {round}: no certified step lowers the trace"));
                traces.push(zeta_prev);
            }
        }
        let problem = problem_for(model, &a);
        let fresh = match estimate_c_gevp(&problem, est) {
            Ok(r) => r,
            Err(e) => {
                diagnostics.push(format!("round {round}: bisection failed ({e})"));
                region_at(&problem, c_best, &region, est)?
            }
        };
        region = if fresh.c >= c_best {
            fresh
        } else {
            match region_at(&problem, c_best, &fresh, est) {
                Ok(r) => r,
                Err(e) => {
                    diagnostics.push(format!("round {round}: incumbent level {c_best} not re-certified ({e})"));
                    fresh
                }
            }
        };
        c_best = c_best.max(region.c);
        levels.push(region.c);
        let zeta_now = *traces.last().expect("baseline recorded");
        if region.c / zeta_now > best.1.c / best.2 {
            best = (a.clone(), region.clone(), zeta_now);
        }
        info!("round {round}: c = {}, trace = {}", region.c, traces.last().unwrap());
    }

    let (a, region, zeta) = best;
    let mut all = vec![0.0];
    all.extend(a.iter().copied());
    let connectivity = BarrierShape::from_even_coeffs(BarrierKind::Connectivity, &all, conn.mu);
    Ok(OptimizeOutcome {
        barriers: Barriers {
            connectivity,
            collision: barriers.collision.clone(),
        },
        kappa: region.c / zeta,
        zeta,
        baseline_c,
        baseline_zeta,
        baseline_kappa: baseline_c / baseline_zeta,
        region,
        traces,
        levels,
        diagnostics,
    })
}
