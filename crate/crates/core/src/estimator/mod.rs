//! Certified inner estimates of the safety-guaranteed region: level-set
//! certificates, bisection on the generalized eigenvalue parameter, safety
//! exclusion, barrier validity and barrier-shape optimization.

mod barrier_sos;
mod optimize;
pub mod sos;

use log::{debug, warn};
use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use barrier_sos::{barrier_validity_sos, validity_interval};
pub use optimize::{optimize_barriers, OptimizeOptions, OptimizeOutcome};

use crate::dynamics::{BlockKind, FrozenModel, TopologyBlock};
use crate::error::{Error, Result};
use crate::poly::{smr_lift, Polynomial, PowerVector};
use crate::sdp::{ConicStatus, TOL_PSD};
use sos::{basis_for, GramWitness, LinExpr, LinPoly, SosProgram, SosSolution};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Decrease multipliers only on single-polynomial blocks, plus one
    /// exclusion certificate per block.
    #[default]
    Strict,
    /// Multipliers on every block polynomial and no exclusion pass.
    PaperFaithful,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorOptions {
    pub sigma1: f64,
    pub sigma2: f64,
    pub s_degree: Option<u32>,
    pub r_degree: Option<u32>,
    pub reduced_bases: bool,
    pub mode: Mode,
    pub bisect_tol: f64,
    /// Fraction of the pole distance kept free at the lower end of the bracket.
    pub bracket_margin: f64,
    pub tol_psd: f64,
    /// Lower eigenvalue bound for the `s` and main Gram blocks.
    pub mu_strict: f64,
    /// Relative back-off applied to the final level.
    pub backoff: f64,
    pub max_degree: u32,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            sigma1: 1.0,
            sigma2: 1.0,
            s_degree: None,
            r_degree: None,
            reduced_bases: true,
            mode: Mode::Strict,
            bisect_tol: 1e-4,
            bracket_margin: 1e-3,
            tol_psd: TOL_PSD,
            mu_strict: 0.0,
            backoff: 1e-6,
            max_degree: 16,
        }
    }
}

/// `W`, its rate along the closed loop and the sets the region must avoid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionProblem {
    pub w: Polynomial,
    pub wdot: Polynomial,
    pub blocks: Vec<TopologyBlock>,
}

impl RegionProblem {
    pub fn new(w: Polynomial, field: &[Polynomial], blocks: Vec<TopologyBlock>, max_degree: u32) -> Result<Self> {
        let wdot = build_wdot(&w, field, max_degree)?;
        Ok(RegionProblem { w, wdot, blocks })
    }

    pub fn from_model(m: &FrozenModel) -> Self {
        RegionProblem {
            w: m.w.clone(),
            wdot: m.wdot.clone(),
            blocks: m.blocks.clone(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.w.num_vars()
    }

    fn r_eligible(&self, mode: Mode) -> impl Iterator<Item = (usize, &TopologyBlock)> {
        self.blocks.iter().enumerate().filter(move |(_, b)| mode == Mode::PaperFaithful || b.polys.len() == 1)
    }
}

/// Lie derivative of `w` along `field`.
pub fn build_wdot(w: &Polynomial, field: &[Polynomial], max_degree: u32) -> Result<Polynomial> {
    if field.len() != w.num_vars() {
        return Err(Error::Config(format!("field has {} components for {} variables", field.len(), w.num_vars())));
    }
    let mut out = Polynomial::zero(w.num_vars());
    for (k, f) in field.iter().enumerate() {
        let d = w.derivative(k);
        if d.is_zero() {
            continue;
        }
        out = &out + &(&d * f);
    }
    let out = out.pruned(1e-13 * out.max_abs_coeff().max(1.0));
    if out.degree() > max_degree {
        return Err(Error::Config(format!("rate has degree {} above the cap {max_degree}", out.degree())));
    }
    Ok(out)
}

fn even_up(d: i64) -> u32 {
    let d = d.max(0) as u32;
    d + d % 2
}

/// Default multiplier degrees.
pub fn default_s_degree(p: &RegionProblem) -> u32 {
    even_up((p.wdot.degree() as i64 - p.w.degree() as i64).max(2))
}

pub fn default_r_degree(p: &RegionProblem, omega: &Polynomial) -> u32 {
    even_up((p.wdot.degree() as i64 - omega.degree() as i64).max(2))
}

/// Even degree of an exclusion multiplier for `omega`.
pub fn exclusion_degree(w: &Polynomial, omega: &Polynomial) -> u32 {
    let d = (w.degree() as i64 - omega.degree() as i64).max(0) as u32;
    d - d % 2
}

fn vanishes_at_origin(p: &Polynomial) -> bool {
    p.evaluate(&vec![0.0; p.num_vars()]).abs() < 1e-12
}

/// Resolved multiplier degrees.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Degrees {
    pub s: u32,
    pub r: Vec<(String, u32)>,
    pub t: Vec<(String, u32)>,
    /// Side of the main Gram block.
    pub psi_side: usize,
}

/// A set of Gram witnesses proving one polynomial identity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SosCertificate {
    pub label: String,
    /// The certified polynomial with multipliers substituted.
    pub target: Polynomial,
    pub multipliers: Vec<(String, Polynomial)>,
    pub grams: Vec<GramWitness>,
    pub margin: f64,
    pub degrees: Degrees,
}

impl SosCertificate {
    fn from_solution(label: &str, target: &str, sol: &SosSolution, degrees: Degrees) -> Self {
        let grams = sol.grams.clone();
        let target = sol.gram(target).map(|g| g.polynomial.clone()).unwrap_or_else(|| Polynomial::zero(0));
        let multipliers = grams.iter().filter(|g| !g.constraint).map(|g| (g.name.clone(), g.polynomial.clone())).collect();
        let margin = grams.iter().map(|g| g.min_eigenvalue).fold(f64::INFINITY, f64::min);
        SosCertificate {
            label: label.to_string(),
            target,
            multipliers,
            grams,
            margin,
            degrees,
        }
    }

    /// Independent re-check of every Gram matrix.
    pub fn verify(&self, tol_psd: f64) -> bool {
        self.grams.iter().all(|g| g.verify(tol_psd, 1e-6))
    }

    pub fn multiplier(&self, name: &str) -> Option<&Polynomial> {
        self.multipliers.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }
}

fn label_of_target() -> &'static str {
    "target"
}

fn solve_checked(prog: &SosProgram, opts: &EstimatorOptions, what: &str) -> Result<SosSolution> {
    let sol = prog.solve(opts.tol_psd);
    match sol.outcome.status {
        ConicStatus::Feasible => Ok(sol),
        ConicStatus::Infeasible => Err(Error::Refused(format!("{what}: no certificate at these degrees"))),
        ConicStatus::Unbounded => Err(Error::Solver(format!("{what}: unexpectedly unbounded"))),
        ConicStatus::Unknown => Err(Error::Solver(format!("{what}: {}", sol.outcome.diagnostic))),
    }
}

enum Level {
    Fixed(f64),
    Gevp(f64),
}

struct DecreaseProgram {
    prog: SosProgram,
    degrees: Degrees,
}

/// `-Wdot + s (W - c) + sum r_j omega_j`, or the bisection form
/// `-Wdot + W s + e (sigma1 + sigma2 W) s + sum r_j omega_j`.
fn decrease_program(p: &RegionProblem, level: Level, opts: &EstimatorOptions) -> Result<DecreaseProgram> {
    let m = p.num_vars();
    let s_deg = opts.s_degree.unwrap_or_else(|| default_s_degree(p));
    let s_lo = if opts.reduced_bases && vanishes_at_origin(&p.w) && vanishes_at_origin(&p.wdot) { 1 } else { 0 };
    let mut prog = SosProgram::new();
    let s_margin = if matches!(level, Level::Gevp(_)) { opts.mu_strict } else { 0.0 };
    let s = prog.sos_multiplier("s", PowerVector::with_degree_range(m, s_lo, s_deg / 2), s_margin);
    let mut psi = LinPoly::from_poly(&-&p.wdot);
    psi.add_scaled(&s.mul_poly(&p.w), 1.0);
    let lambda = s.mul_poly(&(&Polynomial::constant(m, opts.sigma1) + &p.w.scale(opts.sigma2)));
    let mut range = psi.degree_range();
    match level {
        Level::Fixed(c) => psi.add_scaled(&s, -c),
        Level::Gevp(e) => {
            range = merge(range, lambda.degree_range());
            psi.add_scaled(&lambda, e);
        }
    }
    let mut degrees = Degrees { s: s_deg, ..Default::default() };
    for (bi, block) in p.r_eligible(opts.mode) {
        for (pi, omega) in block.polys.iter().enumerate() {
            let deg = opts.r_degree.unwrap_or_else(|| default_r_degree(p, omega));
            let lo = if opts.reduced_bases && omega.evaluate(&vec![0.0; m]) < 0.0 { 1 } else { 0 };
            let name = format!("r{bi}_{pi}");
            let r = prog.sos_multiplier(&name, PowerVector::with_degree_range(m, lo, deg / 2), 0.0);
            let term = r.mul_poly(omega);
            range = merge(range, term.degree_range());
            psi.add_scaled(&term, 1.0);
            degrees.r.push((format!("{} #{}", block.label, pi + 1), deg));
        }
    }
    let range = merge(range, psi.degree_range()).unwrap_or((0, 0));
    let basis = basis_for(m, range, opts.reduced_bases);
    let psi_margin = if matches!(level, Level::Gevp(_)) { opts.mu_strict } else { 0.0 };
    degrees.psi_side = prog.constrain_sos(label_of_target(), &psi, basis, psi_margin);
    Ok(DecreaseProgram { prog, degrees })
}

fn merge(a: Option<(u32, u32)>, b: Option<(u32, u32)>) -> Option<(u32, u32)> {
    match (a, b) {
        (Some((a0, a1)), Some((b0, b1))) => Some((a0.min(b0), a1.max(b1))),
        (x, None) | (None, x) => x,
    }
}

/// Certifies `Wdot <= 0` on `{W <= c}` outside the single-polynomial blocks.
pub fn certify_level_set(p: &RegionProblem, c: f64, opts: &EstimatorOptions) -> Result<SosCertificate> {
    let d = decrease_program(p, Level::Fixed(c), opts)?;
    let sol = solve_checked(&d.prog, opts, &format!("decrease at c = {c}"))?;
    Ok(SosCertificate::from_solution("decrease", label_of_target(), &sol, d.degrees))
}

/// The program solved at one bisection point, exposed for inspection.
pub fn assemble_gevp_lmi(p: &RegionProblem, e: f64, opts: &EstimatorOptions) -> Result<(SosProgram, Degrees)> {
    let d = decrease_program(p, Level::Gevp(e), opts)?;
    Ok((d.prog, d.degrees))
}

/// Level corresponding to a bisection parameter.
pub fn level_from_e(e: f64, sigma1: f64, sigma2: f64) -> f64 {
    -sigma1 * e / (1.0 + sigma2 * e)
}

fn exclusion_program(w: &Polynomial, c: Option<f64>, block: &TopologyBlock) -> (SosProgram, Option<usize>, Degrees) {
    let m = w.num_vars();
    let mut prog = SosProgram::new();
    let mut target = LinPoly::from_poly(w);
    let cv = match c {
        Some(c) => {
            target.add_poly(&Polynomial::constant(m, c), -1.0);
            None
        }
        None => {
            let k = prog.scalar();
            target.add_term(crate::poly::Monomial::one(m), &LinExpr::var(k), -1.0);
            Some(k)
        }
    };
    let mut degrees = Degrees::default();
    let mut top = w.degree();
    for (i, omega) in block.polys.iter().enumerate() {
        let deg = exclusion_degree(w, omega);
        let t = prog.sos_multiplier(&format!("t{i}"), PowerVector::with_degree_range(m, 0, deg / 2), 0.0);
        target.add_scaled(&t.mul_poly(omega), -1.0);
        top = top.max(deg + omega.degree());
        degrees.t.push((format!("{} #{}", block.label, i + 1), deg));
    }
    let basis = PowerVector::with_degree_range(m, 0, top.div_ceil(2));
    degrees.psi_side = prog.constrain_sos(label_of_target(), &target, basis, 0.0);
    (prog, cv, degrees)
}

/// Certifies `{W <= c}` misses the block via `W - c - sum t_i omega_i` SOS with SOS `t_i`.
pub fn certify_safety_exclusion(w: &Polynomial, c: f64, block: &TopologyBlock, opts: &EstimatorOptions) -> Result<SosCertificate> {
    let (prog, _, degrees) = exclusion_program(w, Some(c), block);
    let sol = solve_checked(&prog, opts, &format!("exclusion of {} at c = {c}", block.label))?;
    Ok(SosCertificate::from_solution(&format!("exclusion {}", block.label), label_of_target(), &sol, degrees))
}

/// Largest `c <= cap` with an exclusion certificate.
pub fn max_exclusion_level(w: &Polynomial, block: &TopologyBlock, cap: f64, opts: &EstimatorOptions) -> Result<f64> {
    let (mut prog, cv, _) = exclusion_program(w, None, block);
    let k = cv.expect("level is a decision scalar");
    let mut cap_block = crate::sdp::LmiBlock::new(1);
    cap_block.add_constant(0, 0, cap);
    cap_block.add_coeff(k, 0, 0, -1.0);
    prog.conic.blocks.push(cap_block);
    prog.set_objective(&LinExpr::term(k, -1.0));
    let sol = prog.solve(opts.tol_psd);
    match sol.outcome.status {
        ConicStatus::Feasible => Ok(sol.value(&LinExpr::var(k)).unwrap_or(f64::NEG_INFINITY).min(cap)),
        ConicStatus::Infeasible => Err(Error::Refused(format!("no exclusion certificate for {} at any level", block.label))),
        _ => Err(Error::Solver(format!("exclusion of {}: {}", block.label, sol.outcome.diagnostic))),
    }
}

/// Checks that `W` is SOS.
pub fn check_w_sos(w: &Polynomial, opts: &EstimatorOptions) -> Result<GramWitness> {
    let mut prog = SosProgram::new();
    let lp = LinPoly::from_poly(w);
    let range = lp.degree_range().unwrap_or((0, 0));
    prog.constrain_sos("W", &lp, basis_for(w.num_vars(), range, opts.reduced_bases), 0.0);
    let sol = solve_checked(&prog, opts, "positivity of W")?;
    Ok(sol.grams[0].clone())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertifiedRegion {
    pub w: Polynomial,
    pub c: f64,
    /// Bisection result and its level before exclusion.
    pub e: f64,
    pub c_gevp: f64,
    /// The bracket end was feasible, so the decrease condition did not bound `c`.
    pub unbounded: bool,
    pub exclusion_levels: Vec<(String, f64)>,
    pub sigma1: f64,
    pub sigma2: f64,
    pub mode: Mode,
    pub decrease: SosCertificate,
    pub exclusions: Vec<SosCertificate>,
    pub diagnostics: Vec<String>,
}

impl CertifiedRegion {
    pub fn verify(&self, tol_psd: f64) -> bool {
        self.decrease.verify(tol_psd) && self.exclusions.iter().all(|c| c.verify(tol_psd))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn gevp_feasible(p: &RegionProblem, e: f64, opts: &EstimatorOptions, diag: &mut Vec<String>) -> Result<bool> {
    let (prog, _) = assemble_gevp_lmi(p, e, opts)?;
    let out = prog.solve(opts.tol_psd).outcome;
    debug!("e = {e:.6}: {:?}", out.status);
    match out.status {
        ConicStatus::Feasible => Ok(true),
        ConicStatus::Infeasible => Ok(false),
        _ => {
            diag.push(format!("e = {e}: {:?} ({}), treated as infeasible", out.status, out.diagnostic));
            Ok(false)
        }
    }
}

/// Bisection on `e` followed by the exclusion pass and a final re-certification.
pub fn estimate_c_gevp(p: &RegionProblem, opts: &EstimatorOptions) -> Result<CertifiedRegion> {
    if !(opts.sigma1 > 0.0 && opts.sigma2 > 0.0) {
        return Err(Error::Config("sigma1 and sigma2 must be positive".into()));
    }
    check_w_sos(&p.w, opts)?;
    let mut diag = Vec::new();
    let e_lo0 = -(1.0 - opts.bracket_margin) / opts.sigma2;
    let (mut lo, mut hi) = (e_lo0, 0.0);
    let unbounded = gevp_feasible(p, lo, opts, &mut diag)?;
    let e = if unbounded {
        lo
    } else {
        if !gevp_feasible(p, hi, opts, &mut diag)? {
            return Err(Error::Refused("the decrease condition fails even at e = 0".into()));
        }
        let stop = opts.bisect_tol * (hi - lo).abs();
        while hi - lo > stop.max(opts.bisect_tol * lo.abs().min(hi.abs())) && hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if gevp_feasible(p, mid, opts, &mut diag)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let c_gevp = level_from_e(e, opts.sigma1, opts.sigma2);
    let mut c = c_gevp;
    let mut exclusion_levels = Vec::new();
    if opts.mode == Mode::Strict && !p.blocks.is_empty() {
        let levels: Vec<Result<f64>> = p.blocks.par_iter().map(|b| max_exclusion_level(&p.w, b, c_gevp, opts)).collect();
        for (b, l) in p.blocks.iter().zip(levels) {
            let l = l?;
            exclusion_levels.push((b.label.clone(), l));
            c = c.min(l);
        }
    }
    if c <= 0.0 {
        return Err(Error::Refused(format!("no positive level survives exclusion (c = {c})")));
    }
    let mut last_err = None;
    for attempt in 0..4 {
        let c_try = c * (1.0 - opts.backoff * 10f64.powi(attempt));
        match certify_final(p, c_try, opts) {
            Ok((decrease, exclusions)) => {
                return Ok(CertifiedRegion {
                    w: p.w.clone(),
                    c: c_try,
                    e,
                    c_gevp,
                    unbounded,
                    exclusion_levels,
                    sigma1: opts.sigma1,
                    sigma2: opts.sigma2,
                    mode: opts.mode,
                    decrease,
                    exclusions,
                    diagnostics: diag,
                });
            }
            Err(err) => {
                warn!("re-certification at c = {c_try} failed: {err}");
                last_err = Some(err);
            }
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Decrease and exclusion certificates at a fixed level.
pub fn certify_final(p: &RegionProblem, c: f64, opts: &EstimatorOptions) -> Result<(SosCertificate, Vec<SosCertificate>)> {
    let decrease = certify_level_set(p, c, opts)?;
    let exclusions = if opts.mode == Mode::Strict {
        p.blocks.par_iter().map(|b| certify_safety_exclusion(&p.w, c, b, opts)).collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok((decrease, exclusions))
}

/// `(eta, c / trace)` from the quadratic part of `W`.
pub fn volume_surrogates(w: &Polynomial, c: f64) -> Result<(f64, f64)> {
    let m = w.num_vars();
    let q = w.homogeneous_part(2);
    let gram = smr_lift(&q, &PowerVector::with_degree_range(m, 1, 1))?;
    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    if eig.min() <= 1e-12 * eig.max().abs().max(1.0) {
        return Err(Error::Numeric("the quadratic part of W is singular".into()));
    }
    let det: f64 = eig.iter().product();
    Ok((c.powi(m as i32) / det, c / gram.trace()))
}

/// Blocks built from an unsafe set in the problem's own coordinates.
pub fn unsafe_blocks(labels: &[String], blocks: &[Vec<Polynomial>]) -> Vec<TopologyBlock> {
    labels
        .iter()
        .zip(blocks)
        .map(|(l, b)| TopologyBlock {
            kind: BlockKind::Unsafe,
            label: l.clone(),
            polys: b.clone(),
        })
        .collect()
}
