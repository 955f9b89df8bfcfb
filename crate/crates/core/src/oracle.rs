//! Certification-free ground truth by forward simulation.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{inverse_transform, simulate, MultiAgentSystem, SimOptions, Termination, TransformedState, Trajectory, ViolationKind};
use crate::error::{Error, Result};
use crate::estimator::CertifiedRegion;
use crate::poly::{CompiledPolynomials, Polynomial};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    InRegion,
    Violation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleViolation {
    Collision,
    Disconnect,
    Unsafe,
    NoConvergence,
    Divergence,
}

impl OracleViolation {
    pub fn as_str(self) -> &'static str {
        match self {
            OracleViolation::Collision => "collision",
            OracleViolation::Disconnect => "disconnect",
            OracleViolation::Unsafe => "unsafe",
            OracleViolation::NoConvergence => "no_convergence",
            OracleViolation::Divergence => "divergence",
        }
    }
}

impl From<ViolationKind> for OracleViolation {
    fn from(k: ViolationKind) -> Self {
        match k {
            ViolationKind::Disconnected => OracleViolation::Disconnect,
            ViolationKind::Collision => OracleViolation::Collision,
            ViolationKind::Unsafe => OracleViolation::Unsafe,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub verdict: Verdict,
    pub violation_kind: Option<OracleViolation>,
    pub first_violation_time: Option<f64>,
}

impl ClassificationResult {
    pub fn in_region() -> Self {
        ClassificationResult {
            verdict: Verdict::InRegion,
            violation_kind: None,
            first_violation_time: None,
        }
    }

    pub fn violation(kind: OracleViolation, t: Option<f64>) -> Self {
        ClassificationResult {
            verdict: Verdict::Violation,
            violation_kind: Some(kind),
            first_violation_time: t,
        }
    }

    pub fn is_in_region(&self) -> bool {
        self.verdict == Verdict::InRegion
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleOptions {
    pub horizon: f64,
    pub dt: f64,
    pub tol_conv: f64,
    /// Stop early, in region, once the convergence measure drops below this.
    pub settle_exit: Option<f64>,
    pub overflow_guard: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            horizon: 50.0,
            dt: 1e-2,
            tol_conv: 1e-2,
            settle_exit: Some(1e-4),
            overflow_guard: 1e8,
        }
    }
}

/// Maps an initial state in some coordinates to a verdict.
pub trait Classifier: Sync {
    fn dim(&self) -> usize;
    fn classify(&self, q0: &[f64]) -> ClassificationResult;
}

/// `q' = f(q)` with the equilibrium at the origin. An unsafe block is the set
/// where all of its polynomials are strictly positive.
#[derive(Clone, Debug)]
pub struct PolySystem {
    field: CompiledPolynomials,
    blocks: Vec<CompiledPolynomials>,
    pub opts: OracleOptions,
}

impl PolySystem {
    pub fn new(field: &[Polynomial], unsafe_blocks: &[Vec<Polynomial>], opts: OracleOptions) -> Result<Self> {
        let m = field.len();
        if field.iter().any(|p| p.num_vars() != m) || unsafe_blocks.iter().flatten().any(|p| p.num_vars() != m) {
            return Err(Error::Config(format!("vector field and unsafe set must use {m} variables")));
        }
        Ok(PolySystem {
            field: CompiledPolynomials::new(field),
            blocks: unsafe_blocks.iter().map(|b| CompiledPolynomials::new(b)).collect(),
            opts,
        })
    }

    pub fn is_unsafe(&self, q: &[f64]) -> bool {
        self.blocks.iter().any(|b| !b.is_empty() && b.evaluate(q).iter().all(|v| *v > 0.0))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Classifier for PolySystem {
    fn dim(&self) -> usize {
        self.field.len()
    }

    fn classify(&self, q0: &[f64]) -> ClassificationResult {
        self.run(q0, |_, _| {})
    }
}

impl PolySystem {
    /// RK4 from `q0`, calling `visit(t, q)` at every step until a verdict.
    pub fn run(&self, q0: &[f64], mut visit: impl FnMut(f64, &[f64])) -> ClassificationResult {
        let m = self.field.len();
        let o = &self.opts;
        let steps = (o.horizon / o.dt).round() as usize;
        let tail = steps - steps / 10;
        let mut scratch = self.field.scratch();
        let mut k = [vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]];
        let mut tmp = vec![0.0; m];
        let mut q = q0.to_vec();
        let mut tail_norm = f64::INFINITY;
        for step in 0..=steps {
            let t = step as f64 * o.dt;
            visit(t, &q);
            if self.is_unsafe(&q) {
                return ClassificationResult::violation(OracleViolation::Unsafe, Some(t));
            }
            let r = norm(&q);
            if o.settle_exit.is_some_and(|s| r < s) {
                return ClassificationResult::in_region();
            }
            if step == tail {
                tail_norm = r;
            }
            if step == steps {
                return if r < o.tol_conv && r <= tail_norm {
                    ClassificationResult::in_region()
                } else {
                    ClassificationResult::violation(OracleViolation::NoConvergence, None)
                };
            }
            self.field.evaluate_into(&q, &mut k[0], &mut scratch);
            for (stage, h) in [(1, 0.5), (2, 0.5), (3, 1.0)] {
                for i in 0..m {
                    tmp[i] = q[i] + h * o.dt * k[stage - 1][i];
                }
                self.field.evaluate_into(&tmp, &mut k[stage], &mut scratch);
            }
            for i in 0..m {
                q[i] += o.dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
            }
            if q.iter().any(|v| !v.is_finite() || v.abs() > o.overflow_guard) {
                return ClassificationResult::violation(OracleViolation::Divergence, Some(t + o.dt));
            }
        }
        unreachable!("loop returns at the last step")
    }
}

/// Closed-loop agents started from model coordinates `q`, embedded into the
/// stacked transformed state by `embed` and mapped to positions at `t0`.
#[derive(Clone, Debug)]
pub struct AgentClassifier {
    pub sys: MultiAgentSystem,
    pub embed: DMatrix<f64>,
    pub t0: f64,
    pub opts: OracleOptions,
}

impl AgentClassifier {
    fn convergence_measure(&self, traj: &Trajectory, at: usize) -> Option<f64> {
        traj.records.get(at).map(|r| self.sys.settle_measure(&r.states))
    }
}

impl Classifier for AgentClassifier {
    fn dim(&self) -> usize {
        self.embed.ncols()
    }

    fn classify(&self, q0: &[f64]) -> ClassificationResult {
        let full = &self.embed * DVector::from_column_slice(q0);
        let f = &self.sys.formation;
        let states = inverse_transform(&TransformedState::from_q(full.as_slice(), f.dim()), f, self.t0);
        if states.len() > 1 && !self.sys.initial_graph(&states).is_connected() {
            return ClassificationResult::violation(OracleViolation::Disconnect, Some(0.0));
        }
        let o = &self.opts;
        let steps = ((o.horizon / o.dt).round() as usize).max(10);
        let opts = SimOptions {
            dt: o.dt,
            horizon: o.horizon,
            stop_on_violation: true,
            record_every: steps / 10,
            overflow_guard: o.overflow_guard,
            settle_tol: o.settle_exit,
        };
        let traj = match simulate(&self.sys, &states, &opts) {
            Ok(t) => t,
            Err(Error::Divergence { step }) => return ClassificationResult::violation(OracleViolation::Divergence, Some(step as f64 * o.dt)),
            Err(_) => return ClassificationResult::violation(OracleViolation::Divergence, None),
        };
        match traj.termination {
            Termination::Violation { kind, t, .. } => ClassificationResult::violation(kind.into(), Some(t)),
            Termination::Settled { .. } => ClassificationResult::in_region(),
            Termination::Horizon => {
                let n = traj.records.len();
                let last = self.convergence_measure(&traj, n - 1).unwrap_or(f64::INFINITY);
                let before = if n >= 2 { self.convergence_measure(&traj, n - 2).unwrap_or(f64::INFINITY) } else { f64::INFINITY };
                if last < o.tol_conv && last <= before {
                    ClassificationResult::in_region()
                } else {
                    ClassificationResult::violation(OracleViolation::NoConvergence, None)
                }
            }
        }
    }
}

/// Independent stream per index so parallel results do not depend on scheduling.
fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContainmentFailure {
    pub q: Vec<f64>,
    pub w: f64,
    pub result: ClassificationResult,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub c: f64,
    pub seed: u64,
    pub n_requested: usize,
    pub n_checked: usize,
    pub draws: usize,
    /// Rejection sampling starved and ray sampling was used instead.
    pub surface_fallback: bool,
    pub bounds: Vec<(f64, f64)>,
    pub failures: Vec<ContainmentFailure>,
}

impl ContainmentReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.n_checked > 0
    }
}

/// Box containing `{W <= c}`, from the quadratic part of `W` and widened until
/// no point on its faces lies in the set.
pub fn sublevel_box(w: &Polynomial, c: f64, seed: u64) -> Result<Vec<(f64, f64)>> {
    let m = w.num_vars();
    let q = w.homogeneous_part(2);
    let mut h: DMatrix<f64> = DMatrix::zeros(m, m);
    for (mono, coef) in q.terms() {
        let e = mono.exponents();
        let vars: Vec<usize> = (0..m).filter(|&i| e[i] > 0).collect();
        match vars[..] {
            [i] => h[(i, i)] += coef,
            [i, j] => {
                h[(i, j)] += 0.5 * coef;
                h[(j, i)] += 0.5 * coef;
            }
            _ => unreachable!("quadratic monomial"),
        }
    }
    let eig: DVector<f64> = SymmetricEigen::new(h.clone()).eigenvalues;
    if eig.min() <= 1e-12 * eig.max().abs().max(1.0) {
        return Err(Error::Config("quadratic part of W is not positive definite; the sublevel set is unbounded".into()));
    }
    let hinv = h.try_inverse().ok_or_else(|| Error::Numeric("singular quadratic part".into()))?;
    let compiled = CompiledPolynomials::new(std::slice::from_ref(w));
    let mut half: Vec<f64> = (0..m).map(|i| (c.max(0.0) * hinv[(i, i)]).sqrt().max(1e-9)).collect();
    for round in 0..8u64 {
        let hit = (0..4000u64).into_par_iter().any(|k| {
            let mut rng = rng_for(seed ^ 0x5eed_b0c5, round * 4000 + k);
            let face = rng.gen_range(0..m);
            let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let p: Vec<f64> = (0..m).map(|i| if i == face { side * half[i] } else { rng.gen_range(-half[i]..=half[i]) }).collect();
            compiled.evaluate(&p)[0] <= c
        });
        if !hit {
            return Ok(half.iter().map(|h| (-h, *h)).collect());
        }
        half.iter_mut().for_each(|h| *h *= 1.5);
    }
    Err(Error::Numeric("could not bound the sublevel set".into()))
}

const CHUNK: usize = 8192;
const MAX_DRAWS_PER_SAMPLE: usize = 200;

/// Samples of `{W <= c}`: rejection sampling in the bounding box, or points
/// along random rays from the origin when the acceptance rate is too low.
pub fn sample_sublevel(w: &Polynomial, c: f64, n: usize, seed: u64) -> Result<(Vec<Vec<f64>>, usize, bool, Vec<(f64, f64)>)> {
    let bounds = sublevel_box(w, c, seed)?;
    let m = w.num_vars();
    let compiled = CompiledPolynomials::new(std::slice::from_ref(w));
    let mut out = Vec::with_capacity(n);
    let mut draws = 0usize;
    while out.len() < n && draws < MAX_DRAWS_PER_SAMPLE * n.max(1) {
        let batch: Vec<Option<Vec<f64>>> = (draws..draws + CHUNK)
            .into_par_iter()
            .map(|k| {
                let mut rng = rng_for(seed, k as u64);
                let p: Vec<f64> = bounds.iter().map(|(lo, hi)| rng.gen_range(*lo..=*hi)).collect();
                (compiled.evaluate(&p)[0] <= c).then_some(p)
            })
            .collect();
        draws += CHUNK;
        out.extend(batch.into_iter().flatten());
    }
    if out.len() >= n {
        out.truncate(n);
        return Ok((out, draws, false, bounds));
    }
    // ray sampling: first crossing of W = c along a random direction
    let mut rays = Vec::with_capacity(n);
    let mut k = 0u64;
    while rays.len() < n && k < (MAX_DRAWS_PER_SAMPLE * n.max(1)) as u64 {
        let batch: Vec<Option<Vec<f64>>> = (k..k + CHUNK as u64)
            .into_par_iter()
            .map(|idx| {
                let mut rng = rng_for(seed ^ 0x7a15, idx);
                let dir: Vec<f64> = bounds.iter().map(|(_, hi)| hi * rng.sample::<f64, _>(StandardNormal)).collect();
                let len = norm(&dir);
                if len == 0.0 {
                    return None;
                }
                let at = |r: f64| -> Vec<f64> { dir.iter().map(|d| d / len * r).collect() };
                let r_max = bounds.iter().map(|(_, hi)| hi * hi).sum::<f64>().sqrt();
                let mut r_in = 0.0;
                let mut r_out = r_max;
                for s in 1..=64 {
                    let r = r_max * s as f64 / 64.0;
                    if compiled.evaluate(&at(r))[0] > c {
                        r_out = r;
                        break;
                    }
                    r_in = r;
                }
                for _ in 0..40 {
                    let mid = 0.5 * (r_in + r_out);
                    if compiled.evaluate(&at(mid))[0] <= c {
                        r_in = mid;
                    } else {
                        r_out = mid;
                    }
                }
                let u: f64 = rng.gen();
                let p = at(r_in * u.powf(1.0 / m as f64));
                (compiled.evaluate(&p)[0] <= c).then_some(p)
            })
            .collect();
        k += CHUNK as u64;
        rays.extend(batch.into_iter().flatten());
    }
    rays.truncate(n);
    Ok((rays, draws + k as usize, true, bounds))
}

/// Classifies samples of `{W <= c}`; every one must stay in region.
pub fn containment_check_level(w: &Polynomial, c: f64, classifier: &dyn Classifier, n_samples: usize, seed: u64) -> Result<ContainmentReport> {
    if w.num_vars() != classifier.dim() {
        return Err(Error::Config(format!("W has {} variables, the classifier {}", w.num_vars(), classifier.dim())));
    }
    let (samples, draws, surface_fallback, bounds) = sample_sublevel(w, c, n_samples, seed)?;
    let compiled = CompiledPolynomials::new(std::slice::from_ref(w));
    let failures: Vec<ContainmentFailure> = samples
        .par_iter()
        .filter_map(|q| {
            let result = classifier.classify(q);
            (!result.is_in_region()).then(|| ContainmentFailure {
                q: q.clone(),
                w: compiled.evaluate(q)[0],
                result,
            })
        })
        .collect();
    Ok(ContainmentReport {
        c,
        seed,
        n_requested: n_samples,
        n_checked: samples.len(),
        draws,
        surface_fallback,
        bounds,
        failures,
    })
}

pub fn containment_check(region: &CertifiedRegion, classifier: &dyn Classifier, n_samples: usize, seed: u64) -> Result<ContainmentReport> {
    containment_check_level(&region.w, region.c, classifier, n_samples, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub step: f64,
}

impl GridSpec {
    pub fn square(dim: usize, half: f64, step: f64) -> Self {
        GridSpec {
            lo: vec![-half; dim],
            hi: vec![half; dim],
            step,
        }
    }

    fn axes(&self) -> Vec<Vec<f64>> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(lo, hi)| {
                let n = ((hi - lo) / self.step + 1e-9).floor() as usize;
                (0..=n).map(|k| lo + k as f64 * self.step).collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridRegion {
    pub spec: GridSpec,
    pub nodes: Vec<(Vec<f64>, ClassificationResult)>,
}

/// Classifies every node of a grid over at most four state dimensions.
pub fn brute_force_region(classifier: &dyn Classifier, spec: &GridSpec) -> Result<GridRegion> {
    let m = classifier.dim();
    if m > 4 || spec.lo.len() != m || spec.hi.len() != m || !(spec.step > 0.0) {
        return Err(Error::Config(format!("grid needs {m} <= 4 dimensions and a positive step")));
    }
    let axes = spec.axes();
    let total: usize = axes.iter().map(Vec::len).product();
    let nodes = (0..total)
        .into_par_iter()
        .map(|mut k| {
            let mut p = vec![0.0; m];
            for d in (0..m).rev() {
                p[d] = axes[d][k % axes[d].len()];
                k /= axes[d].len();
            }
            let r = classifier.classify(&p);
            (p, r)
        })
        .collect();
    Ok(GridRegion { spec: spec.clone(), nodes })
}

impl GridRegion {
    pub fn count_in_region(&self) -> usize {
        self.nodes.iter().filter(|(_, r)| r.is_in_region()).count()
    }

    /// Nodes inside `{W <= c}` that the oracle rejects.
    pub fn certified_violations(&self, w: &Polynomial, c: f64) -> Vec<&(Vec<f64>, ClassificationResult)> {
        self.nodes.iter().filter(|(p, r)| w.evaluate(p) <= c && !r.is_in_region()).collect()
    }

    /// Grid estimate of vol(certified) / vol(oracle region).
    pub fn coverage_ratio(&self, w: &Polynomial, c: f64) -> f64 {
        let certified = self.nodes.iter().filter(|(p, _)| w.evaluate(p) <= c).count();
        certified as f64 / self.count_in_region().max(1) as f64
    }

    /// `dim1,..,dimk,verdict,violation_kind,t_violation`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let m = self.spec.lo.len();
        let mut header: Vec<String> = (1..=m).map(|d| format!("dim{d}")).collect();
        header.extend(["verdict", "violation_kind", "t_violation"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for (p, r) in &self.nodes {
            let mut row: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
            row.push(if r.is_in_region() { "in_region" } else { "violation" }.into());
            row.push(r.violation_kind.map_or("", OracleViolation::as_str).into());
            row.push(r.first_violation_time.map_or(String::new(), |t| format!("{t}")));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Largest gap between the finite-difference rate of `W` and the trapezoid
/// mean of the analytic rate, over steps without topology changes.
/// Requires a trajectory recorded at every step.
pub fn wdot_consistency(traj: &Trajectory) -> f64 {
    let mut worst: f64 = 0.0;
    for pair in traj.records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.step != a.step + 1 {
            continue;
        }
        let dt = b.t - a.t;
        if traj.edge_events.iter().any(|e| e.t > a.t && e.t <= b.t + 1e-12) {
            continue;
        }
        let fd = (b.w - a.w) / dt;
        worst = worst.max((fd - 0.5 * (a.wdot + b.wdot)).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_polynomial;

    fn p(s: &str) -> Polynomial {
        parse_polynomial(s, 2).unwrap()
    }

    /// `y' = v, v' = -y - v`, `W = y^2 + v^2`.
    fn toy(unsafe_blocks: Vec<Vec<Polynomial>>) -> PolySystem {
        PolySystem::new(&[p("x2"), p("-x1 - x2")], &unsafe_blocks, OracleOptions::default()).unwrap()
    }

    #[test]
    fn equilibrium_is_in_region() {
        assert!(toy(vec![vec![p("x1 - 1")]]).classify(&[0.0, 0.0]).is_in_region());
        assert!(toy(vec![]).classify(&[2.0, -1.0]).is_in_region());
    }

    #[test]
    fn unsafe_start_flagged_at_zero() {
        let r = toy(vec![vec![p("x1 - 1")]]).classify(&[1.5, 0.0]);
        assert_eq!(r.violation_kind, Some(OracleViolation::Unsafe));
        assert_eq!(r.first_violation_time, Some(0.0));
    }

    #[test]
    fn divergence_reported() {
        let sys = PolySystem::new(&[p("x1^2"), p("0")], &[], OracleOptions::default()).unwrap();
        assert_eq!(sys.classify(&[2.0, 0.0]).violation_kind, Some(OracleViolation::Divergence));
    }

    #[test]
    fn containment_and_inflated_control() {
        let sys = toy(vec![vec![p("x1 - 1")]]);
        let w = p("x1^2 + x2^2");
        let ok = containment_check_level(&w, 1.0, &sys, 2000, 7).unwrap();
        assert!(ok.passed(), "{:?}", ok.failures.first());
        let bad = containment_check_level(&w, 1.5, &sys, 2000, 7).unwrap();
        assert!(!bad.failures.is_empty());
        assert!(bad.failures.iter().all(|f| f.q[0] > 1.0 || f.result.first_violation_time.unwrap() > 0.0));
    }

    #[test]
    fn deterministic_samples() {
        let w = p("x1^2 + 4*x2^2");
        let a = sample_sublevel(&w, 1.0, 500, 3).unwrap();
        let b = sample_sublevel(&w, 1.0, 500, 3).unwrap();
        assert_eq!(a.0, b.0);
        assert!(a.0.iter().all(|q| w.evaluate(q) <= 1.0));
    }

    #[test]
    fn tiny_set_uses_rays() {
        let w = p("x1^2 + x2^2 + 1000000000000*x1^2*x2^2");
        let (s, _, fallback, _) = sample_sublevel(&w, 1.0, 50, 1).unwrap();
        assert!(fallback);
        assert_eq!(s.len(), 50);
        assert!(s.iter().all(|q| w.evaluate(q) <= 1.0));
    }

    #[test]
    fn grid_contains_certified_disk() {
        let sys = toy(vec![vec![p("x1 - 1")]]);
        let g = brute_force_region(&sys, &GridSpec::square(2, 2.0, 0.25)).unwrap();
        assert_eq!(g.nodes.len(), 17 * 17);
        assert!(g.certified_violations(&p("x1^2 + x2^2"), 1.0).is_empty());
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("dim1,dim2,verdict,violation_kind,t_violation\n"));
    }

    #[test]
    fn all_unsafe_is_empty() {
        let sys = toy(vec![vec![p("1")]]);
        let g = brute_force_region(&sys, &GridSpec::square(2, 1.0, 0.5)).unwrap();
        assert_eq!(g.count_in_region(), 0);
    }
}
