//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints one line; the process fails if any criterion fails.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sgr::dynamics::{
    simulate, AgentState, BarrierKind, BarrierShape, Barriers, BlockKind, Formation, FrozenModel, MultiAgentSystem, SimOptions, TopologyBlock, UnsafeSet,
};
use sgr::estimator::{barrier_validity_sos, build_wdot, estimate_c_gevp, validity_interval, CertifiedRegion, EstimatorOptions, RegionProblem};
use sgr::graph::{Geometry, TOL_EIG};
use sgr::oracle::{brute_force_region, containment_check, containment_check_level, wdot_consistency, Classifier, GridSpec, OracleOptions, PolySystem};
use sgr::poly::smr::GramLayout;
use sgr::poly::{parse_polynomial, power_vector, smr_dimensions, smr_lift, smr_of, Monomial, Polynomial};
use sgr::scenario::{certify_scenario, optimize_scenario, parse_scenario, Scenario, ScenarioConfig};

const SMR_TOL: f64 = 1e-9;
const WDOT_TOL: f64 = 1e-9;
const FD_FLOOR: f64 = 1e-6;
const VEL_TOL: f64 = 1e-3;
const FORMATION_TOL: f64 = 1e-2;
const HALF_PLANE_TOL: f64 = 5e-3;
const ANNULUS_TOL: f64 = 2e-2;
const TRACE_STEP_TOL: f64 = 1e-6;
const CONTAINMENT_SAMPLES: usize = 100_000;
const NEGATIVE_SAMPLES: usize = 10_000;
const GRID_STEP: f64 = 0.05;
const CERT_TOL: f64 = 1e-7;

/// A region and the oracle that judges it.
struct Produced {
    name: String,
    region: CertifiedRegion,
    classifier: Box<dyn Classifier>,
}

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }

    fn fail(detail: impl Into<String>) -> Self {
        Self::new(false, detail)
    }
}

fn within(elapsed: Duration, secs: u64) -> bool {
    elapsed <= Duration::from_secs(secs)
}

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn p2(s: &str) -> Polynomial {
    parse_polynomial(s, 2).expect("valid polynomial")
}

fn toy_field() -> Vec<Polynomial> {
    vec![p2("x2"), p2("-x1 - x2")]
}

fn toy_problem(omega: &str) -> RegionProblem {
    let block = TopologyBlock {
        kind: BlockKind::Unsafe,
        label: omega.to_string(),
        polys: vec![p2(omega)],
    };
    RegionProblem::new(p2("x1^2 + x2^2"), &toy_field(), vec![block], 16).expect("toy problem")
}

fn toy_oracle(omega: &str) -> PolySystem {
    let opts = OracleOptions {
        dt: 0.05,
        ..OracleOptions::default()
    };
    PolySystem::new(&toy_field(), &[vec![p2(omega)]], opts).expect("toy oracle")
}

fn criterion_1() -> Outcome {
    let p = parse_polynomial("3*x1^4 + 4*x1^3 + 6*x1^2 + 7", 1).unwrap();
    let form = smr_of(&p);
    // the library orders phi = (1, x, x^2); the reference lists (x^2, x, 1)
    let k = form.phi.len();
    let flip = |m: &DMatrix<f64>| DMatrix::from_fn(k, k, |i, j| m[(k - 1 - i, k - 1 - j)]);
    let expected = DMatrix::from_row_slice(3, 3, &[3.0, 2.0, 0.0, 2.0, 6.0, 0.0, 0.0, 0.0, 7.0]);
    let base_ok = k == 3 && flip(&form.base) == expected;
    let reference_l = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, -1.0, 0.0, 2.0, 0.0, -1.0, 0.0, 0.0]);
    let null_ok = form.null_basis.len() == 1 && {
        let l = flip(&form.null_basis[0]);
        let scale = l[(1, 1)] / 2.0;
        scale != 0.0 && l == &reference_l * scale
    };
    Outcome::new(base_ok && null_ok, format!("base {:?}, null basis size {}", flip(&form.base).as_slice(), form.null_basis.len()))
}

fn random_polynomial() -> impl Strategy<Value = Polynomial> {
    (1usize..=6, 0u32..=8).prop_flat_map(|(n, d)| {
        let term = (proptest::collection::vec(0..=d, n), -5.0f64..5.0);
        proptest::collection::vec(term, 1..10).prop_map(move |terms| {
            let mut p = Polynomial::zero(n);
            for (mut e, c) in terms {
                while e.iter().sum::<u32>() > d {
                    let top = (0..n).max_by_key(|&i| e[i]).unwrap();
                    e[top] -= 1;
                }
                p.add_term(Monomial::new(e), c);
            }
            p
        })
    })
}

fn check_smr(p: &Polynomial) -> Result<(), TestCaseError> {
    let n = p.num_vars();
    let half = p.degree().div_ceil(2);
    let phi = power_vector(n, half);
    let gram = smr_lift(p, &phi).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!((&gram - gram.transpose()).amax() == 0.0);
    prop_assert!(phi.quadratic_form(&gram).max_coeff_diff(p) <= SMR_TOL, "reconstruction of {p}");

    let layout = GramLayout::new(&phi);
    let dirs = layout.null_directions();
    let (l, theta) = smr_dimensions(n, half).unwrap();
    prop_assert_eq!(phi.len() as u64, l);
    prop_assert_eq!(dirs.len() as u64, theta);
    let mons = phi.monomials();
    let mut leading = BTreeSet::new();
    for s in &dirs {
        let mut q = Polynomial::zero(n);
        for &(i, j, v) in &s.entries {
            q.add_term(mons[i].mul(&mons[j]), if i == j { v } else { 2.0 * v });
        }
        prop_assert!(q.max_abs_coeff() <= SMR_TOL, "null direction with nonzero form");
        leading.insert((s.entries[0].0, s.entries[0].1));
    }
    // one distinct free position per direction, so the directions are independent
    prop_assert_eq!(leading.len(), dirs.len());
    if phi.len() <= 40 && !dirs.is_empty() {
        let k = phi.len();
        let mut shifted = gram.clone();
        for (t, s) in dirs.iter().enumerate() {
            shifted += s.to_dense(k) * ((t % 7) as f64 - 3.0);
        }
        prop_assert!(phi.quadratic_form(&shifted).max_coeff_diff(p) <= SMR_TOL);
    }
    Ok(())
}

fn criterion_2() -> Outcome {
    let config = Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let start = Instant::now();
    let res = runner.run(&random_polynomial(), |p| check_smr(&p));
    let elapsed = start.elapsed();
    match res {
        Ok(()) => Outcome::new(within(elapsed, 30), format!("1000 polynomials in {:.1}s", elapsed.as_secs_f64())),
        Err(e) => Outcome::fail(e.to_string()),
    }
}

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

fn random_formation(rng: &mut ChaCha8Rng) -> Formation {
    let agents = rng.gen_range(2..=3);
    let n = rng.gen_range(1..=2);
    let mut tau = vec![vec![0.0; n]];
    let mut heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    for _ in 1..agents {
        let s = rng.gen_range(4.5..5.5);
        let prev = tau.last().unwrap().clone();
        let next = if n == 1 {
            vec![prev[0] + s]
        } else {
            heading += rng.gen_range(-1.0..1.0);
            vec![prev[0] + s * heading.cos(), prev[1] + s * heading.sin()]
        };
        tau.push(next);
    }
    Formation {
        tau,
        rho_star: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        edges: (0..agents - 1).map(|i| (i, i + 1)).collect(),
    }
}

fn random_weights(rng: &mut ChaCha8Rng, agents: usize) -> DMatrix<f64> {
    let mut w = DMatrix::from_element(agents, agents, 1.0);
    for i in 0..agents {
        for j in i + 1..agents {
            let g = rng.gen_range(0.5..2.0);
            w[(i, j)] = g;
            w[(j, i)] = g;
        }
    }
    w
}

/// `-varrho' (L kron I_n) varrho` in the stacked coordinates.
fn dissipation(model: &FrozenModel) -> Polynomial {
    let (big_n, n) = (model.num_agents, model.dim);
    let nv = 2 * n * big_n;
    let l = model.graph.laplacian();
    let mut out = Polynomial::zero(nv);
    for i in 0..big_n {
        for j in 0..big_n {
            for d in 0..n {
                let vi = Polynomial::var(nv, i * 2 * n + n + d);
                let vj = Polynomial::var(nv, j * 2 * n + n + d);
                out = &out - &(&vi * &vj).scale(l[(i, j)]);
            }
        }
    }
    out
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = geo();
    let mut worst_coeff: f64 = 0.0;
    let mut fd_failures = Vec::new();
    let mut worst_fd: f64 = 0.0;
    for case in 0..100 {
        let f = random_formation(&mut rng);
        let agents = f.num_agents();
        let weights = random_weights(&mut rng, agents);
        let tau_norm = f.max_edge_tau();
        let (_, r_hat) = validity_interval(BarrierKind::Connectivity, &g, tau_norm).unwrap();
        let degree = if rng.gen_bool(0.5) { 2 } else { 4 };
        let mut coeffs = vec![0.0; degree / 2 + 1];
        for c in coeffs.iter_mut().skip(1) {
            *c = rng.gen_range(0.1..1.0) * 50.0 / r_hat.powi(degree as i32);
        }
        let conn = BarrierShape::from_even_coeffs(BarrierKind::Connectivity, &coeffs, 50.0);
        let model = match FrozenModel::new(&g, &f, &weights, &conn, &UnsafeSet::default(), false, 0.0) {
            Ok(m) => m,
            Err(e) => return Outcome::fail(format!("case {case}: {e}")),
        };
        let wdot = match build_wdot(&model.w, &model.field, 16) {
            Ok(p) => p,
            Err(e) => return Outcome::fail(format!("case {case}: {e}")),
        };
        worst_coeff = worst_coeff.max(wdot.max_coeff_diff(&dissipation(&model)));

        let (lo, hi) = validity_interval(BarrierKind::Collision, &g, tau_norm).unwrap();
        let sys = MultiAgentSystem {
            geometry: g.clone(),
            formation: f.clone(),
            base_weights: weights,
            barriers: Barriers {
                connectivity: conn,
                collision: BarrierShape::collision_quartic(50.0, lo, hi),
            },
            unsafe_set: UnsafeSet::default(),
        };
        let init: Vec<AgentState> = f
            .tau
            .iter()
            .map(|t| {
                let x = t.iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();
                let rho = f.rho_star.iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();
                AgentState::new(x, rho)
            })
            .collect();
        let gap = |dt: f64| -> sgr::Result<f64> {
            let opts = SimOptions {
                dt,
                horizon: 1.0,
                record_every: 1,
                ..SimOptions::default()
            };
            Ok(wdot_consistency(&simulate(&sys, &init, &opts)?))
        };
        match (gap(0.02), gap(0.01)) {
            (Ok(coarse), Ok(fine)) => {
                worst_fd = worst_fd.max(fine);
                // second order: halving dt cuts the gap about fourfold
                if fine > FD_FLOOR && coarse / fine < 3.0 {
                    fd_failures.push(format!("case {case}: gap {coarse:.3e} -> {fine:.3e}"));
                }
            }
            (Err(e), _) | (_, Err(e)) => return Outcome::fail(format!("case {case}: {e}")),
        }
    }
    Outcome::new(
        worst_coeff <= WDOT_TOL && fd_failures.is_empty(),
        format!("max coefficient gap {worst_coeff:.2e}, max finite-difference gap {worst_fd:.2e} {fd_failures:?}"),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let cfg = match parse_scenario(&scenario_path("platoon.json")) {
        Ok(c) => c,
        Err(e) => return Outcome::fail(e.to_string()),
    };
    let Ok(Scenario::Agents(s)) = cfg.build() else {
        return Outcome::fail("platoon scenario does not build");
    };
    let opts = SimOptions {
        record_every: 1,
        stop_on_violation: false,
        settle_tol: None,
        ..cfg.sim.clone()
    };
    let traj = match simulate(&s.system, &s.initial, &opts) {
        Ok(t) => t,
        Err(e) => return Outcome::fail(e.to_string()),
    };
    let d_s = s.system.geometry.d_s;
    let min_lambda2 = traj.records.iter().map(|r| r.lambda2).fold(f64::INFINITY, f64::min);
    let min_dist = traj.records.iter().map(|r| r.min_dist).fold(f64::INFINITY, f64::min);
    let last = traj.records.last().expect("records");
    let f = &s.system.formation;
    let mut vel: f64 = 0.0;
    let mut form: f64 = 0.0;
    for i in 0..last.states.len() {
        for j in i + 1..last.states.len() {
            let dv = last.states[i].rho.iter().zip(&last.states[j].rho).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let tau = f.tau_ij(i, j);
            let dx = (0..f.dim())
                .map(|d| (last.states[i].x[d] - last.states[j].x[d] - tau[d]).powi(2))
                .sum::<f64>()
                .sqrt();
            vel = vel.max(dv);
            form = form.max(dx);
        }
    }
    let elapsed = start.elapsed();
    let pass = min_lambda2 > TOL_EIG && min_dist > d_s && vel < VEL_TOL && form < FORMATION_TOL && traj.first_violation.is_none() && within(elapsed, 60);
    Outcome::new(
        pass,
        format!(
            "{} steps, min lambda2 {min_lambda2:.3}, min distance {min_dist:.3} > {d_s}, velocity spread {vel:.1e}, formation error {form:.1e}, {:.1}s",
            traj.records.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_5(produced: &mut Vec<Produced>) -> Outcome {
    let opts = EstimatorOptions::default();
    let mut pass = true;
    let mut detail = Vec::new();
    for (omega, target, tol) in [("x1 - 1", 1.0, HALF_PLANE_TOL), ("x1^2 + x2^2 - 4", 4.0, ANNULUS_TOL)] {
        let start = Instant::now();
        match estimate_c_gevp(&toy_problem(omega), &opts) {
            Ok(r) => {
                let elapsed = start.elapsed();
                let ok = (r.c - target).abs() <= tol && r.verify(CERT_TOL) && within(elapsed, 60);
                pass &= ok;
                detail.push(format!("{{{omega} > 0}}: c = {:.6} ({:.2}s)", r.c, elapsed.as_secs_f64()));
                produced.push(Produced {
                    name: format!("toy {{{omega} > 0}}"),
                    region: r,
                    classifier: Box::new(toy_oracle(omega)),
                });
            }
            Err(e) => {
                pass = false;
                detail.push(format!("{omega}: {e}"));
            }
        }
    }
    Outcome::new(pass, detail.join(", "))
}

fn two_agent_config() -> Option<ScenarioConfig> {
    parse_scenario(&scenario_path("two_agent.json")).ok()
}

fn criterion_7(produced: &mut Vec<Produced>) -> Outcome {
    let Some(cfg) = two_agent_config() else {
        return Outcome::fail("two_agent.json does not load");
    };
    let Ok(Scenario::Agents(s)) = cfg.build() else {
        return Outcome::fail("two_agent.json does not build");
    };
    let mut cfg10 = cfg.clone();
    cfg10.estimator.n_iters = 10;
    let (out, _) = match optimize_scenario(&s, &cfg10) {
        Ok(o) => o,
        Err(e) => return Outcome::fail(e.to_string()),
    };
    let monotone = out.traces.len() == 11 && out.traces.windows(2).all(|w| w[1] <= w[0] + TRACE_STEP_TOL);
    let kappa_ok = out.kappa >= out.baseline_kappa;
    match certify_scenario(&Scenario::Agents(s.clone()), &cfg10, true) {
        Ok(c) => produced.push(Produced {
            name: "two-agent optimized, n_t = 10".into(),
            region: c.region,
            classifier: c.classifier,
        }),
        Err(e) => return Outcome::fail(e.to_string()),
    }

    match certify_scenario(&Scenario::Agents(s.clone()), &cfg10, false) {
        Ok(c) => produced.push(Produced {
            name: "two-agent fixed barrier".into(),
            region: c.region,
            classifier: c.classifier,
        }),
        Err(e) => return Outcome::fail(e.to_string()),
    }

    let mut budget = cfg.clone();
    budget.estimator.n_iters = 5;
    if let sgr::scenario::SystemConfig::Agents(a) = &mut budget.system {
        a.barriers.degree = 2;
    }
    let start = Instant::now();
    let budget_run = budget.build().and_then(|b| certify_scenario(&b, &budget, true));
    let elapsed = start.elapsed();
    let budget_ok = match budget_run {
        Ok(c) => {
            produced.push(Produced {
                name: "two-agent optimized, d_b = 2, n_t = 5".into(),
                region: c.region,
                classifier: c.classifier,
            });
            within(elapsed, 600)
        }
        Err(e) => return Outcome::fail(format!("budget run: {e}")),
    };
    Outcome::new(
        monotone && kappa_ok && budget_ok,
        format!(
            "traces {:.6} -> {:.6}, kappa {:.6} vs baseline {:.6}; d_b = 2, n_t = 5 took {:.1}s",
            out.traces[0],
            out.traces.last().unwrap(),
            out.kappa,
            out.baseline_kappa,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_8(produced: &[Produced]) -> Outcome {
    let Some(half_plane) = produced.iter().find(|p| p.name.contains("x1 - 1")) else {
        return Outcome::fail("no half-plane region was certified");
    };
    let start = Instant::now();
    let spec = GridSpec::square(2, 3.0, GRID_STEP);
    let grid = match brute_force_region(half_plane.classifier.as_ref(), &spec) {
        Ok(g) => g,
        Err(e) => return Outcome::fail(e.to_string()),
    };
    let bad = grid.certified_violations(&half_plane.region.w, half_plane.region.c).len();
    let elapsed = start.elapsed();
    Outcome::new(
        bad == 0 && within(elapsed, 300),
        format!(
            "{} nodes, {} in the oracle region, {bad} certified-in/oracle-out, coverage {:.3}",
            grid.nodes.len(),
            grid.count_in_region(),
            grid.coverage_ratio(&half_plane.region.w, half_plane.region.c)
        ),
    )
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let g = geo();
    let opts = EstimatorOptions::default();
    let tau_norm = 4.5;
    let conn_iv = validity_interval(BarrierKind::Connectivity, &g, tau_norm).unwrap();
    let coll_iv = validity_interval(BarrierKind::Collision, &g, tau_norm).unwrap();
    let quartic = BarrierShape::connectivity_power(50.0, conn_iv.1, 4);
    let collision = BarrierShape::collision_quartic(50.0, coll_iv.0, coll_iv.1);
    let bad = BarrierShape::from_even_coeffs(BarrierKind::Connectivity, &[0.0, -1.0, 1.0], 50.0);
    let q = barrier_validity_sos(&quartic, conn_iv, &opts).map(|c| c.verify(CERT_TOL));
    let c = barrier_validity_sos(&collision, coll_iv, &opts).map(|c| c.verify(CERT_TOL));
    let refused = matches!(barrier_validity_sos(&bad, conn_iv, &opts), Err(sgr::Error::Refused(_)));
    let elapsed = start.elapsed();
    Outcome::new(
        matches!(q, Ok(true)) && matches!(c, Ok(true)) && refused && within(elapsed, 30),
        format!("connectivity {:?}, collision {:?}, z^4 - z^2 refused: {refused}", q.is_ok(), c.is_ok()),
    )
}

fn criterion_6(produced: &[Produced]) -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for (k, p) in produced.iter().enumerate() {
        match containment_check(&p.region, p.classifier.as_ref(), CONTAINMENT_SAMPLES, 6000 + k as u64) {
            Ok(rep) => {
                pass &= rep.passed() && rep.n_checked == CONTAINMENT_SAMPLES;
                detail.push(format!("{}: {} violations", p.name, rep.failures.len()));
            }
            Err(e) => {
                pass = false;
                detail.push(format!("{}: {e}", p.name));
            }
        }
    }
    if let Some(hp) = produced.iter().find(|p| p.name.contains("x1 - 1")) {
        let inflated = 1.5 * hp.region.c;
        match containment_check_level(&hp.region.w, inflated, hp.classifier.as_ref(), NEGATIVE_SAMPLES, 6999) {
            Ok(rep) => {
                pass &= !rep.failures.is_empty();
                detail.push(format!("inflated c = {inflated:.3}: {} violations", rep.failures.len()));
            }
            Err(e) => {
                pass = false;
                detail.push(format!("negative control: {e}"));
            }
        }
    } else {
        pass = false;
    }
    let elapsed = start.elapsed();
    pass &= !produced.is_empty() && within(elapsed, 300);
    detail.push(format!("{:.1}s", elapsed.as_secs_f64()));
    Outcome::new(pass, detail.join("; "))
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut produced = Vec::new();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "SMR of 3x^4 + 4x^3 + 6x^2 + 7", criterion_1()));
    results.push((2, "SMR round trip on random polynomials", criterion_2()));
    results.push((3, "Wdot identity and finite differences", criterion_3()));
    results.push((4, "platoon simulation properties", criterion_4()));
    results.push((5, "GEVP levels on the closed-loop toy", criterion_5(&mut produced)));
    results.push((7, "barrier optimization monotonicity", criterion_7(&mut produced)));
    results.push((8, "brute-force grid containment", criterion_8(&produced)));
    results.push((9, "fixed-barrier validity", criterion_9()));
    results.push((6, "soundness gate", criterion_6(&produced)));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (k, name, o) in &results {
        println!("criterion {k} {}: {name} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
