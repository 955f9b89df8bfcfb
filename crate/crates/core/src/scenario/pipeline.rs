use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AgentScenario, BarrierMode, FixAt, PolyScenario, Scenario, ScenarioConfig};
use crate::dynamics::{simulate, FrozenModel, MultiAgentSystem};
use crate::error::{Error, Result};
use crate::estimator::{estimate_c_gevp, optimize_barriers, unsafe_blocks, volume_surrogates, CertifiedRegion, OptimizeOptions, OptimizeOutcome, RegionProblem};
use crate::oracle::{brute_force_region, containment_check, sublevel_box, AgentClassifier, Classifier, PolySystem};
use crate::poly::Polynomial;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Certify,
    Optimize,
    Verify,
    Slice,
    Sweep,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: Command,
    /// False when a verification step found a counterexample.
    pub ok: bool,
    pub message: String,
    pub level: Option<f64>,
    pub files: Vec<PathBuf>,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        self.files.push(path.clone());
        Ok(BufWriter::new(File::create(path)?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        Ok(())
    }
}

pub fn model_for(s: &AgentScenario, connectivity: &crate::dynamics::BarrierShape) -> Result<FrozenModel> {
    let sys = &s.system;
    FrozenModel::new(&sys.geometry, &sys.formation, &sys.base_weights, connectivity, &sys.unsafe_set, s.anchor, s.t0)
}

fn poly_problem(p: &PolyScenario, cfg: &ScenarioConfig) -> Result<RegionProblem> {
    RegionProblem::new(p.w.clone(), &p.field, unsafe_blocks(&p.labels, &p.blocks), cfg.estimator.options.max_degree)
}

/// Runs the barrier optimization and rebuilds the model with the optimized barrier.
pub fn optimize_scenario(s: &AgentScenario, cfg: &ScenarioConfig) -> Result<(OptimizeOutcome, FrozenModel)> {
    let model = model_for(s, &s.system.barriers.connectivity)?;
    let opts = OptimizeOptions {
        n_iters: cfg.estimator.n_iters,
        estimator: cfg.estimator.options.clone(),
    };
    let out = optimize_barriers(&model, &s.system.barriers, &s.system.geometry, s.tau_norm, &opts)?;
    let model = model_for(s, &out.barriers.connectivity)?;
    Ok((out, model))
}

/// Region, classifier and, for agents, the model it lives in.
pub struct Certified {
    pub region: CertifiedRegion,
    pub classifier: Box<dyn Classifier>,
    pub model: Option<FrozenModel>,
}

/// Fixed barriers, or the optimized ones when allowed and the scenario asks for them.
pub fn certify_scenario(scenario: &Scenario, cfg: &ScenarioConfig, allow_optimize: bool) -> Result<Certified> {
    match scenario {
        Scenario::Agents(s) => {
            let (region, model, system) = if allow_optimize && s.mode == BarrierMode::Optimize {
                let (out, model) = optimize_scenario(s, cfg)?;
                let system = MultiAgentSystem {
                    barriers: out.barriers.clone(),
                    ..s.system.clone()
                };
                (out.region, model, system)
            } else {
                let model = model_for(s, &s.system.barriers.connectivity)?;
                let region = estimate_c_gevp(&RegionProblem::from_model(&model), &cfg.estimator.options)?;
                (region, model, s.system.clone())
            };
            let classifier = AgentClassifier {
                sys: system,
                embed: model.embed.clone(),
                t0: s.t0,
                opts: cfg.oracle.options.clone(),
            };
            Ok(Certified {
                region,
                classifier: Box::new(classifier),
                model: Some(model),
            })
        }
        Scenario::Polynomial(p) => {
            let region = estimate_c_gevp(&poly_problem(p, cfg)?, &cfg.estimator.options)?;
            Ok(Certified {
                region,
                classifier: Box::new(PolySystem::new(&p.field, &p.blocks, cfg.oracle.options.clone())?),
                model: None,
            })
        }
    }
}

#[derive(Serialize)]
struct RegionReport<'a> {
    c: f64,
    unbounded: bool,
    eta: Option<f64>,
    c_over_trace: Option<f64>,
    mu_max: Option<f64>,
    initial_energy: Option<f64>,
    region: &'a CertifiedRegion,
}

fn region_report<'a>(region: &'a CertifiedRegion, scenario: &Scenario) -> RegionReport<'a> {
    let surrogates = volume_surrogates(&region.w, region.c).ok();
    let (mu_max, initial_energy) = match scenario {
        Scenario::Agents(s) => (s.mu_max, Some(s.initial_energy)),
        Scenario::Polynomial(_) => (None, None),
    };
    RegionReport {
        c: region.c,
        unbounded: region.unbounded,
        eta: surrogates.map(|s| s.0),
        c_over_trace: surrogates.map(|s| s.1),
        mu_max,
        initial_energy,
        region,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SliceOutcome {
    pub c: f64,
    /// Model coordinates of the plane.
    pub axes: [usize; 2],
    pub polylines: Vec<super::Polyline>,
    pub max_level_error: f64,
    pub vertices: usize,
    pub unsafe_vertices: Vec<[f64; 2]>,
}

impl SliceOutcome {
    pub fn passed(&self) -> bool {
        self.max_level_error < 1e-6 && self.unsafe_vertices.is_empty() && !self.polylines.is_empty()
    }
}

/// Contour of `{W = c}` in the plane through `base` spanned by two model
/// coordinates; every vertex is checked against the level and classified.
pub fn slice_region(w: &Polynomial, c: f64, base: &[f64], axes: [usize; 2], res: usize, classifier: &dyn Classifier, seed: u64) -> Result<SliceOutcome> {
    let m = w.num_vars();
    if axes[0] >= m || axes[1] >= m || axes[0] == axes[1] {
        return Err(Error::Config(format!("slice axes {axes:?} must be distinct coordinates below {m}")));
    }
    let mut a = DMatrix::zeros(m, 2);
    a[(axes[0], 0)] = 1.0;
    a[(axes[1], 1)] = 1.0;
    let mut b = base.to_vec();
    b[axes[0]] = 0.0;
    b[axes[1]] = 0.0;
    let plane = w.substitute_affine(&a, &b)?;
    let bounds = sublevel_box(&plane, c, seed)?;
    let pad = |(lo, hi): (f64, f64)| (lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo));
    let (bx, by) = (pad(bounds[0]), pad(bounds[1]));
    let compiled = crate::poly::CompiledPolynomials::new(std::slice::from_ref(&plane));
    let polylines = super::marching_squares(|u, v| compiled.evaluate(&[u, v])[0], [bx.0, by.0], [bx.1, by.1], res, c);
    let verts: Vec<[f64; 2]> = polylines.iter().flat_map(|l| l.points.iter().copied()).collect();
    let max_level_error = verts.iter().map(|p| (plane.evaluate(p) - c).abs()).fold(0.0, f64::max);
    let unsafe_vertices = verts
        .par_iter()
        .filter(|p| {
            let mut q = b.clone();
            q[axes[0]] = p[0];
            q[axes[1]] = p[1];
            !classifier.classify(&q).is_in_region()
        })
        .copied()
        .collect();
    Ok(SliceOutcome {
        c,
        axes,
        polylines,
        max_level_error,
        vertices: verts.len(),
        unsafe_vertices,
    })
}

fn slice_axes_and_base(scenario: &Scenario, cfg: &ScenarioConfig, model: Option<&FrozenModel>) -> Result<([usize; 2], Vec<f64>)> {
    let sc = &cfg.slice;
    if sc.dims[0] == 0 || sc.dims[1] == 0 {
        return Err(Error::Config("slice dims are 1-based".into()));
    }
    match (scenario, model) {
        (Scenario::Agents(s), Some(model)) => {
            let n = s.system.formation.dim();
            let m = model.num_vars();
            if sc.agent == 0 || (sc.agent - 1) * 2 * n >= m {
                return Err(Error::Config(format!("slice agent {} is not a free agent of the certified model", sc.agent)));
            }
            if sc.dims.iter().any(|d| *d > 2 * n) {
                return Err(Error::Config(format!("slice dims index the {} position and velocity coordinates", 2 * n)));
            }
            let axes = sc.dims.map(|d| (sc.agent - 1) * 2 * n + d - 1);
            let base = match sc.fix_at {
                FixAt::Formation => vec![0.0; m],
                FixAt::Initial => {
                    let f = &s.system.formation;
                    let mut q = Vec::new();
                    for (st, tau) in s.initial.iter().zip(&f.tau) {
                        q.extend((0..n).map(|d| st.x[d] - tau[d] - f.rho_star[d] * s.t0));
                        q.extend((0..n).map(|d| st.rho[d] - f.rho_star[d]));
                    }
                    q.truncate(m);
                    q
                }
            };
            Ok((axes, base))
        }
        (Scenario::Polynomial(p), _) => {
            let m = p.w.num_vars();
            let base = match sc.fix_at {
                FixAt::Formation => vec![0.0; m],
                FixAt::Initial => p.initial.clone().unwrap_or_else(|| vec![0.0; m]),
            };
            Ok((sc.dims.map(|d| d - 1), base))
        }
        _ => unreachable!("agent scenarios always carry a model"),
    }
}

/// Absolute coordinates of a slice point for agent scenarios.
fn absolute(scenario: &Scenario, cfg: &ScenarioConfig, p: [f64; 2]) -> [f64; 2] {
    match scenario {
        Scenario::Agents(s) => {
            let f = &s.system.formation;
            let n = f.dim();
            let i = cfg.slice.agent - 1;
            let shift = |d: usize| if d < n { f.tau[i][d] + f.rho_star[d] * s.t0 } else { f.rho_star[d - n] };
            [p[0] + shift(cfg.slice.dims[0] - 1), p[1] + shift(cfg.slice.dims[1] - 1)]
        }
        Scenario::Polynomial(_) => p,
    }
}

fn run_simulate(scenario: &Scenario, cfg: &ScenarioConfig, out: &mut Outputs) -> Result<RunSummary> {
    match scenario {
        Scenario::Agents(s) => {
            let traj = simulate(&s.system, &s.initial, &cfg.sim)?;
            traj.write_csv(out.create("trajectory.csv")?)?;
            traj.write_edge_log(out.create("edges.csv")?)?;
            let min_dist = traj.records.iter().map(|r| r.min_dist).fold(f64::INFINITY, f64::min);
            let min_lambda2 = traj.records.iter().map(|r| r.lambda2).fold(f64::INFINITY, f64::min);
            let settle = traj.final_states().map(|st| s.system.settle_measure(st));
            out.json(
                "simulate.json",
                &serde_json::json!({
                    "termination": traj.termination,
                    "first_violation": traj.first_violation,
                    "min_distance": min_dist,
                    "min_lambda2": min_lambda2,
                    "final_settle_measure": settle,
                    "mu_max": s.mu_max,
                    "initial_energy": s.initial_energy,
                }),
            )?;
            let ok = traj.first_violation.is_none();
            let message = match traj.first_violation {
                Some((k, t)) => format!("{} at t = {t}", k.as_str()),
                None => format!("no violation; min distance {min_dist:.4}, min lambda2 {min_lambda2:.4}"),
            };
            Ok(summary(Command::Simulate, ok, message, None, out))
        }
        Scenario::Polynomial(p) => {
            let q0 = p.initial.clone().ok_or_else(|| Error::Config("simulate needs `system.initial`".into()))?;
            let sys = PolySystem::new(&p.field, &p.blocks, cfg.oracle.options.clone())?;
            let mut w = out.create("trajectory.csv")?;
            let m = q0.len();
            let mut header: Vec<String> = (1..=m).map(|k| format!("x{k}")).collect();
            header.insert(0, "t".into());
            header.push("W".into());
            writeln!(w, "{}", header.join(","))?;
            let mut io = Ok(());
            let verdict = sys.run(&q0, |t, q| {
                if io.is_ok() {
                    let mut row = vec![format!("{t}")];
                    row.extend(q.iter().map(|v| format!("{v}")));
                    row.push(format!("{}", p.w.evaluate(q)));
                    io = writeln!(w, "{}", row.join(","));
                }
            });
            io?;
            drop(w);
            out.json("simulate.json", &verdict)?;
            let message = match verdict.violation_kind {
                Some(k) => k.as_str().to_string(),
                None => "converged".to_string(),
            };
            Ok(summary(Command::Simulate, verdict.is_in_region(), message, None, out))
        }
    }
}

fn summary(command: Command, ok: bool, message: String, level: Option<f64>, out: &Outputs) -> RunSummary {
    RunSummary {
        command,
        ok,
        message,
        level,
        files: out.files.clone(),
    }
}

/// Runs one command and writes its artifacts under `out_dir`.
pub fn run_pipeline(cmd: Command, cfg: &ScenarioConfig, out_dir: &Path, seed: u64) -> Result<RunSummary> {
    let scenario = cfg.build()?;
    let mut out = Outputs::new(out_dir)?;
    info!("{} on `{}` into {}", format!("{cmd:?}").to_lowercase(), cfg.name, out_dir.display());
    match cmd {
        Command::Simulate => run_simulate(&scenario, cfg, &mut out),
        Command::Certify => {
            let cert = certify_scenario(&scenario, cfg, false)?;
            out.json("region.json", &region_report(&cert.region, &scenario))?;
            let msg = format!("certified level c = {}", cert.region.c);
            Ok(summary(cmd, true, msg, Some(cert.region.c), &out))
        }
        Command::Optimize => {
            let Scenario::Agents(s) = &scenario else {
                return Err(Error::Config("optimize needs an agent scenario".into()));
            };
            let (res, _) = optimize_scenario(s, cfg)?;
            let mut w = out.create("traces.csv")?;
            writeln!(w, "iteration,trace,c")?;
            for (k, (t, c)) in res.traces.iter().zip(&res.levels).enumerate() {
                writeln!(w, "{k},{t},{c}")?;
            }
            drop(w);
            out.json("optimize.json", &res)?;
            let msg = format!("zeta = {}, kappa = {} (baseline {})", res.zeta, res.kappa, res.baseline_kappa);
            Ok(summary(cmd, true, msg, Some(res.region.c), &out))
        }
        Command::Verify => {
            let cert = certify_scenario(&scenario, cfg, true)?;
            out.json("region.json", &region_report(&cert.region, &scenario))?;
            let report = containment_check(&cert.region, cert.classifier.as_ref(), cfg.oracle.n_samples, seed)?;
            out.json("containment.json", &report)?;
            let mut ok = report.passed();
            let mut msg = format!("{} of {} samples violate", report.failures.len(), report.n_checked);
            if let Some(spec) = &cfg.oracle.grid {
                let grid = brute_force_region(cert.classifier.as_ref(), spec)?;
                grid.write_csv(out.create("grid.csv")?)?;
                let bad = grid.certified_violations(&cert.region.w, cert.region.c).len();
                let coverage = grid.coverage_ratio(&cert.region.w, cert.region.c);
                out.json("grid.json", &serde_json::json!({ "nodes": grid.nodes.len(), "in_region": grid.count_in_region(), "certified_violations": bad, "coverage_ratio": coverage }))?;
                ok &= bad == 0;
                msg.push_str(&format!("; grid: {bad} certified nodes violate, coverage {coverage:.4}"));
            }
            if !ok {
                warn!("containment failed: {msg}");
            }
            Ok(summary(cmd, ok, msg, Some(cert.region.c), &out))
        }
        Command::Slice => {
            let cert = certify_scenario(&scenario, cfg, true)?;
            let (axes, base) = slice_axes_and_base(&scenario, cfg, cert.model.as_ref())?;
            let sl = slice_region(&cert.region.w, cert.region.c, &base, axes, cfg.slice.resolution, cert.classifier.as_ref(), seed)?;
            let mut w = out.create("slice.csv")?;
            writeln!(w, "contour,closed,u,v,abs_u,abs_v")?;
            for (k, line) in sl.polylines.iter().enumerate() {
                for p in &line.points {
                    let a = absolute(&scenario, cfg, *p);
                    writeln!(w, "{k},{},{},{},{},{}", line.closed, p[0], p[1], a[0], a[1])?;
                }
            }
            drop(w);
            out.json("slice.json", &sl)?;
            let ok = sl.passed();
            let msg = format!(
                "{} polylines, {} vertices, max |W - c| = {:.2e}, {} vertices classify unsafe",
                sl.polylines.len(),
                sl.vertices,
                sl.max_level_error,
                sl.unsafe_vertices.len()
            );
            Ok(summary(cmd, ok, msg, Some(sl.c), &out))
        }
        Command::Sweep => run_sweep(cfg, &mut out, seed),
    }
}

fn set_path(v: &mut serde_json::Value, path: &str, value: serde_json::Value) -> Result<()> {
    let mut cur = v;
    let parts: Vec<&str> = path.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let last = k + 1 == parts.len();
        cur = match cur {
            serde_json::Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| serde_json::json!({}))
            }
            serde_json::Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| Error::Config(format!("`{part}` in `{path}` is not an index")))?;
                let slot = items.get_mut(idx).ok_or_else(|| Error::Config(format!("index {idx} out of range in `{path}`")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("`{path}` does not name a field"))),
        };
    }
    Err(Error::Config("empty sweep parameter".into()))
}

fn run_sweep(cfg: &ScenarioConfig, out: &mut Outputs, seed: u64) -> Result<RunSummary> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| Error::Config("sweep needs a `sweep` section".into()))?;
    if sweep.command == Command::Sweep {
        return Err(Error::Config("a sweep cannot run sweeps".into()));
    }
    let base = serde_json::to_value(cfg)?;
    let runs: Vec<(usize, String, Result<RunSummary>)> = sweep
        .values
        .par_iter()
        .enumerate()
        .map(|(k, value)| {
            let run = (|| {
                let mut v = base.clone();
                set_path(&mut v, &sweep.parameter, value.clone())?;
                if let Some(map) = v.as_object_mut() {
                    map.remove("sweep");
                }
                let sub: ScenarioConfig = serde_json::from_value(v)?;
                run_pipeline(sweep.command, &sub, &out.dir.join(format!("run_{k:03}")), seed)
            })();
            (k, value.to_string(), run)
        })
        .collect();
    let mut w = out.create("sweep.csv")?;
    writeln!(w, "index,value,ok,level,message")?;
    let mut all_ok = true;
    for (k, value, run) in &runs {
        let (ok, level, msg) = match run {
            Ok(s) => (s.ok, s.level.map_or(String::new(), |c| format!("{c}")), s.message.clone()),
            Err(e) => (false, String::new(), e.to_string()),
        };
        all_ok &= ok;
        writeln!(w, "{k},{},{ok},{level},\"{}\"", value.replace(',', ";"), msg.replace('"', "'"))?;
    }
    drop(w);
    let msg = format!("{} runs over `{}`", runs.len(), sweep.parameter);
    Ok(summary(Command::Sweep, all_ok, msg, None, out))
}
