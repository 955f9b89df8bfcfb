//! Scenario files, load-time validation and the command pipelines.
//!
//! A scenario is a JSON document. `system.kind` selects either a team of
//! agents under the barrier controller or a bare polynomial vector field.
//! Agent indices in files are 1-based. Unsafe-set polynomials use `x1..xn`
//! for one agent's absolute position, or the state variables for a
//! polynomial system; a block is the set where all of its polynomials are
//! strictly positive.

mod contour;
mod pipeline;

pub use contour::{marching_squares, Polyline};
pub use pipeline::{certify_scenario, model_for, optimize_scenario, run_pipeline, slice_region, Certified, Command, RunSummary, SliceOutcome};

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::barrier::{collision_interval, connectivity_radius, validate_barrier_numeric, DEFAULT_GRID};
use crate::dynamics::{lyapunov_value, mu_max, AgentState, BarrierKind, BarrierShape, Barriers, Formation, MultiAgentSystem, SimOptions, UnsafeSet};
use crate::error::{Error, Result};
use crate::estimator::EstimatorOptions;
use crate::graph::{edge, Geometry};
use crate::oracle::{GridSpec, OracleOptions};
use crate::poly::{parse_polynomial, Polynomial};

pub const SOLVER_TOL_ENV: &str = "SGR_SOLVER_TOL";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub system: SystemConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub sim: SimOptions,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub slice: SliceConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemConfig {
    Agents(AgentConfig),
    Polynomial(PolyConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    /// Spatial dimension.
    pub n: usize,
    pub agents: Vec<AgentInit>,
    pub formation: FormationConfig,
    pub geometry: Geometry,
    pub weights: Weights,
    pub barriers: BarrierConfig,
    #[serde(default, rename = "unsafe")]
    pub unsafe_sets: Vec<UnsafeBlockConfig>,
    #[serde(default)]
    pub energy_check: EnergyCheck,
    #[serde(default)]
    pub eps_hat: Option<f64>,
    /// Certify on the subspace where the mean offset and mean relative
    /// velocity vanish.
    #[serde(default = "yes")]
    pub anchor: bool,
    #[serde(default)]
    pub t0: f64,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentInit {
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationConfig {
    pub tau: Vec<Vec<f64>>,
    pub rho_star: Vec<f64>,
    pub edges: Vec<[usize; 2]>,
}

/// A common weight for every pair, or a full symmetric matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weights {
    Uniform(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierMode {
    #[default]
    Fixed,
    Optimize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierConfig {
    #[serde(default)]
    pub mode: BarrierMode,
    /// Degree of the connectivity barrier.
    #[serde(default = "four")]
    pub degree: u32,
    pub mu1: f64,
    pub mu2: f64,
    /// Explicit connectivity coefficients of `z^0, z^2, ...`.
    #[serde(default)]
    pub connectivity: Option<Vec<f64>>,
    /// Zero of the collision quartic; defaults to the end of its interval.
    #[serde(default)]
    pub r_tilde: Option<f64>,
}

fn four() -> u32 {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnsafeBlockConfig {
    pub label: String,
    pub polys: Vec<String>,
}

/// How the barrier caps are checked against the initial state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyCheck {
    /// Both caps must exceed `mu_max`.
    #[default]
    Strict,
    /// Both caps must exceed `W` at the initial state; `mu_max` is reported.
    InitialEnergy,
    Off,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyConfig {
    pub vars: usize,
    pub field: Vec<String>,
    pub w: String,
    #[serde(default, rename = "unsafe")]
    pub unsafe_sets: Vec<UnsafeBlockConfig>,
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    #[serde(flatten)]
    pub options: EstimatorOptions,
    #[serde(default = "ten")]
    pub n_iters: usize,
}

fn ten() -> usize {
    10
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            options: EstimatorOptions::default(),
            n_iters: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    #[serde(flatten)]
    pub options: OracleOptions,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

fn default_samples() -> usize {
    10_000
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            options: OracleOptions::default(),
            n_samples: default_samples(),
            grid: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixAt {
    #[default]
    Formation,
    Initial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliceConfig {
    /// 1-based agent whose state plane is cut.
    pub agent: usize,
    /// 1-based coordinates within that agent's `(position, velocity)`, or
    /// state variables for a polynomial system.
    pub dims: [usize; 2],
    pub fix_at: FixAt,
    pub resolution: usize,
}

impl Default for SliceConfig {
    fn default() -> Self {
        SliceConfig {
            agent: 1,
            dims: [1, 2],
            fix_at: FixAt::Formation,
            resolution: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Dotted path into the scenario document, e.g. `estimator.sigma2`.
    pub parameter: String,
    pub values: Vec<serde_json::Value>,
    pub command: Command,
}

/// A validated agent scenario.
#[derive(Clone, Debug)]
pub struct AgentScenario {
    pub system: MultiAgentSystem,
    pub initial: Vec<AgentState>,
    pub mode: BarrierMode,
    pub tau_norm: f64,
    pub mu_max: Option<f64>,
    pub initial_energy: f64,
    pub anchor: bool,
    pub t0: f64,
}

/// A validated polynomial scenario.
#[derive(Clone, Debug)]
pub struct PolyScenario {
    pub field: Vec<Polynomial>,
    pub w: Polynomial,
    pub labels: Vec<String>,
    pub blocks: Vec<Vec<Polynomial>>,
    pub initial: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub enum Scenario {
    Agents(Box<AgentScenario>),
    Polynomial(PolyScenario),
}

/// Reads, parses and validates a scenario file.
pub fn parse_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg = parse_scenario_str(&text)?;
    cfg.build()?;
    Ok(cfg)
}

/// Parses without validation; schema errors carry the offending field path.
pub fn parse_scenario_str(text: &str) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let detail = if path == "system" { system_error(text) } else { None };
        Error::Config(detail.unwrap_or_else(|| format!("at `{path}`: {}", e.inner())))
    })
}

/// The tagged `system` section hides inner paths; re-parse it by kind.
fn system_error(text: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(text).ok()?;
    let mut sys = v.get("system")?.as_object()?.clone();
    let kind = sys.remove("kind")?;
    let sys = serde_json::Value::Object(sys);
    fn inner<T: serde::de::DeserializeOwned>(v: &serde_json::Value) -> Option<String> {
        serde_path_to_error::deserialize::<_, T>(v).err().map(|e| format!("at `system.{}`: {}", e.path(), e.inner()))
    }
    match kind.as_str()? {
        "agents" => inner::<AgentConfig>(&sys),
        "polynomial" => inner::<PolyConfig>(&sys),
        _ => None,
    }
}

/// Stable 64-bit FNV-1a hash, used to seed sampling from the scenario text.
pub fn scenario_hash(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn parse_blocks(blocks: &[UnsafeBlockConfig], num_vars: usize) -> Result<(Vec<String>, Vec<Vec<Polynomial>>)> {
    let mut labels = Vec::new();
    let mut polys = Vec::new();
    for b in blocks {
        if b.polys.is_empty() {
            return Err(Error::Config(format!("unsafe block `{}` has no polynomials", b.label)));
        }
        let ps = b
            .polys
            .iter()
            .map(|s| parse_polynomial(s, num_vars).map_err(|e| Error::Config(format!("unsafe block `{}`: {e}", b.label))))
            .collect::<Result<Vec<_>>>()?;
        labels.push(b.label.clone());
        polys.push(ps);
    }
    Ok((labels, polys))
}

impl ScenarioConfig {
    /// Applies `SGR_SOLVER_TOL` to the PSD acceptance tolerance.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SOLVER_TOL_ENV) {
            let tol: f64 = v.trim().parse().map_err(|_| Error::Config(format!("{SOLVER_TOL_ENV}={v} is not a number")))?;
            if !(tol > 0.0) {
                return Err(Error::Config(format!("{SOLVER_TOL_ENV} must be positive")));
            }
            self.estimator.options.tol_psd = tol;
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Scenario> {
        match &self.system {
            SystemConfig::Agents(a) => Ok(Scenario::Agents(Box::new(a.build()?))),
            SystemConfig::Polynomial(p) => Ok(Scenario::Polynomial(p.build()?)),
        }
    }
}

impl PolyConfig {
    pub fn build(&self) -> Result<PolyScenario> {
        let m = self.vars;
        if m == 0 || self.field.len() != m {
            return Err(Error::Config(format!("the vector field needs {m} components, found {}", self.field.len())));
        }
        let field = self.field.iter().map(|s| parse_polynomial(s, m)).collect::<std::result::Result<Vec<_>, _>>()?;
        let w = parse_polynomial(&self.w, m)?;
        let (labels, blocks) = parse_blocks(&self.unsafe_sets, m)?;
        if let Some(q) = &self.initial {
            if q.len() != m {
                return Err(Error::Config(format!("initial state needs {m} entries")));
            }
        }
        Ok(PolyScenario {
            field,
            w,
            labels,
            blocks,
            initial: self.initial.clone(),
        })
    }
}

impl AgentConfig {
    fn weights(&self) -> Result<DMatrix<f64>> {
        let big_n = self.agents.len();
        let m = match &self.weights {
            Weights::Uniform(w) => {
                let mut m = DMatrix::from_element(big_n, big_n, *w);
                m.fill_diagonal(0.0);
                m
            }
            Weights::Matrix(rows) => {
                if rows.len() != big_n || rows.iter().any(|r| r.len() != big_n) {
                    return Err(Error::Config(format!("weights must be a {big_n}x{big_n} matrix")));
                }
                DMatrix::from_fn(big_n, big_n, |i, j| if i == j { 0.0 } else { rows[i][j] })
            }
        };
        for i in 0..big_n {
            for j in 0..big_n {
                if i != j && (!(m[(i, j)] > 0.0) || (m[(i, j)] - m[(j, i)]).abs() > 1e-12) {
                    return Err(Error::Config("weights must be positive and symmetric".into()));
                }
            }
        }
        Ok(m)
    }

    fn formation(&self) -> Result<Formation> {
        let big_n = self.agents.len();
        let mut edges = BTreeSet::new();
        for &[i, j] in &self.formation.edges {
            if i == 0 || j == 0 || i > big_n || j > big_n || i == j {
                return Err(Error::Config(format!("formation edge ({i},{j}) is not a pair of distinct agents 1..{big_n}")));
            }
            edges.insert(edge(i - 1, j - 1));
        }
        Ok(Formation {
            tau: self.formation.tau.clone(),
            rho_star: self.formation.rho_star.clone(),
            edges,
        })
    }

    pub fn barriers(&self, geo: &Geometry, f: &Formation) -> Result<Barriers> {
        let b = &self.barriers;
        let tau = f.max_edge_tau();
        let r_hat = connectivity_radius(geo, tau)?;
        let connectivity = match &b.connectivity {
            Some(c) => BarrierShape::from_even_coeffs(BarrierKind::Connectivity, c, b.mu1),
            None => {
                if b.degree < 2 || b.degree % 2 != 0 {
                    return Err(Error::Config(format!("barrier degree {} must be even and at least 2", b.degree)));
                }
                BarrierShape::connectivity_power(b.mu1, r_hat, b.degree)
            }
        };
        let (d_hat, z_max) = collision_interval(geo, tau)?;
        let collision = BarrierShape::collision_quartic(b.mu2, d_hat, b.r_tilde.unwrap_or(z_max));
        for shape in [&connectivity, &collision] {
            let check = validate_barrier_numeric(shape, geo, tau, DEFAULT_GRID)?;
            if !check.pass {
                let (z, what) = check.witness.unwrap_or_default();
                return Err(Error::Config(format!("{:?} barrier invalid at z = {z}: {what}", shape.kind)));
            }
        }
        Ok(Barriers { connectivity, collision })
    }

    pub fn build(&self) -> Result<AgentScenario> {
        let n = self.n;
        let big_n = self.agents.len();
        if n == 0 || big_n == 0 {
            return Err(Error::Config("need at least one agent and one spatial dimension".into()));
        }
        if self.formation.tau.len() != big_n {
            return Err(Error::Config(format!("{big_n} agents but {} displacements", self.formation.tau.len())));
        }
        if self.agents.iter().any(|a| a.x.len() != n || a.rho.len() != n) || self.formation.rho_star.len() != n {
            return Err(Error::Config(format!("positions and velocities must have {n} components")));
        }
        let geo = self.geometry;
        geo.validate()?;
        let formation = self.formation()?;
        formation.validate(&geo)?;
        let weights = self.weights()?;
        let barriers = self.barriers(&geo, &formation)?;
        let (labels, blocks) = parse_blocks(&self.unsafe_sets, n)?;
        let system = MultiAgentSystem {
            geometry: geo,
            formation,
            base_weights: weights,
            barriers,
            unsafe_set: UnsafeSet { labels, blocks },
        };
        system.validate()?;
        let initial: Vec<AgentState> = self.agents.iter().map(|a| AgentState::new(a.x.clone(), a.rho.clone())).collect();
        let graph = system.initial_graph(&initial);
        for &(i, j) in &system.formation.edges {
            if !graph.edges().contains(&(i, j)) {
                return Err(Error::Config(format!(
                    "formation edge ({},{}) is not in the initial graph",
                    i + 1,
                    j + 1
                )));
            }
        }
        let f = &system.formation;
        let b = &system.barriers;
        let initial_energy = lyapunov_value(&initial, &graph, f, b, &geo);
        let mu_cap = match mu_max(&initial, &graph, f, b, &geo, self.eps_hat) {
            Ok(v) => Some(v),
            Err(e) if self.energy_check == EnergyCheck::Strict => return Err(e),
            Err(_) => None,
        };
        let (mu1, mu2) = (self.barriers.mu1, self.barriers.mu2);
        match self.energy_check {
            EnergyCheck::Strict => {
                let cap = mu_cap.unwrap_or(f64::INFINITY);
                if !(mu1 > cap && mu2 > cap) {
                    return Err(Error::Config(format!("barrier heights too low: mu1 = {mu1} and mu2 = {mu2} must exceed mu_max = {cap}")));
                }
            }
            EnergyCheck::InitialEnergy => {
                if !(mu1 > initial_energy && mu2 > initial_energy) {
                    return Err(Error::Config(format!(
                        "barrier heights too low: mu1 = {mu1} and mu2 = {mu2} must exceed the initial energy W = {initial_energy}"
                    )));
                }
            }
            EnergyCheck::Off => {}
        }
        Ok(AgentScenario {
            tau_norm: system.formation.max_edge_tau(),
            system,
            initial,
            mode: self.barriers.mode,
            mu_max: mu_cap,
            initial_energy,
            anchor: self.anchor,
            t0: self.t0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PLATOON: &str = include_str!("../../../../scenarios/platoon.json");

    #[test]
    fn platoon_loads() {
        let cfg = parse_scenario_str(PLATOON).unwrap();
        let Scenario::Agents(s) = cfg.build().unwrap() else { panic!("agent scenario") };
        let g = s.system.geometry;
        assert_eq!((g.r_a, g.r_s, g.r_z, g.eps), (0.75, 11.0, 3.5, 0.1));
        assert_eq!(g.r_c, 1.25 * 0.75);
        assert!((g.d_s - 2.05 * g.r_c).abs() < 1e-12);
        assert_eq!(s.system.unsafe_set.blocks.len(), 5);
    }

    fn edit(f: impl FnOnce(&mut serde_json::Value)) -> Result<ScenarioConfig> {
        let mut v: serde_json::Value = serde_json::from_str(PLATOON).unwrap();
        f(&mut v);
        let cfg = parse_scenario_str(&v.to_string())?;
        cfg.build()?;
        Ok(cfg)
    }

    #[test]
    fn geometry_ordering_rejected() {
        let err = edit(|v| v["system"]["geometry"]["r_z"] = 12.0.into()).unwrap_err();
        assert!(err.to_string().contains("geometry ordering"), "{err}");
    }

    #[test]
    fn small_mu_rejected_under_strict_check() {
        let err = edit(|v| {
            v["system"]["energy_check"] = "strict".into();
            v["system"]["barriers"]["mu1"] = 1.0.into();
        })
        .unwrap_err();
        assert!(err.to_string().contains("mu_max"), "{err}");
    }

    #[test]
    fn schema_error_names_the_field() {
        let err = edit(|v| v["system"]["geometry"]["r_s"] = "eleven".into()).unwrap_err();
        assert!(err.to_string().contains("system.geometry.r_s"), "{err}");
    }

    #[test]
    fn env_overrides_tolerance() {
        let mut cfg = parse_scenario_str(PLATOON).unwrap();
        std::env::set_var(SOLVER_TOL_ENV, "1e-6");
        cfg.apply_env().unwrap();
        std::env::remove_var(SOLVER_TOL_ENV);
        assert_eq!(cfg.estimator.options.tol_psd, 1e-6);
    }
}
