use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::control::{lyapunov_rate, Barriers, Controller};
use super::{AgentState, Formation, UnsafeSet};
use crate::error::{Error, Result};
use crate::graph::{algebraic_connectivity, neighbor_sets, update_edges, Geometry, NeighborSets, WeightedGraph, TOL_EIG};

/// Everything needed to run the closed loop.
#[derive(Clone, Debug)]
pub struct MultiAgentSystem {
    pub geometry: Geometry,
    pub formation: Formation,
    pub base_weights: DMatrix<f64>,
    pub barriers: Barriers,
    pub unsafe_set: UnsafeSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub dt: f64,
    pub horizon: f64,
    pub stop_on_violation: bool,
    /// Keep one monitor record every this many steps.
    pub record_every: usize,
    pub overflow_guard: f64,
    /// Stop once velocity spread and formation error both fall below this.
    pub settle_tol: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            dt: 1e-3,
            horizon: 30.0,
            stop_on_violation: false,
            record_every: 1,
            overflow_guard: 1e8,
            settle_tol: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Disconnected,
    Collision,
    Unsafe,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Disconnected => "disconnected",
            ViolationKind::Collision => "collision",
            ViolationKind::Unsafe => "unsafe",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub step: usize,
    pub states: Vec<AgentState>,
    pub lambda2: f64,
    pub min_dist: f64,
    pub w: f64,
    pub wdot: f64,
    /// First unsafe block per agent.
    pub unsafe_blocks: Vec<Option<usize>>,
}

impl MonitorRecord {
    pub fn violation(&self, geo: &Geometry) -> Option<ViolationKind> {
        classify(self.states.len(), self.lambda2, self.min_dist, &self.unsafe_blocks, geo)
    }
}

fn classify(agents: usize, lambda2: f64, min_dist: f64, unsafe_blocks: &[Option<usize>], geo: &Geometry) -> Option<ViolationKind> {
    if agents > 1 && lambda2 <= TOL_EIG {
        Some(ViolationKind::Disconnected)
    } else if min_dist <= geo.d_s {
        Some(ViolationKind::Collision)
    } else if unsafe_blocks.iter().any(Option::is_some) {
        Some(ViolationKind::Unsafe)
    } else {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum Termination {
    Horizon,
    Settled { t: f64 },
    Violation { kind: ViolationKind, t: f64, step: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeEvent {
    pub t: f64,
    pub i: usize,
    pub j: usize,
    pub added: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<MonitorRecord>,
    pub edge_events: Vec<EdgeEvent>,
    pub termination: Termination,
    /// First violation seen, whether or not the run stopped there.
    pub first_violation: Option<(ViolationKind, f64)>,
}

fn min_pairwise(states: &[AgentState]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            m = m.min(super::norm(&super::diff(&states[i].x, &states[j].x)));
        }
    }
    m
}

impl MultiAgentSystem {
    pub fn num_agents(&self) -> usize {
        self.formation.num_agents()
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.formation.validate(&self.geometry)?;
        let n = self.num_agents();
        if self.base_weights.nrows() != n || self.base_weights.ncols() != n {
            return Err(Error::Config(format!("weights must be {n}x{n}")));
        }
        Ok(())
    }

    pub fn initial_graph(&self, states: &[AgentState]) -> WeightedGraph {
        let pos: Vec<Vec<f64>> = states.iter().map(|s| s.x.clone()).collect();
        update_edges(&pos, &WeightedGraph::empty(states.len()), &self.geometry, &self.base_weights)
    }

    pub fn next_graph(&self, states: &[AgentState], prev: &WeightedGraph) -> WeightedGraph {
        let pos: Vec<Vec<f64>> = states.iter().map(|s| s.x.clone()).collect();
        update_edges(&pos, prev, &self.geometry, &self.base_weights)
    }

    pub fn neighbor_sets(&self, states: &[AgentState], graph: &WeightedGraph) -> Vec<NeighborSets> {
        let pos: Vec<Vec<f64>> = states.iter().map(|s| s.x.clone()).collect();
        (0..states.len())
            .map(|i| neighbor_sets(i, graph, &self.formation.edges, &pos, &self.geometry))
            .collect()
    }

    /// One RK4 step with the graph and neighbor sets held fixed.
    pub fn rk4_step(&self, ctrl: &Controller, states: &[AgentState], graph: &WeightedGraph, sets: &[NeighborSets], dt: f64) -> Vec<AgentState> {
        let n = self.formation.dim();
        let w = 2 * n;
        // per agent: x (n), then rho (n)
        let mut y: Vec<f64> = states.iter().flat_map(|s| s.x.iter().chain(&s.rho).copied()).collect();
        let m = y.len();
        let deriv = |q: &[f64], out: &mut [f64]| {
            for i in 0..states.len() {
                let (pos, vel) = out[i * w..(i + 1) * w].split_at_mut(n);
                pos.copy_from_slice(&q[i * w + n..(i + 1) * w]);
                ctrl.input_with(i, |j, k| q[j * w + k], |j, k| q[j * w + n + k], graph, &self.formation, &sets[i], vel);
            }
        };
        let mut k = [vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]];
        let mut tmp = vec![0.0; m];
        deriv(&y, &mut k[0]);
        for (s, h) in [(1, 0.5 * dt), (2, 0.5 * dt), (3, dt)] {
            for t in 0..m {
                tmp[t] = y[t] + h * k[s - 1][t];
            }
            deriv(&tmp, &mut k[s]);
        }
        for t in 0..m {
            y[t] += dt / 6.0 * (k[0][t] + 2.0 * k[1][t] + 2.0 * k[2][t] + k[3][t]);
        }
        y.chunks(w).map(|c| AgentState::new(c[..n].to_vec(), c[n..].to_vec())).collect()
    }

    fn monitor(&self, ctrl: &Controller, t: f64, step: usize, states: &[AgentState], graph: &WeightedGraph, sets: &[NeighborSets], lambda2: f64) -> MonitorRecord {
        MonitorRecord {
            t,
            step,
            states: states.to_vec(),
            lambda2,
            min_dist: min_pairwise(states),
            w: ctrl.lyapunov(states, graph, &self.formation, sets),
            wdot: lyapunov_rate(states, graph),
            unsafe_blocks: super::unsafe_membership(states, &self.unsafe_set),
        }
    }

    /// Largest velocity spread and largest deviation of `y_i` from the mean.
    pub fn settle_measure(&self, states: &[AgentState]) -> f64 {
        let n = self.formation.dim();
        let big_n = states.len() as f64;
        let ys: Vec<Vec<f64>> = states.iter().zip(&self.formation.tau).map(|(s, t)| super::diff(&s.x, t)).collect();
        let mean: Vec<f64> = (0..n).map(|d| ys.iter().map(|y| y[d]).sum::<f64>() / big_n).collect();
        let mut m: f64 = 0.0;
        for i in 0..states.len() {
            m = m.max(super::norm(&super::diff(&ys[i], &mean)));
            for j in i + 1..states.len() {
                m = m.max(super::norm(&super::diff(&states[i].rho, &states[j].rho)));
            }
        }
        m
    }
}

/// Fixed-step RK4 of the closed loop. Edges are re-evaluated at step boundaries.
pub fn simulate(sys: &MultiAgentSystem, initial: &[AgentState], opts: &SimOptions) -> Result<Trajectory> {
    if initial.len() != sys.num_agents() {
        return Err(Error::Config(format!("expected {} initial states, got {}", sys.num_agents(), initial.len())));
    }
    if !(opts.dt > 0.0) || !(opts.horizon >= 0.0) {
        return Err(Error::Config("dt must be positive and the horizon non-negative".into()));
    }
    let ctrl = Controller::new(&sys.barriers);
    let mut states = initial.to_vec();
    let mut graph = sys.initial_graph(&states);
    if initial.len() > 1 && !graph.is_connected() {
        return Err(Error::Config("the initial graph is not connected".into()));
    }
    let steps = (opts.horizon / opts.dt).round() as usize;
    let every = opts.record_every.max(1);
    let mut out = Trajectory {
        records: Vec::new(),
        edge_events: Vec::new(),
        termination: Termination::Horizon,
        first_violation: None,
    };
    let mut lambda2 = algebraic_connectivity(&graph.laplacian())?;
    for step in 0..=steps {
        let t = step as f64 * opts.dt;
        let sets = sys.neighbor_sets(&states, &graph);
        let unsafe_blocks = super::unsafe_membership(&states, &sys.unsafe_set);
        let violation = classify(states.len(), lambda2, min_pairwise(&states), &unsafe_blocks, &sys.geometry);
        if let Some(kind) = violation {
            out.first_violation.get_or_insert((kind, t));
        }
        let settled = opts.settle_tol.is_some_and(|tol| sys.settle_measure(&states) < tol);
        if step % every == 0 || step == steps || violation.is_some() && opts.stop_on_violation || settled {
            out.records.push(sys.monitor(&ctrl, t, step, &states, &graph, &sets, lambda2));
        }
        if let (Some(kind), true) = (violation, opts.stop_on_violation) {
            out.termination = Termination::Violation { kind, t, step };
            break;
        }
        if settled {
            out.termination = Termination::Settled { t };
            break;
        }
        if step == steps {
            break;
        }
        states = sys.rk4_step(&ctrl, &states, &graph, &sets, opts.dt);
        if states.iter().any(|s| s.x.iter().chain(&s.rho).any(|v| !v.is_finite() || v.abs() > opts.overflow_guard)) {
            return Err(Error::Divergence { step: step + 1 });
        }
        let next = sys.next_graph(&states, &graph);
        let t_next = t + opts.dt;
        for &(i, j) in next.edges().difference(graph.edges()) {
            out.edge_events.push(EdgeEvent { t: t_next, i, j, added: true });
        }
        for &(i, j) in graph.edges().difference(next.edges()) {
            out.edge_events.push(EdgeEvent { t: t_next, i, j, added: false });
        }
        if next.edges() != graph.edges() {
            lambda2 = algebraic_connectivity(&next.laplacian())?;
        }
        graph = next;
    }
    Ok(out)
}

impl Trajectory {
    /// `t,agent,x1..xn,v1..vn,lambda2,min_dist,W,Wdot,unsafe`, one row per record and agent.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.records.first().and_then(|r| r.states.first()).map_or(0, |s| s.x.len());
        let mut header = vec!["t".to_string(), "agent".to_string()];
        header.extend((1..=n).map(|k| format!("x{k}")));
        header.extend((1..=n).map(|k| format!("v{k}")));
        header.extend(["lambda2", "min_dist", "W", "Wdot", "unsafe"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for r in &self.records {
            for (i, s) in r.states.iter().enumerate() {
                let mut row = vec![format!("{}", r.t), format!("{}", i + 1)];
                row.extend(s.x.iter().chain(&s.rho).map(|v| format!("{v}")));
                let min_dist = if r.min_dist.is_finite() { format!("{}", r.min_dist) } else { "inf".into() };
                row.extend([format!("{}", r.lambda2), min_dist, format!("{}", r.w), format!("{}", r.wdot)]);
                row.push(r.unsafe_blocks[i].map_or("0".into(), |b| format!("{}", b + 1)));
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }

    /// `t,i,j,added|removed`.
    pub fn write_edge_log<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,i,j,event")?;
        for e in &self.edge_events {
            writeln!(w, "{},{},{},{}", e.t, e.i + 1, e.j + 1, if e.added { "added" } else { "removed" })?;
        }
        Ok(())
    }

    pub fn final_states(&self) -> Option<&[AgentState]> {
        self.records.last().map(|r| r.states.as_slice())
    }
}
