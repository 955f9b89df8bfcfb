//! Double-integrator agents, the barrier-based distributed controller and the
//! hybrid simulator.

pub mod barrier;
mod control;
mod simulate;
mod symbolic;
mod unsafe_set;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{edge, Edge, Geometry};

pub use barrier::{BarrierKind, BarrierShape};
pub use control::{control_input, lyapunov_rate, lyapunov_value, mu_max, Barriers, Controller};
pub use simulate::{simulate, EdgeEvent, MonitorRecord, MultiAgentSystem, SimOptions, Termination, Trajectory, ViolationKind};
pub use symbolic::{BlockKind, FrozenModel, TopologyBlock};
pub use unsafe_set::{unsafe_membership, UnsafeSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
}

impl AgentState {
    pub fn new(x: Vec<f64>, rho: Vec<f64>) -> Self {
        assert_eq!(x.len(), rho.len());
        AgentState { x, rho }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Formation {
    /// Desired displacement of each agent.
    pub tau: Vec<Vec<f64>>,
    pub rho_star: Vec<f64>,
    pub edges: BTreeSet<Edge>,
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub(crate) fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

impl Formation {
    pub fn num_agents(&self) -> usize {
        self.tau.len()
    }

    pub fn dim(&self) -> usize {
        self.rho_star.len()
    }

    pub fn tau_ij(&self, i: usize, j: usize) -> Vec<f64> {
        diff(&self.tau[i], &self.tau[j])
    }

    /// Largest `|tau_i - tau_j|` over formation edges.
    pub fn max_edge_tau(&self) -> f64 {
        self.edges.iter().map(|&(i, j)| norm(&self.tau_ij(i, j))).fold(0.0, f64::max)
    }

    /// Largest `|tau_i - tau_j|` over all pairs.
    pub fn max_pair_tau(&self) -> f64 {
        let n = self.num_agents();
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                m = m.max(norm(&self.tau_ij(i, j)));
            }
        }
        m
    }

    /// Checks the achievability bounds on formation edges and the
    /// connectivity/collision compatibility bound. The latter is enforced on
    /// formation edges and only reported for other pairs.
    pub fn validate(&self, geo: &Geometry) -> Result<()> {
        let n = self.num_agents();
        if n == 0 {
            return Err(Error::Config("formation has no agents".into()));
        }
        if self.tau.iter().any(|t| t.len() != self.dim()) {
            return Err(Error::Config("every displacement must match the spatial dimension".into()));
        }
        for &(i, j) in &self.edges {
            if i >= n || j >= n || i == j {
                return Err(Error::Config(format!("formation edge ({i},{j}) is invalid")));
            }
            let t = norm(&self.tau_ij(i, j));
            if t < geo.r_z || t > geo.r_s - geo.eps {
                return Err(Error::Config(format!(
                    "formation edge ({},{}) out of range: need r_z <= |tau_ij| = {t} <= r_s - eps",
                    i + 1,
                    j + 1
                )));
            }
            if geo.r_s - t <= geo.d_s + t {
                return Err(Error::Config(format!(
                    "formation edge ({},{}) too long: r_s - |tau_ij| must exceed d_s + |tau_ij| (|tau_ij| = {t})",
                    i + 1,
                    j + 1
                )));
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let t = norm(&self.tau_ij(i, j));
                if !self.edges.contains(&edge(i, j)) && geo.r_s - t <= geo.d_s + t {
                    log::warn!("pair ({},{}) does not satisfy r_s - |tau_ij| > d_s + |tau_ij|", i + 1, j + 1);
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformedState {
    pub y: Vec<Vec<f64>>,
    pub varrho: Vec<Vec<f64>>,
}

impl TransformedState {
    /// Stacked `(y_1, varrho_1, ..., y_N, varrho_N)`.
    pub fn q(&self) -> Vec<f64> {
        self.y.iter().zip(&self.varrho).flat_map(|(y, v)| y.iter().chain(v).copied()).collect()
    }

    pub fn from_q(q: &[f64], n: usize) -> Self {
        let (mut y, mut varrho) = (Vec::new(), Vec::new());
        for chunk in q.chunks(2 * n) {
            y.push(chunk[..n].to_vec());
            varrho.push(chunk[n..].to_vec());
        }
        TransformedState { y, varrho }
    }
}

pub fn transform(states: &[AgentState], f: &Formation) -> TransformedState {
    TransformedState {
        y: states.iter().zip(&f.tau).map(|(s, t)| diff(&s.x, t)).collect(),
        varrho: states.iter().map(|s| diff(&s.rho, &f.rho_star)).collect(),
    }
}

/// Agent states at time `t` for a transformed state, with the reference moving at `rho_star`.
pub fn inverse_transform(q: &TransformedState, f: &Formation, t: f64) -> Vec<AgentState> {
    q.y.iter()
        .zip(&q.varrho)
        .zip(&f.tau)
        .map(|((y, v), tau)| AgentState {
            x: y.iter().zip(tau).zip(&f.rho_star).map(|((a, b), r)| a + b + r * t).collect(),
            rho: v.iter().zip(&f.rho_star).map(|(a, b)| a + b).collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(tau: f64) -> Formation {
        Formation {
            tau: vec![vec![tau]],
            rho_star: vec![0.0],
            edges: BTreeSet::new(),
        }
    }

    #[test]
    fn formation_point_maps_to_origin() {
        let f = Formation {
            tau: vec![vec![0.0, 0.0], vec![4.5, 0.0]],
            rho_star: vec![1.0, 0.0],
            edges: [(0, 1)].into_iter().collect(),
        };
        let states: Vec<AgentState> = f.tau.iter().map(|t| AgentState::new(t.clone(), f.rho_star.clone())).collect();
        assert!(transform(&states, &f).q().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_agent_subtraction() {
        let q = transform(&[AgentState::new(vec![3.0], vec![1.0])], &one_d(2.0));
        assert_eq!(q.q(), vec![1.0, 1.0]);
    }

    #[test]
    fn round_trip() {
        let f = Formation {
            tau: vec![vec![0.3, -1.0], vec![4.5, 2.0], vec![-1.0, 7.0]],
            rho_star: vec![0.5, -0.25],
            edges: BTreeSet::new(),
        };
        let states: Vec<AgentState> = (0..3)
            .map(|i| AgentState::new(vec![i as f64 * 1.7 - 0.2, 0.9 * i as f64], vec![0.1 * i as f64, -2.0]))
            .collect();
        let q = transform(&states, &f);
        let back = inverse_transform(&TransformedState::from_q(&q.q(), 2), &f, 0.0);
        for (a, b) in states.iter().zip(&back) {
            for (u, v) in a.x.iter().chain(&a.rho).zip(b.x.iter().chain(&b.rho)) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
