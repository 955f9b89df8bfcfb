use serde::{Deserialize, Serialize};

use super::barrier::{BarrierShape, CompiledBarrier};
use super::{diff, AgentState, Formation};
use crate::error::{Error, Result};
use crate::graph::{neighbor_sets, Geometry, NeighborSets, WeightedGraph};

/// The connectivity and collision shapes shared by every pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Barriers {
    pub connectivity: BarrierShape,
    pub collision: BarrierShape,
}

/// Evaluates the distributed control law with precompiled barrier shapes.
#[derive(Clone, Debug)]
pub struct Controller {
    conn: CompiledBarrier,
    coll: CompiledBarrier,
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

impl Controller {
    pub fn new(b: &Barriers) -> Self {
        Controller {
            conn: b.connectivity.compiled(),
            coll: b.collision.compiled(),
        }
    }

    /// `u_i` for every agent with the neighbor sets held fixed.
    pub fn inputs(&self, states: &[AgentState], graph: &WeightedGraph, f: &Formation, sets: &[NeighborSets]) -> Vec<Vec<f64>> {
        (0..states.len()).map(|i| self.input(i, states, graph, f, &sets[i])).collect()
    }

    pub fn input(&self, i: usize, states: &[AgentState], graph: &WeightedGraph, f: &Formation, set: &NeighborSets) -> Vec<f64> {
        let mut u = vec![0.0; f.dim()];
        self.input_with(i, |j, k| states[j].x[k], |j, k| states[j].rho[k], graph, f, set, &mut u);
        u
    }

    /// `u_i` into `u`, reading positions and velocities through accessors.
    pub(crate) fn input_with(
        &self,
        i: usize,
        x: impl Fn(usize, usize) -> f64,
        rho: impl Fn(usize, usize) -> f64,
        graph: &WeightedGraph,
        f: &Formation,
        set: &NeighborSets,
        u: &mut [f64],
    ) {
        let n = f.dim();
        u.fill(0.0);
        let y = |j: usize, k: usize| x(i, k) - x(j, k) - (f.tau[i][k] - f.tau[j][k]);
        let z2 = |j: usize| (0..n).map(|k| y(j, k) * y(j, k)).sum::<f64>();
        for &j in &set.formation {
            let r = self.conn.ratio(z2(j));
            for (k, uk) in u.iter_mut().enumerate() {
                *uk -= r * y(j, k);
            }
        }
        for &j in &set.zone {
            let r = self.coll.ratio(z2(j));
            for (k, uk) in u.iter_mut().enumerate() {
                *uk -= r * y(j, k);
            }
        }
        for &j in &set.sensing {
            let g = graph.weight(i, j);
            for (k, uk) in u.iter_mut().enumerate() {
                *uk -= g * (y(j, k) + rho(i, k) - rho(j, k));
            }
        }
    }

    pub fn lyapunov(&self, states: &[AgentState], graph: &WeightedGraph, f: &Formation, sets: &[NeighborSets]) -> f64 {
        let mut total = 0.0;
        for (i, set) in sets.iter().enumerate() {
            let y_i = diff(&states[i].x, &f.tau[i]);
            let y_ij = |j: usize| diff(&y_i, &diff(&states[j].x, &f.tau[j]));
            let mut part = 0.0;
            for &j in &set.formation {
                part += self.conn.value(sq(&y_ij(j)));
            }
            for &j in &set.zone {
                part += self.coll.value(sq(&y_ij(j)));
            }
            for &j in &set.sensing {
                let g = graph.weight(i, j);
                part += g * y_i.iter().zip(y_ij(j)).map(|(a, b)| a * b).sum::<f64>();
            }
            part += sq(&diff(&states[i].rho, &f.rho_star));
            total += 0.5 * part;
        }
        total
    }
}

fn positions(states: &[AgentState]) -> Vec<Vec<f64>> {
    states.iter().map(|s| s.x.clone()).collect()
}

pub(crate) fn all_sets(states: &[AgentState], graph: &WeightedGraph, f: &Formation, geo: &Geometry) -> Vec<NeighborSets> {
    let pos = positions(states);
    (0..states.len()).map(|i| neighbor_sets(i, graph, &f.edges, &pos, geo)).collect()
}

/// The control input of agent `i`.
pub fn control_input(i: usize, states: &[AgentState], graph: &WeightedGraph, f: &Formation, b: &Barriers, geo: &Geometry) -> Vec<f64> {
    let set = neighbor_sets(i, graph, &f.edges, &positions(states), geo);
    Controller::new(b).input(i, states, graph, f, &set)
}

/// The Lyapunov-like function, with velocities measured relative to `rho_star`.
pub fn lyapunov_value(states: &[AgentState], graph: &WeightedGraph, f: &Formation, b: &Barriers, geo: &Geometry) -> f64 {
    Controller::new(b).lyapunov(states, graph, f, &all_sets(states, graph, f, geo))
}

/// `-varrho' (L kron I) varrho` for the current graph.
pub fn lyapunov_rate(states: &[AgentState], graph: &WeightedGraph) -> f64 {
    let mut acc = 0.0;
    for &(i, j) in graph.edges() {
        acc += graph.weight(i, j) * sq(&diff(&states[i].rho, &states[j].rho));
    }
    -acc
}

/// The initial-energy cap every barrier level must exceed.
///
/// `eps_hat` defaults to half of `min(d_s / 2 - r_c, eps)`.
pub fn mu_max(states: &[AgentState], graph: &WeightedGraph, f: &Formation, b: &Barriers, geo: &Geometry, eps_hat: Option<f64>) -> Result<f64> {
    let bound = (0.5 * geo.d_s - geo.r_c).min(geo.eps);
    if bound <= 0.0 {
        return Err(Error::Config(format!("the interval for eps_hat is empty (min(d_s/2 - r_c, eps) = {bound})")));
    }
    let eps_hat = eps_hat.unwrap_or(0.5 * bound);
    if !(eps_hat > 0.0 && eps_hat < bound) {
        return Err(Error::Config(format!("eps_hat = {eps_hat} must lie in (0, {bound})")));
    }
    if !graph.is_connected() && states.len() > 1 {
        return Err(Error::Config("the initial graph is not connected".into()));
    }
    let tau = f.max_edge_tau();
    let r_hat = geo.r_s - tau;
    let d_hat = geo.d_s + tau;
    let ctrl = Controller::new(b);
    let sets = all_sets(states, graph, f, geo);
    let n = states.len();
    let mut total = 0.0;
    for i in 0..n {
        let y_i = diff(&states[i].x, &f.tau[i]);
        let formation_neighbors = (0..n).filter(|&j| f.edges.contains(&crate::graph::edge(i, j))).count();
        let mut part = formation_neighbors as f64 * b.connectivity.value((r_hat - eps_hat).abs());
        for &j in &sets[i].sensing {
            let y_ij = diff(&y_i, &diff(&states[j].x, &f.tau[j]));
            part += graph.weight(i, j) * y_i.iter().zip(&y_ij).map(|(a, c)| a * c).sum::<f64>();
        }
        for &j in &sets[i].zone {
            let y_ij = diff(&y_i, &diff(&states[j].x, &f.tau[j]));
            part += ctrl.coll.value(sq(&y_ij));
        }
        part += sq(&diff(&states[i].rho, &f.rho_star));
        total += 0.5 * part;
    }
    total += ((n * n.saturating_sub(1)) as f64) * b.collision.value((d_hat - eps_hat).abs());
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::BarrierKind;
    use nalgebra::DMatrix;
    use std::collections::BTreeSet;

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

    fn zero_barriers() -> Barriers {
        Barriers {
            connectivity: BarrierShape::from_even_coeffs(BarrierKind::Connectivity, &[0.0], 1.0),
            collision: BarrierShape::from_even_coeffs(BarrierKind::Collision, &[0.0], 1.0),
        }
    }

    fn pair(no_formation_edge: bool) -> (Formation, WeightedGraph) {
        let edges: BTreeSet<_> = if no_formation_edge { BTreeSet::new() } else { [(0, 1)].into_iter().collect() };
        let f = Formation {
            tau: vec![vec![0.0], vec![4.5]],
            rho_star: vec![0.0],
            edges,
        };
        let g = WeightedGraph::from_edges(2, [(0, 1)], &DMatrix::from_element(2, 2, 1.0));
        (f, g)
    }

    fn states_from(f: &Formation, y: &[f64], v: &[f64]) -> Vec<AgentState> {
        (0..2).map(|i| AgentState::new(vec![f.tau[i][0] + y[i]], vec![v[i]])).collect()
    }

    #[test]
    fn equilibrium_has_zero_input() {
        let (f, g) = pair(false);
        let b = Barriers {
            connectivity: BarrierShape::connectivity_power(50.0, 6.5, 4),
            collision: BarrierShape::collision_quartic(50.0, 6.421875, 8.0),
        };
        let s = states_from(&f, &[0.0, 0.0], &[0.0, 0.0]);
        for i in 0..2 {
            assert_eq!(control_input(i, &s, &g, &f, &b, &geo()), vec![0.0]);
        }
        assert_eq!(lyapunov_value(&s, &g, &f, &b, &geo()), 0.0);
    }

    #[test]
    fn consensus_term_by_hand() {
        let (f, g) = pair(true);
        let s = states_from(&f, &[1.0, 0.0], &[0.0, 0.0]);
        let b = zero_barriers();
        assert_eq!(control_input(0, &s, &g, &f, &b, &geo()), vec![-1.0]);
        assert_eq!(control_input(1, &s, &g, &f, &b, &geo()), vec![1.0]);
        assert!((lyapunov_value(&s, &g, &f, &b, &geo()) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kinetic_term_is_quadratic() {
        let (f, g) = pair(true);
        let b = zero_barriers();
        let w1 = lyapunov_value(&states_from(&f, &[0.0, 0.0], &[0.7, -0.2]), &g, &f, &b, &geo());
        let w2 = lyapunov_value(&states_from(&f, &[0.0, 0.0], &[1.4, -0.4]), &g, &f, &b, &geo());
        assert!((w2 - 4.0 * w1).abs() < 1e-12);
    }

    #[test]
    fn rate_examples() {
        let (f, g) = pair(true);
        assert_eq!(lyapunov_rate(&states_from(&f, &[0.0, 0.0], &[1.0, 0.0]), &g), -1.0);
        assert_eq!(lyapunov_rate(&states_from(&f, &[0.0, 0.0], &[2.0, 2.0]), &g), 0.0);
        assert_eq!(lyapunov_rate(&states_from(&f, &[0.0, 0.0], &[1.0, 0.0]), &WeightedGraph::empty(2)), 0.0);
    }

    #[test]
    fn mirror_states_give_opposite_inputs() {
        let (f, g) = pair(false);
        let b = Barriers {
            connectivity: BarrierShape::connectivity_power(50.0, 6.5, 4),
            collision: BarrierShape::collision_quartic(50.0, 6.421875, 8.0),
        };
        let s = states_from(&f, &[0.3, -0.3], &[0.2, -0.2]);
        let u0 = control_input(0, &s, &g, &f, &b, &geo());
        let u1 = control_input(1, &s, &g, &f, &b, &geo());
        assert!((u0[0] + u1[0]).abs() < 1e-12);
    }

    #[test]
    fn mu_max_examples() {
        let f = Formation {
            tau: vec![vec![0.0]],
            rho_star: vec![0.0],
            edges: BTreeSet::new(),
        };
        let s = vec![AgentState::new(vec![0.0], vec![3.0])];
        let m = mu_max(&s, &WeightedGraph::empty(1), &f, &zero_barriers(), &geo(), None).unwrap();
        assert!((m - 4.5).abs() < 1e-12);

        let (f, g) = pair(false);
        let b = Barriers {
            connectivity: BarrierShape::connectivity_power(50.0, 6.5, 4),
            collision: BarrierShape::collision_quartic(50.0, 6.421875, 8.0),
        };
        let at_formation = states_from(&f, &[0.0, 0.0], &[0.0, 0.0]);
        let g0 = geo();
        let eps_hat = 0.5 * (0.5 * g0.d_s - g0.r_c).min(g0.eps);
        let expected = b.connectivity.value(6.5 - eps_hat) + 2.0 * b.collision.value(6.421875 - eps_hat);
        let got = mu_max(&at_formation, &g, &f, &b, &g0, None).unwrap();
        assert!((got - expected).abs() < 1e-9 * expected);

        let mut tight = geo();
        tight.d_s = 2.0 * tight.r_c;
        assert!(mu_max(&at_formation, &g, &f, &b, &tight, None).is_err());
    }
}
