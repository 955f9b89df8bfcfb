//! Weighted undirected communication graph with hysteresis edge switching.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalue threshold used to decide connectivity.
pub const TOL_EIG: f64 = 1e-8;

/// Agent radii and switching thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub r_a: f64,
    pub r_c: f64,
    pub r_z: f64,
    pub r_s: f64,
    pub eps: f64,
    pub d_s: f64,
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let g = self;
        if !(0.0 < g.r_a && g.r_a <= g.r_c && g.r_c < g.r_z && g.r_z < g.r_s) {
            return Err(Error::Config(format!(
                "geometry ordering 0 < r_a <= r_c < r_z < r_s violated (r_a={}, r_c={}, r_z={}, r_s={})",
                g.r_a, g.r_c, g.r_z, g.r_s
            )));
        }
        if !(0.0 <= g.eps && g.eps <= g.r_s - g.r_z) {
            return Err(Error::Config(format!("eps={} must lie in [0, r_s - r_z]", g.eps)));
        }
        if g.d_s <= 2.0 * g.r_c {
            return Err(Error::Config(format!(
                "safety distance d_s={} must exceed 2 r_c={}",
                g.d_s,
                2.0 * g.r_c
            )));
        }
        Ok(())
    }
}

/// Unordered pair stored as `(min, max)`.
pub type Edge = (usize, usize);

pub fn edge(i: usize, j: usize) -> Edge {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    n_nodes: usize,
    weights: DMatrix<f64>,
    edges: BTreeSet<Edge>,
}

impl WeightedGraph {
    pub fn empty(n_nodes: usize) -> Self {
        WeightedGraph {
            n_nodes,
            weights: DMatrix::zeros(n_nodes, n_nodes),
            edges: BTreeSet::new(),
        }
    }

    /// Graph with the given edges, each weighted from `base_weights`.
    pub fn from_edges(n_nodes: usize, edges: impl IntoIterator<Item = Edge>, base_weights: &DMatrix<f64>) -> Self {
        let mut g = WeightedGraph::empty(n_nodes);
        for (i, j) in edges {
            g.insert(i, j, base_weights[(i, j)]);
        }
        g
    }

    pub fn insert(&mut self, i: usize, j: usize, w: f64) {
        assert!(i != j && w > 0.0, "edges join distinct nodes with positive weight");
        self.weights[(i, j)] = w;
        self.weights[(j, i)] = w;
        self.edges.insert(edge(i, j));
    }

    pub fn remove(&mut self, i: usize, j: usize) {
        self.weights[(i, j)] = 0.0;
        self.weights[(j, i)] = 0.0;
        self.edges.remove(&edge(i, j));
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&edge(i, j))
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_nodes).filter(move |&j| j != i && self.weights[(i, j)] > 0.0)
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        laplacian(self)
    }

    pub fn is_connected(&self) -> bool {
        algebraic_connectivity(&self.laplacian()).map(|l| l > TOL_EIG).unwrap_or(false)
    }
}

/// `L = diag(G 1) - G`.
pub fn laplacian(g: &WeightedGraph) -> DMatrix<f64> {
    let n = g.n_nodes;
    let mut l = -g.weights.clone();
    for i in 0..n {
        l[(i, i)] = g.weights.row(i).sum();
    }
    l
}

/// Second-smallest eigenvalue of a Laplacian (zero for a single node).
pub fn algebraic_connectivity(l: &DMatrix<f64>) -> Result<f64> {
    if l.nrows() < 2 {
        return Ok(0.0);
    }
    let eig = SymmetricEigen::try_new(l.clone(), 1e-14, 10_000)
        .ok_or_else(|| Error::Numeric("Laplacian eigendecomposition did not converge".into()))?;
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev[1])
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Re-evaluates every pair: a missing edge appears at distance `<= r_s - eps`,
/// an existing edge survives while the distance stays `<= r_s`.
pub fn update_edges(positions: &[Vec<f64>], prev: &WeightedGraph, geo: &Geometry, base_weights: &DMatrix<f64>) -> WeightedGraph {
    assert_eq!(positions.len(), prev.n_nodes);
    let n = prev.n_nodes;
    let mut next = WeightedGraph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            let d = dist(&positions[i], &positions[j]);
            let keep = if prev.has_edge(i, j) { d <= geo.r_s } else { d <= geo.r_s - geo.eps };
            if keep {
                next.insert(i, j, base_weights[(i, j)]);
            }
        }
    }
    next
}

/// Neighbor taxonomy of one agent.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NeighborSets {
    /// Graph neighbors.
    pub sensing: Vec<usize>,
    /// Graph neighbors that are also formation neighbors.
    pub formation: Vec<usize>,
    /// Graph neighbors closer than `r_z`.
    pub zone: Vec<usize>,
}

pub fn neighbor_sets(
    i: usize,
    g: &WeightedGraph,
    formation_edges: &BTreeSet<Edge>,
    positions: &[Vec<f64>],
    geo: &Geometry,
) -> NeighborSets {
    let mut out = NeighborSets::default();
    for j in g.neighbors(i) {
        out.sensing.push(j);
        if formation_edges.contains(&edge(i, j)) {
            out.formation.push(j);
        }
        if dist(&positions[i], &positions[j]) < geo.r_z {
            out.zone.push(j);
        }
    }
    out
}
