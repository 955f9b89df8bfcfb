//! Polynomial model of the closed loop on a frozen graph, in the stacked
//! coordinates `q = (y_1, varrho_1, ..., y_N, varrho_N)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{AgentState, BarrierShape, Formation, UnsafeSet};
use crate::error::{Error, Result};
use crate::graph::{edge, update_edges, Edge, Geometry, WeightedGraph};
use crate::poly::Polynomial;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// A frozen edge stretches past `r_s`.
    Disconnect,
    /// A non-edge comes within `r_s - eps`.
    EdgeAdd,
    /// A pair enters the collision zone.
    Zone,
    /// An agent enters an unsafe block.
    Unsafe,
}

/// A set `{q : p(q) > 0 for every p}` the certified region must avoid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyBlock {
    pub kind: BlockKind,
    pub label: String,
    pub polys: Vec<Polynomial>,
}

#[derive(Clone, Debug)]
pub struct FrozenModel {
    pub num_agents: usize,
    pub dim: usize,
    /// When set, the last agent is eliminated by `sum y = 0`, `sum varrho = 0`.
    pub anchored: bool,
    pub graph: WeightedGraph,
    /// Formation edges present in the frozen graph.
    pub formation_edges: Vec<Edge>,
    /// Maps model coordinates to the full stacked `q`.
    pub embed: DMatrix<f64>,
    pub field: Vec<Polynomial>,
    pub w: Polynomial,
    /// `W` without the connectivity barrier.
    pub w_base: Polynomial,
    /// `sum over formation edges of |y_ij|^(2k)`, `k = 1, 2, ...`; `W = w_base + sum a_k w_conn[k-1]`.
    pub w_conn: Vec<Polynomial>,
    pub wdot: Polynomial,
    pub blocks: Vec<TopologyBlock>,
}

fn sq_norm(p: &[Polynomial], nv: usize) -> Polynomial {
    p.iter().fold(Polynomial::zero(nv), |acc, c| &acc + &(c * c))
}

impl FrozenModel {
    /// Freezes the graph formed at the formation point and builds the model.
    pub fn new(
        geo: &Geometry,
        f: &Formation,
        base_weights: &DMatrix<f64>,
        connectivity: &BarrierShape,
        unsafe_set: &UnsafeSet,
        anchored: bool,
        t0: f64,
    ) -> Result<Self> {
        let big_n = f.num_agents();
        let n = f.dim();
        if anchored && big_n < 2 {
            return Err(Error::Config("anchoring needs at least two agents".into()));
        }
        let graph = update_edges(&f.tau, &WeightedGraph::empty(big_n), geo, base_weights);
        for &(i, j) in graph.edges() {
            if super::norm(&f.tau_ij(i, j)) < geo.r_z {
                return Err(Error::Config(format!(
                    "agents {} and {} are inside the collision zone at the formation",
                    i + 1,
                    j + 1
                )));
            }
        }
        let formation_edges: Vec<Edge> = graph.edges().iter().copied().filter(|e| f.edges.contains(e)).collect();

        let nv = 2 * n * big_n;
        let var = |i: usize| Polynomial::var(nv, i);
        let y = |i: usize, d: usize| var(i * 2 * n + d);
        let v = |i: usize, d: usize| var(i * 2 * n + n + d);
        let y_ij = |i: usize, j: usize| -> Vec<Polynomial> { (0..n).map(|d| &y(i, d) - &y(j, d)).collect() };
        let v_ij = |i: usize, j: usize| -> Vec<Polynomial> { (0..n).map(|d| &v(i, d) - &v(j, d)).collect() };

        let coeffs = connectivity.even_coeffs();
        let k_max = coeffs.len().saturating_sub(1).max(1);
        let mut w_base = Polynomial::zero(nv);
        let mut wdot = Polynomial::zero(nv);
        for &(i, j) in graph.edges() {
            let g = graph.weight(i, j);
            w_base = &w_base + &sq_norm(&y_ij(i, j), nv).scale(0.5 * g);
            wdot = &wdot - &sq_norm(&v_ij(i, j), nv).scale(g);
        }
        for i in 0..big_n {
            for d in 0..n {
                w_base = &w_base + &(&v(i, d) * &v(i, d)).scale(0.5);
            }
        }
        let mut w_conn = vec![Polynomial::zero(nv); k_max];
        for &(i, j) in &formation_edges {
            let z2 = sq_norm(&y_ij(i, j), nv);
            for (k, slot) in w_conn.iter_mut().enumerate() {
                *slot = &*slot + &z2.pow(k as u32 + 1);
            }
        }

        // closed loop: dy_i = varrho_i, dvarrho_i = u_i
        let mut field = vec![Polynomial::zero(nv); nv];
        for i in 0..big_n {
            for d in 0..n {
                field[i * 2 * n + d] = v(i, d);
            }
        }
        let ratio: Vec<f64> = coeffs.iter().enumerate().skip(1).map(|(k, a)| 2.0 * k as f64 * a).collect();
        for &(i, j) in graph.edges() {
            let g = graph.weight(i, j);
            let yij = y_ij(i, j);
            let vij = v_ij(i, j);
            let z2 = sq_norm(&yij, nv);
            let mut r = Polynomial::zero(nv);
            if f.edges.contains(&edge(i, j)) {
                for (k, c) in ratio.iter().enumerate() {
                    r = &r + &z2.pow(k as u32).scale(*c);
                }
            }
            for d in 0..n {
                let pull = &(&r * &yij[d]) + &(&yij[d] + &vij[d]).scale(g);
                let a = i * 2 * n + n + d;
                let b = j * 2 * n + n + d;
                field[a] = &field[a] - &pull;
                field[b] = &field[b] + &pull;
            }
        }

        let mut blocks = Vec::new();
        for i in 0..big_n {
            for j in i + 1..big_n {
                let tau = f.tau_ij(i, j);
                let x_ij: Vec<Polynomial> = y_ij(i, j).iter().zip(&tau).map(|(p, t)| p + &Polynomial::constant(nv, *t)).collect();
                let d2 = sq_norm(&x_ij, nv);
                let label = |what: &str| format!("{what} {}-{}", i + 1, j + 1);
                if graph.has_edge(i, j) {
                    blocks.push(TopologyBlock {
                        kind: BlockKind::Disconnect,
                        label: label("disconnect"),
                        polys: vec![&d2 - &Polynomial::constant(nv, geo.r_s * geo.r_s)],
                    });
                } else {
                    let r = geo.r_s - geo.eps;
                    blocks.push(TopologyBlock {
                        kind: BlockKind::EdgeAdd,
                        label: label("edge"),
                        polys: vec![&Polynomial::constant(nv, r * r) - &d2],
                    });
                }
                blocks.push(TopologyBlock {
                    kind: BlockKind::Zone,
                    label: label("zone"),
                    polys: vec![&Polynomial::constant(nv, geo.r_z * geo.r_z) - &d2],
                });
            }
        }
        for i in 0..big_n {
            let pos: Vec<Polynomial> = (0..n)
                .map(|d| &y(i, d) + &Polynomial::constant(nv, f.tau[i][d] + f.rho_star[d] * t0))
                .collect();
            for (label, block) in unsafe_set.labels.iter().zip(&unsafe_set.blocks) {
                let polys = block.iter().map(|w| w.compose(&pos)).collect::<std::result::Result<Vec<_>, _>>()?;
                blocks.push(TopologyBlock {
                    kind: BlockKind::Unsafe,
                    label: format!("{label} agent {}", i + 1),
                    polys,
                });
            }
        }

        let kept = if anchored { big_n - 1 } else { big_n };
        let nr = 2 * n * kept;
        let mut embed = DMatrix::zeros(nv, nr);
        for c in 0..nr {
            embed[(c, c)] = 1.0;
        }
        if anchored {
            for i in 0..kept {
                for d in 0..2 * n {
                    embed[((big_n - 1) * 2 * n + d, i * 2 * n + d)] = -1.0;
                }
            }
        }
        let zero = vec![0.0; nv];
        let reduce = |p: &Polynomial| -> Result<Polynomial> {
            if anchored {
                Ok(p.substitute_affine(&embed, &zero)?.pruned(1e-14))
            } else {
                Ok(p.clone())
            }
        };
        let field = field[..nr].iter().map(reduce).collect::<Result<Vec<_>>>()?;
        let w_base = reduce(&w_base)?;
        let w_conn = w_conn.iter().map(reduce).collect::<Result<Vec<_>>>()?;
        let wdot = reduce(&wdot)?;
        let mut w = w_base.clone();
        for (k, p) in w_conn.iter().enumerate() {
            w = &w + &p.scale(coeffs.get(k + 1).copied().unwrap_or(0.0));
        }
        let blocks = blocks
            .into_iter()
            .map(|b| {
                Ok(TopologyBlock {
                    polys: b.polys.iter().map(reduce).collect::<Result<Vec<_>>>()?,
                    ..b
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FrozenModel {
            num_agents: big_n,
            dim: n,
            anchored,
            graph,
            formation_edges,
            embed,
            field,
            w,
            w_base,
            w_conn,
            wdot,
            blocks,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.embed.ncols()
    }

    /// `W` for connectivity coefficients `a_k` of `z^(2k)`, `k >= 1`.
    pub fn w_with(&self, a: &[f64]) -> Polynomial {
        let mut w = self.w_base.clone();
        for (p, c) in self.w_conn.iter().zip(a) {
            w = &w + &p.scale(*c);
        }
        w
    }

    /// Full stacked `q` for model coordinates.
    pub fn full_q(&self, q: &[f64]) -> Vec<f64> {
        (&self.embed * nalgebra::DVector::from_column_slice(q)).as_slice().to_vec()
    }

    /// Agent states at time `t0` for model coordinates.
    pub fn states(&self, q: &[f64], f: &Formation, t0: f64) -> Vec<AgentState> {
        super::inverse_transform(&super::TransformedState::from_q(&self.full_q(q), self.dim), f, t0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{lyapunov_value, Barriers};
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

    fn platoon() -> (Formation, BarrierShape) {
        let f = Formation {
            tau: vec![vec![0.0, 0.0], vec![4.5, 0.0], vec![9.0, 0.0]],
            rho_star: vec![1.0, 0.0],
            edges: [(0, 1), (1, 2)].into_iter().collect::<BTreeSet<_>>(),
        };
        (f, BarrierShape::connectivity_power(50.0, 6.5, 4))
    }

    #[test]
    fn derivative_identity() {
        let (f, b) = platoon();
        let m = FrozenModel::new(&geo(), &f, &DMatrix::from_element(3, 3, 1.0), &b, &UnsafeSet::default(), false, 0.0).unwrap();
        let mut lie = Polynomial::zero(m.num_vars());
        for (k, fk) in m.field.iter().enumerate() {
            lie = &lie + &(&m.w.derivative(k) * fk);
        }
        assert!(lie.approx_eq(&m.wdot, 1e-10), "{lie} vs {}", m.wdot);
    }

    #[test]
    fn polynomial_w_matches_numeric_w() {
        let (f, b) = platoon();
        let g = geo();
        let weights = DMatrix::from_element(3, 3, 1.0);
        let m = FrozenModel::new(&g, &f, &weights, &b, &UnsafeSet::default(), true, 0.0).unwrap();
        assert_eq!(m.num_vars(), 8);
        let q = [0.3, -0.2, 0.1, 0.05, -0.4, 0.1, 0.2, -0.3];
        let states = m.states(&q, &f, 0.0);
        let barriers = Barriers {
            connectivity: b,
            collision: BarrierShape::collision_quartic(50.0, 6.421875, 8.0),
        };
        let numeric = lyapunov_value(&states, &m.graph, &f, &barriers, &g);
        assert!((numeric - m.w.evaluate(&q)).abs() < 1e-10);
    }

    #[test]
    fn topology_blocks() {
        let (f, b) = platoon();
        let m = FrozenModel::new(&geo(), &f, &DMatrix::from_element(3, 3, 1.0), &b, &UnsafeSet::default(), false, 0.0).unwrap();
        let kinds: Vec<_> = m.blocks.iter().map(|b| b.kind).collect();
        assert_eq!(kinds.iter().filter(|k| **k == BlockKind::Disconnect).count(), 3);
        assert_eq!(kinds.iter().filter(|k| **k == BlockKind::Zone).count(), 3);
        // at the formation point every block is inactive
        let origin = vec![0.0; m.num_vars()];
        for blk in &m.blocks {
            assert!(blk.polys.iter().any(|p| p.evaluate(&origin) <= 0.0), "{}", blk.label);
        }
    }
}
