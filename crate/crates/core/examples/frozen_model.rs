//! Polynomial closed loop on the graph frozen at the formation, and the
//! identity Wdot = -varrho' (L kron I) varrho.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use sgr::dynamics::{BarrierShape, Formation, FrozenModel, UnsafeSet};
use sgr::estimator::build_wdot;
use sgr::graph::Geometry;

fn main() -> sgr::Result<()> {
    let geo = Geometry {
        r_a: 0.75,
        r_c: 0.9375,
        r_z: 3.5,
        r_s: 11.0,
        eps: 0.1,
        d_s: 1.921875,
    };
    let f = Formation {
        tau: vec![vec![0.0], vec![4.5], vec![9.0]],
        rho_star: vec![1.0],
        edges: [(0, 1), (1, 2)].into_iter().collect::<BTreeSet<_>>(),
    };
    let conn = BarrierShape::connectivity_power(50.0, geo.r_s - 4.5, 4);
    let model = FrozenModel::new(&geo, &f, &DMatrix::from_element(3, 3, 1.0), &conn, &UnsafeSet::default(), false, 0.0)?;

    println!("frozen edges {:?}", model.graph.edges());
    println!("W = {}", model.w);
    let lie = build_wdot(&model.w, &model.field, 16)?;
    println!("Lie derivative   = {lie}");
    println!("-varrho' L varrho = {}", model.wdot);
    println!("max coefficient gap {:.1e}", lie.max_coeff_diff(&model.wdot));
    for b in &model.blocks {
        println!("{:?} {}: {} > 0", b.kind, b.label, b.polys[0]);
    }
    Ok(())
}
