//! SOS checks that barrier shapes are valid on their intervals.

use sgr::dynamics::{BarrierKind, BarrierShape};
use sgr::estimator::{barrier_validity_sos, validity_interval, EstimatorOptions};
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
    let tau = 4.5;
    let opts = EstimatorOptions::default();
    let conn = validity_interval(BarrierKind::Connectivity, &geo, tau)?;
    let coll = validity_interval(BarrierKind::Collision, &geo, tau)?;
    println!("connectivity interval {conn:?}, collision interval {coll:?}");

    let shapes = [
        ("c1 z^4", BarrierShape::connectivity_power(50.0, conn.1, 4), conn),
        ("c1 z^2", BarrierShape::connectivity_power(50.0, conn.1, 2), conn),
        ("c2 (z^2 - r^2)^2", BarrierShape::collision_quartic(50.0, coll.0, coll.1), coll),
        ("z^4 - z^2", BarrierShape::from_even_coeffs(BarrierKind::Connectivity, &[0.0, -1.0, 1.0], 50.0), conn),
    ];
    for (name, shape, iv) in shapes {
        match barrier_validity_sos(&shape, iv, &opts) {
            Ok(cert) => println!("{name}: valid ({} Gram blocks)", cert.grams.len()),
            Err(e) => println!("{name}: {e}"),
        }
    }
    Ok(())
}
