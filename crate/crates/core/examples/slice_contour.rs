//! Contour of the certified level set through the first agent's
//! position/velocity plane, other coordinates at the formation.

use std::path::Path;

use sgr::scenario::{certify_scenario, parse_scenario, slice_region};

fn main() -> sgr::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/two_agent.json");
    let cfg = parse_scenario(&path)?;
    let cert = certify_scenario(&cfg.build()?, &cfg, true)?;
    let m = cert.region.w.num_vars();
    let out = slice_region(&cert.region.w, cert.region.c, &vec![0.0; m], [0, 1], 80, cert.classifier.as_ref(), 1)?;
    println!(
        "c = {:.5}: {} polylines, {} vertices, max |W - c| = {:.1e}, {} vertices unsafe",
        out.c,
        out.polylines.len(),
        out.vertices,
        out.max_level_error,
        out.unsafe_vertices.len()
    );
    for line in &out.polylines {
        let (umin, umax) = line.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[0]), b.max(p[0])));
        println!("  {} points, closed {}, y1 in [{umin:.3}, {umax:.3}]", line.points.len(), line.closed);
    }
    Ok(())
}
