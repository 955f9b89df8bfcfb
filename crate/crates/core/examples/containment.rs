//! Sampling the certified sublevel set and simulating every sample.

use sgr::dynamics::{BlockKind, TopologyBlock};
use sgr::estimator::{estimate_c_gevp, EstimatorOptions, RegionProblem};
use sgr::oracle::{containment_check, containment_check_level, OracleOptions, PolySystem};
use sgr::poly::parse_polynomial;

fn main() -> sgr::Result<()> {
    let p = |s: &str| parse_polynomial(s, 2);
    let field = vec![p("x2")?, p("-x1 - x2")?];
    let omega = p("x1 - 1")?;
    let block = TopologyBlock {
        kind: BlockKind::Unsafe,
        label: "half-plane".into(),
        polys: vec![omega.clone()],
    };
    let region = estimate_c_gevp(&RegionProblem::new(p("x1^2 + x2^2")?, &field, vec![block], 16)?, &EstimatorOptions::default())?;
    let oracle = PolySystem::new(&field, &[vec![omega]], OracleOptions::default())?;

    let rep = containment_check(&region, &oracle, 20_000, 7)?;
    println!("c = {:.6}: {} samples from {} draws, {} violations", rep.c, rep.n_checked, rep.draws, rep.failures.len());

    // a level past the certified one must fail
    let bad = containment_check_level(&region.w, 1.5, &oracle, 5_000, 7)?;
    println!("c = 1.5: {} of {} samples violate", bad.failures.len(), bad.n_checked);
    if let Some(f) = bad.failures.first() {
        println!("  e.g. q = {:?}, W = {:.3}, {:?}", f.q, f.w, f.result.violation_kind);
    }
    Ok(())
}
