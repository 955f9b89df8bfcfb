//! Grid classification of the toy system, compared with the certified set.
//!
//! `cargo run --release --example brute_force_grid [grid.csv]`

use std::fs::File;
use std::io::BufWriter;

use sgr::dynamics::{BlockKind, TopologyBlock};
use sgr::estimator::{estimate_c_gevp, EstimatorOptions, RegionProblem};
use sgr::oracle::{brute_force_region, GridSpec, OracleOptions, PolySystem};
use sgr::poly::parse_polynomial;

fn main() -> sgr::Result<()> {
    let p = |s: &str| parse_polynomial(s, 2);
    let field = vec![p("x2")?, p("-x1 - x2")?];
    let omega = p("x1^2 + x2^2 - 4")?;
    let block = TopologyBlock {
        kind: BlockKind::Unsafe,
        label: "outside radius 2".into(),
        polys: vec![omega.clone()],
    };
    let region = estimate_c_gevp(&RegionProblem::new(p("x1^2 + x2^2")?, &field, vec![block], 16)?, &EstimatorOptions::default())?;
    let oracle = PolySystem::new(&field, &[vec![omega]], OracleOptions::default())?;

    let grid = brute_force_region(&oracle, &GridSpec::square(2, 2.5, 0.05))?;
    let bad = grid.certified_violations(&region.w, region.c);
    println!(
        "{} nodes, {} reach the origin safely, {} certified nodes fail, coverage {:.3}",
        grid.nodes.len(),
        grid.count_in_region(),
        bad.len(),
        grid.coverage_ratio(&region.w, region.c)
    );
    if let Some(out) = std::env::args().nth(1) {
        grid.write_csv(BufWriter::new(File::create(&out)?))?;
        println!("wrote {out}");
    }
    Ok(())
}
