//! Level-set certification on `y' = v, v' = -y - v` with `W = y^2 + v^2`.

use sgr::dynamics::{BlockKind, TopologyBlock};
use sgr::estimator::{estimate_c_gevp, EstimatorOptions, RegionProblem};
use sgr::poly::parse_polynomial;

fn main() -> sgr::Result<()> {
    let p = |s: &str| parse_polynomial(s, 2);
    let field = vec![p("x2")?, p("-x1 - x2")?];
    let opts = EstimatorOptions::default();

    for omega in ["x1 - 1", "x1^2 + x2^2 - 4", "x1 + x2 - 2"] {
        let block = TopologyBlock {
            kind: BlockKind::Unsafe,
            label: omega.into(),
            polys: vec![p(omega)?],
        };
        let problem = RegionProblem::new(p("x1^2 + x2^2")?, &field, vec![block], 16)?;
        let region = estimate_c_gevp(&problem, &opts)?;
        println!(
            "unsafe {{{omega} > 0}}: c = {:.6}, decrease bound {:.3}, certificates verify: {}",
            region.c,
            region.c_gevp,
            region.verify(opts.tol_psd)
        );
    }
    Ok(())
}
