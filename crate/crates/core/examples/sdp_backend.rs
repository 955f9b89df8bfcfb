//! The conic interface on its own: maximize `x` subject to
//! `[[1, x], [x, 2]] >= 0`, so `x* = sqrt(2)`.

use sgr::sdp::{solve_min_linear, write_sdpa, Affine, ConicProgram, LmiBlock};

fn main() -> sgr::Result<()> {
    let mut prog = ConicProgram::new(1);
    let mut block = LmiBlock::new(2);
    block.add_constant(0, 0, 1.0);
    block.add_constant(1, 1, 2.0);
    block.add_coeff(0, 0, 1, 1.0);
    prog.blocks.push(block);
    prog.objective = Some(Affine {
        constant: 0.0,
        terms: vec![(0, -1.0)],
    });

    let out = solve_min_linear(&prog, 1e-7);
    println!("status {:?}, x = {:?}, objective {:?}, margin {:.2e}", out.status, out.witness, out.objective, out.margin);

    let mut text = Vec::new();
    write_sdpa(&prog, &mut text)?;
    println!("SDPA form:\n{}", String::from_utf8_lossy(&text));
    Ok(())
}
