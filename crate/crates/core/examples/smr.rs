//! Gram-matrix (SMR) form of a polynomial and the space of matrices that
//! represent zero.

use sgr::poly::{parse_polynomial, smr_dimensions, smr_of};

fn main() -> sgr::Result<()> {
    let p = parse_polynomial("3*x1^4 + 4*x1^3 + 6*x1^2 + 7", 1)?;
    let form = smr_of(&p);
    let names: Vec<String> = form.phi.monomials().iter().map(|m| m.to_string()).collect();
    println!("p = {p}");
    println!("phi = ({})", names.join(", "));
    println!("P ={}", form.base);
    for (k, l) in form.null_basis.iter().enumerate() {
        println!("L_{k} ={l}");
    }
    // any delta reproduces p
    let back = form.phi.quadratic_form(&form.matrix(&[0.7]));
    println!("phi' (P + 0.7 L) phi = {back}");

    for (n, d) in [(2, 2), (4, 2), (6, 4)] {
        let (l, theta) = smr_dimensions(n, d)?;
        println!("n = {n}, d = {d}: l = {l}, theta = {theta}");
    }
    Ok(())
}
