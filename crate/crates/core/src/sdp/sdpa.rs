use std::io::{self, Write};

use super::ConicProgram;

/// Writes `p` in sparse SDPA format.
///
/// SDPA maximizes `-objective` subject to `sum x_k F_k - F_0 >= 0`, so the
/// constant part of every block is written with its sign flipped. Equalities
/// become pairs of 1x1 diagonal entries in one trailing LP block.
pub fn write_sdpa<W: Write>(p: &ConicProgram, out: &mut W) -> io::Result<()> {
    let n = p.num_scalars;
    let n_eq = p.equalities.len();
    let nblocks = p.blocks.len() + usize::from(n_eq > 0);
    writeln!(out, "\"sgr conic program\"")?;
    writeln!(out, "{n} = mDIM")?;
    writeln!(out, "{nblocks} = nBLOCK")?;
    let mut sizes: Vec<String> = p.blocks.iter().map(|b| b.dim.to_string()).collect();
    if n_eq > 0 {
        sizes.push(format!("-{}", 2 * n_eq));
    }
    writeln!(out, "{} = bLOCKsTRUCT", sizes.join(" "))?;
    let mut c = vec![0.0; n];
    if let Some(o) = &p.objective {
        for &(k, v) in &o.terms {
            c[k] += v;
        }
    }
    writeln!(out, "{}", c.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" "))?;
    for (bi, block) in p.blocks.iter().enumerate() {
        for &(i, j, v) in &block.constant {
            writeln!(out, "0 {} {} {} {:e}", bi + 1, i + 1, j + 1, -v)?;
        }
        for &(k, i, j, v) in &block.coeffs {
            writeln!(out, "{} {} {} {} {:e}", k + 1, bi + 1, i + 1, j + 1, v)?;
        }
    }
    if n_eq > 0 {
        let lp = p.blocks.len() + 1;
        for (r, e) in p.equalities.iter().enumerate() {
            let (lo, hi) = (2 * r + 1, 2 * r + 2);
            // constant + a.x >= 0 and -(constant + a.x) >= 0
            writeln!(out, "0 {lp} {lo} {lo} {:e}", -e.constant)?;
            writeln!(out, "0 {lp} {hi} {hi} {:e}", e.constant)?;
            for &(k, v) in &e.terms {
                writeln!(out, "{} {lp} {lo} {lo} {:e}", k + 1, v)?;
                writeln!(out, "{} {lp} {hi} {hi} {:e}", k + 1, -v)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{Affine, LmiBlock};

    #[test]
    fn header_and_entries() {
        let mut p = ConicProgram::new(1);
        let mut b = LmiBlock::new(1);
        b.add_constant(0, 0, -3.0);
        b.add_coeff(0, 0, 0, 1.0);
        p.blocks.push(b);
        p.equalities.push(Affine { constant: 1.0, terms: vec![(0, 2.0)] });
        let mut buf = Vec::new();
        write_sdpa(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "1 = mDIM");
        assert_eq!(lines[2], "2 = nBLOCK");
        assert_eq!(lines[3], "1 -2 = bLOCKsTRUCT");
        assert!(text.contains("0 1 1 1 3e0"));
        assert!(text.contains("1 2 1 1 2e0"));
    }
}
